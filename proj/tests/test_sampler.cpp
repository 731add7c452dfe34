#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "v2v/sampler.hpp"
#include "v2v/synthetic.hpp"

using namespace v2v;

// Unconstrained sampling output, recorded once and frozen.
constexpr double GOLDEN_SDEDIT_SUM = 388.62831496297184;
constexpr double GOLDEN_SDEDIT_PIXEL = 0.34726469575293206;

namespace {

Latent scalar(double v) { return Latent(1, 1, 1, v); }

OcclusionMask checkerboard(int w, int h) {
    OcclusionMask m(w, h, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m.set(x, y, (x + y) % 2 == 0);
    return m;
}

struct KeyPair {
    NoiseSchedule schedule = NoiseSchedule::scaled_linear();
    ToyLossyCodec codec;
    ToyDenoiser denoiser{schedule, 4};
    Conditioning cond;
    SamplerOptions options;
    Frame input;
    KeyframeResult anchor;

    explicit KeyPair(int strength_t, int steps = 10) {
        input = synthetic::textured_image(16, 16, 21);
        cond.prompt = prompt_embedding("a watercolor painting");
        cond.structure = edge_map(input, 2);
        options.strength_t = strength_t;
        options.ddim_steps = steps;
        options.seed = 5;
        anchor = translate_keyframe(input, nullptr, cond, schedule, options, codec, denoiser, 0);
    }

    FrameContext context() const {
        FrameContext ctx;
        ctx.anchor = &anchor.record;
        ctx.previous = &anchor.record;
        ctx.anchor_output = anchor.output;
        ctx.previous_output = anchor.output;
        ctx.anchor_guide = {FlowField(16, 16), OcclusionMask(16, 16, 1)};
        ctx.previous_guide = ctx.anchor_guide;
        return ctx;
    }
};

}  // namespace

TEST_CASE("schedule: scaled linear construction") {
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    CHECK(s.t_max() == 1000);
    CHECK(s.alpha_bar(0) == 1.0);
    double running = 1.0;
    for (int t = 1; t <= 1000; ++t) {
        running *= s.alpha(t);
        CHECK(s.alpha_bar(t) == doctest::Approx(running).epsilon(1e-12));
        CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    }
    CHECK(1.0 - s.alpha(1) == doctest::Approx(0.00085));
    CHECK(1.0 - s.alpha(1000) == doctest::Approx(0.012));
    CHECK_THROWS(s.alpha_bar(1001));
    CHECK_THROWS(s.alpha_bar(-1));
}

TEST_CASE("schedule: ddim timesteps") {
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    const auto ts = s.ddim_timesteps(750, 20);
    REQUIRE(ts.size() == 21);
    CHECK(ts.front() == 750);
    CHECK(ts.back() == 0);
    for (std::size_t i = 1; i < ts.size(); ++i) CHECK(ts[i] < ts[i - 1]);
    const auto few = s.ddim_timesteps(3, 20);
    CHECK(few == std::vector<int>{3, 2, 1, 0});
    CHECK(s.ddim_timesteps(0, 20) == std::vector<int>{0});
    CHECK_THROWS(s.ddim_timesteps(1001, 20));
    CHECK_THROWS(s.ddim_timesteps(500, 0));
}

TEST_CASE("schedule: from_alphas validation") {
    CHECK_THROWS(NoiseSchedule::from_alphas({}));
    CHECK_THROWS(NoiseSchedule::from_alphas({1.0}));
    CHECK_THROWS(NoiseSchedule::from_alphas({0.5, 0.0, 0.5}));
    const NoiseSchedule s = NoiseSchedule::from_alphas({0.5, 0.0});
    CHECK(s.alpha_bar(2) == 0.0);
}

TEST_CASE("stage schedule defaults and gates") {
    const StageSchedule st = StageSchedule::from_fractions(1000);
    CHECK(st.t_s == 100);
    CHECK(st.t_p0 == 500);
    CHECK(st.t_p1 == 800);
    CHECK(st.t_a == 800);
    CHECK(st.shape_fusion_active(501));
    CHECK_FALSE(st.shape_fusion_active(500));
    CHECK(st.pixel_fusion_active(800));
    CHECK_FALSE(st.pixel_fusion_active(801));
    CHECK_FALSE(st.pixel_fusion_active(100));
    CHECK(st.adain_active(800));
    CHECK_FALSE(st.adain_active(801));
}

TEST_CASE("q_sample examples") {
    const NoiseSchedule quarter = NoiseSchedule::from_alphas({0.25});
    CHECK(q_sample(quarter, scalar(2.0), 1, scalar(0.0)).at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-15));
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    const Latent x0 = oracle::random_normal(2, 3, 3, 1);
    const Latent n = oracle::random_normal(2, 3, 3, 2);
    CHECK(q_sample(s, x0, 0, n) == x0);
    const NoiseSchedule dead = NoiseSchedule::from_alphas({0.5, 0.0});
    CHECK(q_sample(dead, x0, 2, n) == n);
    CHECK_THROWS(q_sample(s, x0, 1001, n));
    CHECK_THROWS_AS(q_sample(s, x0, 5, Latent(2, 3, 4)), ShapeError);
}

TEST_CASE("predicted_x0 examples") {
    const NoiseSchedule quarter = NoiseSchedule::from_alphas({0.25});
    const double v = predicted_x0(quarter, scalar(1.0), 1, scalar(0.5)).at(0, 0, 0);
    CHECK(v == doctest::Approx((1.0 - std::sqrt(0.75) * 0.5) / 0.5).epsilon(1e-14));
    CHECK(v == doctest::Approx(1.1340).epsilon(1e-4));
    CHECK(predicted_x0(quarter, scalar(1.0), 1, scalar(0.0)).at(0, 0, 0) == doctest::Approx(2.0));

    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    const Latent x0 = oracle::random_normal(3, 4, 4, 3);
    const Latent n = oracle::random_normal(3, 4, 4, 4);
    for (int t : {1, 250, 999}) CHECK(max_abs_difference(predicted_x0(s, q_sample(s, x0, t, n), t, n), x0) < 1e-10);

    const NoiseSchedule dead = NoiseSchedule::from_alphas({0.5, 0.0});
    CHECK_THROWS(predicted_x0(dead, x0, 2, n));
}

TEST_CASE("ddim_step: perfect denoiser recovers x0") {
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    const Latent x0 = oracle::random_normal(4, 8, 8, 7);
    const Latent n = oracle::random_normal(4, 8, 8, 8);
    for (int strength : {1000, 750, 300}) {
        const auto ts = s.ddim_timesteps(strength, 20);
        Latent x = q_sample(s, x0, ts.front(), n);
        for (std::size_t i = 0; i + 1 < ts.size(); ++i) x = ddim_step(s, x, ts[i], ts[i + 1], n);
        CHECK(mean_squared_error(x, x0) < 1e-8);
        CHECK(max_abs_difference(x, x0) < 1e-8);
    }
}

TEST_CASE("ddim_step: t_prev with alpha_bar 1 returns the clean estimate") {
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    const Latent x = oracle::random_normal(2, 4, 4, 9);
    const Latent e = oracle::random_normal(2, 4, 4, 10);
    CHECK(ddim_step(s, x, 40, 0, e) == predicted_x0(s, x, 40, e));
    CHECK_THROWS(ddim_step(s, x, 40, 40, e));
    CHECK_THROWS(ddim_step(s, x, 40, 60, e));
}

TEST_CASE("ddim_step: zero noise telescopes to a single rescaling") {
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    const Latent x0 = oracle::random_normal(2, 4, 4, 11);
    const Latent zero(2, 4, 4);
    const auto ts = s.ddim_timesteps(900, 15);
    Latent x = x0;
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) x = ddim_step(s, x, ts[i], ts[i + 1], zero);
    const double factor = std::sqrt(s.alpha_bar(ts.back()) / s.alpha_bar(ts.front()));
    CHECK(max_abs_difference(x, factor * x0) < 1e-10);
}

TEST_CASE("init_latent") {
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    const ToyLossyCodec codec;
    const Frame img = synthetic::textured_image(16, 16, 1);
    CHECK(init_latent(img, s, 0, codec, 3) == fidelity_encode(codec, img));
    CHECK(init_latent(img, s, 600, codec, 3) == init_latent(img, s, 600, codec, 3));
    CHECK_FALSE(init_latent(img, s, 600, codec, 3) == init_latent(img, s, 600, codec, 4));
    // Frames of one run share the seed's noise.
    const Frame other = synthetic::textured_image(16, 16, 2);
    const Latent d1 = init_latent(img, s, 1000, codec, 3) - std::sqrt(s.alpha_bar(1000)) * fidelity_encode(codec, img);
    const Latent d2 = init_latent(other, s, 1000, codec, 3) - std::sqrt(s.alpha_bar(1000)) * fidelity_encode(codec, other);
    CHECK(max_abs_difference(d1, d2) < 1e-12);
    CHECK_THROWS(init_latent(img, s, 1001, codec, 3));
}

TEST_CASE("init_latent at the end of a vanishing schedule is uncorrelated with the input") {
    const NoiseSchedule s = NoiseSchedule::from_alphas(std::vector<double>(10, 0.01));
    const IdentityCodec codec;
    const Frame img = synthetic::textured_image(8, 8, 4);
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    double n = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const Latent z = init_latent(img, s, s.t_max(), codec, seed);
        for (std::size_t i = 0; i < z.size(); ++i) {
            const double a = img.values()[i], b = z.values()[i];
            sx += a;
            sy += b;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
            n += 1;
        }
    }
    const double cov = sxy / n - sx / n * sy / n;
    const double corr = cov / std::sqrt((sxx / n - sx / n * sx / n) * (syy / n - sy / n * sy / n));
    CHECK(std::abs(corr) < 0.05);
}

TEST_CASE("gaussian_noise is keyed") {
    const Latent a = gaussian_noise(2, 4, 4, 1, 0, 0);
    CHECK(a == gaussian_noise(2, 4, 4, 1, 0, 0));
    CHECK_FALSE(a == gaussian_noise(2, 4, 4, 1, 1, 0));
    CHECK_FALSE(a == gaussian_noise(2, 4, 4, 1, 0, 1));
    CHECK_FALSE(a == gaussian_noise(2, 4, 4, 2, 0, 0));
}

TEST_CASE("shape_fusion") {
    const Latent xhat = oracle::random_normal(1, 4, 4, 1);
    const Latent ref = oracle::random_normal(1, 4, 4, 2);
    const FlowField zero(4, 4);
    CHECK(shape_fusion(xhat, ref, zero, OcclusionMask(4, 4, 1)) == xhat);
    CHECK(shape_fusion(xhat, ref, zero, OcclusionMask(4, 4, 0)) == ref);

    const OcclusionMask cb = checkerboard(4, 4);
    const FlowField f = oracle::smooth_flow(4, 4, 3, 0.7);
    const Latent got = shape_fusion(xhat, ref, f, cb);
    const Tensor wr = oracle::warp(ref, f);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) CHECK(got.at(0, y, x) == doctest::Approx(cb.at(x, y) ? xhat.at(0, y, x) : wr.at(0, y, x)).epsilon(1e-14));
    // Binary masks make it a projection.
    CHECK(shape_fusion(got, ref, f, cb) == got);
    CHECK_THROWS_AS(shape_fusion(xhat, Latent(1, 4, 5), zero, cb), ShapeError);
    CHECK_THROWS_AS(shape_fusion(xhat, ref, zero, OcclusionMask(5, 4)), ShapeError);
}

TEST_CASE("pixel_fusion_reference") {
    const Frame rough = oracle::random_tensor(3, 8, 8, 1);
    const Frame anchor = oracle::random_tensor(3, 8, 8, 2);
    const Frame prev = oracle::random_tensor(3, 8, 8, 3);
    const FlowField zero(8, 8);

    const PixelReference ones = pixel_fusion_reference(rough, anchor, prev, zero, OcclusionMask(8, 8, 1), zero,
                                                       OcclusionMask(8, 8, 1));
    CHECK(ones.image == rough);
    CHECK(ones.mask.count_visible() == 64);

    const PixelReference zeros = pixel_fusion_reference(rough, anchor, prev, zero, OcclusionMask(8, 8, 0), zero,
                                                        OcclusionMask(8, 8, 1));
    CHECK(zeros.image == anchor);
    CHECK(zeros.mask.count_visible() == 0);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const FlowField fa = oracle::smooth_flow(8, 8, seed, 1.2);
        const FlowField fp = oracle::smooth_flow(8, 8, seed + 50, 1.2);
        const OcclusionMask m0 = oracle::random_mask(8, 8, seed + 100);
        const OcclusionMask m1 = oracle::random_mask(8, 8, seed + 200);
        const PixelReference r = pixel_fusion_reference(rough, anchor, prev, fa, m0, fp, m1);
        CHECK(r.image == oracle::overlay(rough, anchor, prev, fa, m0, fp, m1));
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) CHECK(r.mask.at(x, y) == (m0.at(x, y) && m1.at(x, y) ? 1 : 0));
    }
    CHECK_THROWS_AS(pixel_fusion_reference(rough, Frame(3, 8, 9), prev, zero, OcclusionMask(8, 8), zero,
                                           OcclusionMask(8, 8)),
                    ShapeError);
}

TEST_CASE("inpaint_merge") {
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    const ToyLossyCodec codec;
    const Frame ref = synthetic::textured_image(8, 8, 6);
    const Latent next = oracle::random_normal(4, 4, 4, 1);
    const Latent noise = oracle::random_normal(4, 4, 4, 2);
    CHECK(inpaint_merge(s, next, 300, ref, OcclusionMask(4, 4, 1), codec, noise) == next);
    CHECK(inpaint_merge(s, next, 0, ref, OcclusionMask(4, 4, 0), codec, noise) == fidelity_encode(codec, ref));

    // Two-channel latent through a codec that keeps the first two channels.
    struct TwoChannel final : LossyCodec {
        Latent encode(const Frame& f) const override {
            Latent z(2, f.height(), f.width());
            for (int c = 0; c < 2; ++c)
                for (int y = 0; y < f.height(); ++y)
                    for (int x = 0; x < f.width(); ++x) z.at(c, y, x) = f.at(c, y, x);
            return z;
        }
        Frame decode(const Latent& z) const override {
            Frame f(3, z.height(), z.width());
            for (int c = 0; c < 2; ++c)
                for (int y = 0; y < z.height(); ++y)
                    for (int x = 0; x < z.width(); ++x) f.at(c, y, x) = z.at(c, y, x);
            return f;
        }
        int latent_channels() const override { return 2; }
        int spatial_factor() const override { return 1; }
    } two;
    const Frame img = oracle::random_tensor(3, 4, 4, 3);
    const Latent x2 = oracle::random_normal(2, 4, 4, 4);
    const Latent n2 = oracle::random_normal(2, 4, 4, 5);
    OcclusionMask half(4, 4, 0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 2; ++x) half.set(x, y, true);
    const Latent got = inpaint_merge(s, x2, 200, img, half, two, n2);
    const double a = std::sqrt(s.alpha_bar(200)), b = std::sqrt(1.0 - s.alpha_bar(200));
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 4; ++y)
            for (int x = 0; x < 4; ++x) {
                const double expect = x < 2 ? x2.at(c, y, x) : a * img.at(c, y, x) + b * n2.at(c, y, x);
                CHECK(got.at(c, y, x) == doctest::Approx(expect).epsilon(1e-14));
            }
    CHECK(inpaint_merge(s, got, 200, img, half, two, n2) == got);
    CHECK_THROWS_AS(inpaint_merge(s, next, 0, ref, OcclusionMask(5, 4), codec, noise), ShapeError);
}

TEST_CASE("adain_adjust") {
    const Latent a = oracle::random_normal(4, 6, 6, 1);
    CHECK(max_abs_difference(adain_adjust(a, a), a) < 1e-6);

    const Latent anchor = oracle::random_normal(4, 6, 6, 2);
    Latent flat(4, 6, 6);
    for (int c = 0; c < 4; ++c)
        for (double& v : flat.plane(c)) v = 0.3 * c;
    const Latent out = adain_adjust(flat, anchor);
    for (int c = 0; c < 4; ++c) {
        const auto st = oracle::channel_stats(anchor, c);
        for (double v : out.plane(c)) CHECK(std::abs(v - st.mean) < 1e-9);
    }

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Latent x = oracle::random_normal(4, 5, 7, seed + 10);
        for (double& v : x.values()) v = 3.0 * v + 1.0;
        const Latent y = adain_adjust(x, anchor);
        for (int c = 0; c < 4; ++c) {
            const auto got = oracle::channel_stats(y, c), want = oracle::channel_stats(anchor, c);
            CHECK(got.mean == doctest::Approx(want.mean).epsilon(1e-9));
            CHECK(std::abs(got.stddev - want.stddev) < 1e-6);
        }
        CHECK(max_abs_difference(adain_adjust(y, anchor), y) < 1e-6);
    }
    CHECK_THROWS_AS(adain_adjust(a, Latent(3, 6, 6)), ShapeError);
}

TEST_CASE("translate_keyframe: anchor at strength 0 decodes the encoded input") {
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    const ToyLossyCodec codec;
    const ToyDenoiser den(s, 4);
    const Frame img = synthetic::textured_image(16, 16, 2);
    Conditioning cond{prompt_embedding("x"), edge_map(img, 2), 1.0};
    SamplerOptions opt;
    opt.strength_t = 0;
    const KeyframeResult r = translate_keyframe(img, nullptr, cond, s, opt, codec, den);
    CHECK(r.trace.empty());
    CHECK(r.output == codec.decode(fidelity_encode(codec, img)));
}

TEST_CASE("translate_keyframe: stage gates fire exactly where scheduled") {
    KeyPair kp(1000, 20);
    const FrameContext ctx = kp.context();
    const KeyframeResult r = translate_keyframe(kp.input, &ctx, kp.cond, kp.schedule, kp.options, kp.codec,
                                                kp.denoiser, 1);
    const StageSchedule& st = kp.options.stages;
    REQUIRE(r.trace.size() == 20);
    bool saw[3] = {false, false, false};
    for (const StepTrace& tr : r.trace) {
        CAPTURE(tr.t);
        CHECK(tr.cross_attention);
        CHECK(tr.shape_fusion == (tr.t > st.t_p0));
        CHECK(tr.pixel_fusion == (tr.t > st.t_s && tr.t <= st.t_p1));
        CHECK(tr.adain == (tr.t <= st.t_a));
        saw[0] |= tr.shape_fusion;
        saw[1] |= tr.pixel_fusion;
        saw[2] |= tr.adain;
    }
    CHECK((saw[0] && saw[1] && saw[2]));
    // The anchor itself runs unconstrained.
    for (const StepTrace& tr : kp.anchor.trace)
        CHECK_FALSE((tr.cross_attention || tr.shape_fusion || tr.pixel_fusion || tr.adain));
}

TEST_CASE("translate_keyframe: AdaIN statistics equal the anchor's at gated steps") {
    KeyPair kp(900, 12);
    SamplerOptions opt = kp.options;
    opt.shape_fusion = false;
    opt.pixel_fusion = false;
    const Frame other = synthetic::textured_image(16, 16, 22);
    const FrameContext ctx = kp.context();
    const KeyframeResult r = translate_keyframe(other, &ctx, kp.cond, kp.schedule, opt, kp.codec, kp.denoiser, 1);
    int gated = 0;
    for (std::size_t k = 0; k < r.trace.size(); ++k) {
        if (!r.trace[k].adain) continue;
        ++gated;
        for (int c = 0; c < 4; ++c) {
            const auto got = oracle::channel_stats(r.record.predictions[k], c);
            const auto want = oracle::channel_stats(kp.anchor.record.predictions[k], c);
            CHECK(std::abs(got.mean - want.mean) < 1e-6);
            CHECK(std::abs(got.stddev - want.stddev) < 1e-6);
        }
    }
    CHECK(gated > 0);
}

TEST_CASE("translate_keyframe: identical frames") {
    KeyPair kp(750, 10);
    const FrameContext ctx = kp.context();
    const KeyframeResult a = translate_keyframe(kp.input, &ctx, kp.cond, kp.schedule, kp.options, kp.codec,
                                                kp.denoiser, 1);
    const KeyframeResult b = translate_keyframe(kp.input, &ctx, kp.cond, kp.schedule, kp.options, kp.codec,
                                                kp.denoiser, 1);
    CHECK(a.output == b.output);
    // Without pixel fusion every reference is the frame's own trajectory.
    SamplerOptions opt = kp.options;
    opt.pixel_fusion = false;
    const KeyframeResult c = translate_keyframe(kp.input, &ctx, kp.cond, kp.schedule, opt, kp.codec, kp.denoiser, 1);
    CHECK(max_abs_difference(c.output, kp.anchor.output) < 1e-9);
    MESSAGE("identical frame vs anchor, pixel fusion on: " << max_abs_difference(a.output, kp.anchor.output));
}

TEST_CASE("translate_keyframe: constraints off equals plain SDEdit sampling") {
    KeyPair kp(750, 10);
    SamplerOptions opt = kp.options;
    opt.cross_frame_attention = false;
    opt.shape_fusion = false;
    opt.pixel_fusion = false;
    opt.adain = false;
    const Frame other = synthetic::textured_image(16, 16, 23);
    const FrameContext ctx = kp.context();
    const KeyframeResult with_ctx = translate_keyframe(other, &ctx, kp.cond, kp.schedule, opt, kp.codec, kp.denoiser, 1);
    const KeyframeResult plain = translate_keyframe(other, nullptr, kp.cond, kp.schedule, opt, kp.codec, kp.denoiser, 1);
    CHECK(with_ctx.output == plain.output);

    // Plain SDEdit written out step by step.
    Latent x = init_latent(other, kp.schedule, 750, kp.codec, kp.options.seed);
    const auto ts = kp.schedule.ddim_timesteps(750, 10);
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
        const Latent eps = kp.denoiser.predict_noise(x, ts[i], kp.cond);
        x = ddim_step(kp.schedule, x, ts[i], ts[i + 1], eps);
    }
    CHECK(max_abs_difference(kp.codec.decode(x), plain.output) < 1e-12);

    // Golden values of the unconstrained path.
    double sum = 0.0;
    for (double v : plain.output.values()) sum += v;
    CHECK(sum == doctest::Approx(GOLDEN_SDEDIT_SUM).epsilon(1e-9));
    CHECK(plain.output.at(0, 3, 5) == doctest::Approx(GOLDEN_SDEDIT_PIXEL).epsilon(1e-9));
}

TEST_CASE("translate_keyframe: context errors") {
    KeyPair kp(500, 5);
    FrameContext ctx = kp.context();
    ctx.previous = nullptr;
    CHECK_THROWS(translate_keyframe(kp.input, &ctx, kp.cond, kp.schedule, kp.options, kp.codec, kp.denoiser, 1));
    FrameContext wrong = kp.context();
    SamplerOptions other = kp.options;
    other.ddim_steps = 7;
    CHECK_THROWS(translate_keyframe(kp.input, &wrong, kp.cond, kp.schedule, other, kp.codec, kp.denoiser, 1));
}
