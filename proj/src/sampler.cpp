#include "v2v/sampler.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace v2v {

Latent q_sample(const NoiseSchedule& schedule, const Latent& x0, int t, const Latent& noise) {
    require_same_shape(x0, noise, "q_sample");
    const double abar = schedule.alpha_bar(t);
    const double a = std::sqrt(abar);
    const double b = std::sqrt(1.0 - abar);
    Latent out(x0.channels(), x0.height(), x0.width());
    auto o = out.values();
    auto xv = x0.values();
    auto nv = noise.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * xv[i] + b * nv[i];
    return out;
}

Latent predicted_x0(const NoiseSchedule& schedule, const Latent& x_t, int t, const Latent& eps) {
    require_same_shape(x_t, eps, "predicted_x0");
    const double abar = schedule.alpha_bar(t);
    if (abar <= 0.0) throw std::domain_error("predicted_x0: alpha_bar is zero at t=" + std::to_string(t));
    const double s = std::sqrt(abar);
    const double n = std::sqrt(1.0 - abar);
    Latent out(x_t.channels(), x_t.height(), x_t.width());
    auto o = out.values();
    auto xv = x_t.values();
    auto ev = eps.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = (xv[i] - n * ev[i]) / s;
    return out;
}

Latent ddim_from_prediction(const NoiseSchedule& schedule, const Latent& x0_hat, const Latent& eps, int t_prev) {
    require_same_shape(x0_hat, eps, "ddim_from_prediction");
    const double abar = schedule.alpha_bar(t_prev);
    const double a = std::sqrt(abar);
    const double b = std::sqrt(1.0 - abar);
    Latent out(x0_hat.channels(), x0_hat.height(), x0_hat.width());
    auto o = out.values();
    auto xv = x0_hat.values();
    auto ev = eps.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * xv[i] + b * ev[i];
    return out;
}

Latent ddim_step(const NoiseSchedule& schedule, const Latent& x_t, int t, int t_prev, const Latent& eps) {
    if (!(t_prev < t)) {
        throw std::invalid_argument("ddim_step: t_prev (" + std::to_string(t_prev) + ") must be < t (" +
                                    std::to_string(t) + ")");
    }
    return ddim_from_prediction(schedule, predicted_x0(schedule, x_t, t, eps), eps, t_prev);
}

Latent gaussian_noise(int channels, int height, int width, std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    Latent out(channels, height, width);
    for (double& v : out.values()) v = normal(rng);
    return out;
}

namespace {

constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kInpaintStream = 1;

}  // namespace

Latent init_latent(const Frame& input, const NoiseSchedule& schedule, int strength_t, const LossyCodec& codec,
                   std::uint64_t seed, const FidelityConfig& fidelity) {
    if (strength_t < 0 || strength_t > schedule.t_max()) {
        throw std::out_of_range("init_latent: strength " + std::to_string(strength_t) + " outside [0, t_max]");
    }
    const Latent x0 = fidelity_encode(codec, input, fidelity);
    const Latent noise = gaussian_noise(x0.channels(), x0.height(), x0.width(), seed, kInitStream, 0);
    return q_sample(schedule, x0, strength_t, noise);
}

namespace {

void require_mask_matches(const OcclusionMask& mask, const Tensor& t, const char* what) {
    if (mask.width() != t.width() || mask.height() != t.height()) {
        throw ShapeError(std::string(what) + ": mask " + std::to_string(mask.height()) + "x" +
                         std::to_string(mask.width()) + " does not match " + t.shape_string());
    }
}

// mask * keep + (1 - mask) * other, per pixel over all channels.
Tensor masked_blend(const OcclusionMask& mask, const Tensor& keep, const Tensor& other) {
    Tensor out(keep.channels(), keep.height(), keep.width());
    for (int c = 0; c < keep.channels(); ++c) {
        for (int y = 0; y < keep.height(); ++y) {
            for (int x = 0; x < keep.width(); ++x) {
                const double m = mask.at(x, y);
                out.at(c, y, x) = m * keep.at(c, y, x) + (1.0 - m) * other.at(c, y, x);
            }
        }
    }
    return out;
}

}  // namespace

Latent shape_fusion(const Latent& xhat, const Latent& xhat_ref, const FlowField& flow_lowres,
                    const OcclusionMask& mask_lowres) {
    require_same_shape(xhat, xhat_ref, "shape_fusion");
    require_mask_matches(mask_lowres, xhat, "shape_fusion");
    return masked_blend(mask_lowres, xhat, warp(xhat_ref, flow_lowres));
}

PixelReference pixel_fusion_reference(const Frame& rough, const Frame& anchor_out, const Frame& prev_out,
                                      const FlowField& anchor_flow, const OcclusionMask& anchor_mask,
                                      const FlowField& prev_flow, const OcclusionMask& prev_mask) {
    require_same_shape(rough, anchor_out, "pixel_fusion_reference");
    require_same_shape(rough, prev_out, "pixel_fusion_reference");
    require_mask_matches(anchor_mask, rough, "pixel_fusion_reference");
    require_mask_matches(prev_mask, rough, "pixel_fusion_reference");
    const Frame warped_prev = warp(prev_out, prev_flow);
    const Frame warped_anchor = warp(anchor_out, anchor_flow);
    return {masked_blend(anchor_mask, masked_blend(prev_mask, rough, warped_prev), warped_anchor),
            intersect(anchor_mask, prev_mask)};
}

Latent inpaint_merge(const NoiseSchedule& schedule, const Latent& x_next, int t_prev, const Frame& reference,
                     const OcclusionMask& mask_lowres, const LossyCodec& codec, const Latent& noise,
                     const FidelityConfig& fidelity) {
    require_mask_matches(mask_lowres, x_next, "inpaint_merge");
    const Latent encoded = fidelity_encode(codec, reference, fidelity);
    require_same_shape(x_next, encoded, "inpaint_merge");
    return masked_blend(mask_lowres, x_next, q_sample(schedule, encoded, t_prev, noise));
}

Latent adain_adjust(const Latent& xhat, const Latent& anchor_xhat, double std_floor) {
    if (xhat.channels() != anchor_xhat.channels()) throw ShapeError("adain_adjust: channel counts differ");
    auto stats = [](std::span<const double> p) {
        double mean = 0.0;
        for (double v : p) mean += v;
        mean /= static_cast<double>(p.size());
        double var = 0.0;
        for (double v : p) var += (v - mean) * (v - mean);
        return std::pair{mean, std::sqrt(var / static_cast<double>(p.size()))};
    };
    Latent out = xhat;
    for (int c = 0; c < xhat.channels(); ++c) {
        const auto [mu, sigma] = stats(xhat.plane(c));
        const auto [mu_ref, sigma_ref] = stats(anchor_xhat.plane(c));
        const double scale = sigma_ref / std::max(sigma, std_floor);
        for (double& v : out.plane(c)) v = (v - mu) * scale + mu_ref;
    }
    return out;
}

KeyframeResult translate_keyframe(const Frame& input, const FrameContext* ctx, const Conditioning& cond,
                                  const NoiseSchedule& schedule, const SamplerOptions& options,
                                  const LossyCodec& codec, const ToyDenoiser& denoiser, int frame_index) {
    const std::vector<int> ts = schedule.ddim_timesteps(options.strength_t, options.ddim_steps);
    const int steps = static_cast<int>(ts.size()) - 1;
    if (ctx != nullptr) {
        if (ctx->anchor == nullptr || ctx->previous == nullptr) {
            throw std::invalid_argument("translate_keyframe: context lacks anchor/previous records");
        }
        if (ctx->anchor->timesteps != std::vector<int>(ts.begin(), ts.end() - 1) ||
            ctx->previous->timesteps != ctx->anchor->timesteps) {
            throw std::invalid_argument("translate_keyframe: reference records use a different step schedule");
        }
        require_same_shape(ctx->anchor_output, input, "translate_keyframe anchor output");
        require_same_shape(ctx->previous_output, input, "translate_keyframe previous output");
    }

    const int factor = codec.spatial_factor();
    Guidance anchor_low, prev_low;
    OcclusionMask anchor_keep, prev_keep, inpaint_keep_low;
    if (ctx != nullptr) {
        anchor_low = downsample_guidance(ctx->anchor_guide.flow, ctx->anchor_guide.visible, factor);
        prev_low = downsample_guidance(ctx->previous_guide.flow, ctx->previous_guide.visible, factor);
        anchor_keep = invert(ctx->anchor_guide.visible);
        prev_keep = invert(ctx->previous_guide.visible);
        // Usable reference = visible in either frame; keep the frame's own
        // sample elsewhere.
        const OcclusionMask usable = invert(intersect(anchor_keep, prev_keep));
        inpaint_keep_low = invert(downsample_guidance(ctx->anchor_guide.flow, usable, factor).mask);
    }

    KeyframeResult result;
    result.record.frame_index = frame_index;
    Latent x = init_latent(input, schedule, options.strength_t, codec, options.seed, options.fidelity);

    for (int k = 0; k < steps; ++k) {
        const int t = ts[k];
        const int t_prev = ts[k + 1];
        StepTrace trace{t, t_prev};

        AttentionState own = denoiser.frame_state(x, t, cond, frame_index);
        Latent eps;
        if (ctx != nullptr && options.cross_frame_attention) {
            const AttentionState cross = make_cross_frame_state(ctx->anchor->states[k], ctx->previous->states[k]);
            eps = denoiser.predict_noise(x, t, cond, &cross);
            trace.cross_attention = true;
        } else {
            eps = denoiser.predict_noise(x, t, cond, &own);
        }

        Latent xhat = predicted_x0(schedule, x, t, eps);
        if (ctx != nullptr && options.shape_fusion && options.stages.shape_fusion_active(t)) {
            xhat = shape_fusion(xhat, ctx->anchor->predictions[k], anchor_low.flow, invert(anchor_low.mask));
            trace.shape_fusion = true;
        }
        if (ctx != nullptr && options.adain && options.stages.adain_active(t)) {
            xhat = adain_adjust(xhat, ctx->anchor->predictions[k]);
            trace.adain = true;
        }

        Latent next = ddim_from_prediction(schedule, xhat, eps, t_prev);
        if (ctx != nullptr && options.pixel_fusion && options.stages.pixel_fusion_active(t)) {
            const Frame rough = codec.decode(xhat);
            const PixelReference ref =
                pixel_fusion_reference(rough, ctx->anchor_output, ctx->previous_output, ctx->anchor_guide.flow,
                                       anchor_keep, ctx->previous_guide.flow, prev_keep);
            const Latent noise = gaussian_noise(next.channels(), next.height(), next.width(), options.seed,
                                                kInpaintStream, (static_cast<std::uint64_t>(frame_index) << 32) | static_cast<std::uint64_t>(k));
            next = inpaint_merge(schedule, next, t_prev, ref.image, inpaint_keep_low, codec, noise, options.fidelity);
            trace.pixel_fusion = true;
        }

        result.record.timesteps.push_back(t);
        result.record.states.push_back(std::move(own));
        result.record.predictions.push_back(std::move(xhat));
        result.trace.push_back(trace);
        x = std::move(next);
    }

    result.output = codec.decode(x);
    return result;
}

}  // namespace v2v
