#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "v2v/denoiser.hpp"
#include "v2v/synthetic.hpp"

using namespace v2v;

// Recorded once from the fixed-seed network and frozen.
constexpr double GOLDEN_ZERO_SUM = -0.047501403779501919;
constexpr double GOLDEN_ZERO_SQ = 0.0030072604494994961;
constexpr double GOLDEN_ZERO_PIXEL = -0.010442536576183369;
constexpr double GOLDEN_RANGE_LO = -44.642709255332512;
constexpr double GOLDEN_RANGE_HI = 41.891022829447081;

namespace {

Matrix random_matrix(int rows, int cols, std::uint64_t seed, double scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, scale);
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = n(rng);
    return m;
}

Conditioning zero_conditioning(int h, int w) {
    return {std::vector<double>(ToyDenoiser::kPromptDim, 0.0), Tensor(1, h, w), 0.0};
}

// Orthonormal 1D DCT-II evaluated straight from the sum.
std::vector<double> dct(const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    const double pi = std::acos(-1.0);
    std::vector<double> out(n);
    for (int k = 0; k < n; ++k) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += v[i] * std::cos(pi * (i + 0.5) * k / n);
        out[k] = acc * std::sqrt((k == 0 ? 1.0 : 2.0) / n);
    }
    return out;
}

}  // namespace

TEST_CASE("attention: single key-value pair returns that value") {
    const Matrix q = random_matrix(5, 4, 1);
    const Matrix k = random_matrix(1, 4, 2);
    const Matrix v = random_matrix(1, 3, 3);
    const Matrix out = attention(q, k, v);
    for (int r = 0; r < 5; ++r)
        for (int c = 0; c < 3; ++c) CHECK(out(r, c) == doctest::Approx(v(0, c)).epsilon(1e-15));
}

TEST_CASE("attention: one-hot queries at large scale select the matching value") {
    Matrix q(3, 3), k(3, 3);
    for (int i = 0; i < 3; ++i) {
        q(i, i) = 100.0;
        k(i, i) = 100.0;
    }
    const Matrix v = random_matrix(3, 4, 4);
    const Matrix out = attention(q, k, v);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) CHECK(std::abs(out(r, c) - v(r, c)) < 1e-3);
}

TEST_CASE("attention weights on a 3-token example match a hand softmax") {
    const Matrix q = random_matrix(3, 2, 5);
    const Matrix k = random_matrix(3, 2, 6);
    const Matrix w = attention_weights(q, k);
    for (int i = 0; i < 3; ++i) {
        double e[3], s = 0.0;
        for (int j = 0; j < 3; ++j) {
            e[j] = std::exp((q(i, 0) * k(j, 0) + q(i, 1) * k(j, 1)) / std::sqrt(2.0));
            s += e[j];
        }
        for (int j = 0; j < 3; ++j) CHECK(w(i, j) == doctest::Approx(e[j] / s).epsilon(1e-13));
    }
    const Matrix v = random_matrix(3, 5, 7);
    const Matrix got = attention(q, k, v);
    const Matrix want = oracle::attention(q, k, v);
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 5; ++c) CHECK(got(i, c) == doctest::Approx(want(i, c)).epsilon(1e-13));
}

TEST_CASE("attention: rows sum to one") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Matrix w = attention_weights(random_matrix(6, 8, seed, 3.0), random_matrix(9, 8, seed + 100, 3.0));
        for (int r = 0; r < 6; ++r) {
            double s = 0.0;
            for (int j = 0; j < 9; ++j) s += w(r, j);
            CHECK(std::abs(s - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("attention: errors") {
    CHECK_THROWS_AS(attention(Matrix(2, 3), Matrix(2, 4), Matrix(2, 1)), ShapeError);
    CHECK_THROWS_AS(attention(Matrix(2, 3), Matrix(2, 3), Matrix(3, 1)), ShapeError);
    CHECK_THROWS_AS(attention(Matrix(2, 3), Matrix(0, 3), Matrix(0, 1)), ShapeError);
}

TEST_CASE("prompt embedding is stable and bounded") {
    const auto a = prompt_embedding("a watercolor painting");
    REQUIRE(a.size() == 32);
    CHECK(a == prompt_embedding("a watercolor painting"));
    CHECK_FALSE(a == prompt_embedding("an oil painting"));
    for (double v : a) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("edge_map") {
    const Tensor flat = edge_map(Frame(3, 8, 8, 0.6), 1);
    for (double v : flat.values()) CHECK(v == 0.0);

    Frame step(3, 8, 8, 0.0);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 8; ++y)
            for (int x = 4; x < 8; ++x) step.at(c, y, x) = 1.0;
    const Tensor e = edge_map(step, 1);
    for (int y = 0; y < 8; ++y) {
        const double edge = std::max(e.at(0, y, 3), e.at(0, y, 4));
        for (int x = 0; x < 8; ++x) CHECK(e.at(0, y, x) <= edge);
        CHECK(e.at(0, y, 0) == 0.0);
        CHECK(e.at(0, y, 7) == 0.0);
    }

    // Checkerboard against a direct finite-difference evaluation.
    Frame cb(3, 8, 8);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) cb.at(c, y, x) = ((x / 2 + y / 2) % 2) ? 0.9 : 0.2;
    const Tensor ec = edge_map(cb, 1);
    const Tensor y = luma(cb);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 8; ++c) {
            const double gx = 0.5 * (oracle::clamped_read(y, 0, r, c + 1) - oracle::clamped_read(y, 0, r, c - 1));
            const double gy = 0.5 * (oracle::clamped_read(y, 0, r + 1, c) - oracle::clamped_read(y, 0, r - 1, c));
            const double want = std::min(1.0, std::hypot(gx, gy) / std::sqrt(0.5));
            CHECK(ec.at(0, r, c) == doctest::Approx(want).epsilon(1e-14));
        }
    const Tensor half = edge_map(cb, 2);
    REQUIRE(half.height() == 4);
    double block = 0.0;
    for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) block += ec.at(0, 2 + dy, 4 + dx);
    CHECK(half.at(0, 1, 2) == doctest::Approx(block / 4));
    for (double v : half.values()) CHECK((v >= 0.0 && v <= 1.0));
    CHECK_THROWS_AS(edge_map(Frame(3, 6, 6), 4), ShapeError);
}

TEST_CASE("wiener_estimate matches a direct spectral evaluation") {
    const Latent u = oracle::random_normal(2, 5, 6, 3);
    const SpectralPrior prior{0.3, 2.0, 0.2};
    const double var = 0.7;
    const Latent got = wiener_estimate(u, var, prior);
    CHECK(wiener_estimate(u, 0.0, prior) == u);
    CHECK_THROWS(wiener_estimate(u, -1.0, prior));

    const int h = 5, w = 6;
    for (int c = 0; c < 2; ++c) {
        // 2D DCT of the centred plane, coefficient by coefficient.
        std::vector<std::vector<double>> rows(h);
        for (int y = 0; y < h; ++y) {
            std::vector<double> r(w);
            for (int x = 0; x < w; ++x) r[x] = u.at(c, y, x) - prior.mean;
            rows[y] = dct(r);
        }
        std::vector<std::vector<double>> coef(h, std::vector<double>(w));
        for (int kx = 0; kx < w; ++kx) {
            std::vector<double> col(h);
            for (int y = 0; y < h; ++y) col[y] = rows[y][kx];
            const auto d = dct(col);
            for (int ky = 0; ky < h; ++ky) {
                const double fx = 0.5 * kx / w, fy = 0.5 * ky / h;
                const double p = prior.amplitude * std::exp(-(fx * fx + fy * fy) / (prior.cutoff * prior.cutoff));
                coef[ky][kx] = d[ky] * p / (p + var);
            }
        }
        // Reconstruct by summing scaled basis images.
        const double pi = std::acos(-1.0);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int ky = 0; ky < h; ++ky)
                    for (int kx = 0; kx < w; ++kx) {
                        const double bx = std::sqrt((kx == 0 ? 1.0 : 2.0) / w) * std::cos(pi * (x + 0.5) * kx / w);
                        const double by = std::sqrt((ky == 0 ? 1.0 : 2.0) / h) * std::cos(pi * (y + 0.5) * ky / h);
                        acc += coef[ky][kx] * bx * by;
                    }
                CHECK(got.at(c, y, x) == doctest::Approx(prior.mean + acc).epsilon(1e-12));
            }
    }
}

TEST_CASE("predict_noise: determinism and shape") {
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    const ToyDenoiser den(s, 4);
    const Latent x = oracle::random_normal(4, 6, 6, 1);
    Conditioning cond{prompt_embedding("p"), Tensor(1, 6, 6, 0.5), 1.0};
    const Latent a = den.predict_noise(x, 500, cond);
    CHECK(a.same_shape(x));
    CHECK(a == den.predict_noise(x, 500, cond));
    const ToyDenoiser again(s, 4);
    CHECK(a == again.predict_noise(x, 500, cond));
    CHECK_FALSE(a == den.predict_noise(x, 500, Conditioning{prompt_embedding("q"), Tensor(1, 6, 6, 0.5), 1.0}));
}

TEST_CASE("predict_noise: attention from the latent itself equals self-attention") {
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    const ToyDenoiser den(s, 4);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Latent x = oracle::random_normal(4, 5, 5, seed);
        Conditioning cond{prompt_embedding("p"), oracle::random_tensor(1, 5, 5, seed), 0.7};
        const AttentionState own = den.frame_state(x, 321, cond);
        CHECK(den.predict_noise(x, 321, cond, &own) == den.predict_noise(x, 321, cond));
    }
}

TEST_CASE("cross-frame state") {
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    const ToyDenoiser den(s, 4);
    const Latent a = oracle::random_normal(4, 2, 2, 1);
    const Latent b = oracle::random_normal(4, 2, 2, 2);
    const Latent q = oracle::random_normal(4, 2, 2, 3);
    Conditioning cond{prompt_embedding("p"), Tensor(1, 2, 2), 1.0};

    const AttentionState single = den.frame_state(a, 600, cond);
    const AttentionState dup = den.make_cross_frame_state(a, a, 600, cond);
    CHECK(dup.keys.rows() == 2 * single.keys.rows());
    CHECK(dup.values.rows() == 2 * single.values.rows());
    CHECK(dup.source_frames == std::vector<int>{0, 1});
    const Latent e1 = den.predict_noise(q, 600, cond, &single);
    const Latent e2 = den.predict_noise(q, 600, cond, &dup);
    CHECK(max_abs_difference(e1, e2) < 1e-12);

    const AttentionState full = den.make_cross_frame_state(a, b, 600, cond);
    CHECK(full.keys.rows() == 8);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < ToyDenoiser::kHidden; ++c) {
            CHECK(full.keys(r, c) == single.keys(r, c));
            CHECK(full.values(r, c) == single.values(r, c));
        }
    CHECK(max_abs_difference(den.predict_noise(q, 600, cond, &full), e1) > 1e-9);

    CHECK_THROWS_AS(den.make_cross_frame_state(a, Latent(4, 2, 3), 600, cond), ShapeError);
}

TEST_CASE("predict_noise: errors") {
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    const ToyDenoiser den(s, 4);
    const Latent x(4, 4, 4);
    Conditioning cond{prompt_embedding("p"), Tensor(1, 4, 4), 1.0};
    CHECK_THROWS_AS(den.predict_noise(Latent(3, 4, 4), 10, cond), ShapeError);
    CHECK_THROWS_AS(den.predict_noise(x, 0, cond), std::out_of_range);
    CHECK_THROWS_AS(den.predict_noise(x, 1001, cond), std::out_of_range);
    CHECK_THROWS_AS(den.predict_noise(x, 10, Conditioning{{1.0}, Tensor(1, 4, 4), 1.0}), ShapeError);
    CHECK_THROWS_AS(den.predict_noise(x, 10, Conditioning{prompt_embedding("p"), Tensor(1, 4, 5), 1.0}), ShapeError);
    AttentionState bad{Matrix(3, 5), Matrix(3, 5), {0}};
    CHECK_THROWS_AS(den.predict_noise(x, 10, cond, &bad), ShapeError);
    CHECK_THROWS(ToyDenoiser(s, 0));
}

TEST_CASE("predict_noise: golden output for a zero latent") {
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    const ToyDenoiser den(s, 4);
    const Latent eps = den.predict_noise(Latent(4, 4, 4), 500, zero_conditioning(4, 4));
    double sum = 0.0, sq = 0.0;
    for (double v : eps.values()) {
        sum += v;
        sq += v * v;
    }
    CHECK(sum == doctest::Approx(GOLDEN_ZERO_SUM).epsilon(1e-10));
    CHECK(sq == doctest::Approx(GOLDEN_ZERO_SQ).epsilon(1e-10));
    CHECK(eps.at(2, 1, 3) == doctest::Approx(GOLDEN_ZERO_PIXEL).epsilon(1e-10));
}

TEST_CASE("predict_noise: output range for inputs in [-3, 3]") {
    const NoiseSchedule s = NoiseSchedule::scaled_linear();
    const ToyDenoiser den(s, 4);
    double lo = 0.0, hi = 0.0;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const Latent x = oracle::random_tensor(4, 8, 8, seed, -3.0, 3.0);
        Conditioning cond{prompt_embedding("range"), oracle::random_tensor(1, 8, 8, seed + 9), 1.0};
        for (int t : {1, 100, 500, 999}) {
            const Latent e = den.predict_noise(x, t, cond);
            for (double v : e.values()) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }
    MESSAGE("eps range " << lo << " .. " << hi);
    CHECK(lo == doctest::Approx(GOLDEN_RANGE_LO).epsilon(1e-9));
    CHECK(hi == doctest::Approx(GOLDEN_RANGE_HI).epsilon(1e-9));
}
