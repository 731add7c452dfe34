#include "v2v/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>

namespace v2v {

Matrix Matrix::vstack(const Matrix& a, const Matrix& b) {
    if (a.cols_ != b.cols_) throw ShapeError("vstack: column counts differ");
    Matrix out(a.rows_ + b.rows_, a.cols_);
    std::copy(a.data_.begin(), a.data_.end(), out.data_.begin());
    std::copy(b.data_.begin(), b.data_.end(), out.data_.begin() + static_cast<std::ptrdiff_t>(a.data_.size()));
    return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            for (int j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

namespace {

void check_attention_shapes(const Matrix& q, const Matrix& k) {
    if (q.cols() != k.cols()) {
        throw ShapeError("attention: query has " + std::to_string(q.cols()) + " features, keys have " +
                         std::to_string(k.cols()));
    }
    if (k.rows() == 0) throw ShapeError("attention: no keys");
}

// Softmax weights of one query row against all keys, written into w.
void softmax_row(const Matrix& q, int r, const Matrix& k, double scale, std::vector<double>& w) {
    const auto qr = q.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < k.rows(); ++j) {
        const auto kr = k.row(j);
        double dot = 0.0;
        for (int c = 0; c < k.cols(); ++c) dot += qr[c] * kr[c];
        w[j] = dot * scale;
        mx = std::max(mx, w[j]);
    }
    double sum = 0.0;
    for (int j = 0; j < k.rows(); ++j) {
        w[j] = std::exp(w[j] - mx);
        sum += w[j];
    }
    for (int j = 0; j < k.rows(); ++j) w[j] /= sum;
}

}  // namespace

Matrix attention_weights(const Matrix& queries, const Matrix& keys) {
    check_attention_shapes(queries, keys);
    const double scale = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
    Matrix out(queries.rows(), keys.rows());
    std::vector<double> w(keys.rows());
    for (int r = 0; r < queries.rows(); ++r) {
        softmax_row(queries, r, keys, scale, w);
        for (int j = 0; j < keys.rows(); ++j) out(r, j) = w[j];
    }
    return out;
}

Matrix attention(const Matrix& queries, const Matrix& keys, const Matrix& values) {
    check_attention_shapes(queries, keys);
    if (keys.rows() != values.rows()) throw ShapeError("attention: key and value row counts differ");
    const double scale = 1.0 / std::sqrt(static_cast<double>(queries.cols()));
    Matrix out(queries.rows(), values.cols());
    std::vector<double> w(keys.rows());
    for (int r = 0; r < queries.rows(); ++r) {
        softmax_row(queries, r, keys, scale, w);
        for (int j = 0; j < values.rows(); ++j) {
            const auto vr = values.row(j);
            for (int c = 0; c < values.cols(); ++c) out(r, c) += w[j] * vr[c];
        }
    }
    return out;
}

std::vector<double> prompt_embedding(std::string_view prompt) {
    // FNV-1a, then a splitmix64 stream; both are fixed by their definitions.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : prompt) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    std::vector<double> out(ToyDenoiser::kPromptDim);
    for (double& v : out) {
        h += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = h;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        z ^= z >> 31;
        v = static_cast<double>(z >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    }
    return out;
}

Tensor edge_map(const Frame& frame, int factor) {
    const Tensor y = luma(frame);
    const int h = y.height();
    const int w = y.width();
    Tensor mag(1, h, w);
    const double norm = 1.0 / std::sqrt(0.5);  // |(0.5, 0.5)| bounds central differences on [0,1]
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const double gx = 0.5 * (y.clamped(0, r, c + 1) - y.clamped(0, r, c - 1));
            const double gy = 0.5 * (y.clamped(0, r + 1, c) - y.clamped(0, r - 1, c));
            mag.at(0, r, c) = std::min(1.0, std::sqrt(gx * gx + gy * gy) * norm);
        }
    }
    if (factor == 1) return mag;
    if (h % factor != 0 || w % factor != 0) throw ShapeError("edge_map: frame not divisible by factor");
    Tensor out(1, h / factor, w / factor);
    for (int r = 0; r < out.height(); ++r) {
        for (int c = 0; c < out.width(); ++c) {
            double acc = 0.0;
            for (int dy = 0; dy < factor; ++dy)
                for (int dx = 0; dx < factor; ++dx) acc += mag.at(0, r * factor + dy, c * factor + dx);
            out.at(0, r, c) = acc / (factor * factor);
        }
    }
    return out;
}

namespace {

// Orthonormal DCT-II basis: basis[k * n + i].
std::vector<double> dct_basis(int n) {
    std::vector<double> b(static_cast<std::size_t>(n) * n);
    const double pi = std::acos(-1.0);
    for (int k = 0; k < n; ++k) {
        const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / n);
        for (int i = 0; i < n; ++i) b[static_cast<std::size_t>(k) * n + i] = scale * std::cos(pi * (i + 0.5) * k / n);
    }
    return b;
}

}  // namespace

Latent wiener_estimate(const Latent& u, double noise_var, const SpectralPrior& prior) {
    if (noise_var < 0.0) throw std::invalid_argument("wiener_estimate: negative noise variance");
    if (noise_var == 0.0) return u;
    const int h = u.height();
    const int w = u.width();
    const std::vector<double> bx = dct_basis(w);
    const std::vector<double> by = dct_basis(h);
    std::vector<double> gain(static_cast<std::size_t>(h) * w);
    for (int ky = 0; ky < h; ++ky) {
        for (int kx = 0; kx < w; ++kx) {
            const double fx = 0.5 * kx / w;
            const double fy = 0.5 * ky / h;
            const double f2 = (fx * fx + fy * fy) / (prior.cutoff * prior.cutoff);
            const double power = prior.amplitude * std::exp(-f2);
            gain[static_cast<std::size_t>(ky) * w + kx] = power / (power + noise_var);
        }
    }
    Latent out(u.channels(), h, w);
    std::vector<double> tmp(static_cast<std::size_t>(h) * w), coef(tmp.size());
    for (int c = 0; c < u.channels(); ++c) {
        auto src = u.plane(c);
        // rows: tmp[y][kx]
        for (int y = 0; y < h; ++y)
            for (int kx = 0; kx < w; ++kx) {
                double acc = 0.0;
                for (int x = 0; x < w; ++x) acc += bx[static_cast<std::size_t>(kx) * w + x] * (src[static_cast<std::size_t>(y) * w + x] - prior.mean);
                tmp[static_cast<std::size_t>(y) * w + kx] = acc;
            }
        // columns: coef[ky][kx], scaled by the gain
        for (int ky = 0; ky < h; ++ky)
            for (int kx = 0; kx < w; ++kx) {
                double acc = 0.0;
                for (int y = 0; y < h; ++y) acc += by[static_cast<std::size_t>(ky) * h + y] * tmp[static_cast<std::size_t>(y) * w + kx];
                coef[static_cast<std::size_t>(ky) * w + kx] = acc * gain[static_cast<std::size_t>(ky) * w + kx];
            }
        // inverse
        for (int y = 0; y < h; ++y)
            for (int kx = 0; kx < w; ++kx) {
                double acc = 0.0;
                for (int ky = 0; ky < h; ++ky) acc += by[static_cast<std::size_t>(ky) * h + y] * coef[static_cast<std::size_t>(ky) * w + kx];
                tmp[static_cast<std::size_t>(y) * w + kx] = acc;
            }
        auto dst = out.plane(c);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int kx = 0; kx < w; ++kx) acc += bx[static_cast<std::size_t>(kx) * w + x] * tmp[static_cast<std::size_t>(y) * w + kx];
                dst[static_cast<std::size_t>(y) * w + x] = prior.mean + acc;
            }
    }
    return out;
}

AttentionState make_cross_frame_state(const AttentionState& anchor, const AttentionState& previous) {
    if (anchor.keys.cols() != previous.keys.cols() || anchor.keys.rows() != previous.keys.rows()) {
        throw ShapeError("make_cross_frame_state: frame token shapes differ");
    }
    AttentionState s;
    s.keys = Matrix::vstack(anchor.keys, previous.keys);
    s.values = Matrix::vstack(anchor.values, previous.values);
    s.source_frames = anchor.source_frames;
    s.source_frames.insert(s.source_frames.end(), previous.source_frames.begin(), previous.source_frames.end());
    return s;
}

ToyDenoiser::ToyDenoiser(NoiseSchedule schedule, int latent_channels)
    : schedule_(std::move(schedule)), channels_(latent_channels) {
    if (latent_channels < 1 || latent_channels >= kHidden) {
        throw std::invalid_argument("ToyDenoiser: latent_channels must be in [1, 15]");
    }
    std::mt19937_64 rng(kWeightSeed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int c_in = channels_;

    // Hidden channels [0, C) pass each latent channel through; the
    // remaining channels are seeded random features.
    conv1_.assign(static_cast<std::size_t>(kHidden) * c_in * 9, 0.0);
    for (int o = 0; o < kHidden; ++o) {
        for (int i = 0; i < c_in; ++i) {
            for (int k = 0; k < 9; ++k) {
                double& wgt = conv1_[(static_cast<std::size_t>(o) * c_in + i) * 9 + k];
                if (o < c_in) wgt = (o == i && k == 4) ? 1.0 : 0.0;
                else wgt = 0.3 * normal(rng);
            }
        }
    }
    bias1_.resize(kHidden);
    prompt_w_.resize(static_cast<std::size_t>(kHidden) * kPromptDim);
    control_w_.resize(kHidden);
    time_w_.resize(kHidden);
    for (int o = 0; o < kHidden; ++o) {
        const bool feature = o >= c_in;
        bias1_[o] = feature ? 0.1 * normal(rng) : 0.0;
        for (int p = 0; p < kPromptDim; ++p) {
            prompt_w_[static_cast<std::size_t>(o) * kPromptDim + p] = feature ? 0.5 / std::sqrt(double(kPromptDim)) * normal(rng) : 0.0;
        }
        control_w_[o] = feature ? normal(rng) : 0.0;
        time_w_[o] = feature ? 0.2 * normal(rng) : 0.0;
    }

    wq_ = Matrix(kHidden, kHidden);
    wk_ = Matrix(kHidden, kHidden);
    wv_ = Matrix(kHidden, kHidden);
    const double proj = 1.5 / std::sqrt(double(kHidden));
    for (int r = 0; r < kHidden; ++r) {
        for (int c = 0; c < kHidden; ++c) {
            wq_(r, c) = proj * normal(rng);
            wk_(r, c) = proj * normal(rng);
            wv_(r, c) = (r == c ? 1.0 : 0.0) + 0.1 * normal(rng);
        }
    }

    // Output conv reads back the content channels; the feature channels
    // act only through the attention weights.
    conv2_.assign(static_cast<std::size_t>(c_in) * kHidden * 9, 0.0);
    for (int o = 0; o < c_in; ++o) conv2_[(static_cast<std::size_t>(o) * kHidden + o) * 9 + 4] = 1.0;
    bias2_.assign(c_in, 0.0);
}

void ToyDenoiser::check_inputs(const Latent& latent, int t, const Conditioning& cond) const {
    if (latent.channels() != channels_) {
        throw ShapeError("predict_noise: expected " + std::to_string(channels_) + " latent channels, got " +
                         latent.shape_string());
    }
    if (t < 1 || t > schedule_.t_max()) {
        throw std::out_of_range("predict_noise: timestep " + std::to_string(t) + " outside [1, " +
                                std::to_string(schedule_.t_max()) + "]");
    }
    if (cond.prompt.size() != static_cast<std::size_t>(kPromptDim)) {
        throw ShapeError("predict_noise: prompt embedding must have 32 entries");
    }
    if (!cond.structure.empty() &&
        (cond.structure.channels() != 1 || !cond.structure.same_spatial(latent))) {
        throw ShapeError("predict_noise: structure map " + cond.structure.shape_string() +
                         " does not match latent " + latent.shape_string());
    }
}

Latent ToyDenoiser::clean_estimate(const Latent& latent, int t) const {
    const double abar = schedule_.alpha_bar(t);
    Latent u = latent;
    for (double& v : u.values()) v /= std::sqrt(abar);
    return wiener_estimate(u, (1.0 - abar) / abar, prior_);
}

Tensor ToyDenoiser::hidden_features(const Latent& estimate, int t, const Conditioning& cond) const {
    const int h = estimate.height();
    const int w = estimate.width();
    const double tt = static_cast<double>(t) / schedule_.t_max();

    Tensor hidden(kHidden, h, w);
    for (int o = 0; o < kHidden; ++o) {
        double shift = bias1_[o] + time_w_[o] * tt;
        for (int p = 0; p < kPromptDim; ++p) shift += prompt_w_[static_cast<std::size_t>(o) * kPromptDim + p] * cond.prompt[p];
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = shift;
                for (int i = 0; i < channels_; ++i) {
                    const double* k = &conv1_[(static_cast<std::size_t>(o) * channels_ + i) * 9];
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx)
                            acc += k[(dy + 1) * 3 + (dx + 1)] * estimate.clamped(i, y + dy, x + dx);
                }
                if (!cond.structure.empty()) acc += cond.control_weight * control_w_[o] * cond.structure.at(0, y, x);
                hidden.at(o, y, x) = o < channels_ ? acc : std::tanh(acc);
            }
        }
    }
    return hidden;
}

namespace {

Matrix tokens_of(const Tensor& hidden) {
    Matrix m(hidden.height() * hidden.width(), hidden.channels());
    for (int c = 0; c < hidden.channels(); ++c) {
        auto p = hidden.plane(c);
        for (std::size_t i = 0; i < p.size(); ++i) m(static_cast<int>(i), c) = p[i];
    }
    return m;
}

}  // namespace

AttentionState ToyDenoiser::frame_state(const Latent& latent, int t, const Conditioning& cond, int frame_id) const {
    check_inputs(latent, t, cond);
    const Matrix tokens = tokens_of(hidden_features(clean_estimate(latent, t), t, cond));
    return {matmul(tokens, wk_), matmul(tokens, wv_), {frame_id}};
}

AttentionState ToyDenoiser::make_cross_frame_state(const Latent& anchor, const Latent& previous, int t,
                                                   const Conditioning& cond) const {
    if (!anchor.same_shape(previous)) throw ShapeError("make_cross_frame_state: latent shapes differ");
    return v2v::make_cross_frame_state(frame_state(anchor, t, cond, 0), frame_state(previous, t, cond, 1));
}

Latent ToyDenoiser::predict_noise(const Latent& latent, int t, const Conditioning& cond,
                                  const AttentionState* attn) const {
    check_inputs(latent, t, cond);
    const int h = latent.height();
    const int w = latent.width();
    const double abar = schedule_.alpha_bar(t);
    const double s = std::sqrt(abar);
    const double n = std::sqrt(1.0 - abar);

    const Latent estimate = clean_estimate(latent, t);
    const Tensor hidden = hidden_features(estimate, t, cond);
    const Matrix tokens = tokens_of(hidden);
    const Matrix queries = matmul(tokens, wq_);
    Matrix mixed;
    if (attn != nullptr) {
        if (attn->keys.cols() != kHidden || attn->values.cols() != kHidden) {
            throw ShapeError("predict_noise: attention state has the wrong feature width");
        }
        mixed = attention(queries, attn->keys, attn->values);
    } else {
        mixed = attention(queries, matmul(tokens, wk_), matmul(tokens, wv_));
    }

    // Gated residual: h' = h + g (attn - h).
    Tensor gated(kHidden, h, w);
    for (int c = 0; c < kHidden; ++c) {
        auto src = hidden.plane(c);
        auto dst = gated.plane(c);
        for (std::size_t i = 0; i < dst.size(); ++i) {
            dst[i] = src[i] + attn_gate_ * (mixed(static_cast<int>(i), c) - src[i]);
        }
    }

    // The network output is the clean-latent estimate.
    Latent eps(channels_, h, w);
    for (int o = 0; o < channels_; ++o) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = bias2_[o];
                for (int i = 0; i < kHidden; ++i) {
                    const double* k = &conv2_[(static_cast<std::size_t>(o) * kHidden + i) * 9];
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx) {
                            const double kw = k[(dy + 1) * 3 + (dx + 1)];
                            if (kw != 0.0) acc += kw * gated.clamped(i, y + dy, x + dx);
                        }
                }
                const double xt = latent.at(o, y, x);
                eps.at(o, y, x) = (xt - s * acc) / n;
            }
        }
    }
    return eps;
}

}  // namespace v2v
