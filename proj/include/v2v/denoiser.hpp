#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "v2v/schedule.hpp"
#include "v2v/tensor.hpp"

namespace v2v {

/// Dense row-major matrix; rows are tokens, columns are features.
class Matrix {
public:
    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(rows) * cols, fill) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
    std::span<const double> row(int r) const { return {data_.data() + static_cast<std::size_t>(r) * cols_, static_cast<std::size_t>(cols_)}; }

    /// Stacks b's rows under a's.
    static Matrix vstack(const Matrix& a, const Matrix& b);

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);

/// Row-wise softmax(Q K^T / sqrt(d)); exposed for inspection in tests.
Matrix attention_weights(const Matrix& queries, const Matrix& keys);

/// softmax(Q K^T / sqrt(d)) V with d = query feature count.
Matrix attention(const Matrix& queries, const Matrix& keys, const Matrix& values);

/// Stable 32-dim embedding of a prompt string, entries in [-1, 1].
std::vector<double> prompt_embedding(std::string_view prompt);

/// Gradient-magnitude edge map of a frame's luma, normalized to [0, 1] by
/// the largest attainable central-difference magnitude and area-reduced
/// by factor to latent resolution.
Tensor edge_map(const Frame& frame, int factor);

struct Conditioning {
    std::vector<double> prompt;   ///< 32 entries
    Tensor structure;             ///< 1 x h x w at latent resolution
    double control_weight = 1.0;
};

/// Stationary Gaussian prior on each latent channel: mean plus a DCT
/// power spectrum amplitude * exp(-(f / cutoff)^2), f in cycles per sample.
struct SpectralPrior {
    double mean = 0.0;
    double amplitude = 4.0;
    double cutoff = 0.25;
};

/// Per-channel MMSE estimate of a clean latent from u = clean + white
/// noise of variance noise_var under the prior (orthonormal DCT-II, so
/// boundaries are mirrored). noise_var = 0 returns u.
Latent wiener_estimate(const Latent& u, double noise_var, const SpectralPrior& prior = {});

/// Projected keys/values of one or more frames' attention tokens.
struct AttentionState {
    Matrix keys;
    Matrix values;
    std::vector<int> source_frames;
};

/// Keys/values of both frames, anchor rows first.
AttentionState make_cross_frame_state(const AttentionState& anchor, const AttentionState& previous);

/// Fixed-weight noise predictor eps(x_t, t, c_p, c_f): a 3x3 conv into 16
/// hidden channels, one single-head attention block over the flattened
/// latent tokens, and a 3x3 conv back to latent channels. The network runs
/// on the prior's clean estimate of the latent and adds a stylizing
/// residual to it; the result is converted to noise through the schedule.
/// Weights are immutable after construction; calls are reentrant.
class ToyDenoiser {
public:
    static constexpr int kHidden = 16;
    static constexpr int kPromptDim = 32;
    static constexpr std::uint64_t kWeightSeed = 0x5eed2023ULL;

    ToyDenoiser(NoiseSchedule schedule, int latent_channels);

    const NoiseSchedule& schedule() const { return schedule_; }
    int latent_channels() const { return channels_; }

    Latent predict_noise(const Latent& latent, int t, const Conditioning& cond,
                         const AttentionState* attn = nullptr) const;

    /// Keys/values projected from a single frame's latent at step t.
    AttentionState frame_state(const Latent& latent, int t, const Conditioning& cond, int frame_id = 0) const;

    /// Convenience: both frames share t and conditioning.
    AttentionState make_cross_frame_state(const Latent& anchor, const Latent& previous, int t,
                                          const Conditioning& cond) const;

private:
    Tensor hidden_features(const Latent& estimate, int t, const Conditioning& cond) const;
    void check_inputs(const Latent& latent, int t, const Conditioning& cond) const;

    NoiseSchedule schedule_;
    int channels_;
    std::vector<double> conv1_;     // [kHidden][channels][3][3]
    std::vector<double> bias1_;     // [kHidden]
    std::vector<double> prompt_w_;  // [kHidden][kPromptDim]
    std::vector<double> control_w_; // [kHidden]
    std::vector<double> time_w_;    // [kHidden]
    Matrix wq_, wk_, wv_;           // kHidden x kHidden
    std::vector<double> conv2_;     // [channels][kHidden][3][3]
    std::vector<double> bias2_;     // [channels]
    Latent clean_estimate(const Latent& latent, int t) const;

    SpectralPrior prior_{};
    double attn_gate_ = 0.2;
};

}  // namespace v2v
