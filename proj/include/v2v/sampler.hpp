#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "v2v/codec.hpp"
#include "v2v/denoiser.hpp"
#include "v2v/flow.hpp"
#include "v2v/schedule.hpp"
#include "v2v/tensor.hpp"

namespace v2v {

/// sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
Latent q_sample(const NoiseSchedule& schedule, const Latent& x0, int t, const Latent& noise);

/// (x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t). Throws when abar_t == 0.
Latent predicted_x0(const NoiseSchedule& schedule, const Latent& x_t, int t, const Latent& eps);

/// Deterministic DDIM update from an (optionally edited) clean estimate:
/// sqrt(abar_prev) x0_hat + sqrt(1 - abar_prev) eps.
Latent ddim_from_prediction(const NoiseSchedule& schedule, const Latent& x0_hat, const Latent& eps, int t_prev);

/// One deterministic DDIM step from t to t_prev < t.
Latent ddim_step(const NoiseSchedule& schedule, const Latent& x_t, int t, int t_prev, const Latent& eps);

/// Standard normal tensor keyed by (seed, stream, index); identical keys
/// give identical tensors.
Latent gaussian_noise(int channels, int height, int width, std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t index);

/// SDEdit start: q_sample(E*(frame), strength_t, noise(seed)).
Latent init_latent(const Frame& input, const NoiseSchedule& schedule, int strength_t, const LossyCodec& codec,
                   std::uint64_t seed, const FidelityConfig& fidelity = {});

// The fusion operators below take keep-masks: 1 keeps the current frame's
// own value, 0 takes the warped reference. The sampler passes the occluded set, i.e. invert(visible).

/// mask * xhat + (1 - mask) * warp(xhat_ref, flow), all at latent resolution.
Latent shape_fusion(const Latent& xhat, const Latent& xhat_ref, const FlowField& flow_lowres,
                    const OcclusionMask& mask_lowres);

struct PixelReference {
    Frame image;         ///< warped anchor/previous outputs overlaid on the rough frame
    OcclusionMask mask;  ///< M_0 AND M_prev: where neither reference applies
};

/// M0 (M1 rough + (1 - M1) warp(prev, flow_prev)) + (1 - M0) warp(anchor, flow_anchor).
PixelReference pixel_fusion_reference(const Frame& rough, const Frame& anchor_out, const Frame& prev_out,
                                      const FlowField& anchor_flow, const OcclusionMask& anchor_mask,
                                      const FlowField& prev_flow, const OcclusionMask& prev_mask);

/// mask * x_next + (1 - mask) * q_sample(E*(reference), t_prev, noise).
Latent inpaint_merge(const NoiseSchedule& schedule, const Latent& x_next, int t_prev, const Frame& reference,
                     const OcclusionMask& mask_lowres, const LossyCodec& codec, const Latent& noise,
                     const FidelityConfig& fidelity = {});

/// Per-channel mean/std transfer from anchor to xhat. The source std is
/// floored at std_floor, so constant channels map to the anchor mean.
Latent adain_adjust(const Latent& xhat, const Latent& anchor_xhat, double std_floor = 1e-5);

struct SamplerOptions {
    int strength_t = 750;
    int ddim_steps = 20;
    StageSchedule stages{};
    bool cross_frame_attention = true;
    bool shape_fusion = true;
    bool pixel_fusion = true;
    bool adain = true;
    std::uint64_t seed = 0;
    FidelityConfig fidelity{};
};

/// Per-step artefacts of one key frame's sampling run, consumed by later
/// key frames as anchor or previous reference.
struct KeyframeRecord {
    int frame_index = 0;
    std::vector<int> timesteps;            ///< t of each step
    std::vector<AttentionState> states;    ///< projected K/V of x_t at each step
    std::vector<Latent> predictions;       ///< x0_hat after adjustments at each step
};

struct FrameContext {
    const KeyframeRecord* anchor = nullptr;
    const KeyframeRecord* previous = nullptr;
    Frame anchor_output;
    Frame previous_output;
    ReferenceGuide anchor_guide;
    ReferenceGuide previous_guide;
};

struct StepTrace {
    int t = 0;
    int t_prev = 0;
    bool cross_attention = false;
    bool shape_fusion = false;
    bool pixel_fusion = false;
    bool adain = false;
};

struct KeyframeResult {
    Frame output;
    KeyframeRecord record;
    std::vector<StepTrace> trace;
};

/// Renders one key frame. ctx is absent only for the anchor frame.
KeyframeResult translate_keyframe(const Frame& input, const FrameContext* ctx, const Conditioning& cond,
                                  const NoiseSchedule& schedule, const SamplerOptions& options,
                                  const LossyCodec& codec, const ToyDenoiser& denoiser, int frame_index = 0);

}  // namespace v2v
