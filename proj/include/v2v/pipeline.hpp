#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "v2v/codec.hpp"
#include "v2v/flow.hpp"
#include "v2v/propagate.hpp"
#include "v2v/sampler.hpp"
#include "v2v/schedule.hpp"
#include "v2v/tensor.hpp"

namespace v2v {

/// Every tunable of the engine. Stage thresholds are fractions of t_max.
struct PipelineConfig {
    int t_max = 1000;
    int ddim_steps = 20;
    double strength = 0.75;
    double t_s = 0.1;
    double t_p0 = 0.5;
    double t_p1 = 0.8;
    double t_a = 0.8;
    bool adain_enabled = true;
    bool cross_frame_attention = true;
    bool shape_fusion = true;
    bool pixel_fusion = true;
    bool color_correct = false;
    double control_weight = 1.0;
    std::uint64_t seed = 0;
    int key_interval = 10;
    FidelityConfig fidelity{};
    FlowOptions flow{};
    ConsistencyThreshold occlusion{};
    PropagationOptions propagation{};

    NoiseSchedule schedule() const;
    SamplerOptions sampler_options() const;
    /// Throws std::invalid_argument describing the first bad field.
    void validate() const;
};

/// Applies `key=value` lines to cfg. Blank lines and lines starting with
/// '#' are ignored; unknown keys and malformed values throw.
void apply_config(PipelineConfig& cfg, std::istream& in);
void apply_config_file(PipelineConfig& cfg, const std::filesystem::path& path);
/// Applies a single assignment.
void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value);
/// key=value dump that apply_config reads back unchanged.
std::string format_config(const PipelineConfig& cfg);

struct VideoJob {
    std::vector<Frame> frames;
    std::string prompt;
    PipelineConfig config{};
};

/// Failure inside a per-frame component, tagged with the frame index.
class FrameError : public std::runtime_error {
public:
    FrameError(int frame, const std::string& what)
        : std::runtime_error("frame " + std::to_string(frame) + ": " + what), frame_(frame) {}
    int frame() const { return frame_; }

private:
    int frame_;
};

struct MetricsReport {
    double pixel_mse = 0.0;
    std::vector<double> per_frame;  ///< one value per consecutive pair
};

/// {0, K, 2K, ...} restricted to [0, frame_count).
std::vector<int> key_frame_indices(int frame_count, int key_interval);

/// Per-channel histogram matching of input to reference.
Frame color_correct(const Frame& input, const Frame& reference);

/// Each output frame i is warped onto frame i + 1 with steps[i].forward and
/// compared with it over the pixels visible in steps[i].mask.
MetricsReport pixel_mse(const std::vector<Frame>& outputs, const std::vector<FlowPair>& steps);
MetricsReport pixel_mse(const std::vector<Frame>& outputs, const FlowChain& chain);

struct KeyframeOutputs {
    std::map<int, Frame> frames;
    std::vector<std::vector<StepTrace>> traces;  ///< one per key, in key order
};

struct PipelineResult {
    std::vector<Frame> frames;
    std::vector<int> keys;
    std::vector<Provenance> provenance;
    std::vector<Tensor> error_maps;
    MetricsReport metrics;
    std::vector<std::vector<StepTrace>> traces;
};

/// Translation engine bound to a codec. The denoiser is built from the
/// config's schedule and the codec's latent channel count.
class Pipeline {
public:
    explicit Pipeline(const LossyCodec& codec) : codec_(codec) {}

    /// Frames after optional color correction; the reference is the
    /// anchor translated from pure noise.
    std::vector<Frame> prepare_inputs(const VideoJob& job) const;

    /// Translates the key frames in order, anchor first.
    KeyframeOutputs translate_keys(const VideoJob& job, const std::vector<Frame>& inputs, const FlowChain& chain) const;

    /// Full run: key frames, propagation, blending and metrics.
    PipelineResult run(const VideoJob& job) const;

private:
    const LossyCodec& codec_;
};

/// Runs with the default toy codec.
PipelineResult run(const VideoJob& job);

/// Checks every frame shares the first frame's shape.
void check_frames(const std::vector<Frame>& frames);

/// Flow chain over the frames; empty for a single frame.
FlowChain build_flow_chain(const std::vector<Frame>& frames, const PipelineConfig& cfg);

}  // namespace v2v
