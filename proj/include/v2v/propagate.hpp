#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "v2v/flow.hpp"
#include "v2v/tensor.hpp"

namespace v2v {

/// Nearest-neighbour field from target pixels into the stylized key.
struct NNField {
    int width = 0;   ///< target width
    int height = 0;  ///< target height
    int source_width = 0;
    int source_height = 0;
    std::vector<int> source_x;
    std::vector<int> source_y;
    std::vector<double> errors;  ///< guided patch cost at the stored match

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
    Tensor error_map() const;

    /// Every target pixel maps onto itself.
    static NNField identity(int width, int height);
};

struct GuideWeights {
    double color = 6.0;
    double positional = 2.0;
    double edge = 0.5;
    double temporal = 0.5;
};

/// Guidance channels of a key -> target propagation. Source-side guides
/// describe the key frame, target-side guides the frame being synthesized.
/// The temporal guide's source side is the stylized key itself.
struct GuideStack {
    Frame color_source;
    Frame color_target;
    Tensor positional_source;  ///< 2 channels: normalized x, y
    Tensor positional_target;
    Tensor edge_source;        ///< 1 channel, full resolution
    Tensor edge_target;
    Frame temporal_target;     ///< optional: previous output warped to the target
    GuideWeights weights{};
};

/// Normalized (x / (w-1), y / (h-1)) coordinate map.
Tensor coordinate_map(int height, int width);

/// Guides for propagating the key onto a target, given the mapping from
/// key to target and, optionally, the warped previous output.
GuideStack make_guides(const Frame& key_input, const Frame& target_input, const ReferenceGuide& key_to_target,
                       const Frame* warped_previous, const GuideWeights& weights = {});

struct PatchMatchOptions {
    int patch_size = 5;
    int iterations = 6;
    std::uint64_t seed = 0;
};

/// Guided PatchMatch: random initialization, then alternating-direction
/// scanline propagation and random search with halving radius. The cost of
/// matching target p to source q is the weighted sum of squared guide
/// differences over the patch window (clamped reads). If energy_history is
/// given it receives the total cost after initialization and after each
/// iteration.
NNField patch_match(const Frame& stylized_key, const GuideStack& guides, const PatchMatchOptions& options,
                    std::vector<double>* energy_history = nullptr);

/// Guided cost of matching target (tx, ty) to source (sx, sy).
double guided_patch_cost(const Frame& stylized_key, const GuideStack& guides, int patch_size, int tx, int ty,
                         int sx, int sy);

double total_energy(const NNField& nnf);

/// Patch voting: each target pixel averages the values that all
/// overlapping matched patches assign to it.
Frame synthesize(const Frame& stylized_key, const NNField& nnf, int patch_size);

struct BlendCandidate {
    Frame image;
    Tensor error_map;  ///< 1 channel
    int source_key_index = 0;
};

/// Per-pixel choice of the candidate with lower error (ties go to the lower
/// key index). selection receives 0 for a, 1 for b when given.
Frame combine_by_error(const BlendCandidate& a, const BlendCandidate& b, std::vector<int>* selection = nullptr);

/// Temporal-aware blend: the mean of both candidates with its per-channel
/// histogram matched to the error-selected combination.
Frame blend(const BlendCandidate& a, const BlendCandidate& b);

struct PropagationOptions {
    PatchMatchOptions patch{};
    GuideWeights weights{};
};

/// Propagates one stylized key onto `targets`, visited in the given order;
/// each target's temporal guide is the previously produced frame warped to
/// it. Randomness is keyed by (seed, key, target).
std::vector<BlendCandidate> propagate_key(int key, const Frame& stylized_key, const std::vector<Frame>& inputs,
                                          const FlowChain& chain, const std::vector<int>& targets,
                                          const PropagationOptions& options);

enum class Provenance { Key, Blend, Single };

struct PropagatedVideo {
    std::vector<Frame> frames;
    std::vector<Provenance> provenance;
    std::vector<Tensor> error_maps;  ///< per frame; zero for key frames
};

/// Fills every frame from the stylized keys: frames between two keys blend
/// both propagations, frames outside the key range use the nearest key.
PropagatedVideo propagate_video(const std::map<int, Frame>& stylized_keys, const std::vector<Frame>& inputs,
                                const FlowChain& chain, const PropagationOptions& options);

}  // namespace v2v
