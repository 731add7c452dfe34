#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "v2v/tensor.hpp"

namespace v2v {

struct Displacement {
    double dx = 0.0;
    double dy = 0.0;
};

/// Dense displacement field defined on the destination frame of a mapping.
/// Following the backward-warping convention, the content at destination
/// pixel p is found in the source frame at p + flow(p).
class FlowField {
public:
    FlowField() = default;
    FlowField(int width, int height, Displacement fill = {});

    int width() const { return width_; }
    int height() const { return height_; }

    Displacement at(int x, int y) const { return {u_[index(x, y)], v_[index(x, y)]}; }
    void set(int x, int y, Displacement d) {
        u_[index(x, y)] = d.dx;
        v_[index(x, y)] = d.dy;
    }
    double& dx(int x, int y) { return u_[index(x, y)]; }
    double& dy(int x, int y) { return v_[index(x, y)]; }

    /// Bilinear lookup with coordinates clamped to the field.
    Displacement sample(double x, double y) const;

    bool same_size(const FlowField& o) const { return width_ == o.width_ && height_ == o.height_; }
    bool all_finite() const;

    friend bool operator==(const FlowField&, const FlowField&) = default;

private:
    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> u_;
    std::vector<double> v_;
};

/// Binary visibility mask: 1 = consistent/visible, 0 = occluded.
class OcclusionMask {
public:
    OcclusionMask() = default;
    OcclusionMask(int width, int height, std::uint8_t fill = 1)
        : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill) {}

    int width() const { return width_; }
    int height() const { return height_; }
    std::uint8_t at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    void set(int x, int y, bool visible) { data_[static_cast<std::size_t>(y) * width_ + x] = visible ? 1 : 0; }
    std::size_t count_visible() const;

    friend bool operator==(const OcclusionMask&, const OcclusionMask&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> data_;
};

OcclusionMask invert(const OcclusionMask& mask);
/// Pixelwise AND.
OcclusionMask intersect(const OcclusionMask& a, const OcclusionMask& b);

struct ConsistencyThreshold {
    double absolute = 1.0;  ///< pixels
    double relative = 0.01; ///< times (|forward| + |backward|)
};

/// Forward/backward flows between two frames and the visibility mask of the
/// forward field derived from them.
struct FlowPair {
    FlowField forward;
    FlowField backward;
    OcclusionMask mask;
    ConsistencyThreshold threshold;
};

struct FlowOptions {
    int levels = 3;
    int iterations = 60;      ///< Jacobi sweeps per warp
    int warps = 4;            ///< re-linearizations per pyramid level
    double smoothness = 0.02; ///< Horn-Schunck alpha (intensity units per pixel)
    double presmooth_sigma = 0.8;
};

/// Coarse-to-fine Horn-Schunck flow with iterative warping. The returned
/// field lives on dst and points into src: dst(p) ~ src(p + flow(p)).
FlowField estimate_flow(const Frame& src, const Frame& dst, const FlowOptions& options = {});

/// Forward-backward consistency check. Pixel p is occluded iff
/// |f(p) + b(p + f(p))| > absolute + relative * (|f(p)| + |b(p + f(p))|),
/// with a bilinear lookup of b; lookups leaving the frame are occluded.
OcclusionMask occlusion_mask(const FlowField& forward, const FlowField& backward,
                             ConsistencyThreshold threshold);
inline OcclusionMask occlusion_mask(const FlowField& forward, const FlowField& backward, double threshold) {
    return occlusion_mask(forward, backward, ConsistencyThreshold{threshold, 0.0});
}

/// Estimates both directions between src and dst and the visibility mask on dst.
FlowPair make_flow_pair(const Frame& src, const Frame& dst, const FlowOptions& options = {},
                        ConsistencyThreshold threshold = {});

/// Backward warp: out(p) = image(p + flow(p)), bilinear, clamp-to-edge.
Tensor warp(const Tensor& image, const FlowField& flow);

struct Guidance {
    FlowField flow;
    OcclusionMask mask;
};

/// Reduces flow and mask to latent resolution. Flow is area-averaged and
/// divided by factor; a low-res pixel is visible iff at least half its
/// footprint is visible.
Guidance downsample_guidance(const FlowField& flow, const OcclusionMask& mask, int factor);

/// Nearest-neighbour upsampling with displacements scaled by factor.
FlowField upsample_flow(const FlowField& flow, int factor);

/// Chains two mappings: outer lives on frame c and points into b, inner lives
/// on b and points into a. The result lives on c and points into a.
FlowField compose_flows(const FlowField& outer, const FlowField& inner);
/// Visibility of a chained mapping: visible only when both links are.
OcclusionMask compose_masks(const FlowField& outer, const OcclusionMask& outer_mask,
                            const OcclusionMask& inner_mask);

/// Full-resolution mapping from a reference frame onto the current frame.
struct ReferenceGuide {
    FlowField flow;         ///< on the current frame, pointing into the reference
    OcclusionMask visible;  ///< 1 where the reference content is consistent
};

/// Flows between consecutive frames of a clip. Long-range mappings are
/// obtained by chaining consecutive flows, accumulating occlusions.
class FlowChain {
public:
    FlowChain() = default;
    /// Estimates every consecutive pair.
    FlowChain(const std::vector<Frame>& frames, const FlowOptions& options = {}, ConsistencyThreshold threshold = {});
    /// Uses precomputed pairs; steps[i] maps frame i onto frame i + 1
    /// (forward lives on i + 1, backward on i).
    explicit FlowChain(std::vector<FlowPair> steps);

    int frame_count() const { return steps_.empty() ? 0 : static_cast<int>(steps_.size()) + 1; }
    int step_count() const { return static_cast<int>(steps_.size()); }
    const FlowPair& step(int i) const { return steps_.at(i); }
    /// Visibility of steps[i].backward (lives on frame i).
    const OcclusionMask& backward_mask(int i) const { return backward_masks_.at(i); }

    /// Flow on frame `to` pointing into frame `from`, with its visibility.
    ReferenceGuide mapping(int from, int to) const;

private:
    std::vector<FlowPair> steps_;
    std::vector<OcclusionMask> backward_masks_;
};

// Middlebury .flo files.
FlowField read_flo(const std::filesystem::path& path);
void write_flo(const std::filesystem::path& path, const FlowField& flow);

}  // namespace v2v
