#pragma once

#include <cstdint>
#include <vector>

#include "v2v/tensor.hpp"

namespace v2v::synthetic {

/// Smooth procedural colour texture defined on the continuous plane, so
/// shifted copies are exact rather than resampled.
class ProceduralTexture {
public:
    explicit ProceduralTexture(std::uint64_t seed, int components = 10, double min_period = 6.0,
                               double max_period = 28.0);

    /// Renders a height x width frame whose content is translated by
    /// (shift_x, shift_y): out(p) = texture(p - shift).
    Frame render(int height, int width, double shift_x = 0.0, double shift_y = 0.0) const;

private:
    struct Wave {
        double kx, ky, phase;
        double amp[3];
    };
    std::vector<Wave> waves_;
    double base_[3];
};

Frame textured_image(int height, int width, std::uint64_t seed);

/// Ten textures with varied frequency content, used for codec evaluations.
std::vector<Frame> image_corpus(int height, int width, std::uint64_t seed = 7);

/// A texture panning by (vx, vy) pixels per frame.
std::vector<Frame> translating_video(int frames, int height, int width, double vx, double vy,
                                     std::uint64_t seed = 11);

}  // namespace v2v::synthetic
