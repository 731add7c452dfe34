#include "v2v/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace v2v::synthetic {

ProceduralTexture::ProceduralTexture(std::uint64_t seed, int components, double min_period, double max_period) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (double& b : base_) b = 0.35 + 0.3 * unit(rng);
    const double two_pi = 2.0 * std::numbers::pi;
    for (int i = 0; i < components; ++i) {
        Wave w{};
        const double period = min_period + (max_period - min_period) * unit(rng);
        const double angle = two_pi * unit(rng);
        w.kx = two_pi / period * std::cos(angle);
        w.ky = two_pi / period * std::sin(angle);
        w.phase = two_pi * unit(rng);
        for (double& a : w.amp) a = (unit(rng) - 0.5) * 0.5 / std::sqrt(static_cast<double>(components));
        waves_.push_back(w);
    }
}

Frame ProceduralTexture::render(int height, int width, double shift_x, double shift_y) const {
    Frame out(3, height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double px = x - shift_x;
            const double py = y - shift_y;
            double acc[3] = {base_[0], base_[1], base_[2]};
            for (const Wave& w : waves_) {
                const double s = std::sin(w.kx * px + w.ky * py + w.phase);
                for (int c = 0; c < 3; ++c) acc[c] += w.amp[c] * s;
            }
            for (int c = 0; c < 3; ++c) out.at(c, y, x) = std::clamp(acc[c], 0.0, 1.0);
        }
    }
    return out;
}

Frame textured_image(int height, int width, std::uint64_t seed) {
    return ProceduralTexture(seed).render(height, width);
}

std::vector<Frame> image_corpus(int height, int width, std::uint64_t seed) {
    std::vector<Frame> corpus;
    for (int i = 0; i < 10; ++i) {
        const double min_period = 4.0 + 2.0 * (i % 5);
        const double max_period = min_period + 12.0 + 4.0 * (i / 5);
        corpus.push_back(ProceduralTexture(seed * 1000 + i, 8 + i, min_period, max_period).render(height, width));
    }
    return corpus;
}

std::vector<Frame> translating_video(int frames, int height, int width, double vx, double vy, std::uint64_t seed) {
    const ProceduralTexture texture(seed);
    std::vector<Frame> video;
    video.reserve(frames);
    for (int i = 0; i < frames; ++i) video.push_back(texture.render(height, width, vx * i, vy * i));
    return video;
}

}  // namespace v2v::synthetic
