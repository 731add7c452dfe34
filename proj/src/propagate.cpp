#include "v2v/propagate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "v2v/denoiser.hpp"
#include "v2v/histogram.hpp"

namespace v2v {

Tensor NNField::error_map() const {
    Tensor out(1, height, width);
    auto p = out.plane(0);
    std::copy(errors.begin(), errors.end(), p.begin());
    return out;
}

NNField NNField::identity(int width, int height) {
    NNField f;
    f.width = f.source_width = width;
    f.height = f.source_height = height;
    f.source_x.resize(static_cast<std::size_t>(width) * height);
    f.source_y.resize(f.source_x.size());
    f.errors.assign(f.source_x.size(), 0.0);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            f.source_x[f.index(x, y)] = x;
            f.source_y[f.index(x, y)] = y;
        }
    }
    return f;
}

Tensor coordinate_map(int height, int width) {
    Tensor out(2, height, width);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            out.at(0, y, x) = width > 1 ? static_cast<double>(x) / (width - 1) : 0.0;
            out.at(1, y, x) = height > 1 ? static_cast<double>(y) / (height - 1) : 0.0;
        }
    }
    return out;
}

GuideStack make_guides(const Frame& key_input, const Frame& target_input, const ReferenceGuide& key_to_target,
                       const Frame* warped_previous, const GuideWeights& weights) {
    GuideStack g;
    g.color_source = key_input;
    g.color_target = target_input;
    g.positional_source = coordinate_map(key_input.height(), key_input.width());
    g.positional_target = warp(g.positional_source, key_to_target.flow);
    g.edge_source = edge_map(key_input, 1);
    g.edge_target = edge_map(target_input, 1);
    if (warped_previous != nullptr) g.temporal_target = *warped_previous;
    g.weights = weights;
    return g;
}

namespace {

// Interleaved per-pixel feature vectors, pre-scaled by sqrt(weight) so the
// guided cost is a plain sum of squared differences.
struct Features {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    const double* at(int x, int y) const {
        x = std::clamp(x, 0, width - 1);
        y = std::clamp(y, 0, height - 1);
        return data.data() + (static_cast<std::size_t>(y) * width + x) * channels;
    }
};

Features pack(const std::vector<std::pair<const Tensor*, double>>& parts, int width, int height) {
    Features f{width, height, 0, {}};
    for (const auto& [t, w] : parts) f.channels += t->channels();
    f.data.resize(static_cast<std::size_t>(width) * height * f.channels);
    int offset = 0;
    for (const auto& [t, w] : parts) {
        const double s = std::sqrt(w);
        for (int c = 0; c < t->channels(); ++c) {
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x)
                    f.data[(static_cast<std::size_t>(y) * width + x) * f.channels + offset + c] = s * t->at(c, y, x);
        }
        offset += t->channels();
    }
    return f;
}

void check_side(const Tensor& t, int width, int height, const char* name) {
    if (t.width() != width || t.height() != height) {
        throw ShapeError(std::string("patch_match: guide '") + name + "' is " + t.shape_string() +
                         ", expected " + std::to_string(height) + "x" + std::to_string(width));
    }
}

std::pair<Features, Features> build_features(const Frame& key, const GuideStack& g) {
    const int sw = key.width(), sh = key.height();
    const int tw = g.color_target.width(), th = g.color_target.height();
    std::vector<std::pair<const Tensor*, double>> src, dst;

    check_side(g.color_source, sw, sh, "color source");
    check_side(g.color_target, tw, th, "color target");
    if (g.color_source.channels() != g.color_target.channels()) throw ShapeError("patch_match: color guide channels differ");
    src.emplace_back(&g.color_source, g.weights.color);
    dst.emplace_back(&g.color_target, g.weights.color);

    if (!g.positional_source.empty() || !g.positional_target.empty()) {
        check_side(g.positional_source, sw, sh, "positional source");
        check_side(g.positional_target, tw, th, "positional target");
        if (g.positional_source.channels() != g.positional_target.channels()) throw ShapeError("patch_match: positional guide channels differ");
        src.emplace_back(&g.positional_source, g.weights.positional);
        dst.emplace_back(&g.positional_target, g.weights.positional);
    }
    if (!g.edge_source.empty() || !g.edge_target.empty()) {
        check_side(g.edge_source, sw, sh, "edge source");
        check_side(g.edge_target, tw, th, "edge target");
        if (g.edge_source.channels() != g.edge_target.channels()) throw ShapeError("patch_match: edge guide channels differ");
        src.emplace_back(&g.edge_source, g.weights.edge);
        dst.emplace_back(&g.edge_target, g.weights.edge);
    }
    if (!g.temporal_target.empty()) {
        check_side(g.temporal_target, tw, th, "temporal target");
        if (g.temporal_target.channels() != key.channels()) throw ShapeError("patch_match: temporal guide channels differ");
        src.emplace_back(&key, g.weights.temporal);
        dst.emplace_back(&g.temporal_target, g.weights.temporal);
    }
    const double total = g.weights.color + g.weights.positional + g.weights.edge + g.weights.temporal;
    if (g.weights.color < 0 || g.weights.positional < 0 || g.weights.edge < 0 || g.weights.temporal < 0 || !(total > 0)) {
        throw std::invalid_argument("patch_match: guide weights must be nonnegative with a positive sum");
    }
    return {pack(src, sw, sh), pack(dst, tw, th)};
}

class PatchCost {
public:
    PatchCost(const Features& source, const Features& target, int patch_size)
        : source_(source), target_(target), radius_(patch_size / 2) {}

    double operator()(int tx, int ty, int sx, int sy) const {
        double acc = 0.0;
        const int ch = source_.channels;
        for (int dy = -radius_; dy <= radius_; ++dy) {
            for (int dx = -radius_; dx <= radius_; ++dx) {
                const double* s = source_.at(sx + dx, sy + dy);
                const double* t = target_.at(tx + dx, ty + dy);
                for (int c = 0; c < ch; ++c) {
                    const double d = s[c] - t[c];
                    acc += d * d;
                }
            }
        }
        return acc;
    }

private:
    const Features& source_;
    const Features& target_;
    int radius_;
};

void check_patch_size(int patch_size) {
    if (patch_size < 1 || patch_size % 2 == 0) {
        throw std::invalid_argument("patch size must be odd and positive, got " + std::to_string(patch_size));
    }
}

}  // namespace

double guided_patch_cost(const Frame& stylized_key, const GuideStack& guides, int patch_size, int tx, int ty,
                         int sx, int sy) {
    check_patch_size(patch_size);
    const auto [src, dst] = build_features(stylized_key, guides);
    return PatchCost(src, dst, patch_size)(tx, ty, sx, sy);
}

double total_energy(const NNField& nnf) {
    double e = 0.0;
    for (double v : nnf.errors) e += v;
    return e;
}

NNField patch_match(const Frame& stylized_key, const GuideStack& guides, const PatchMatchOptions& options,
                    std::vector<double>* energy_history) {
    check_patch_size(options.patch_size);
    if (options.patch_size < 3) throw std::invalid_argument("patch_match: patch size must be >= 3");
    if (options.iterations < 0) throw std::invalid_argument("patch_match: iterations must be >= 0");
    const auto [src, dst] = build_features(stylized_key, guides);
    const PatchCost cost(src, dst, options.patch_size);

    const int tw = dst.width, th = dst.height;
    const int sw = src.width, sh = src.height;
    NNField nnf;
    nnf.width = tw;
    nnf.height = th;
    nnf.source_width = sw;
    nnf.source_height = sh;
    const std::size_t n = static_cast<std::size_t>(tw) * th;
    nnf.source_x.resize(n);
    nnf.source_y.resize(n);
    nnf.errors.resize(n);

    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<int> rand_x(0, sw - 1), rand_y(0, sh - 1);
    for (int y = 0; y < th; ++y) {
        for (int x = 0; x < tw; ++x) {
            const std::size_t i = nnf.index(x, y);
            nnf.source_x[i] = rand_x(rng);
            nnf.source_y[i] = rand_y(rng);
            nnf.errors[i] = cost(x, y, nnf.source_x[i], nnf.source_y[i]);
        }
    }
    if (energy_history != nullptr) energy_history->assign(1, total_energy(nnf));

    auto try_candidate = [&](int x, int y, int sx, int sy) {
        if (sx < 0 || sy < 0 || sx >= sw || sy >= sh) return;
        const std::size_t i = nnf.index(x, y);
        if (sx == nnf.source_x[i] && sy == nnf.source_y[i]) return;
        const double c = cost(x, y, sx, sy);
        if (c < nnf.errors[i]) {
            nnf.source_x[i] = sx;
            nnf.source_y[i] = sy;
            nnf.errors[i] = c;
        }
    };

    const int max_radius = std::max(sw, sh);
    for (int iter = 0; iter < options.iterations; ++iter) {
        const bool forward = iter % 2 == 0;
        const int step = forward ? 1 : -1;
        const int y0 = forward ? 0 : th - 1, y1 = forward ? th : -1;
        const int x0 = forward ? 0 : tw - 1, x1 = forward ? tw : -1;
        for (int y = y0; y != y1; y += step) {
            for (int x = x0; x != x1; x += step) {
                // Propagation from the already-visited neighbours.
                const int nx = x - step;
                if (nx >= 0 && nx < tw) {
                    const std::size_t j = nnf.index(nx, y);
                    try_candidate(x, y, nnf.source_x[j] + step, nnf.source_y[j]);
                }
                const int ny = y - step;
                if (ny >= 0 && ny < th) {
                    const std::size_t j = nnf.index(x, ny);
                    try_candidate(x, y, nnf.source_x[j], nnf.source_y[j] + step);
                }
                // Random search around the current best.
                const std::size_t i = nnf.index(x, y);
                for (int r = max_radius; r >= 1; r /= 2) {
                    std::uniform_int_distribution<int> offset(-r, r);
                    const int sx = std::clamp(nnf.source_x[i] + offset(rng), 0, sw - 1);
                    const int sy = std::clamp(nnf.source_y[i] + offset(rng), 0, sh - 1);
                    try_candidate(x, y, sx, sy);
                }
            }
        }
        if (energy_history != nullptr) energy_history->push_back(total_energy(nnf));
    }
    return nnf;
}

Frame synthesize(const Frame& stylized_key, const NNField& nnf, int patch_size) {
    check_patch_size(patch_size);
    if (nnf.source_width != stylized_key.width() || nnf.source_height != stylized_key.height()) {
        throw ShapeError("synthesize: NNF source size does not match the stylized key");
    }
    for (std::size_t i = 0; i < nnf.source_x.size(); ++i) {
        if (nnf.source_x[i] < 0 || nnf.source_y[i] < 0 || nnf.source_x[i] >= nnf.source_width ||
            nnf.source_y[i] >= nnf.source_height) {
            throw std::out_of_range("synthesize: NNF entry outside the stylized key");
        }
    }
    const int r = patch_size / 2;
    const int tw = nnf.width, th = nnf.height;
    Frame out(stylized_key.channels(), th, tw);
    std::vector<double> acc(stylized_key.channels());
    for (int y = 0; y < th; ++y) {
        for (int x = 0; x < tw; ++x) {
            // Own patch centre first; other votes are accumulated as offsets
            // from it so identical votes reproduce it exactly.
            const std::size_t ci = nnf.index(x, y);
            const int cx = nnf.source_x[ci], cy = nnf.source_y[ci];
            std::fill(acc.begin(), acc.end(), 0.0);
            int votes = 1;
            for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= tw || ny >= th) continue;
                    const std::size_t j = nnf.index(nx, ny);
                    const int sx = nnf.source_x[j] - dx;
                    const int sy = nnf.source_y[j] - dy;
                    for (int c = 0; c < stylized_key.channels(); ++c) {
                        acc[c] += stylized_key.clamped(c, sy, sx) - stylized_key.at(c, cy, cx);
                    }
                    ++votes;
                }
            }
            for (int c = 0; c < stylized_key.channels(); ++c) out.at(c, y, x) = stylized_key.at(c, cy, cx) + acc[c] / votes;
        }
    }
    return out;
}

Frame combine_by_error(const BlendCandidate& a, const BlendCandidate& b, std::vector<int>* selection) {
    require_same_shape(a.image, b.image, "blend");
    if (!a.error_map.same_spatial(a.image) || !b.error_map.same_spatial(b.image)) {
        throw ShapeError("blend: error map does not match candidate image");
    }
    const bool a_wins_ties = a.source_key_index <= b.source_key_index;
    Frame out(a.image.channels(), a.image.height(), a.image.width());
    if (selection != nullptr) selection->assign(a.image.plane_size(), 0);
    for (int y = 0; y < a.image.height(); ++y) {
        for (int x = 0; x < a.image.width(); ++x) {
            const double ea = a.error_map.at(0, y, x);
            const double eb = b.error_map.at(0, y, x);
            const bool take_a = ea < eb || (ea == eb && a_wins_ties);
            const Frame& src = take_a ? a.image : b.image;
            for (int c = 0; c < out.channels(); ++c) out.at(c, y, x) = src.at(c, y, x);
            if (selection != nullptr) (*selection)[static_cast<std::size_t>(y) * a.image.width() + x] = take_a ? 0 : 1;
        }
    }
    return out;
}

Frame blend(const BlendCandidate& a, const BlendCandidate& b) {
    const Frame combined = combine_by_error(a, b);
    Frame mean = a.image;
    auto m = mean.values();
    auto bv = b.image.values();
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (m[i] + bv[i]);
    return match_histogram(mean, combined);
}

std::vector<BlendCandidate> propagate_key(int key, const Frame& stylized_key, const std::vector<Frame>& inputs,
                                          const FlowChain& chain, const std::vector<int>& targets,
                                          const PropagationOptions& options) {
    if (key < 0 || key >= static_cast<int>(inputs.size())) throw std::out_of_range("propagate_key: key index");
    require_same_shape(stylized_key, inputs[key], "propagate_key");
    std::vector<BlendCandidate> out;
    out.reserve(targets.size());
    Frame previous = stylized_key;
    int previous_index = key;
    for (int target : targets) {
        const ReferenceGuide to_target = chain.mapping(key, target);
        const Frame warped_previous = warp(previous, chain.mapping(previous_index, target).flow);
        const GuideStack guides =
            make_guides(inputs[key], inputs[target], to_target, &warped_previous, options.weights);
        PatchMatchOptions pm = options.patch;
        pm.seed = options.patch.seed ^ (static_cast<std::uint64_t>(key) * 0x9e3779b97f4a7c15ULL) ^
                  (static_cast<std::uint64_t>(target) * 0xc2b2ae3d27d4eb4fULL);
        const NNField nnf = patch_match(stylized_key, guides, pm);
        Frame image = synthesize(stylized_key, nnf, options.patch.patch_size);
        out.push_back({image, nnf.error_map(), key});
        previous = std::move(image);
        previous_index = target;
    }
    return out;
}

PropagatedVideo propagate_video(const std::map<int, Frame>& stylized_keys, const std::vector<Frame>& inputs,
                                const FlowChain& chain, const PropagationOptions& options) {
    const int n = static_cast<int>(inputs.size());
    if (stylized_keys.empty()) throw std::invalid_argument("propagate_video: no stylized key frames");
    if (n > 1 && chain.frame_count() != n) throw std::invalid_argument("propagate_video: flow chain does not cover the clip");
    PropagatedVideo video;
    video.frames.resize(n);
    video.provenance.assign(n, Provenance::Single);
    video.error_maps.resize(n);

    std::vector<int> keys;
    for (const auto& [k, frame] : stylized_keys) {
        if (k < 0 || k >= n) throw std::out_of_range("propagate_video: key index " + std::to_string(k) + " outside clip");
        keys.push_back(k);
        video.frames[k] = frame;
        video.provenance[k] = Provenance::Key;
        video.error_maps[k] = Tensor(1, frame.height(), frame.width());
    }

    auto place_single = [&](const std::vector<BlendCandidate>& cands, const std::vector<int>& targets) {
        for (std::size_t i = 0; i < targets.size(); ++i) {
            video.frames[targets[i]] = cands[i].image;
            video.error_maps[targets[i]] = cands[i].error_map;
        }
    };

    // Leading frames before the first key.
    if (keys.front() > 0) {
        std::vector<int> targets;
        for (int i = keys.front() - 1; i >= 0; --i) targets.push_back(i);
        place_single(propagate_key(keys.front(), stylized_keys.at(keys.front()), inputs, chain, targets, options), targets);
    }
    for (std::size_t k = 0; k + 1 < keys.size(); ++k) {
        const int a = keys[k], b = keys[k + 1];
        if (b - a < 2) continue;
        std::vector<int> fwd, bwd;
        for (int i = a + 1; i < b; ++i) fwd.push_back(i);
        for (int i = b - 1; i > a; --i) bwd.push_back(i);
        const auto from_a = propagate_key(a, stylized_keys.at(a), inputs, chain, fwd, options);
        const auto from_b = propagate_key(b, stylized_keys.at(b), inputs, chain, bwd, options);
        for (std::size_t i = 0; i < fwd.size(); ++i) {
            const BlendCandidate& ca = from_a[i];
            const BlendCandidate& cb = from_b[fwd.size() - 1 - i];
            const int target = fwd[i];
            video.frames[target] = blend(ca, cb);
            Tensor err(1, ca.error_map.height(), ca.error_map.width());
            for (std::size_t p = 0; p < err.size(); ++p) err.values()[p] = std::min(ca.error_map.values()[p], cb.error_map.values()[p]);
            video.error_maps[target] = err;
            video.provenance[target] = Provenance::Blend;
        }
    }
    // Trailing frames after the last key.
    if (keys.back() < n - 1) {
        std::vector<int> targets;
        for (int i = keys.back() + 1; i < n; ++i) targets.push_back(i);
        place_single(propagate_key(keys.back(), stylized_keys.at(keys.back()), inputs, chain, targets, options), targets);
    }
    return video;
}

}  // namespace v2v
