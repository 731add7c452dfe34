#include "v2v/flow.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>

#include "v2v/imgproc.hpp"

namespace v2v {

FlowField::FlowField(int width, int height, Displacement fill)
    : width_(width), height_(height),
      u_(static_cast<std::size_t>(width) * height, fill.dx),
      v_(static_cast<std::size_t>(width) * height, fill.dy) {
    if (width < 0 || height < 0) throw ShapeError("negative flow dimension");
}

Displacement FlowField::sample(double x, double y) const {
    x = std::clamp(x, 0.0, static_cast<double>(width_ - 1));
    y = std::clamp(y, 0.0, static_cast<double>(height_ - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, width_ - 1);
    const int y1 = std::min(y0 + 1, height_ - 1);
    const double fx = x - x0;
    const double fy = y - y0;
    auto lerp2 = [&](const std::vector<double>& f) {
        const double a = f[index(x0, y0)], b = f[index(x1, y0)];
        const double c = f[index(x0, y1)], d = f[index(x1, y1)];
        return (1.0 - fy) * ((1.0 - fx) * a + fx * b) + fy * ((1.0 - fx) * c + fx * d);
    };
    return {lerp2(u_), lerp2(v_)};
}

bool FlowField::all_finite() const {
    auto finite = [](double v) { return std::isfinite(v); };
    return std::all_of(u_.begin(), u_.end(), finite) && std::all_of(v_.begin(), v_.end(), finite);
}

std::size_t OcclusionMask::count_visible() const {
    return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

OcclusionMask invert(const OcclusionMask& mask) {
    OcclusionMask out(mask.width(), mask.height());
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x) out.set(x, y, mask.at(x, y) == 0);
    return out;
}

OcclusionMask intersect(const OcclusionMask& a, const OcclusionMask& b) {
    if (a.width() != b.width() || a.height() != b.height()) throw ShapeError("intersect: mask size mismatch");
    OcclusionMask out(a.width(), a.height());
    for (int y = 0; y < a.height(); ++y)
        for (int x = 0; x < a.width(); ++x) out.set(x, y, a.at(x, y) != 0 && b.at(x, y) != 0);
    return out;
}

namespace {

Tensor median3x3(const Tensor& t) {
    Tensor out(1, t.height(), t.width());
    std::array<double, 9> window{};
    for (int y = 0; y < t.height(); ++y) {
        for (int x = 0; x < t.width(); ++x) {
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) window[n++] = t.clamped(0, y + dy, x + dx);
            std::nth_element(window.begin(), window.begin() + 4, window.end());
            out.at(0, y, x) = window[4];
        }
    }
    return out;
}

FlowField to_field(const Tensor& u, const Tensor& v) {
    FlowField f(u.width(), u.height());
    for (int y = 0; y < u.height(); ++y)
        for (int x = 0; x < u.width(); ++x) f.set(x, y, {u.at(0, y, x), v.at(0, y, x)});
    return f;
}

// One pyramid level: alternating linearization around the current flow and
// Jacobi sweeps of the Horn-Schunck Euler-Lagrange equations.
void refine_level(const Tensor& src, const Tensor& dst, Tensor& u, Tensor& v, const FlowOptions& opt) {
    const int h = dst.height();
    const int w = dst.width();
    const double alpha2 = opt.smoothness * opt.smoothness;
    Tensor gx_dst, gy_dst;
    gradients(dst, 0, gx_dst, gy_dst);

    for (int k = 0; k < opt.warps; ++k) {
        const FlowField current = to_field(u, v);
        const Tensor warped = warp(src, current);
        Tensor gx_w, gy_w;
        gradients(warped, 0, gx_w, gy_w);

        Tensor ix(1, h, w), iy(1, h, w), it(1, h, w);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double sx = x + u.at(0, y, x);
                const double sy = y + v.at(0, y, x);
                if (sx < 0.0 || sy < 0.0 || sx > w - 1 || sy > h - 1) continue;  // no data term
                ix.at(0, y, x) = 0.5 * (gx_w.at(0, y, x) + gx_dst.at(0, y, x));
                iy.at(0, y, x) = 0.5 * (gy_w.at(0, y, x) + gy_dst.at(0, y, x));
                it.at(0, y, x) = warped.at(0, y, x) - dst.at(0, y, x);
            }
        }

        const Tensor u0 = u;
        const Tensor v0 = v;
        Tensor un = u, vn = v;
        for (int iter = 0; iter < opt.iterations; ++iter) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    double su = 0.0, sv = 0.0;
                    int n = 0;
                    if (x > 0) { su += u.at(0, y, x - 1); sv += v.at(0, y, x - 1); ++n; }
                    if (x < w - 1) { su += u.at(0, y, x + 1); sv += v.at(0, y, x + 1); ++n; }
                    if (y > 0) { su += u.at(0, y - 1, x); sv += v.at(0, y - 1, x); ++n; }
                    if (y < h - 1) { su += u.at(0, y + 1, x); sv += v.at(0, y + 1, x); ++n; }
                    const double ubar = su / n;
                    const double vbar = sv / n;
                    const double gxv = ix.at(0, y, x);
                    const double gyv = iy.at(0, y, x);
                    const double r = it.at(0, y, x) + gxv * (ubar - u0.at(0, y, x)) + gyv * (vbar - v0.at(0, y, x));
                    const double den = alpha2 + gxv * gxv + gyv * gyv;
                    un.at(0, y, x) = ubar - gxv * r / den;
                    vn.at(0, y, x) = vbar - gyv * r / den;
                }
            }
            std::swap(u, un);
            std::swap(v, vn);
        }
        u = median3x3(u);
        v = median3x3(v);
    }
}

}  // namespace

FlowField estimate_flow(const Frame& src, const Frame& dst, const FlowOptions& options) {
    if (!src.same_shape(dst)) {
        throw ShapeError("estimate_flow: frame dimensions differ (" + src.shape_string() + " vs " +
                         dst.shape_string() + ")");
    }
    if (options.levels < 1) throw std::invalid_argument("estimate_flow: levels must be >= 1");
    const int min_side = std::min(src.width(), src.height());
    if (min_side < 16) throw ShapeError("estimate_flow: frames must be at least 16x16");
    if ((min_side >> (options.levels - 1)) < 8) {
        throw ShapeError("estimate_flow: " + src.shape_string() + " too small for " +
                         std::to_string(options.levels) + " pyramid levels");
    }

    std::vector<Tensor> src_pyr{gaussian_blur(luma(src), options.presmooth_sigma)};
    std::vector<Tensor> dst_pyr{gaussian_blur(luma(dst), options.presmooth_sigma)};
    for (int l = 1; l < options.levels; ++l) {
        src_pyr.push_back(pyramid_down(gaussian_blur(src_pyr.back(), 0.6)));
        dst_pyr.push_back(pyramid_down(gaussian_blur(dst_pyr.back(), 0.6)));
    }

    Tensor u, v;
    for (int l = options.levels - 1; l >= 0; --l) {
        const int h = dst_pyr[l].height();
        const int w = dst_pyr[l].width();
        if (u.empty()) {
            u = Tensor(1, h, w);
            v = Tensor(1, h, w);
        } else {
            const double sx = static_cast<double>(w) / u.width();
            const double sy = static_cast<double>(h) / u.height();
            u = sx * resize_bilinear(u, h, w);
            v = sy * resize_bilinear(v, h, w);
        }
        refine_level(src_pyr[l], dst_pyr[l], u, v, options);
    }
    return to_field(u, v);
}

OcclusionMask occlusion_mask(const FlowField& forward, const FlowField& backward, ConsistencyThreshold threshold) {
    if (!forward.same_size(backward)) throw ShapeError("occlusion_mask: flow dimensions differ");
    if (!(threshold.absolute > 0.0)) throw std::invalid_argument("occlusion_mask: threshold must be > 0");
    const int w = forward.width();
    const int h = forward.height();
    OcclusionMask mask(w, h, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const Displacement f = forward.at(x, y);
            const double tx = x + f.dx;
            const double ty = y + f.dy;
            if (tx < 0.0 || ty < 0.0 || tx > w - 1 || ty > h - 1) continue;
            const Displacement b = backward.sample(tx, ty);
            const double rx = f.dx + b.dx;
            const double ry = f.dy + b.dy;
            const double residual = std::hypot(rx, ry);
            const double bound = threshold.absolute +
                                 threshold.relative * (std::hypot(f.dx, f.dy) + std::hypot(b.dx, b.dy));
            mask.set(x, y, residual <= bound);
        }
    }
    return mask;
}

FlowPair make_flow_pair(const Frame& src, const Frame& dst, const FlowOptions& options,
                        ConsistencyThreshold threshold) {
    FlowPair pair;
    pair.forward = estimate_flow(src, dst, options);
    pair.backward = estimate_flow(dst, src, options);
    pair.mask = occlusion_mask(pair.forward, pair.backward, threshold);
    pair.threshold = threshold;
    return pair;
}

Tensor warp(const Tensor& image, const FlowField& flow) {
    if (image.width() != flow.width() || image.height() != flow.height()) {
        throw ShapeError("warp: image " + image.shape_string() + " vs flow " + std::to_string(flow.height()) +
                         "x" + std::to_string(flow.width()));
    }
    Tensor out(image.channels(), image.height(), image.width());
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            const Displacement d = flow.at(x, y);
            for (int c = 0; c < image.channels(); ++c) out.at(c, y, x) = sample_bilinear(image, c, x + d.dx, y + d.dy);
        }
    }
    return out;
}

Guidance downsample_guidance(const FlowField& flow, const OcclusionMask& mask, int factor) {
    if (factor < 1) throw std::invalid_argument("downsample_guidance: factor must be >= 1");
    if (flow.width() != mask.width() || flow.height() != mask.height()) {
        throw ShapeError("downsample_guidance: flow and mask sizes differ");
    }
    if (flow.width() % factor != 0 || flow.height() % factor != 0) {
        throw ShapeError("downsample_guidance: " + std::to_string(flow.height()) + "x" + std::to_string(flow.width()) +
                         " not divisible by " + std::to_string(factor));
    }
    if (factor == 1) return {flow, mask};
    const int w = flow.width() / factor;
    const int h = flow.height() / factor;
    const int area = factor * factor;
    Guidance g{FlowField(w, h), OcclusionMask(w, h)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double su = 0.0, sv = 0.0;
            int visible = 0;
            for (int dy = 0; dy < factor; ++dy) {
                for (int dx = 0; dx < factor; ++dx) {
                    const Displacement d = flow.at(x * factor + dx, y * factor + dy);
                    su += d.dx;
                    sv += d.dy;
                    visible += mask.at(x * factor + dx, y * factor + dy);
                }
            }
            g.flow.set(x, y, {su / area / factor, sv / area / factor});
            g.mask.set(x, y, 2 * visible >= area);
        }
    }
    return g;
}

FlowField upsample_flow(const FlowField& flow, int factor) {
    FlowField out(flow.width() * factor, flow.height() * factor);
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            const Displacement d = flow.at(x / factor, y / factor);
            out.set(x, y, {d.dx * factor, d.dy * factor});
        }
    }
    return out;
}

FlowField compose_flows(const FlowField& outer, const FlowField& inner) {
    if (!outer.same_size(inner)) throw ShapeError("compose_flows: size mismatch");
    FlowField out(outer.width(), outer.height());
    for (int y = 0; y < outer.height(); ++y) {
        for (int x = 0; x < outer.width(); ++x) {
            const Displacement a = outer.at(x, y);
            const Displacement b = inner.sample(x + a.dx, y + a.dy);
            out.set(x, y, {a.dx + b.dx, a.dy + b.dy});
        }
    }
    return out;
}

OcclusionMask compose_masks(const FlowField& outer, const OcclusionMask& outer_mask,
                            const OcclusionMask& inner_mask) {
    const int w = outer.width();
    const int h = outer.height();
    OcclusionMask out(w, h, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!outer_mask.at(x, y)) continue;
            const Displacement a = outer.at(x, y);
            const int tx = static_cast<int>(std::lround(x + a.dx));
            const int ty = static_cast<int>(std::lround(y + a.dy));
            if (tx < 0 || ty < 0 || tx >= w || ty >= h) continue;
            out.set(x, y, inner_mask.at(tx, ty) != 0);
        }
    }
    return out;
}

namespace {

constexpr char kFloMagic[4] = {'P', 'I', 'E', 'H'};

template <typename T>
void write_le(std::ostream& os, T value) {
    static_assert(sizeof(T) == 4);
    std::uint32_t bits;
    std::memcpy(&bits, &value, 4);
    const unsigned char bytes[4] = {static_cast<unsigned char>(bits), static_cast<unsigned char>(bits >> 8),
                                    static_cast<unsigned char>(bits >> 16), static_cast<unsigned char>(bits >> 24)};
    os.write(reinterpret_cast<const char*>(bytes), 4);
}

template <typename T>
T read_le(std::istream& is) {
    static_assert(sizeof(T) == 4);
    unsigned char bytes[4];
    if (!is.read(reinterpret_cast<char*>(bytes), 4)) throw std::runtime_error("read_flo: truncated file");
    const std::uint32_t bits = bytes[0] | (bytes[1] << 8) | (bytes[2] << 16) | (static_cast<std::uint32_t>(bytes[3]) << 24);
    T value;
    std::memcpy(&value, &bits, 4);
    return value;
}

}  // namespace

FlowField read_flo(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_flo: cannot open " + path.string());
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kFloMagic, 4) != 0) {
        throw std::runtime_error("read_flo: bad magic in " + path.string());
    }
    const auto width = read_le<std::int32_t>(is);
    const auto height = read_le<std::int32_t>(is);
    if (width <= 0 || height <= 0 || width > (1 << 15) || height > (1 << 15)) {
        throw std::runtime_error("read_flo: implausible dimensions in " + path.string());
    }
    FlowField flow(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const float u = read_le<float>(is);
            const float v = read_le<float>(is);
            flow.set(x, y, {u, v});
        }
    }
    return flow;
}

void write_flo(const std::filesystem::path& path, const FlowField& flow) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_flo: cannot open " + path.string());
    os.write(kFloMagic, 4);
    write_le<std::int32_t>(os, flow.width());
    write_le<std::int32_t>(os, flow.height());
    for (int y = 0; y < flow.height(); ++y) {
        for (int x = 0; x < flow.width(); ++x) {
            const Displacement d = flow.at(x, y);
            write_le<float>(os, static_cast<float>(d.dx));
            write_le<float>(os, static_cast<float>(d.dy));
        }
    }
    if (!os) throw std::runtime_error("write_flo: write failed for " + path.string());
}

}  // namespace v2v

namespace v2v {

FlowChain::FlowChain(const std::vector<Frame>& frames, const FlowOptions& options, ConsistencyThreshold threshold) {
    for (std::size_t i = 0; i + 1 < frames.size(); ++i) {
        steps_.push_back(make_flow_pair(frames[i], frames[i + 1], options, threshold));
        backward_masks_.push_back(occlusion_mask(steps_.back().backward, steps_.back().forward, threshold));
    }
}

FlowChain::FlowChain(std::vector<FlowPair> steps) : steps_(std::move(steps)) {
    for (const FlowPair& p : steps_) {
        if (!p.forward.same_size(p.backward)) throw ShapeError("FlowChain: forward/backward sizes differ");
        backward_masks_.push_back(occlusion_mask(p.backward, p.forward, p.threshold));
    }
}

ReferenceGuide FlowChain::mapping(int from, int to) const {
    const int n = frame_count();
    if (from < 0 || to < 0 || from >= n || to >= n) {
        throw std::out_of_range("FlowChain::mapping: frame index out of range");
    }
    if (from == to) {
        const FlowPair& any = steps_.front();
        return {FlowField(any.forward.width(), any.forward.height()),
                OcclusionMask(any.forward.width(), any.forward.height(), 1)};
    }
    if (from < to) {
        ReferenceGuide g{steps_[to - 1].forward, steps_[to - 1].mask};
        for (int k = to - 1; k > from; --k) {
            g.visible = compose_masks(g.flow, g.visible, steps_[k - 1].mask);
            g.flow = compose_flows(g.flow, steps_[k - 1].forward);
        }
        return g;
    }
    ReferenceGuide g{steps_[to].backward, backward_masks_[to]};
    for (int k = to + 1; k < from; ++k) {
        g.visible = compose_masks(g.flow, g.visible, backward_masks_[k]);
        g.flow = compose_flows(g.flow, steps_[k].backward);
    }
    return g;
}

}  // namespace v2v
