#include "v2v/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace v2v {

Tensor::Tensor(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
    if (channels < 0 || height < 0 || width < 0) {
        throw ShapeError("negative tensor dimension");
    }
    data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

double Tensor::clamped(int c, int y, int x) const {
    y = std::clamp(y, 0, height_ - 1);
    x = std::clamp(x, 0, width_ - 1);
    return data_[index(c, y, x)];
}

std::string Tensor::shape_string() const {
    return std::to_string(channels_) + "x" + std::to_string(height_) + "x" + std::to_string(width_);
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
    }
}

Tensor operator+(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "tensor add");
    Tensor out = a;
    auto o = out.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "tensor subtract");
    Tensor out = a;
    auto o = out.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
    return out;
}

Tensor operator*(double s, const Tensor& a) {
    Tensor out = a;
    for (double& v : out.values()) v *= s;
    return out;
}

double mean_squared_error(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mse");
    if (a.empty()) return 0.0;
    auto av = a.values();
    auto bv = b.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        acc += d * d;
    }
    return acc / static_cast<double>(av.size());
}

double max_abs_difference(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_difference");
    auto av = a.values();
    auto bv = b.values();
    double m = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) m = std::max(m, std::abs(av[i] - bv[i]));
    return m;
}

Tensor luma(const Frame& frame) {
    if (frame.channels() == 1) return frame;
    if (frame.channels() < 3) throw ShapeError("luma needs 1 or 3+ channels");
    Tensor out(1, frame.height(), frame.width());
    auto r = frame.plane(0);
    auto g = frame.plane(1);
    auto b = frame.plane(2);
    auto o = out.plane(0);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    return out;
}

Tensor clamp(Tensor t, double lo, double hi) {
    for (double& v : t.values()) v = std::clamp(v, lo, hi);
    return t;
}

}  // namespace v2v
