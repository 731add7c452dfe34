#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace v2v {

/// Planar channel-major image/feature tensor (C x H x W) of doubles.
///
/// Frames are 3-channel tensors with values in [0, 1]; latents are
/// C-channel tensors at the codec's reduced resolution.
class Tensor {
public:
    Tensor() = default;
    Tensor(int channels, int height, int width, double fill = 0.0);

    int channels() const { return channels_; }
    int height() const { return height_; }
    int width() const { return width_; }
    std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int c, int y, int x) { return data_[index(c, y, x)]; }
    double at(int c, int y, int x) const { return data_[index(c, y, x)]; }

    /// Reads with coordinates clamped to the border.
    double clamped(int c, int y, int x) const;

    std::span<double> plane(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
    std::span<const double> plane(int c) const { return {data_.data() + c * plane_size(), plane_size()}; }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    bool same_shape(const Tensor& other) const {
        return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
    }
    bool same_spatial(const Tensor& other) const {
        return height_ == other.height_ && width_ == other.width_;
    }

    std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::size_t index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
    }

    int channels_ = 0;
    int height_ = 0;
    int width_ = 0;
    std::vector<double> data_;
};

using Frame = Tensor;
using Latent = Tensor;

/// Thrown when operands disagree in shape or a size precondition fails.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

// Elementwise helpers used throughout the samplers and tests.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);

double mean_squared_error(const Tensor& a, const Tensor& b);
double max_abs_difference(const Tensor& a, const Tensor& b);

/// Rec. 601 luma of a 3-channel frame; single-channel input is copied.
Tensor luma(const Frame& frame);

/// Clamps every value to [lo, hi].
Tensor clamp(Tensor t, double lo, double hi);

}  // namespace v2v
