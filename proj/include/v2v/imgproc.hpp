#pragma once

#include "v2v/tensor.hpp"

namespace v2v {

/// Separable Gaussian blur with clamp-to-edge borders; sigma <= 0 is a copy.
Tensor gaussian_blur(const Tensor& image, double sigma);

/// Averages each factor x factor block. Both dimensions must be divisible.
Tensor box_downsample(const Tensor& image, int factor);

/// Halves resolution (rounding up) by averaging 2x2 blocks with clamped reads.
Tensor pyramid_down(const Tensor& image);

/// Bilinear resize with pixel-centre alignment and clamped borders.
Tensor resize_bilinear(const Tensor& image, int height, int width);

/// Bilinear sample of channel c at real-valued (x, y); coordinates are
/// clamped to the image rectangle first.
double sample_bilinear(const Tensor& image, int c, double x, double y);

/// Central-difference gradients (one-sided at borders) of channel c.
void gradients(const Tensor& image, int c, Tensor& gx, Tensor& gy);

}  // namespace v2v
