#include "v2v/imgproc.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace v2v {

Tensor gaussian_blur(const Tensor& image, double sigma) {
    if (sigma <= 0.0) return image;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        norm += kernel[i + radius];
    }
    for (double& k : kernel) k /= norm;

    const int h = image.height();
    const int w = image.width();
    Tensor tmp(image.channels(), h, w);
    Tensor out(image.channels(), h, w);
    for (int c = 0; c < image.channels(); ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * image.clamped(c, y, x + i);
                tmp.at(c, y, x) = acc;
            }
        }
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i) acc += kernel[i + radius] * tmp.clamped(c, y + i, x);
                out.at(c, y, x) = acc;
            }
        }
    }
    return out;
}

Tensor box_downsample(const Tensor& image, int factor) {
    if (factor < 1) throw ShapeError("box_downsample: factor must be >= 1");
    if (image.height() % factor != 0 || image.width() % factor != 0) {
        throw ShapeError("box_downsample: " + image.shape_string() + " not divisible by " +
                         std::to_string(factor));
    }
    if (factor == 1) return image;
    const int h = image.height() / factor;
    const int w = image.width() / factor;
    const double inv = 1.0 / (factor * factor);
    Tensor out(image.channels(), h, w);
    for (int c = 0; c < image.channels(); ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double acc = 0.0;
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx) acc += image.at(c, y * factor + dy, x * factor + dx);
                out.at(c, y, x) = acc * inv;
            }
        }
    }
    return out;
}

Tensor pyramid_down(const Tensor& image) {
    const int h = (image.height() + 1) / 2;
    const int w = (image.width() + 1) / 2;
    Tensor out(image.channels(), h, w);
    for (int c = 0; c < image.channels(); ++c) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                out.at(c, y, x) = 0.25 * (image.clamped(c, 2 * y, 2 * x) + image.clamped(c, 2 * y, 2 * x + 1) +
                                          image.clamped(c, 2 * y + 1, 2 * x) +
                                          image.clamped(c, 2 * y + 1, 2 * x + 1));
            }
        }
    }
    return out;
}

double sample_bilinear(const Tensor& image, int c, double x, double y) {
    x = std::clamp(x, 0.0, static_cast<double>(image.width() - 1));
    y = std::clamp(y, 0.0, static_cast<double>(image.height() - 1));
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const double fx = x - x0;
    const double fy = y - y0;
    const double v00 = image.clamped(c, y0, x0);
    const double v01 = image.clamped(c, y0, x0 + 1);
    const double v10 = image.clamped(c, y0 + 1, x0);
    const double v11 = image.clamped(c, y0 + 1, x0 + 1);
    return (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11);
}

Tensor resize_bilinear(const Tensor& image, int height, int width) {
    if (height == image.height() && width == image.width()) return image;
    Tensor out(image.channels(), height, width);
    const double sy = static_cast<double>(image.height()) / height;
    const double sx = static_cast<double>(image.width()) / width;
    for (int c = 0; c < image.channels(); ++c) {
        for (int y = 0; y < height; ++y) {
            const double src_y = (y + 0.5) * sy - 0.5;
            for (int x = 0; x < width; ++x) {
                const double src_x = (x + 0.5) * sx - 0.5;
                out.at(c, y, x) = sample_bilinear(image, c, src_x, src_y);
            }
        }
    }
    return out;
}

void gradients(const Tensor& image, int c, Tensor& gx, Tensor& gy) {
    const int h = image.height();
    const int w = image.width();
    gx = Tensor(1, h, w);
    gy = Tensor(1, h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const int xl = std::max(x - 1, 0), xr = std::min(x + 1, w - 1);
            const int yu = std::max(y - 1, 0), yd = std::min(y + 1, h - 1);
            gx.at(0, y, x) = (xr > xl) ? (image.at(c, y, xr) - image.at(c, y, xl)) / (xr - xl) : 0.0;
            gy.at(0, y, x) = (yd > yu) ? (image.at(c, yd, x) - image.at(c, yu, x)) / (yd - yu) : 0.0;
        }
    }
}

}  // namespace v2v
