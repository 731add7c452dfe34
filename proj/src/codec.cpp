#include "v2v/codec.hpp"

#include <algorithm>
#include <cmath>

#include "v2v/imgproc.hpp"

namespace v2v {

void LossyCodec::check_frame(const Frame& image) const {
    const int f = spatial_factor();
    if (image.channels() != 3) throw ShapeError("codec: expected a 3-channel frame, got " + image.shape_string());
    if (image.height() % f != 0 || image.width() % f != 0) {
        throw ShapeError("codec: frame " + image.shape_string() + " not divisible by spatial factor " +
                         std::to_string(f));
    }
}

ToyLossyCodec::ToyLossyCodec(int bits, double scale) : levels_(std::ldexp(1.0, bits) - 1.0), scale_(scale) {
    if (bits < 1 || bits > 16) throw std::invalid_argument("ToyLossyCodec: bits must be in [1, 16]");
    if (!(scale > 0.0)) throw std::invalid_argument("ToyLossyCodec: scale must be positive");
}

Latent ToyLossyCodec::encode(const Frame& image) const {
    check_frame(image);
    const Tensor small = box_downsample(image, 2);
    Latent latent(4, small.height(), small.width());
    const Tensor y = luma(small);
    auto quantize = [this](double v) { return scale_ * (std::round(std::clamp(v, 0.0, 1.0) * levels_) / levels_ - 0.5); };
    for (int c = 0; c < 3; ++c) {
        auto src = small.plane(c);
        auto dst = latent.plane(c);
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = quantize(src[i]);
    }
    auto ys = y.plane(0);
    auto dst = latent.plane(3);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = quantize(ys[i]);
    return latent;
}

Frame ToyLossyCodec::decode(const Latent& latent) const {
    if (latent.channels() != 4) throw ShapeError("ToyLossyCodec::decode: expected 4 channels, got " + latent.shape_string());
    Tensor rgb(3, latent.height(), latent.width());
    auto lr = latent.plane(0);
    auto lg = latent.plane(1);
    auto lb = latent.plane(2);
    auto ll = latent.plane(3);
    for (std::size_t i = 0; i < ll.size(); ++i) {
        const double r = lr[i] / scale_ + 0.5, g = lg[i] / scale_ + 0.5, b = lb[i] / scale_ + 0.5;
        const double correction = ll[i] / scale_ + 0.5 - (0.299 * r + 0.587 * g + 0.114 * b);
        rgb.plane(0)[i] = r + correction;
        rgb.plane(1)[i] = g + correction;
        rgb.plane(2)[i] = b + correction;
    }
    return clamp(resize_bilinear(rgb, latent.height() * 2, latent.width() * 2), 0.0, 1.0);
}

Tensor compensation_mask(const LossyCodec& codec, const Frame& image, const Latent& candidate,
                         double artifact_threshold) {
    const Frame decoded = codec.decode(candidate);
    require_same_shape(decoded, image, "compensation_mask");
    Tensor err(1, image.height(), image.width());
    for (int c = 0; c < image.channels(); ++c) {
        auto d = decoded.plane(c);
        auto s = image.plane(c);
        auto e = err.plane(0);
        for (std::size_t i = 0; i < e.size(); ++i) e[i] = std::max(e[i], std::abs(d[i] - s[i]));
    }
    Tensor mask = box_downsample(err, codec.spatial_factor());
    for (double& v : mask.values()) v = v < artifact_threshold ? 1.0 : 0.0;
    return mask;
}

Latent fidelity_encode(const LossyCodec& codec, const Frame& image, const FidelityConfig& cfg) {
    if (cfg.lambda_e < 0.0) throw std::invalid_argument("fidelity_encode: lambda_e must be >= 0");
    if (!(cfg.artifact_threshold > 0.0)) throw std::invalid_argument("fidelity_encode: artifact_threshold must be > 0");
    codec.check_frame(image);

    const Latent x_r = codec.encode(image);
    if (cfg.lambda_e == 0.0) return x_r;
    const Latent x_rr = codec.encode(codec.decode(x_r));
    const Latent delta = cfg.lambda_e * (x_r - x_rr);
    const Latent candidate = x_r + delta;
    const Tensor mask = compensation_mask(codec, image, candidate, cfg.artifact_threshold);

    Latent out = x_r;
    auto m = mask.plane(0);
    for (int c = 0; c < out.channels(); ++c) {
        auto o = out.plane(c);
        auto d = delta.plane(c);
        for (std::size_t i = 0; i < o.size(); ++i) o[i] += m[i] * d[i];
    }
    return out;
}

std::vector<double> roundtrip_error_curve(const LossyCodec& codec, const Frame& image, int iterations,
                                          bool use_fidelity, const FidelityConfig& cfg) {
    if (iterations < 1) throw std::invalid_argument("roundtrip_error_curve: iterations must be >= 1");
    std::vector<double> curve;
    curve.reserve(iterations);
    Frame current = image;
    for (int k = 0; k < iterations; ++k) {
        const Latent latent = use_fidelity ? fidelity_encode(codec, current, cfg) : codec.encode(current);
        current = codec.decode(latent);
        curve.push_back(mean_squared_error(image, current));
    }
    return curve;
}

}  // namespace v2v
