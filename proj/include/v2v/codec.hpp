#pragma once

#include <vector>

#include "v2v/tensor.hpp"

namespace v2v {

/// Lossy image autoencoder interface. Implementations must be stateless:
/// encode and decode are deterministic and safe to call concurrently.
class LossyCodec {
public:
    virtual ~LossyCodec() = default;

    virtual Latent encode(const Frame& image) const = 0;
    virtual Frame decode(const Latent& latent) const = 0;
    virtual int latent_channels() const = 0;
    virtual int spatial_factor() const = 0;

    /// Throws ShapeError unless the frame can be encoded.
    void check_frame(const Frame& image) const;
};

/// Latent == frame. Useful as a lossless reference.
class IdentityCodec final : public LossyCodec {
public:
    Latent encode(const Frame& image) const override { return image; }
    Frame decode(const Latent& latent) const override { return latent; }
    int latent_channels() const override { return 3; }
    int spatial_factor() const override { return 1; }
};

/// 2x area downsample to an (R, G, B, luma) latent with uniform quantization,
/// stored as scale * (value - 0.5). Decoding applies a luma correction at
/// latent resolution and a bilinear upsample; the round trip visibly blurs
/// and compounds when iterated.
class ToyLossyCodec final : public LossyCodec {
public:
    explicit ToyLossyCodec(int bits = 6, double scale = 8.0);

    Latent encode(const Frame& image) const override;
    Frame decode(const Latent& latent) const override;
    int latent_channels() const override { return 4; }
    int spatial_factor() const override { return 2; }

private:
    double levels_;
    double scale_;
};

struct FidelityConfig {
    double lambda_e = 1.0;
    double artifact_threshold = 0.1;  ///< per-channel absolute error in [0, 1] units
};

/// Binary per-latent-position mask of where compensation is kept: the
/// decoded compensated candidate's error against the image, max over
/// channels and averaged over each latent cell's footprint, is below the
/// threshold. Returned as a 1 x h x w tensor of {0, 1}.
Tensor compensation_mask(const LossyCodec& codec, const Frame& image, const Latent& candidate,
                         double artifact_threshold);

/// Encoding with linear compensation of the codec's reconstruction loss:
/// x_r + M * lambda * (x_r - x_rr), where x_r = E(I), x_rr = E(D(x_r)).
Latent fidelity_encode(const LossyCodec& codec, const Frame& image, const FidelityConfig& cfg = {});

/// MSE(original, reconstruction_k) for k = 1..iterations, each step
/// re-encoding the previous reconstruction.
std::vector<double> roundtrip_error_curve(const LossyCodec& codec, const Frame& image, int iterations,
                                          bool use_fidelity, const FidelityConfig& cfg = {});

}  // namespace v2v
