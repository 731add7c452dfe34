#pragma once

#include <vector>

namespace v2v {

/// Diffusion noise schedule indexed by integer timestep t in [0, t_max];
/// alpha_bar(0) = 1 denotes the clean signal.
class NoiseSchedule {
public:
    /// Stable Diffusion's "scaled linear" betas.
    static NoiseSchedule scaled_linear(int t_max = 1000, double beta_start = 0.00085, double beta_end = 0.012);
    /// alphas[i] is alpha at t = i + 1. Only the last may be 0, which makes
    /// alpha_bar(t_max) = 0.
    static NoiseSchedule from_alphas(std::vector<double> alphas);

    int t_max() const { return t_max_; }
    double alpha(int t) const;
    double alpha_bar(int t) const;
    const std::vector<double>& alpha_bars() const { return alpha_bars_; }

    /// Strictly decreasing sampling timesteps from strength_t down to 0,
    /// inclusive, spaced as evenly as integer rounding allows.
    std::vector<int> ddim_timesteps(int strength_t, int ddim_steps) const;

private:
    int t_max_ = 0;
    std::vector<double> alphas_;      // alphas_[0] = 1
    std::vector<double> alpha_bars_;  // running products
};

/// Timestep thresholds for the staged cross-frame constraints.
struct StageSchedule {
    int t_s = 100;
    int t_p0 = 500;
    int t_p1 = 800;
    int t_a = 800;

    static StageSchedule from_fractions(int t_max, double s = 0.1, double p0 = 0.5, double p1 = 0.8, double a = 0.8);

    bool shape_fusion_active(int t) const { return t > t_p0; }
    bool pixel_fusion_active(int t) const { return t > t_s && t <= t_p1; }
    bool adain_active(int t) const { return t <= t_a; }
};

}  // namespace v2v
