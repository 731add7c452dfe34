#include "v2v/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace v2v {

NoiseSchedule NoiseSchedule::scaled_linear(int t_max, double beta_start, double beta_end) {
    if (t_max < 1) throw std::invalid_argument("NoiseSchedule: t_max must be >= 1");
    std::vector<double> alphas(t_max);
    const double a = std::sqrt(beta_start);
    const double b = std::sqrt(beta_end);
    for (int i = 0; i < t_max; ++i) {
        const double frac = t_max == 1 ? 0.0 : static_cast<double>(i) / (t_max - 1);
        const double beta = (a + (b - a) * frac) * (a + (b - a) * frac);
        alphas[i] = 1.0 - beta;
    }
    return from_alphas(std::move(alphas));
}

NoiseSchedule NoiseSchedule::from_alphas(std::vector<double> alphas) {
    if (alphas.empty()) throw std::invalid_argument("NoiseSchedule: no alphas");
    NoiseSchedule s;
    s.t_max_ = static_cast<int>(alphas.size());
    s.alphas_.assign(1, 1.0);
    s.alpha_bars_.assign(1, 1.0);
    for (double a : alphas) {
        if (!(a >= 0.0 && a < 1.0)) throw std::invalid_argument("NoiseSchedule: alphas must lie in [0, 1)");
        if (s.alpha_bars_.back() == 0.0) throw std::invalid_argument("NoiseSchedule: alpha_bar must be strictly decreasing");
        s.alphas_.push_back(a);
        s.alpha_bars_.push_back(s.alpha_bars_.back() * a);
    }
    return s;
}

double NoiseSchedule::alpha(int t) const {
    if (t < 0 || t > t_max_) throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, t_max]");
    return alphas_[t];
}

double NoiseSchedule::alpha_bar(int t) const {
    if (t < 0 || t > t_max_) throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, t_max]");
    return alpha_bars_[t];
}

std::vector<int> NoiseSchedule::ddim_timesteps(int strength_t, int ddim_steps) const {
    if (strength_t < 0 || strength_t > t_max_) throw std::out_of_range("strength outside [0, t_max]");
    if (ddim_steps < 1) throw std::invalid_argument("ddim_steps must be >= 1");
    std::vector<int> ts;
    for (int k = 0; k <= ddim_steps; ++k) {
        const int t = static_cast<int>(std::lround(static_cast<double>(strength_t) * (ddim_steps - k) / ddim_steps));
        if (ts.empty() || t < ts.back()) ts.push_back(t);
    }
    return ts;
}

StageSchedule StageSchedule::from_fractions(int t_max, double s, double p0, double p1, double a) {
    auto at = [t_max](double f) {
        if (f < 0.0 || f > 1.0) throw std::invalid_argument("stage fraction outside [0, 1]");
        return static_cast<int>(std::lround(f * t_max));
    };
    return {at(s), at(p0), at(p1), at(a)};
}

}  // namespace v2v
