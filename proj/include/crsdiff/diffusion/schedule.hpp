#pragma once

// Variance-preserving noise schedule and the sampler update rules.
// Everything here is plain array math: the forward noising
// z_t = sqrt(alpha_bar_t) z + sigma_t eps with sigma_t^2 = 1 - alpha_bar_t,
// classifier-free guidance combination, and the DDPM/DDIM reverse steps.

#include <cmath>
#include <vector>

#include "crsdiff/core/rng.hpp"
#include "crsdiff/core/tensor.hpp"

namespace crsdiff::diff {

inline constexpr int kLatentChannels = 4;
inline constexpr int kDownFactor = 4;

struct NoiseSchedule {
    int T = 0;
    double beta_start = 0, beta_end = 0;
    std::vector<double> beta;       // size T
    std::vector<double> alpha_bar;  // cumulative product of (1 - beta)
    std::vector<double> sigma;      // sqrt(1 - alpha_bar)

    double alpha_bar_prev(int t) const { return t > 0 ? alpha_bar[static_cast<size_t>(t - 1)] : 1.0; }
};

// Linear beta ramp.  The default end rescales the common 1000-step 0.02
// terminal beta to the configured step count.
inline NoiseSchedule make_schedule(int T, double beta_start = 1e-4, double beta_end = -1.0) {
    require<ConfigError>(T >= 1, "make_schedule: T must be >= 1");
    if (beta_end < 0) beta_end = 0.02 * (1000.0 / T);
    require<ConfigError>(beta_start > 0 && beta_end < 1.0 && beta_start <= beta_end,
                         "make_schedule: bad beta range");
    NoiseSchedule s;
    s.T = T;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.beta.resize(static_cast<size_t>(T));
    s.alpha_bar.resize(static_cast<size_t>(T));
    s.sigma.resize(static_cast<size_t>(T));
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        double b = T == 1 ? beta_start
                          : beta_start + (beta_end - beta_start) * t / (T - 1);
        s.beta[static_cast<size_t>(t)] = b;
        prod *= 1.0 - b;
        s.alpha_bar[static_cast<size_t>(t)] = prod;
        s.sigma[static_cast<size_t>(t)] = std::sqrt(1.0 - prod);
    }
    return s;
}

// z_t = sqrt(alpha_bar_t) z + sigma_t eps
inline Tensorf add_noise(const Tensorf& z, int t, const Tensorf& eps, const NoiseSchedule& s) {
    require<InputError>(t >= 0 && t < s.T, "add_noise: t out of range");
    require<InputError>(z.same_shape(eps), "add_noise: shape mismatch");
    float a = static_cast<float>(std::sqrt(s.alpha_bar[static_cast<size_t>(t)]));
    float sg = static_cast<float>(s.sigma[static_cast<size_t>(t)]);
    Tensorf out(z.shape);
    for (int64_t i = 0; i < z.numel(); ++i) out[i] = a * z[i] + sg * eps[i];
    return out;
}

// Eq-style guidance blend: omega * eps_cond + (1 - omega) * eps_uncond.
inline Tensorf cfg_combine(const Tensorf& eps_cond, const Tensorf& eps_uncond, double omega) {
    require<InputError>(eps_cond.same_shape(eps_uncond), "cfg_combine: shape mismatch");
    float w = static_cast<float>(omega);
    Tensorf out(eps_cond.shape);
    for (int64_t i = 0; i < out.numel(); ++i)
        out[i] = w * eps_cond[i] + (1.0f - w) * eps_uncond[i];
    return out;
}

// Ancestral update t -> t-1.  Posterior mean from the noise prediction and
// the posterior variance beta_t (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t),
// which vanishes at the final step, so no noise is added there.
inline Tensorf ddpm_step(const Tensorf& z_t, int t, const Tensorf& eps_hat,
                         const NoiseSchedule& s, Rng& rng) {
    require<InputError>(t >= 0 && t < s.T, "ddpm_step: t out of range");
    require<InputError>(z_t.same_shape(eps_hat), "ddpm_step: shape mismatch");
    double beta = s.beta[static_cast<size_t>(t)];
    double ab = s.alpha_bar[static_cast<size_t>(t)];
    double ab_prev = s.alpha_bar_prev(t);
    double inv_sqrt_alpha = 1.0 / std::sqrt(1.0 - beta);
    double eps_coef = beta / std::sqrt(1.0 - ab);
    double var = beta * (1.0 - ab_prev) / (1.0 - ab);
    double std_dev = std::sqrt(var);
    Tensorf out(z_t.shape);
    for (int64_t i = 0; i < z_t.numel(); ++i)
        out[i] = static_cast<float>(inv_sqrt_alpha * (z_t[i] - eps_coef * eps_hat[i]));
    if (t > 0)
        for (int64_t i = 0; i < out.numel(); ++i)
            out[i] += static_cast<float>(std_dev * rng.normal());
    return out;
}

// DDIM update t -> t_prev in x0-prediction form; t_prev == -1 lands on the
// clean sample (alpha_bar = 1).  eta = 0 is fully deterministic.
inline Tensorf ddim_step(const Tensorf& z_t, int t, int t_prev, const Tensorf& eps_hat,
                         double eta, const NoiseSchedule& s, Rng& rng) {
    require<InputError>(t >= 0 && t < s.T, "ddim_step: t out of range");
    require<InputError>(t_prev >= -1 && t_prev < t, "ddim_step: t_prev must precede t");
    require<InputError>(eta >= 0.0 && eta <= 1.0, "ddim_step: eta in [0,1]");
    require<InputError>(z_t.same_shape(eps_hat), "ddim_step: shape mismatch");
    double ab_t = s.alpha_bar[static_cast<size_t>(t)];
    double ab_p = t_prev >= 0 ? s.alpha_bar[static_cast<size_t>(t_prev)] : 1.0;
    double sg_t = s.sigma[static_cast<size_t>(t)];
    double sigma_step =
        eta * std::sqrt((1.0 - ab_p) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_p);
    double dir_coef = std::sqrt(std::max(0.0, 1.0 - ab_p - sigma_step * sigma_step));
    double x0_coef = std::sqrt(ab_p) / std::sqrt(ab_t);
    Tensorf out(z_t.shape);
    for (int64_t i = 0; i < z_t.numel(); ++i) {
        double x0 = (z_t[i] - sg_t * eps_hat[i]);  // times 1/sqrt(ab_t), folded into x0_coef
        out[i] = static_cast<float>(x0_coef * x0 + dir_coef * eps_hat[i]);
    }
    if (sigma_step > 0.0)
        for (int64_t i = 0; i < out.numel(); ++i)
            out[i] += static_cast<float>(sigma_step * rng.normal());
    return out;
}

// Uniform stride of `steps` indices over [0, T): the last entry is always
// T-1 and spacing is as even as integer arithmetic allows.  Returned
// ascending; samplers walk it backwards.
inline std::vector<int> sample_timesteps(int T, int steps) {
    require<ConfigError>(steps >= 1 && steps <= T, "sampling steps must be in [1, T]");
    std::vector<int> ts(static_cast<size_t>(steps));
    for (int i = 0; i < steps; ++i)
        ts[static_cast<size_t>(i)] = static_cast<int>((static_cast<int64_t>(i + 1) * T) / steps) - 1;
    return ts;
}

}  // namespace crsdiff::diff
