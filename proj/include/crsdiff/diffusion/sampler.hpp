#pragma once

// Reverse-diffusion driver.  The caller supplies a noise-prediction
// closure (which is where conditional/unconditional CFG combination
// happens); this file owns the timestep stride and the DDPM/DDIM update
// chain.  A strided "ddpm" walk uses the eta=1 DDIM update over each
// stride pair, which reduces to the exact ancestral step at stride 1.

#include <functional>

#include "crsdiff/diffusion/schedule.hpp"

namespace crsdiff::diff {

enum class SamplerKind { ddpm, ddim };

inline SamplerKind sampler_from_name(const std::string& name) {
    if (name == "ddpm") return SamplerKind::ddpm;
    if (name == "ddim") return SamplerKind::ddim;
    throw ConfigError("unknown sampler: " + name);
}

struct GuidanceConfig {
    double omega = 7.5;
    SamplerKind sampler = SamplerKind::ddpm;
    double ddim_eta = 0.0;
    int steps = 100;
    double clip_guidance_weight = 0.0;

    void validate(int T) const {
        require<ConfigError>(omega >= 0.0, "guidance: omega must be >= 0");
        require<ConfigError>(steps >= 1, "guidance: steps must be >= 1");
        require<ConfigError>(steps <= T, "guidance: steps must not exceed schedule T");
        require<ConfigError>(ddim_eta >= 0.0 && ddim_eta <= 1.0, "guidance: eta in [0,1]");
        require<ConfigError>(clip_guidance_weight >= 0.0,
                             "guidance: clip_guidance_weight must be >= 0");
    }
};

// predictor(z_t, t) must return the already-guided noise estimate.
using NoisePredictFn = std::function<Tensorf(const Tensorf&, int)>;

inline Tensorf sample_latents(const NoisePredictFn& predict, const NoiseSchedule& sched,
                              const GuidanceConfig& g, std::vector<int> latent_shape, Rng& rng) {
    g.validate(sched.T);
    Tensorf z = Tensorf::randn(std::move(latent_shape), rng);
    std::vector<int> ts = sample_timesteps(sched.T, g.steps);
    for (int i = static_cast<int>(ts.size()) - 1; i >= 0; --i) {
        int t = ts[static_cast<size_t>(i)];
        int t_prev = i > 0 ? ts[static_cast<size_t>(i - 1)] : -1;
        Tensorf eps = predict(z, t);
        double eta = g.sampler == SamplerKind::ddpm ? 1.0 : g.ddim_eta;
        z = ddim_step(z, t, t_prev, eps, eta, sched, rng);
    }
    return z;
}

}  // namespace crsdiff::diff
