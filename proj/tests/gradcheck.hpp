#pragma once

// Central-difference gradient checking against the tape, in double
// precision.  |analytic - numeric| / max(1, |numeric|) must stay under
// the stated tolerance for a sampled subset of parameter entries.

#include <cmath>
#include <functional>
#include <string>

#include "crsdiff/core/nn.hpp"
#include "crsdiff/core/rng.hpp"

namespace crsdiff::testing {

// loss_fn must build a fresh tape over the current parameter values and
// return the scalar loss after running backward (grads accumulated).
inline double max_rel_grad_error(ParamCollector<double>& params,
                                 const std::function<double(bool)>& loss_fn,
                                 Rng& rng, int probes_per_param = 4, double h = 1e-5) {
    params.zero_grad();
    loss_fn(true);
    double worst = 0.0;
    for (auto& it : params.items) {
        Param<double>& p = *it.second;
        int64_t n = p.numel();
        int probes = static_cast<int>(std::min<int64_t>(probes_per_param, n));
        for (int k = 0; k < probes; ++k) {
            int64_t idx = rng.uniform_int(0, n - 1);
            double saved = p.value[idx];
            p.value[idx] = saved + h;
            double fp = loss_fn(false);
            p.value[idx] = saved - h;
            double fm = loss_fn(false);
            p.value[idx] = saved;
            double numeric = (fp - fm) / (2 * h);
            double analytic = p.grad[idx];
            double err = std::abs(analytic - numeric) /
                         std::max({1.0, std::abs(numeric), std::abs(analytic)});
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace crsdiff::testing
