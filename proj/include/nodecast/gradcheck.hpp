#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nodecast/optimizer.hpp"
#include "nodecast/tensor.hpp"

namespace nodecast::ad {

// Central-difference gradient verification: (f(x+h) - f(x-h)) / 2h against the
// reverse-mode gradient, reported as |a - n| / max(|a| + |n|, 1e-8).

struct GradReport {
    double max_rel = 0.0;
    std::string worst_param;
    int worst_index = -1;
    double worst_analytic = 0.0, worst_numeric = 0.0;
    int coords_checked = 0;

    bool ok(double tol) const { return max_rel < tol; }
};

// Differentiates the scalar produced by `build` with respect to every input
// array, then verifies each coordinate numerically. `build` must be a pure
// function of the leaf values it is given.
GradReport check_inputs(const std::vector<Array>& inputs,
                        const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                        double h = 1e-5);

// Same idea over a ParamStore: every non-frozen parameter, with up to
// `max_coords_per_param` randomly sampled coordinates (all when <= 0).
GradReport check_params(ParamStore& store, const std::function<Var(Tape&)>& build_loss,
                        double h = 1e-5, int max_coords_per_param = 4, uint64_t seed = 1);

}  // namespace nodecast::ad
