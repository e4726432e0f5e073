#include "nodecast/gradcheck.hpp"

#include <cmath>

namespace nodecast::ad {

namespace {

void record(GradReport& rep, const std::string& name, int idx, double analytic, double numeric) {
    const double rel = std::fabs(analytic - numeric) /
                       std::max(std::fabs(analytic) + std::fabs(numeric), 1e-8);
    ++rep.coords_checked;
    if (rel > rep.max_rel) {
        rep.max_rel = rel;
        rep.worst_param = name;
        rep.worst_index = idx;
        rep.worst_analytic = analytic;
        rep.worst_numeric = numeric;
    }
}

}  // namespace

GradReport check_inputs(const std::vector<Array>& inputs,
                        const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                        double h) {
    auto eval = [&](const std::vector<Array>& xs) {
        Tape t;
        std::vector<Var> leaves;
        leaves.reserve(xs.size());
        for (const auto& x : xs) leaves.push_back(t.input(x, true));
        return build(t, leaves)->val.data[0];
    };

    // Analytic pass.
    Tape t;
    std::vector<Var> leaves;
    for (const auto& x : inputs) leaves.push_back(t.input(x, true));
    Var loss = build(t, leaves);
    t.backward(loss);

    GradReport rep;
    std::vector<Array> work = inputs;
    for (size_t ii = 0; ii < inputs.size(); ++ii) {
        for (int c = 0; c < inputs[ii].size(); ++c) {
            const double orig = work[ii].data[c];
            work[ii].data[c] = orig + h;
            const double fp = eval(work);
            work[ii].data[c] = orig - h;
            const double fm = eval(work);
            work[ii].data[c] = orig;
            record(rep, "input" + std::to_string(ii), c, leaves[ii]->grad[c], (fp - fm) / (2.0 * h));
        }
    }
    return rep;
}

GradReport check_params(ParamStore& store, const std::function<Var(Tape&)>& build_loss,
                        double h, int max_coords_per_param, uint64_t seed) {
    auto eval = [&]() {
        Tape t;
        return build_loss(t)->val.data[0];
    };

    store.zero_grads();
    Tape t;
    Var loss = build_loss(t);
    t.backward(loss);
    store.collect_grads(t);

    GradReport rep;
    Rng rng(seed, "gradcheck");
    for (size_t pid = 0; pid < store.count(); ++pid) {
        ParamEntry& e = store.entry(static_cast<int>(pid));
        if (e.frozen) continue;
        const int n = static_cast<int>(e.value.size());
        std::vector<int> coords;
        if (max_coords_per_param <= 0 || n <= max_coords_per_param) {
            coords.resize(n);
            for (int i = 0; i < n; ++i) coords[i] = i;
        } else {
            for (int i = 0; i < max_coords_per_param; ++i)
                coords.push_back(static_cast<int>(rng.below(n)));
        }
        for (int c : coords) {
            const double orig = e.value[c];
            e.value[c] = orig + h;
            const double fp = eval();
            e.value[c] = orig - h;
            const double fm = eval();
            e.value[c] = orig;
            record(rep, e.name, c, e.grad[c], (fp - fm) / (2.0 * h));
        }
    }
    return rep;
}

}  // namespace nodecast::ad
