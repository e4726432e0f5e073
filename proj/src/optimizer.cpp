#include "nodecast/optimizer.hpp"

#include <cmath>

namespace nodecast::ad {

int ParamStore::add(const std::string& name, std::vector<int> shape, Init init, uint64_t seed) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    ParamEntry e;
    e.name = name;
    e.shape = std::move(shape);
    const int n = numel(e.shape);
    e.value.assign(n, 0.0);
    e.grad.assign(n, 0.0);
    e.m.assign(n, 0.0);
    e.v.assign(n, 0.0);

    if (init == Init::one) {
        e.value.assign(n, 1.0);
    } else if (init != Init::zero) {
        Rng rng(seed, name);
        int fan_in = e.shape.empty() ? 1 : e.shape[0];
        int fan_out = e.shape.size() >= 2 ? e.shape[1] : 1;
        if (init == Init::xavier) {
            const double s = std::sqrt(6.0 / (fan_in + fan_out));
            for (double& v : e.value) v = rng.uniform(-s, s);
        } else {  // normal_scaled
            const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (double& v : e.value) v = rng.normal(0.0, s);
        }
    }
    entries_.push_back(std::move(e));
    index_[name] = static_cast<int>(entries_.size()) - 1;
    return index_[name];
}

int ParamStore::id(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
}

Var ParamStore::use(Tape& t, int pid) const {
    const ParamEntry& e = entries_[pid];
    Var leaf = t.input(Array(e.shape, e.value), !e.frozen);
    t.param_uses.emplace_back(pid, leaf);
    return leaf;
}

Var ParamStore::use(Tape& t, const std::string& name) const { return use(t, id(name)); }

void ParamStore::collect_grads(const Tape& t) {
    for (const auto& [pid, leaf] : t.param_uses) {
        ParamEntry& e = entries_[pid];
        if (e.frozen || leaf->grad.empty()) continue;
        for (size_t i = 0; i < e.grad.size(); ++i) e.grad[i] += leaf->grad[i];
    }
}

void ParamStore::zero_grads() {
    for (auto& e : entries_)
        std::fill(e.grad.begin(), e.grad.end(), 0.0);
}

void ParamStore::set_frozen(const std::string& name, bool frozen) {
    entries_[id(name)].frozen = frozen;
}

std::vector<std::string> ParamStore::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
}

double warmup_cosine_lr(double peak, int step, int warmup, int total) {
    if (warmup > 0 && step <= warmup) return peak * static_cast<double>(step) / warmup;
    if (total <= warmup) return peak;
    const double frac = static_cast<double>(step - warmup) / (total - warmup);
    return peak * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
}

void Adam::step(double lr) {
    // Validate all gradients before touching anything, so a refused step
    // leaves every parameter exactly as it was.
    for (size_t pid = 0; pid < store_.count(); ++pid) {
        const ParamEntry& e = store_.entry(static_cast<int>(pid));
        if (e.frozen) continue;
        for (double g : e.grad)
            if (!std::isfinite(g))
                throw NumericError("adam: non-finite gradient in '" + e.name + "', step refused");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (size_t pid = 0; pid < store_.count(); ++pid) {
        ParamEntry& e = store_.entry(static_cast<int>(pid));
        if (e.frozen) continue;
        for (size_t i = 0; i < e.value.size(); ++i) {
            const double g = e.grad[i];
            e.m[i] = cfg_.beta1 * e.m[i] + (1.0 - cfg_.beta1) * g;
            e.v[i] = cfg_.beta2 * e.v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = e.m[i] / bc1;
            const double vhat = e.v[i] / bc2;
            e.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace nodecast::ad
