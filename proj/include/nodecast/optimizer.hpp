#pragma once

#include <map>
#include <string>
#include <vector>

#include "nodecast/tensor.hpp"

namespace nodecast::ad {

// Persistent trainable state. Parameters are initialized from an RNG stream
// keyed by (seed, name), so adding or removing unrelated parameters leaves
// every other parameter's initial values untouched. That is what lets an
// ablated model share bit-identical weights with the full model.
struct ParamEntry {
    std::string name;
    std::vector<int> shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> m, v;  // Adam moments
    bool frozen = false;
};

enum class Init { zero, one, xavier, normal_scaled };

class ParamStore {
public:
    int add(const std::string& name, std::vector<int> shape, Init init, uint64_t seed);

    // Puts the parameter on the tape as a leaf and records the binding.
    Var use(Tape& t, int id) const;
    Var use(Tape& t, const std::string& name) const;

    int id(const std::string& name) const;
    bool has(const std::string& name) const { return index_.count(name) > 0; }
    ParamEntry& entry(int id) { return entries_[id]; }
    const ParamEntry& entry(int id) const { return entries_[id]; }
    size_t count() const { return entries_.size(); }

    // Moves gradients from a finished tape back into entry.grad (accumulates,
    // so micro-batches sum naturally).
    void collect_grads(const Tape& t);
    void zero_grads();

    void set_frozen(const std::string& name, bool frozen);
    std::vector<std::string> names() const;

private:
    std::vector<ParamEntry> entries_;
    std::map<std::string, int> index_;
};

// lr(step) for a linear warmup into a cosine decay:
//   step <= warmup:  peak * step / warmup
//   else:            peak * 0.5 * (1 + cos(pi * (step - warmup) / (total - warmup)))
double warmup_cosine_lr(double peak, int step, int warmup, int total);

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One optimizer over the whole store; frozen entries are skipped entirely.
class Adam {
public:
    Adam(ParamStore& store, AdamConfig cfg = {}) : store_(store), cfg_(cfg) {}

    // Applies one update with the given learning rate. Throws NumericError on
    // a non-finite gradient (the step is refused, parameters untouched).
    void step(double lr);

    int steps_taken() const { return t_; }

private:
    ParamStore& store_;
    AdamConfig cfg_;
    int t_ = 0;
};

}  // namespace nodecast::ad
