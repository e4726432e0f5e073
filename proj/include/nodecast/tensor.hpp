#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nodecast/errors.hpp"
#include "nodecast/rng.hpp"

namespace nodecast::ad {

// Dense row-major double array. Shapes are small (rank <= 4 in practice).
struct Array {
    std::vector<int> shape;
    std::vector<double> data;

    Array() = default;
    Array(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}

    static Array zeros(std::vector<int> s);
    static Array full(std::vector<int> s, double v);

    int size() const {
        int n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    int rank() const { return static_cast<int>(shape.size()); }
    double& at(int i) { return data[i]; }
    double at(int i) const { return data[i]; }
};

int numel(const std::vector<int>& shape);
bool same_shape(const std::vector<int>& a, const std::vector<int>& b);
std::string shape_str(const std::vector<int>& s);

class Tape;

// A node in the reverse-mode graph. Created through Tape/op builders only.
struct Node {
    Array val;
    std::vector<double> grad;           // same length as val.data once backward runs
    std::vector<Node*> parents;
    std::function<void(Node&)> backprop;  // pulls this->grad into parents' grads
    bool needs_grad = false;
    Tape* tape = nullptr;

    const std::vector<int>& shape() const { return val.shape; }
    int size() const { return val.size(); }
};

using Var = Node*;

// Owns every node of one forward pass. Creation order is a topological order,
// so backward is a single reverse sweep.
class Tape {
public:
    Var input(Array a, bool needs_grad);
    Var constant(Array a) { return input(std::move(a), false); }

    // Seeds d(loss)/d(loss) = 1 and propagates. loss must be a single element.
    void backward(Var loss);

    Var make(std::vector<int> shape, std::vector<Node*> parents);

    size_t node_count() const { return nodes_.size(); }

    // Parameter bindings: (parameter id, leaf node). Filled by ParamStore::use
    // so the trainer can pull gradients back into persistent storage.
    std::vector<std::pair<int, Var>> param_uses;

private:
    std::vector<std::unique_ptr<Node>> nodes_;
};

// ---- primitive ops ---------------------------------------------------------

Var add(Var a, Var b);                      // same shape
Var sub(Var a, Var b);
Var mul(Var a, Var b);                      // elementwise, same shape
Var add_scalar(Var a, double c);
Var mul_scalar(Var a, double c);
Var neg(Var a);

// b's shape is a suffix of a's shape: broadcast b across the leading axes.
Var add_tail(Var a, Var b);
// b's shape is a prefix of a's shape: broadcast b across the trailing axes.
Var add_lead(Var a, Var b);
Var mul_lead(Var a, Var b);

// s has a single element; out = s * a  /  out = a + s.
Var scale_by(Var a, Var s);
Var add_scalar_var(Var a, Var s);

// a: [..., m, k]; b: [k, n] (shared) or [..., k, n] (batched, matching lead).
Var matmul(Var a, Var b);
Var transpose_last2(Var a);
Var permute(Var a, const std::vector<int>& perm);
Var reshape(Var a, std::vector<int> shape);
Var concat(const std::vector<Var>& xs, int axis);
Var slice(Var a, int axis, int start, int len);
Var select(Var a, int axis, int index);     // like slice(len = 1) with the axis dropped

Var softmax_last(Var a);                    // rows may contain -inf (masked); not all -inf
Var sigmoid(Var a);
Var tanh_op(Var a);
Var relu(Var a);
Var log_op(Var a);
Var square(Var a);
Var clamp(Var a, double lo, double hi);

// Normalizes over the last axis; gamma/beta are [d]. eps keeps the unit-variance
// contract tight for well-scaled rows.
Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-8);

// Inverted dropout. Identity (the same node) when train == false.
Var dropout(Var a, double p, Rng& rng, bool train);

Var sum_all(Var a);                         // -> [1]
Var mean_all(Var a);                        // -> [1]
Var mean_axis(Var a, int axis);             // drops the axis

Var outer_sum(Var u, Var v);                // u:[n], v:[m] -> [n,m] of u_i + v_j
Var set_diag_one(Var a);                    // square matrix; diagonal pinned to 1

// Pearson correlation of two equal-length vectors -> [1]. Differentiable in
// both arguments. Requires n >= 2 and nonzero variance on each side.
Var pearson(Var x, Var y);

}  // namespace nodecast::ad
