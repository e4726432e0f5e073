#include "nodecast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nodecast::ad {

int numel(const std::vector<int>& shape) {
    int n = 1;
    for (int d : shape) n *= d;
    return n;
}

bool same_shape(const std::vector<int>& a, const std::vector<int>& b) { return a == b; }

std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

Array Array::zeros(std::vector<int> s) {
    int n = numel(s);
    return Array(std::move(s), std::vector<double>(n, 0.0));
}

Array Array::full(std::vector<int> s, double v) {
    int n = numel(s);
    return Array(std::move(s), std::vector<double>(n, v));
}

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

Tape* tape_of(std::initializer_list<Var> vars) {
    Tape* t = nullptr;
    for (Var v : vars) {
        if (!v) throw ShapeError("null operand");
        if (t && v->tape != t) throw ShapeError("operands from different tapes");
        t = v->tape;
    }
    return t;
}

// C[m x n] += A[m x k] * B[k x n]
void mm_nn(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* a = A + static_cast<size_t>(i) * k;
        double* c = C + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = a[p];
            const double* b = B + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C[m x n] += A[m x k] * B^T, B stored [n x k]
void mm_nt(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* a = A + static_cast<size_t>(i) * k;
        double* c = C + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* b = B + static_cast<size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += a[p] * b[p];
            c[j] += s;
        }
    }
}

// C[k x n] += A^T * B, A stored [m x k], B stored [m x n]
void mm_tn(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* a = A + static_cast<size_t>(i) * k;
        const double* b = B + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = a[p];
            double* c = C + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

}  // namespace

Var Tape::make(std::vector<int> shape, std::vector<Node*> parents) {
    auto node = std::make_unique<Node>();
    node->val.shape = std::move(shape);
    node->val.data.assign(numel(node->val.shape), 0.0);
    node->parents = std::move(parents);
    node->tape = this;
    for (Node* p : node->parents)
        if (p->needs_grad) node->needs_grad = true;
    if (node->needs_grad) node->grad.assign(node->val.data.size(), 0.0);
    nodes_.push_back(std::move(node));
    return nodes_.back().get();
}

Var Tape::input(Array a, bool needs_grad) {
    auto node = std::make_unique<Node>();
    node->val = std::move(a);
    node->needs_grad = needs_grad;
    node->tape = this;
    if (needs_grad) node->grad.assign(node->val.data.size(), 0.0);
    nodes_.push_back(std::move(node));
    return nodes_.back().get();
}

void Tape::backward(Var loss) {
    if (loss->size() != 1) throw ShapeError("backward: loss must be a single element");
    if (!loss->needs_grad) throw ShapeError("backward: loss does not depend on any parameter");
    for (double v : loss->val.data)
        if (!std::isfinite(v)) throw NumericError("backward: loss is not finite");
    loss->grad[0] = 1.0;
    bool reached = false;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = **it;
        if (!reached) {  // nodes created after the loss cannot feed it
            if (&n != loss) continue;
            reached = true;
        }
        if (n.needs_grad && n.backprop) n.backprop(n);
    }
}

// ---- elementwise -----------------------------------------------------------

Var add(Var a, Var b) {
    require(same_shape(a->shape(), b->shape()),
            "add: shape mismatch " + shape_str(a->shape()) + " vs " + shape_str(b->shape()));
    Tape* t = tape_of({a, b});
    Var out = t->make(a->shape(), {a, b});
    for (int i = 0; i < a->size(); ++i) out->val.data[i] = a->val.data[i] + b->val.data[i];
    out->backprop = [a, b](Node& n) {
        if (a->needs_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
        if (b->needs_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i];
    };
    return out;
}

Var sub(Var a, Var b) {
    require(same_shape(a->shape(), b->shape()),
            "sub: shape mismatch " + shape_str(a->shape()) + " vs " + shape_str(b->shape()));
    Tape* t = tape_of({a, b});
    Var out = t->make(a->shape(), {a, b});
    for (int i = 0; i < a->size(); ++i) out->val.data[i] = a->val.data[i] - b->val.data[i];
    out->backprop = [a, b](Node& n) {
        if (a->needs_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
        if (b->needs_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) b->grad[i] -= n.grad[i];
    };
    return out;
}

Var mul(Var a, Var b) {
    require(same_shape(a->shape(), b->shape()),
            "mul: shape mismatch " + shape_str(a->shape()) + " vs " + shape_str(b->shape()));
    Tape* t = tape_of({a, b});
    Var out = t->make(a->shape(), {a, b});
    for (int i = 0; i < a->size(); ++i) out->val.data[i] = a->val.data[i] * b->val.data[i];
    out->backprop = [a, b](Node& n) {
        if (a->needs_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * b->val.data[i];
        if (b->needs_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i] * a->val.data[i];
    };
    return out;
}

Var add_scalar(Var a, double c) {
    Var out = a->tape->make(a->shape(), {a});
    for (int i = 0; i < a->size(); ++i) out->val.data[i] = a->val.data[i] + c;
    out->backprop = [a](Node& n) {
        if (a->needs_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
    };
    return out;
}

Var mul_scalar(Var a, double c) {
    Var out = a->tape->make(a->shape(), {a});
    for (int i = 0; i < a->size(); ++i) out->val.data[i] = a->val.data[i] * c;
    out->backprop = [a, c](Node& n) {
        if (a->needs_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * c;
    };
    return out;
}

Var neg(Var a) { return mul_scalar(a, -1.0); }

// ---- broadcast forms -------------------------------------------------------

Var add_tail(Var a, Var b) {
    const auto& as = a->shape();
    const auto& bs = b->shape();
    require(bs.size() <= as.size() &&
                std::equal(bs.begin(), bs.end(), as.end() - bs.size()),
            "add_tail: " + shape_str(bs) + " is not a suffix of " + shape_str(as));
    Tape* t = tape_of({a, b});
    const int bsz = b->size();
    Var out = t->make(as, {a, b});
    for (int i = 0; i < a->size(); ++i) out->val.data[i] = a->val.data[i] + b->val.data[i % bsz];
    out->backprop = [a, b, bsz](Node& n) {
        if (a->needs_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
        if (b->needs_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) b->grad[i % bsz] += n.grad[i];
    };
    return out;
}

namespace {

Var lead_broadcast(Var a, Var b, bool multiply) {
    const auto& as = a->shape();
    const auto& bs = b->shape();
    require(bs.size() <= as.size() && std::equal(bs.begin(), bs.end(), as.begin()),
            "lead broadcast: " + shape_str(bs) + " is not a prefix of " + shape_str(as));
    Tape* t = tape_of({a, b});
    const int lead = b->size();
    const int inner = a->size() / std::max(lead, 1);
    Var out = t->make(as, {a, b});
    for (int l = 0; l < lead; ++l) {
        const double bv = b->val.data[l];
        const double* av = a->val.data.data() + static_cast<size_t>(l) * inner;
        double* ov = out->val.data.data() + static_cast<size_t>(l) * inner;
        for (int j = 0; j < inner; ++j) ov[j] = multiply ? av[j] * bv : av[j] + bv;
    }
    out->backprop = [a, b, lead, inner, multiply](Node& n) {
        for (int l = 0; l < lead; ++l) {
            const double* g = n.grad.data() + static_cast<size_t>(l) * inner;
            if (a->needs_grad) {
                double* ag = a->grad.data() + static_cast<size_t>(l) * inner;
                const double bv = b->val.data[l];
                for (int j = 0; j < inner; ++j) ag[j] += multiply ? g[j] * bv : g[j];
            }
            if (b->needs_grad) {
                const double* av = a->val.data.data() + static_cast<size_t>(l) * inner;
                double s = 0.0;
                for (int j = 0; j < inner; ++j) s += multiply ? g[j] * av[j] : g[j];
                b->grad[l] += s;
            }
        }
    };
    return out;
}

}  // namespace

Var add_lead(Var a, Var b) { return lead_broadcast(a, b, false); }
Var mul_lead(Var a, Var b) { return lead_broadcast(a, b, true); }

Var scale_by(Var a, Var s) {
    require(s->size() == 1, "scale_by: scale must be a single element");
    Tape* t = tape_of({a, s});
    Var out = t->make(a->shape(), {a, s});
    const double sv = s->val.data[0];
    for (int i = 0; i < a->size(); ++i) out->val.data[i] = a->val.data[i] * sv;
    out->backprop = [a, s, sv](Node& n) {
        if (a->needs_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i] * sv;
        if (s->needs_grad) {
            double acc = 0.0;
            for (size_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i] * a->val.data[i];
            s->grad[0] += acc;
        }
    };
    return out;
}

Var add_scalar_var(Var a, Var s) {
    require(s->size() == 1, "add_scalar_var: addend must be a single element");
    Tape* t = tape_of({a, s});
    Var out = t->make(a->shape(), {a, s});
    const double sv = s->val.data[0];
    for (int i = 0; i < a->size(); ++i) out->val.data[i] = a->val.data[i] + sv;
    out->backprop = [a, s](Node& n) {
        if (a->needs_grad)
            for (size_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
        if (s->needs_grad) {
            double acc = 0.0;
            for (size_t i = 0; i < n.grad.size(); ++i) acc += n.grad[i];
            s->grad[0] += acc;
        }
    };
    return out;
}

// ---- matmul family ---------------------------------------------------------

Var matmul(Var a, Var b) {
    const auto& as = a->shape();
    const auto& bs = b->shape();
    require(as.size() >= 2, "matmul: lhs rank must be >= 2, got " + shape_str(as));
    const int m = as[as.size() - 2];
    const int k = as[as.size() - 1];
    const bool shared_rhs = bs.size() == 2;
    if (shared_rhs) {
        require(bs[0] == k, "matmul: inner dims differ, " + shape_str(as) + " x " + shape_str(bs));
    } else {
        require(bs.size() == as.size() &&
                    std::equal(as.begin(), as.end() - 2, bs.begin()) && bs[bs.size() - 2] == k,
                "matmul: batch shapes differ, " + shape_str(as) + " x " + shape_str(bs));
    }
    const int n = bs[bs.size() - 1];
    int batch = 1;
    for (size_t i = 0; i + 2 < as.size(); ++i) batch *= as[i];

    std::vector<int> out_shape(as.begin(), as.end() - 1);
    out_shape.push_back(n);
    Tape* t = tape_of({a, b});
    Var out = t->make(std::move(out_shape), {a, b});

    const size_t a_step = static_cast<size_t>(m) * k;
    const size_t b_step = shared_rhs ? 0 : static_cast<size_t>(k) * n;
    const size_t c_step = static_cast<size_t>(m) * n;
    for (int bt = 0; bt < batch; ++bt)
        mm_nn(a->val.data.data() + bt * a_step, b->val.data.data() + bt * b_step,
              out->val.data.data() + bt * c_step, m, k, n);

    out->backprop = [a, b, m, k, n, batch, a_step, b_step, c_step](Node& nd) {
        for (int bt = 0; bt < batch; ++bt) {
            const double* g = nd.grad.data() + bt * c_step;
            if (a->needs_grad)
                mm_nt(g, b->val.data.data() + bt * b_step, a->grad.data() + bt * a_step, m, n, k);
            if (b->needs_grad)
                mm_tn(a->val.data.data() + bt * a_step, g, b->grad.data() + bt * b_step, m, k, n);
        }
    };
    return out;
}

Var transpose_last2(Var a) {
    const auto& as = a->shape();
    require(as.size() >= 2, "transpose_last2: rank must be >= 2");
    const int m = as[as.size() - 2];
    const int n = as[as.size() - 1];
    int batch = a->size() / (m * n);
    std::vector<int> out_shape(as);
    std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
    Var out = a->tape->make(std::move(out_shape), {a});
    for (int bt = 0; bt < batch; ++bt) {
        const double* src = a->val.data.data() + static_cast<size_t>(bt) * m * n;
        double* dst = out->val.data.data() + static_cast<size_t>(bt) * m * n;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) dst[static_cast<size_t>(j) * m + i] = src[static_cast<size_t>(i) * n + j];
    }
    out->backprop = [a, m, n, batch](Node& nd) {
        if (!a->needs_grad) return;
        for (int bt = 0; bt < batch; ++bt) {
            const double* g = nd.grad.data() + static_cast<size_t>(bt) * m * n;
            double* ag = a->grad.data() + static_cast<size_t>(bt) * m * n;
            for (int j = 0; j < n; ++j)
                for (int i = 0; i < m; ++i) ag[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
        }
    };
    return out;
}

namespace {

std::vector<size_t> row_major_strides(const std::vector<int>& shape) {
    std::vector<size_t> st(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        st[i] = st[i + 1] * static_cast<size_t>(shape[i + 1]);
    return st;
}

// Maps every output linear index to the corresponding input linear index for
// a given axis permutation of the input.
std::vector<size_t> permute_index_map(const std::vector<int>& in_shape, const std::vector<int>& perm) {
    const int r = static_cast<int>(in_shape.size());
    std::vector<int> out_shape(r);
    for (int i = 0; i < r; ++i) out_shape[i] = in_shape[perm[i]];
    auto in_st = row_major_strides(in_shape);
    const int total = numel(in_shape);
    std::vector<size_t> map(total);
    std::vector<int> coord(r, 0);
    for (int lin = 0; lin < total; ++lin) {
        size_t src = 0;
        for (int i = 0; i < r; ++i) src += static_cast<size_t>(coord[i]) * in_st[perm[i]];
        map[lin] = src;
        for (int i = r - 1; i >= 0; --i) {
            if (++coord[i] < out_shape[i]) break;
            coord[i] = 0;
        }
    }
    return map;
}

}  // namespace

Var permute(Var a, const std::vector<int>& perm) {
    const auto& as = a->shape();
    require(perm.size() == as.size(), "permute: perm rank mismatch");
    std::vector<bool> seen(as.size(), false);
    for (int p : perm) {
        require(p >= 0 && p < static_cast<int>(as.size()) && !seen[p], "permute: invalid permutation");
        seen[p] = true;
    }
    std::vector<int> out_shape(as.size());
    for (size_t i = 0; i < as.size(); ++i) out_shape[i] = as[perm[i]];
    auto map = permute_index_map(as, perm);
    Var out = a->tape->make(std::move(out_shape), {a});
    for (int i = 0; i < out->size(); ++i) out->val.data[i] = a->val.data[map[i]];
    out->backprop = [a, map = std::move(map)](Node& nd) {
        if (!a->needs_grad) return;
        for (size_t i = 0; i < nd.grad.size(); ++i) a->grad[map[i]] += nd.grad[i];
    };
    return out;
}

Var reshape(Var a, std::vector<int> shape) {
    require(numel(shape) == a->size(),
            "reshape: element count mismatch " + shape_str(a->shape()) + " -> " + shape_str(shape));
    Var out = a->tape->make(std::move(shape), {a});
    out->val.data = a->val.data;
    out->backprop = [a](Node& nd) {
        if (!a->needs_grad) return;
        for (size_t i = 0; i < nd.grad.size(); ++i) a->grad[i] += nd.grad[i];
    };
    return out;
}

Var concat(const std::vector<Var>& xs, int axis) {
    require(!xs.empty(), "concat: empty input list");
    const auto& s0 = xs[0]->shape();
    require(axis >= 0 && axis < static_cast<int>(s0.size()), "concat: bad axis");
    int axis_total = 0;
    for (Var x : xs) {
        const auto& s = x->shape();
        require(s.size() == s0.size(), "concat: rank mismatch");
        for (size_t i = 0; i < s.size(); ++i)
            require(static_cast<int>(i) == axis || s[i] == s0[i], "concat: shape mismatch off-axis");
        axis_total += s[axis];
    }
    std::vector<int> out_shape(s0);
    out_shape[axis] = axis_total;
    int outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s0[i];
    for (size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];

    Tape* t = xs[0]->tape;
    std::vector<Node*> parents(xs.begin(), xs.end());
    Var out = t->make(out_shape, parents);
    const size_t out_row = static_cast<size_t>(axis_total) * inner;
    size_t off = 0;
    std::vector<size_t> offsets;
    for (Var x : xs) {
        offsets.push_back(off);
        const size_t in_row = static_cast<size_t>(x->shape()[axis]) * inner;
        for (int o = 0; o < outer; ++o)
            std::copy_n(x->val.data.data() + o * in_row, in_row,
                        out->val.data.data() + o * out_row + off);
        off += in_row;
    }
    auto xs_copy = xs;
    out->backprop = [xs_copy, offsets, outer, out_row](Node& nd) {
        for (size_t xi = 0; xi < xs_copy.size(); ++xi) {
            Var x = xs_copy[xi];
            if (!x->needs_grad) continue;
            const size_t row = x->grad.size() / outer;
            for (int o = 0; o < outer; ++o) {
                const double* g = nd.grad.data() + o * out_row + offsets[xi];
                double* xg = x->grad.data() + o * row;
                for (size_t j = 0; j < row; ++j) xg[j] += g[j];
            }
        }
    };
    return out;
}

Var slice(Var a, int axis, int start, int len) {
    const auto& as = a->shape();
    require(axis >= 0 && axis < static_cast<int>(as.size()), "slice: bad axis");
    require(start >= 0 && len > 0 && start + len <= as[axis], "slice: range out of bounds");
    int outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= as[i];
    for (size_t i = axis + 1; i < as.size(); ++i) inner *= as[i];
    std::vector<int> out_shape(as);
    out_shape[axis] = len;
    Var out = a->tape->make(std::move(out_shape), {a});
    const size_t in_row = static_cast<size_t>(as[axis]) * inner;
    const size_t out_row = static_cast<size_t>(len) * inner;
    for (int o = 0; o < outer; ++o)
        std::copy_n(a->val.data.data() + o * in_row + static_cast<size_t>(start) * inner, out_row,
                    out->val.data.data() + o * out_row);
    out->backprop = [a, outer, inner, start, in_row, out_row](Node& nd) {
        if (!a->needs_grad) return;
        for (int o = 0; o < outer; ++o) {
            const double* g = nd.grad.data() + o * out_row;
            double* ag = a->grad.data() + o * in_row + static_cast<size_t>(start) * inner;
            for (size_t j = 0; j < out_row; ++j) ag[j] += g[j];
        }
    };
    return out;
}

Var select(Var a, int axis, int index) {
    Var s = slice(a, axis, index, 1);
    std::vector<int> out_shape;
    for (size_t i = 0; i < a->shape().size(); ++i)
        if (static_cast<int>(i) != axis) out_shape.push_back(a->shape()[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    return reshape(s, out_shape);
}

// ---- nonlinearities --------------------------------------------------------

Var softmax_last(Var a) {
    const auto& as = a->shape();
    require(!as.empty(), "softmax_last: scalar input");
    const int d = as.back();
    const int rows = a->size() / d;
    Var out = a->tape->make(as, {a});
    for (int r = 0; r < rows; ++r) {
        const double* x = a->val.data.data() + static_cast<size_t>(r) * d;
        double* y = out->val.data.data() + static_cast<size_t>(r) * d;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < d; ++j) mx = std::max(mx, x[j]);
        if (!(mx > -std::numeric_limits<double>::infinity()))
            throw NumericError("softmax_last: fully masked row");
        double sum = 0.0;
        for (int j = 0; j < d; ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        for (int j = 0; j < d; ++j) y[j] /= sum;
    }
    out->backprop = [a, d, rows](Node& nd) {
        if (!a->needs_grad) return;
        for (int r = 0; r < rows; ++r) {
            const double* w = nd.val.data.data() + static_cast<size_t>(r) * d;
            const double* g = nd.grad.data() + static_cast<size_t>(r) * d;
            double* ag = a->grad.data() + static_cast<size_t>(r) * d;
            double dot = 0.0;
            for (int j = 0; j < d; ++j) dot += g[j] * w[j];
            for (int j = 0; j < d; ++j) ag[j] += w[j] * (g[j] - dot);
        }
    };
    return out;
}

Var sigmoid(Var a) {
    Var out = a->tape->make(a->shape(), {a});
    for (int i = 0; i < a->size(); ++i) {
        const double x = a->val.data[i];
        out->val.data[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                                  : std::exp(x) / (1.0 + std::exp(x));
    }
    out->backprop = [a](Node& nd) {
        if (!a->needs_grad) return;
        for (size_t i = 0; i < nd.grad.size(); ++i) {
            const double s = nd.val.data[i];
            a->grad[i] += nd.grad[i] * s * (1.0 - s);
        }
    };
    return out;
}

Var tanh_op(Var a) {
    Var out = a->tape->make(a->shape(), {a});
    for (int i = 0; i < a->size(); ++i) out->val.data[i] = std::tanh(a->val.data[i]);
    out->backprop = [a](Node& nd) {
        if (!a->needs_grad) return;
        for (size_t i = 0; i < nd.grad.size(); ++i) {
            const double th = nd.val.data[i];
            a->grad[i] += nd.grad[i] * (1.0 - th * th);
        }
    };
    return out;
}

Var relu(Var a) {
    Var out = a->tape->make(a->shape(), {a});
    for (int i = 0; i < a->size(); ++i) out->val.data[i] = std::max(0.0, a->val.data[i]);
    out->backprop = [a](Node& nd) {
        if (!a->needs_grad) return;
        for (size_t i = 0; i < nd.grad.size(); ++i)
            if (a->val.data[i] > 0.0) a->grad[i] += nd.grad[i];
    };
    return out;
}

Var log_op(Var a) {
    Var out = a->tape->make(a->shape(), {a});
    for (int i = 0; i < a->size(); ++i) out->val.data[i] = std::log(a->val.data[i]);
    out->backprop = [a](Node& nd) {
        if (!a->needs_grad) return;
        for (size_t i = 0; i < nd.grad.size(); ++i) a->grad[i] += nd.grad[i] / a->val.data[i];
    };
    return out;
}

Var square(Var a) {
    Var out = a->tape->make(a->shape(), {a});
    for (int i = 0; i < a->size(); ++i) out->val.data[i] = a->val.data[i] * a->val.data[i];
    out->backprop = [a](Node& nd) {
        if (!a->needs_grad) return;
        for (size_t i = 0; i < nd.grad.size(); ++i) a->grad[i] += nd.grad[i] * 2.0 * a->val.data[i];
    };
    return out;
}

Var clamp(Var a, double lo, double hi) {
    Var out = a->tape->make(a->shape(), {a});
    for (int i = 0; i < a->size(); ++i) out->val.data[i] = std::min(hi, std::max(lo, a->val.data[i]));
    out->backprop = [a, lo, hi](Node& nd) {
        if (!a->needs_grad) return;
        for (size_t i = 0; i < nd.grad.size(); ++i) {
            const double x = a->val.data[i];
            if (x > lo && x < hi) a->grad[i] += nd.grad[i];
        }
    };
    return out;
}

Var layer_norm(Var a, Var gamma, Var beta, double eps) {
    const auto& as = a->shape();
    const int d = as.back();
    require(gamma->size() == d && beta->size() == d, "layer_norm: affine params must be [d]");
    const int rows = a->size() / d;
    Tape* t = tape_of({a, gamma, beta});
    Var out = t->make(as, {a, gamma, beta});

    auto xhat = std::make_shared<std::vector<double>>(a->size());
    auto inv = std::make_shared<std::vector<double>>(rows);
    for (int r = 0; r < rows; ++r) {
        const double* x = a->val.data.data() + static_cast<size_t>(r) * d;
        double* y = out->val.data.data() + static_cast<size_t>(r) * d;
        double mu = 0.0;
        for (int j = 0; j < d; ++j) mu += x[j];
        mu /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= d;
        const double iv = 1.0 / std::sqrt(var + eps);
        (*inv)[r] = iv;
        for (int j = 0; j < d; ++j) {
            const double xh = (x[j] - mu) * iv;
            (*xhat)[static_cast<size_t>(r) * d + j] = xh;
            y[j] = gamma->val.data[j] * xh + beta->val.data[j];
        }
    }
    out->backprop = [a, gamma, beta, d, rows, xhat, inv](Node& nd) {
        for (int r = 0; r < rows; ++r) {
            const double* g = nd.grad.data() + static_cast<size_t>(r) * d;
            const double* xh = xhat->data() + static_cast<size_t>(r) * d;
            if (gamma->needs_grad || beta->needs_grad) {
                for (int j = 0; j < d; ++j) {
                    if (gamma->needs_grad) gamma->grad[j] += g[j] * xh[j];
                    if (beta->needs_grad) beta->grad[j] += g[j];
                }
            }
            if (a->needs_grad) {
                double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double dxh = g[j] * gamma->val.data[j];
                    sum_dxh += dxh;
                    sum_dxh_xh += dxh * xh[j];
                }
                double* ag = a->grad.data() + static_cast<size_t>(r) * d;
                const double iv = (*inv)[r];
                for (int j = 0; j < d; ++j) {
                    const double dxh = g[j] * gamma->val.data[j];
                    ag[j] += iv * (dxh - sum_dxh / d - xh[j] * sum_dxh_xh / d);
                }
            }
        }
    };
    return out;
}

Var dropout(Var a, double p, Rng& rng, bool train) {
    if (!train || p <= 0.0) return a;
    require(p < 1.0, "dropout: rate must be < 1");
    const double keep = 1.0 - p;
    auto mask = std::make_shared<std::vector<double>>(a->size());
    Var out = a->tape->make(a->shape(), {a});
    for (int i = 0; i < a->size(); ++i) {
        const double m = rng.uniform() <= p ? 0.0 : 1.0 / keep;
        (*mask)[i] = m;
        out->val.data[i] = a->val.data[i] * m;
    }
    out->backprop = [a, mask](Node& nd) {
        if (!a->needs_grad) return;
        for (size_t i = 0; i < nd.grad.size(); ++i) a->grad[i] += nd.grad[i] * (*mask)[i];
    };
    return out;
}

// ---- reductions ------------------------------------------------------------

Var sum_all(Var a) {
    Var out = a->tape->make({1}, {a});
    double s = 0.0;
    for (double v : a->val.data) s += v;
    out->val.data[0] = s;
    out->backprop = [a](Node& nd) {
        if (!a->needs_grad) return;
        const double g = nd.grad[0];
        for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += g;
    };
    return out;
}

Var mean_all(Var a) { return mul_scalar(sum_all(a), 1.0 / a->size()); }

Var mean_axis(Var a, int axis) {
    const auto& as = a->shape();
    require(axis >= 0 && axis < static_cast<int>(as.size()), "mean_axis: bad axis");
    int outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= as[i];
    for (size_t i = axis + 1; i < as.size(); ++i) inner *= as[i];
    const int len = as[axis];
    std::vector<int> out_shape;
    for (size_t i = 0; i < as.size(); ++i)
        if (static_cast<int>(i) != axis) out_shape.push_back(as[i]);
    if (out_shape.empty()) out_shape.push_back(1);
    Var out = a->tape->make(std::move(out_shape), {a});
    for (int o = 0; o < outer; ++o)
        for (int l = 0; l < len; ++l) {
            const double* src = a->val.data.data() + (static_cast<size_t>(o) * len + l) * inner;
            double* dst = out->val.data.data() + static_cast<size_t>(o) * inner;
            for (int j = 0; j < inner; ++j) dst[j] += src[j] / len;
        }
    out->backprop = [a, outer, inner, len](Node& nd) {
        if (!a->needs_grad) return;
        for (int o = 0; o < outer; ++o)
            for (int l = 0; l < len; ++l) {
                double* ag = a->grad.data() + (static_cast<size_t>(o) * len + l) * inner;
                const double* g = nd.grad.data() + static_cast<size_t>(o) * inner;
                for (int j = 0; j < inner; ++j) ag[j] += g[j] / len;
            }
    };
    return out;
}

// ---- small structured ops --------------------------------------------------

Var outer_sum(Var u, Var v) {
    require(u->shape().size() == 1 && v->shape().size() == 1, "outer_sum: expects two vectors");
    const int n = u->size(), m = v->size();
    Tape* t = tape_of({u, v});
    Var out = t->make({n, m}, {u, v});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j)
            out->val.data[static_cast<size_t>(i) * m + j] = u->val.data[i] + v->val.data[j];
    out->backprop = [u, v, n, m](Node& nd) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) {
                const double g = nd.grad[static_cast<size_t>(i) * m + j];
                if (u->needs_grad) u->grad[i] += g;
                if (v->needs_grad) v->grad[j] += g;
            }
    };
    return out;
}

Var set_diag_one(Var a) {
    const auto& as = a->shape();
    require(as.size() == 2 && as[0] == as[1], "set_diag_one: expects a square matrix");
    const int n = as[0];
    Var out = a->tape->make(as, {a});
    out->val.data = a->val.data;
    for (int i = 0; i < n; ++i) out->val.data[static_cast<size_t>(i) * n + i] = 1.0;
    out->backprop = [a, n](Node& nd) {
        if (!a->needs_grad) return;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (i != j) a->grad[static_cast<size_t>(i) * n + j] += nd.grad[static_cast<size_t>(i) * n + j];
    };
    return out;
}

Var pearson(Var x, Var y) {
    require(x->shape().size() == 1 && y->shape().size() == 1 && x->size() == y->size(),
            "pearson: expects two equal-length vectors");
    const int n = x->size();
    require(n >= 2, "pearson: need at least 2 points");
    Tape* t = tape_of({x, y});

    double mx = 0.0, my = 0.0;
    for (int i = 0; i < n; ++i) { mx += x->val.data[i]; my += y->val.data[i]; }
    mx /= n; my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (int i = 0; i < n; ++i) {
        const double xc = x->val.data[i] - mx;
        const double yc = y->val.data[i] - my;
        sxx += xc * xc; syy += yc * yc; sxy += xc * yc;
    }
    if (sxx <= 0.0 || syy <= 0.0) throw NumericError("pearson: zero variance input");
    const double denom = std::sqrt(sxx * syy);
    Var out = t->make({1}, {x, y});
    out->val.data[0] = sxy / denom;

    out->backprop = [x, y, n, mx, my, sxx, syy, sxy, denom](Node& nd) {
        const double g = nd.grad[0];
        const double rho = sxy / denom;
        for (int i = 0; i < n; ++i) {
            const double xc = x->val.data[i] - mx;
            const double yc = y->val.data[i] - my;
            if (x->needs_grad) x->grad[i] += g * (yc / denom - rho * xc / sxx);
            if (y->needs_grad) y->grad[i] += g * (xc / denom - rho * yc / syy);
        }
    };
    return out;
}

}  // namespace nodecast::ad
