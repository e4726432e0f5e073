#include "nodecast/graph.hpp"

#include <cmath>

#include "nodecast/errors.hpp"

namespace nodecast {

MarketGraph init_edges(const std::vector<std::vector<double>>& train_returns,
                       const std::vector<std::string>& tickers, const std::vector<int>& sectors,
                       double alpha) {
    const int n = static_cast<int>(train_returns.size());
    if (n == 0) throw GraphError("init_edges: empty universe");
    if (tickers.size() != train_returns.size() || sectors.size() != train_returns.size())
        throw GraphError("init_edges: tickers/sectors do not match the return series");
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("init_edges: alpha must be in [0,1]");
    const size_t days = train_returns[0].size();
    for (const auto& r : train_returns)
        if (r.size() != days) throw GraphError("init_edges: return series lengths differ");

    MarketGraph g;
    g.n_nodes = n;
    g.tickers = tickers;
    g.sectors = sectors;
    g.alpha = alpha;
    g.edges.assign(static_cast<size_t>(n) * n, 0.0);

    for (int i = 0; i < n; ++i) {
        g.edges[i * n + i] = 1.0;
        for (int j = i + 1; j < n; ++j) {
            double sx = 0, sy = 0;
            int m = 0;
            for (size_t t = 0; t < days; ++t) {
                const double x = train_returns[i][t], y = train_returns[j][t];
                if (std::isnan(x) || std::isnan(y)) continue;
                sx += x;
                sy += y;
                ++m;
            }
            if (m < 30)
                throw GraphError("init_edges: '" + tickers[i] + "' and '" + tickers[j] +
                                 "' share only " + std::to_string(m) +
                                 " training days, need 30");
            const double mx = sx / m, my = sy / m;
            double sxy = 0, sxx = 0, syy = 0;
            for (size_t t = 0; t < days; ++t) {
                const double x = train_returns[i][t], y = train_returns[j][t];
                if (std::isnan(x) || std::isnan(y)) continue;
                sxy += (x - mx) * (y - my);
                sxx += (x - mx) * (x - mx);
                syy += (y - my) * (y - my);
            }
            const double rho = (sxx > 0 && syy > 0) ? sxy / std::sqrt(sxx * syy) : 0.0;
            const double e = alpha * (sectors[i] == sectors[j] ? 1.0 : 0.0) +
                             (1.0 - alpha) * std::max(0.0, rho);
            g.edges[i * n + j] = e;
            g.edges[j * n + i] = e;
        }
    }
    return g;
}

ad::Var refine_edges(ad::Tape& t, ad::Var h, ad::Var w_e, ad::Var b_e) {
    using namespace ad;
    (void)t;
    if (h->shape().size() != 2)
        throw ShapeError("refine_edges: node representations must be [N, d], got " +
                         shape_str(h->shape()));
    const int n = h->shape()[0];
    const int d = h->shape()[1];
    if (w_e->size() != 2 * d)
        throw ShapeError("refine_edges: w_e must have 2*d = " + std::to_string(2 * d) +
                         " entries, got " + std::to_string(w_e->size()));
    if (b_e->size() != 1) throw ShapeError("refine_edges: b_e must be a scalar");
    for (double v : h->val.data)
        if (!std::isfinite(v)) throw NumericError("refine_edges: non-finite node representation");

    // w_e . [h_i || h_j] splits into h_i . w1 + h_j . w2, which is an outer
    // sum of two projections.
    Var w1 = reshape(slice(w_e, 0, 0, d), {d, 1});
    Var w2 = reshape(slice(w_e, 0, d, d), {d, 1});
    Var u = reshape(matmul(h, w1), {n});
    Var v = reshape(matmul(h, w2), {n});
    Var raw = sigmoid(add_scalar_var(outer_sum(u, v), b_e));
    Var sym = mul_scalar(add(raw, transpose_last2(raw)), 0.5);
    return set_diag_one(sym);
}

}  // namespace nodecast
