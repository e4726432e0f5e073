#include "nodecast/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>

namespace nodecast {

double naive_forecast(const std::vector<double>& series, int h) {
    (void)h;
    if (series.empty()) throw DataError("naive_forecast: empty series");
    return series.back();
}

std::vector<double> difference(const std::vector<double>& series, int d) {
    if (d < 0) throw ConfigError("difference: d must be non-negative");
    if (series.size() <= static_cast<size_t>(d))
        throw DataError("difference: series too short for requested order");
    std::vector<double> w = series;
    for (int k = 0; k < d; ++k) {
        for (size_t t = 0; t + 1 < w.size(); ++t) w[t] = w[t + 1] - w[t];
        w.pop_back();
    }
    return w;
}

// One pass of the conditional residual recursion. Residuals with index < p
// stay at zero, so the recursion needs no guesses about the pre-sample past.
static std::vector<double> css_residuals(const std::vector<double>& w,
                                         const std::vector<double>& phi,
                                         const std::vector<double>& theta, double c) {
    const int n = static_cast<int>(w.size());
    const int p = static_cast<int>(phi.size());
    const int q = static_cast<int>(theta.size());
    std::vector<double> eps(n, 0.0);
    for (int t = p; t < n; ++t) {
        double e = w[t] - c;
        for (int i = 1; i <= p; ++i) e -= phi[i - 1] * w[t - i];
        for (int j = 1; j <= q; ++j)
            if (t - j >= p) e -= theta[j - 1] * eps[t - j];
        eps[t] = e;
    }
    return eps;
}

double arima_css_sse(const std::vector<double>& diffed, const std::vector<double>& phi,
                     const std::vector<double>& theta, double intercept) {
    const int p = static_cast<int>(phi.size());
    if (diffed.size() <= static_cast<size_t>(p))
        throw DataError("arima_css_sse: series shorter than the AR order");
    const auto eps = css_residuals(diffed, phi, theta, intercept);
    double sse = 0.0;
    for (size_t t = p; t < eps.size(); ++t) sse += eps[t] * eps[t];
    return sse;
}

bool ar_stationary(const std::vector<double>& phi) {
    const int p = static_cast<int>(phi.size());
    if (p == 0) return true;
    // psi_k are the moving-average weights of phi(B)^{-1}. Explosive roots
    // show up as geometric growth long before lag 256.
    std::vector<double> psi(257, 0.0);
    psi[0] = 1.0;
    for (int k = 1; k <= 256; ++k) {
        double v = 0.0;
        for (int i = 1; i <= std::min(k, p); ++i) v += phi[i - 1] * psi[k - i];
        if (!std::isfinite(v) || std::fabs(v) > 1e6) return false;
        psi[k] = v;
    }
    return true;
}

// Ordinary least squares of w_t on its own lags (plus an intercept column
// when asked). Normal equations solved by Gaussian elimination; the systems
// are at most 5x5. Returns {intercept, phi...}; zeros on a singular system.
static std::vector<double> ols_ar_warm_start(const std::vector<double>& w, int p,
                                             bool with_intercept) {
    const int n = static_cast<int>(w.size());
    const int m = p + (with_intercept ? 1 : 0);
    std::vector<double> out(p + 1, 0.0);
    if (m == 0 || n - p < m) return out;

    std::vector<std::vector<double>> a(m, std::vector<double>(m + 1, 0.0));
    for (int t = p; t < n; ++t) {
        std::vector<double> row(m);
        int col = 0;
        if (with_intercept) row[col++] = 1.0;
        for (int i = 1; i <= p; ++i) row[col++] = w[t - i];
        for (int r = 0; r < m; ++r) {
            for (int cc = 0; cc < m; ++cc) a[r][cc] += row[r] * row[cc];
            a[r][m] += row[r] * w[t];
        }
    }
    for (int col = 0; col < m; ++col) {
        int piv = col;
        for (int r = col + 1; r < m; ++r)
            if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
        if (std::fabs(a[piv][col]) < 1e-12) return std::vector<double>(p + 1, 0.0);
        std::swap(a[col], a[piv]);
        for (int r = 0; r < m; ++r) {
            if (r == col) continue;
            const double f = a[r][col] / a[col][col];
            for (int cc = col; cc <= m; ++cc) a[r][cc] -= f * a[col][cc];
        }
    }
    int col = 0;
    if (with_intercept) out[0] = a[col][m] / a[col][col], ++col;
    for (int i = 1; i <= p; ++i, ++col) out[i] = a[col][m] / a[col][col];
    return out;
}

// Plain Nelder-Mead. The surfaces here are low-dimensional and smooth, so
// the textbook reflect/expand/contract/shrink loop is enough.
static bool nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                        std::vector<double>& x, int max_iter) {
    const int dim = static_cast<int>(x.size());
    std::vector<std::vector<double>> pts(dim + 1, x);
    std::vector<double> fv(dim + 1);
    for (int i = 0; i < dim; ++i) pts[i + 1][i] += 0.1;
    for (int i = 0; i <= dim; ++i) fv[i] = f(pts[i]);

    std::vector<int> ord(dim + 1);
    for (int it = 0; it < max_iter; ++it) {
        std::iota(ord.begin(), ord.end(), 0);
        std::sort(ord.begin(), ord.end(), [&](int a, int b) { return fv[a] < fv[b]; });
        const int best = ord[0], worst = ord[dim], second = ord[dim - 1];
        if (fv[worst] - fv[best] <= 1e-10 * (std::fabs(fv[best]) + 1e-10)) {
            x = pts[best];
            return true;
        }
        std::vector<double> cen(dim, 0.0);
        for (int i = 0; i <= dim; ++i)
            if (i != worst)
                for (int k = 0; k < dim; ++k) cen[k] += pts[i][k] / dim;

        auto blend = [&](double t) {
            std::vector<double> pnt(dim);
            for (int k = 0; k < dim; ++k) pnt[k] = cen[k] + t * (cen[k] - pts[worst][k]);
            return pnt;
        };
        std::vector<double> refl = blend(1.0);
        const double fr = f(refl);
        if (fr < fv[best]) {
            std::vector<double> exp_pt = blend(2.0);
            const double fe = f(exp_pt);
            if (fe < fr) { pts[worst] = exp_pt; fv[worst] = fe; }
            else { pts[worst] = refl; fv[worst] = fr; }
        } else if (fr < fv[second]) {
            pts[worst] = refl;
            fv[worst] = fr;
        } else {
            std::vector<double> con = blend(fr < fv[worst] ? 0.5 : -0.5);
            const double fc = f(con);
            if (fc < std::min(fr, fv[worst])) { pts[worst] = con; fv[worst] = fc; }
            else {
                for (int i = 0; i <= dim; ++i) {
                    if (i == best) continue;
                    for (int k = 0; k < dim; ++k)
                        pts[i][k] = pts[best][k] + 0.5 * (pts[i][k] - pts[best][k]);
                    fv[i] = f(pts[i]);
                }
            }
        }
    }
    const auto best_it = std::min_element(fv.begin(), fv.end());
    x = pts[best_it - fv.begin()];
    return false;
}

ArimaModel fit_arima_order(const std::vector<double>& series, int p, int d, int q) {
    if (p < 0 || q < 0) throw ConfigError("fit_arima_order: negative order");
    if (d < 0 || d > 2) throw ConfigError("fit_arima_order: d must be 0, 1 or 2");

    ArimaModel m;
    m.p = p;
    m.d = d;
    m.q = q;
    const std::vector<double> w = difference(series, d);
    const int n_eff = static_cast<int>(w.size()) - p;
    const bool with_c = (d == 0);
    if (n_eff < p + q + (with_c ? 1 : 0) + 2) {
        m.status = "too few observations for this order";
        return m;
    }

    m.phi.assign(p, 0.0);
    m.theta.assign(q, 0.0);
    const int dim = (with_c ? 1 : 0) + p + q;
    bool simplex_ok = true;

    if (dim > 0) {
        auto unpack = [&](const std::vector<double>& x) {
            int k = 0;
            m.intercept = with_c ? x[k++] : 0.0;
            for (int i = 0; i < p; ++i) m.phi[i] = x[k++];
            for (int j = 0; j < q; ++j) m.theta[j] = x[k++];
        };
        auto objective = [&](const std::vector<double>& x) {
            int k = 0;
            const double c = with_c ? x[k++] : 0.0;
            std::vector<double> phi(x.begin() + k, x.begin() + k + p);
            std::vector<double> theta(x.begin() + k + p, x.begin() + k + p + q);
            const double sse = arima_css_sse(w, phi, theta, c);
            return std::isfinite(sse) ? sse : 1e300;
        };

        const auto warm = ols_ar_warm_start(w, p, with_c);
        std::vector<double> x0;
        if (with_c) x0.push_back(warm[0]);
        for (int i = 1; i <= p; ++i) x0.push_back(warm[i]);
        x0.resize(dim, 0.0);

        simplex_ok = nelder_mead(objective, x0, 400 + 200 * dim);
        unpack(x0);
    }

    double sse = arima_css_sse(w, m.phi, m.theta, m.intercept);
    sse = std::max(sse, 1e-300);
    m.sigma2 = sse / n_eff;
    m.aic = n_eff * std::log(m.sigma2) + 2.0 * (p + q + 1);

    if (!simplex_ok) {
        m.status = "simplex did not converge";
    } else if (!ar_stationary(m.phi)) {
        m.status = "explosive AR polynomial";
    } else {
        m.converged = true;
        m.status = "ok";
    }
    return m;
}

ArimaModel fit_arima(const std::vector<double>& series, int max_p, int max_q, int max_d) {
    if (max_p < 0 || max_q < 0) throw ConfigError("fit_arima: negative order bound");
    if (max_d < 0 || max_d > 2) throw ConfigError("fit_arima: max_d must be 0, 1 or 2");
    const size_t need = 10u * static_cast<size_t>(max_p + max_q + 1);
    if (series.size() < need)
        throw DataError("fit_arima: series shorter than ten observations per parameter");

    ArimaModel best;
    for (int d = 0; d <= max_d; ++d)
        for (int p = 0; p <= max_p; ++p)
            for (int q = 0; q <= max_q; ++q) {
                ArimaModel cand = fit_arima_order(series, p, d, q);
                if (cand.converged && cand.aic < best.aic) best = cand;
            }
    if (!best.converged) throw BaselineError("fit_arima: no candidate converged");
    return best;
}

std::vector<double> forecast_arima(const ArimaModel& m, const std::vector<double>& series,
                                   int h) {
    if (h <= 0) throw ConfigError("forecast_arima: horizon must be positive");
    if (m.phi.size() != static_cast<size_t>(m.p) || m.theta.size() != static_cast<size_t>(m.q))
        throw ConfigError("forecast_arima: coefficient counts disagree with the orders");
    if (series.size() <= static_cast<size_t>(m.d) ||
        series.size() < static_cast<size_t>(m.d + m.p))
        throw DataError("forecast_arima: history shorter than the model memory");

    std::vector<double> w = difference(series, m.d);
    std::vector<double> eps = css_residuals(w, m.phi, m.theta, m.intercept);
    const int n = static_cast<int>(w.size());

    // Tail levels of every differencing stage, innermost last. Each forecast
    // of the fully differenced series is integrated back up through them.
    std::vector<double> tails;
    {
        std::vector<double> cur = series;
        for (int k = 0; k < m.d; ++k) {
            tails.push_back(cur.back());
            cur = difference(cur, 1);
        }
    }

    std::vector<double> out;
    out.reserve(h);
    const double c = (m.d == 0) ? m.intercept : 0.0;
    for (int j = 1; j <= h; ++j) {
        const int t = n + j - 1;
        double v = c;
        for (int i = 1; i <= m.p; ++i) v += m.phi[i - 1] * w[t - i];
        for (int k = 1; k <= m.q; ++k) {
            const int idx = t - k;
            if (idx < n) v += m.theta[k - 1] * eps[idx];
        }
        w.push_back(v);
        double level = v;
        for (int k = m.d - 1; k >= 0; --k) {
            level += tails[k];
            tails[k] = level;
        }
        out.push_back(level);
    }
    return out;
}

}  // namespace nodecast
