#include "nodecast/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <set>

#include "nodecast/marketdata.hpp"
#include "nodecast/rng.hpp"

namespace nodecast {

PredictionSet PredictionSet::filter(const std::string& model, int horizon) const {
    PredictionSet out;
    for (const auto& r : rows)
        if (r.model == model && r.horizon == horizon) out.rows.push_back(r);
    return out;
}

std::vector<std::string> PredictionSet::models() const {
    std::set<std::string> seen;
    for (const auto& r : rows) seen.insert(r.model);
    return {seen.begin(), seen.end()};
}

std::vector<int> PredictionSet::horizons() const {
    std::set<int> seen;
    for (const auto& r : rows) seen.insert(r.horizon);
    return {seen.begin(), seen.end()};
}

PointMetrics point_metrics(const PredictionSet& preds) {
    if (preds.rows.empty()) throw MetricError("point_metrics: no records");
    PointMetrics m;
    double ape = 0.0, sq = 0.0, hits = 0.0, rmae = 0.0;
    for (const auto& r : preds.rows) {
        if (r.y_true == 0.0) throw MetricError("point_metrics: zero actual price");
        if (r.y_prior == 0.0) throw MetricError("point_metrics: zero prior price");
        ape += std::fabs(r.y_pred - r.y_true) / std::fabs(r.y_true);
        sq += (r.y_pred - r.y_true) * (r.y_pred - r.y_true);
        hits += (price_up(r.y_pred, r.y_prior) == price_up(r.y_true, r.y_prior)) ? 1.0 : 0.0;
        rmae += std::fabs(r.y_pred - r.y_true) / std::fabs(r.y_prior);
    }
    m.n = static_cast<int>(preds.rows.size());
    m.mape = 100.0 * ape / m.n;
    m.rmse = std::sqrt(sq / m.n);
    m.da = hits / m.n;
    m.return_mae = rmae / m.n;
    return m;
}

double theils_u(const PredictionSet& preds) {
    if (preds.rows.empty()) throw MetricError("theils_u: no records");
    double num = 0.0, den = 0.0;
    for (const auto& r : preds.rows) {
        num += (r.y_pred - r.y_true) * (r.y_pred - r.y_true);
        den += (r.y_prior - r.y_true) * (r.y_prior - r.y_true);
    }
    if (den == 0.0) throw MetricError("theils_u: actual series never moved");
    return std::sqrt(num / den);
}

// Average ranks: ties share the mean of the positions they straddle.
static std::vector<double> average_ranks(const std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return x[a] < x[b]; });
    std::vector<double> rank(n);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double shared = 0.5 * (i + j) + 1.0;
        for (int k = i; k <= j; ++k) rank[idx[k]] = shared;
        i = j + 1;
    }
    return rank;
}

// Pearson on two equally long vectors; ok=false when either side is constant.
static double plain_pearson(const std::vector<double>& a, const std::vector<double>& b,
                            bool& ok) {
    const int n = static_cast<int>(a.size());
    double ma = 0.0, mb = 0.0;
    for (int i = 0; i < n; ++i) ma += a[i], mb += b[i];
    ma /= n;
    mb /= n;
    double cab = 0.0, va = 0.0, vb = 0.0;
    for (int i = 0; i < n; ++i) {
        cab += (a[i] - ma) * (b[i] - mb);
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
    }
    ok = va > 0.0 && vb > 0.0;
    return ok ? cab / std::sqrt(va * vb) : 0.0;
}

IcReport information_coefficient(const PredictionSet& preds) {
    if (preds.rows.empty()) throw MetricError("information_coefficient: no records");
    std::map<int64_t, std::vector<const PredictionRecord*>> by_day;
    std::set<std::pair<int64_t, std::string>> seen;
    for (const auto& r : preds.rows) {
        if (!seen.insert({r.date, r.ticker}).second)
            throw MetricError("information_coefficient: duplicate (date, ticker) record; "
                              "filter to one model and horizon first");
        by_day[r.date].push_back(&r);
    }

    IcReport rep;
    for (const auto& [date, day] : by_day) {
        (void)date;
        if (day.size() < 3) {
            ++rep.days_skipped;
            continue;
        }
        std::vector<double> pred, real;
        pred.reserve(day.size());
        real.reserve(day.size());
        for (const auto* r : day) {
            if (r->y_prior == 0.0) throw MetricError("information_coefficient: zero prior");
            pred.push_back((r->y_pred - r->y_prior) / r->y_prior);
            real.push_back((r->y_true - r->y_prior) / r->y_prior);
        }
        bool ok = false;
        const double rho = plain_pearson(average_ranks(pred), average_ranks(real), ok);
        if (!ok) {
            ++rep.days_skipped;
            continue;
        }
        rep.per_day.push_back(rho);
        ++rep.days_used;
    }
    if (rep.days_used > 0)
        rep.mean_ic =
            std::accumulate(rep.per_day.begin(), rep.per_day.end(), 0.0) / rep.days_used;
    return rep;
}

// Regularized incomplete beta via the Lentz continued fraction; feeds the
// t-distribution's two-sided tail probability.
static double betacf(double a, double b, double x) {
    const double tiny = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return h;
}

static double betai(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

SignificanceReport significance_tests(const std::vector<double>& err_a,
                                      const std::vector<double>& err_b, int h) {
    if (h < 1) throw ConfigError("significance_tests: horizon must be at least 1");
    if (err_a.size() != err_b.size())
        throw MetricError("significance_tests: error series lengths differ");
    const int n = static_cast<int>(err_a.size());
    if (n < 30) throw MetricError("significance_tests: need at least 30 paired days");

    std::vector<double> d(n);
    for (int i = 0; i < n; ++i) d[i] = err_a[i] - err_b[i];
    const double dbar = std::accumulate(d.begin(), d.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : d) ss += (v - dbar) * (v - dbar);

    SignificanceReport rep;
    rep.n = n;
    if (ss == 0.0) {
        rep.degenerate = true;
        return rep;
    }

    const double sd = std::sqrt(ss / (n - 1));
    rep.t_stat = dbar / (sd / std::sqrt(static_cast<double>(n)));
    rep.cohens_d = dbar / sd;
    const double df = n - 1;
    rep.t_p = betai(0.5 * df, 0.5, df / (df + rep.t_stat * rep.t_stat));

    // Newey-West long-run variance with Bartlett weights, truncation h-1.
    const int L = h - 1;
    double lrv = ss / n;
    for (int k = 1; k <= L && k < n; ++k) {
        double gk = 0.0;
        for (int t = k; t < n; ++t) gk += (d[t] - dbar) * (d[t - k] - dbar);
        gk /= n;
        lrv += 2.0 * (1.0 - static_cast<double>(k) / (L + 1)) * gk;
    }
    if (lrv <= 0.0) {
        rep.degenerate = true;
        return rep;
    }
    rep.dm_stat = dbar / std::sqrt(lrv / n);
    rep.dm_p = std::erfc(std::fabs(rep.dm_stat) / std::sqrt(2.0));
    return rep;
}

std::map<int64_t, double> daily_mae_by_date(const PredictionSet& preds) {
    std::map<int64_t, std::pair<double, int>> acc;
    for (const auto& r : preds.rows) {
        auto& [sum, cnt] = acc[r.date];
        sum += std::fabs(r.y_pred - r.y_true);
        ++cnt;
    }
    std::map<int64_t, double> out;
    for (const auto& [date, sc] : acc) out[date] = sc.first / sc.second;
    return out;
}

SignificanceReport significance_vs(const PredictionSet& a, const PredictionSet& b, int h) {
    const auto ma = daily_mae_by_date(a);
    const auto mb = daily_mae_by_date(b);
    if (ma.size() != mb.size())
        throw MetricError("significance_vs: prediction sets cover different dates");
    std::vector<double> ea, eb;
    ea.reserve(ma.size());
    for (const auto& [date, v] : ma) {
        const auto it = mb.find(date);
        if (it == mb.end())
            throw MetricError("significance_vs: prediction sets cover different dates");
        ea.push_back(v);
        eb.push_back(it->second);
    }
    return significance_tests(ea, eb, h);
}

double percentile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw MetricError("percentile_sorted: empty sample");
    if (q < 0.0 || q > 1.0) throw ConfigError("percentile_sorted: q outside [0,1]");
    const double pos = q * (sorted.size() - 1);
    const size_t i = static_cast<size_t>(pos);
    if (i + 1 >= sorted.size()) return sorted.back();
    const double frac = pos - i;
    return sorted[i] + frac * (sorted[i + 1] - sorted[i]);
}

BootstrapCi bootstrap_da_ci(const PredictionSet& preds, int n_boot, double level,
                            uint64_t seed) {
    if (n_boot < 1000) throw ConfigError("bootstrap_da_ci: need at least 1000 resamples");
    if (level <= 0.0 || level >= 1.0) throw ConfigError("bootstrap_da_ci: bad level");
    if (preds.rows.empty()) throw MetricError("bootstrap_da_ci: no records");

    // Per-day hit and record counts; the map keeps days in date order so the
    // resampling is deterministic under the seed.
    std::map<int64_t, std::pair<int, int>> days;
    for (const auto& r : preds.rows) {
        auto& [hit, cnt] = days[r.date];
        hit += (price_up(r.y_pred, r.y_prior) == price_up(r.y_true, r.y_prior)) ? 1 : 0;
        ++cnt;
    }
    std::vector<std::pair<int, int>> flat(days.size());
    std::transform(days.begin(), days.end(), flat.begin(),
                   [](const auto& kv) { return kv.second; });

    int hit_all = 0, cnt_all = 0;
    for (const auto& [hit, cnt] : flat) hit_all += hit, cnt_all += cnt;

    Rng rng(seed, "bootstrap-da");
    const int nd = static_cast<int>(flat.size());
    std::vector<double> boots(n_boot);
    for (int b = 0; b < n_boot; ++b) {
        Rng draw = rng.fork("resample", b);
        int hit = 0, cnt = 0;
        for (int k = 0; k < nd; ++k) {
            const auto& [dh, dc] = flat[draw.next_u64() % nd];
            hit += dh;
            cnt += dc;
        }
        boots[b] = static_cast<double>(hit) / cnt;
    }
    std::sort(boots.begin(), boots.end());

    BootstrapCi ci;
    ci.point = static_cast<double>(hit_all) / cnt_all;
    ci.lo = percentile_sorted(boots, 0.5 * (1.0 - level));
    ci.hi = percentile_sorted(boots, 1.0 - 0.5 * (1.0 - level));
    return ci;
}

std::map<int64_t, double> volatility_proxy(const FeatureDataset& ds, int window) {
    if (window < 2) throw ConfigError("volatility_proxy: window must be at least 2");
    const int N = ds.n_stocks();
    std::map<int64_t, double> out;
    for (int c = window; c < ds.calendar_days(); ++c) {
        double mean_vol = 0.0;
        for (int i = 0; i < N; ++i) {
            double mu = 0.0;
            std::vector<double> rets(window);
            for (int k = 0; k < window; ++k) {
                const int d = c - window + 1 + k;
                const double prev = ds.close_at(d - 1, i);
                if (prev == 0.0) throw DataError("volatility_proxy: zero close");
                rets[k] = ds.close_at(d, i) / prev - 1.0;
                mu += rets[k];
            }
            mu /= window;
            double var = 0.0;
            for (double r : rets) var += (r - mu) * (r - mu);
            mean_vol += std::sqrt(var / window);
        }
        out[ds.calendar[c]] = (mean_vol / N) * std::sqrt(252.0);
    }
    return out;
}

std::pair<double, double> regime_thresholds(const FeatureDataset& ds,
                                            const std::map<int64_t, double>& proxy) {
    std::vector<double> vals;
    for (int c = 0; c < ds.calendar_days(); ++c) {
        if (ds.split.region_of(c) != 1) continue;
        const auto it = proxy.find(ds.calendar[c]);
        if (it != proxy.end()) vals.push_back(it->second);
    }
    if (vals.empty()) throw MetricError("regime_thresholds: proxy covers no validation day");
    std::sort(vals.begin(), vals.end());
    return {percentile_sorted(vals, 0.33), percentile_sorted(vals, 0.67)};
}

RegimeReport regime_report(const PredictionSet& preds,
                           const std::map<int64_t, double>& vol_proxy, double lo_thr,
                           double hi_thr) {
    if (lo_thr > hi_thr) throw ConfigError("regime_report: thresholds out of order");
    RegimeReport rep;
    rep.lo_threshold = lo_thr;
    rep.hi_threshold = hi_thr;
    rep.low.name = "low";
    rep.medium.name = "medium";
    rep.high.name = "high";

    PredictionSet split[3];
    std::set<int64_t> days[3];
    for (const auto& r : preds.rows) {
        const auto it = vol_proxy.find(r.date);
        if (it == vol_proxy.end())
            throw DataError("regime_report: no proxy value for a prediction date");
        const int b = it->second < lo_thr ? 0 : (it->second < hi_thr ? 1 : 2);
        split[b].rows.push_back(r);
        days[b].insert(r.date);
    }
    RegimeBucket* buckets[3] = {&rep.low, &rep.medium, &rep.high};
    for (int b = 0; b < 3; ++b) {
        buckets[b]->n_records = static_cast<int>(split[b].rows.size());
        buckets[b]->n_days = static_cast<int>(days[b].size());
        buckets[b]->empty = split[b].rows.empty();
        if (!buckets[b]->empty) {
            const PointMetrics pm = point_metrics(split[b]);
            buckets[b]->mape = pm.mape;
            buckets[b]->da = pm.da;
        }
    }
    return rep;
}

PredictionSet predict_model(const Nodeformer& model, const FeatureDataset& ds,
                            const SentimentPanel& sent, const ad::Array& edges, int region,
                            const std::vector<std::string>& tickers,
                            const std::string& name) {
    const ModelConfig& mc = model.config();
    const int N = ds.n_stocks();
    if (static_cast<int>(tickers.size()) != N)
        throw DataError("predict_model: ticker list does not match the dataset");
    const auto ends = make_training_windows(ds, region, mc.seq_len, mc.horizons);

    PredictionSet out;
    out.rows.reserve(ends.size() * N * mc.horizons.size());
    for (int end : ends) {
        ad::Tape tape;
        const ModelInputs in =
            make_window_inputs(ds, sent, edges, end, mc.seq_len, mc.d_in);
        const ModelOutputs outs = model.forward(tape, in, false);
        for (size_t hi = 0; hi < mc.horizons.size(); ++hi) {
            const int h = mc.horizons[hi];
            for (int i = 0; i < N; ++i) {
                PredictionRecord r;
                r.model = name;
                r.ticker = tickers[i];
                r.date = ds.calendar[end + ds.warmup + h];
                r.horizon = h;
                const double z = outs.y_hat->val.data[i * mc.horizons.size() + hi];
                r.y_pred = ds.denormalize_close(end + h, i, z);
                r.y_true = ds.close_at(end + ds.warmup + h, i);
                r.y_prior = ds.close_at(end + ds.warmup, i);
                r.p_up = outs.p_up->val.data[i * mc.horizons.size() + hi];
                out.rows.push_back(std::move(r));
            }
        }
    }
    return out;
}

PredictionSet predict_naive(const FeatureDataset& ds, int region,
                            const std::vector<std::string>& tickers, int T,
                            const std::vector<int>& horizons) {
    const int N = ds.n_stocks();
    if (static_cast<int>(tickers.size()) != N)
        throw DataError("predict_naive: ticker list does not match the dataset");
    const auto ends = make_training_windows(ds, region, T, horizons);

    PredictionSet out;
    for (int end : ends)
        for (int h : horizons)
            for (int i = 0; i < N; ++i) {
                PredictionRecord r;
                r.model = "naive";
                r.ticker = tickers[i];
                r.date = ds.calendar[end + ds.warmup + h];
                r.horizon = h;
                r.y_prior = ds.close_at(end + ds.warmup, i);
                r.y_pred = r.y_prior;
                r.y_true = ds.close_at(end + ds.warmup + h, i);
                out.rows.push_back(std::move(r));
            }
    return out;
}

PredictionSet predict_arima(const FeatureDataset& ds, int region,
                            const std::vector<std::string>& tickers, int T,
                            const std::vector<int>& horizons, int max_p, int max_q,
                            int max_d) {
    const int N = ds.n_stocks();
    if (static_cast<int>(tickers.size()) != N)
        throw DataError("predict_arima: ticker list does not match the dataset");
    const auto ends = make_training_windows(ds, region, T, horizons);
    const int h_max = *std::max_element(horizons.begin(), horizons.end());

    // One model per stock, fitted on the training closes only. Forecasts
    // condition on everything observed up to each origin.
    std::vector<ArimaModel> fits(N);
    for (int i = 0; i < N; ++i) {
        std::vector<double> train(ds.split.n_train);
        for (int c = 0; c < ds.split.n_train; ++c) train[c] = ds.close_at(c, i);
        fits[i] = fit_arima(train, max_p, max_q, max_d);
    }

    PredictionSet out;
    for (int end : ends) {
        const int origin = end + ds.warmup;
        for (int i = 0; i < N; ++i) {
            std::vector<double> hist(origin + 1);
            for (int c = 0; c <= origin; ++c) hist[c] = ds.close_at(c, i);
            const auto path = forecast_arima(fits[i], hist, h_max);
            for (int h : horizons) {
                PredictionRecord r;
                r.model = "arima";
                r.ticker = tickers[i];
                r.date = ds.calendar[origin + h];
                r.horizon = h;
                r.y_prior = hist.back();
                r.y_pred = path[h - 1];
                r.y_true = ds.close_at(origin + h, i);
                out.rows.push_back(std::move(r));
            }
        }
    }
    return out;
}

std::vector<AblationVariant> standard_ablations(const ModelConfig& full) {
    std::vector<AblationVariant> v;
    v.push_back({"full", full});

    ModelConfig c = full;
    c.use_sentiment = false;
    v.push_back({"without_sentiment", c});

    c = full;
    c.use_graph = false;
    v.push_back({"without_graph", c});

    c = full;
    c.use_te = false;
    v.push_back({"without_temporal_encoding", c});

    c = full;
    c.use_gating = false;
    v.push_back({"without_gating", c});

    c = full;
    c.price_only = true;
    c.d_in = 6;
    v.push_back({"price_only", c});
    return v;
}

std::vector<AblationRow> ablation_suite(const std::vector<AblationVariant>& variants,
                                        const FeatureDataset& ds, const SentimentPanel& sent,
                                        const ad::Array& edges,
                                        const std::vector<std::string>& tickers,
                                        const TrainConfig& tc, int eval_region) {
    if (variants.empty()) throw ConfigError("ablation_suite: no variants");
    std::vector<AblationRow> rows;
    for (const auto& variant : variants) {
        AblationRow row;
        row.name = variant.name;
        try {
            ModelConfig mc = variant.config;
            if (sent.empty()) mc.use_sentiment = false;
            mc.validate();

            ad::ParamStore store;
            Nodeformer model(mc, store, tc.seed);
            run_training_stages(model, ds, sent, edges, tc);

            const PredictionSet preds =
                predict_model(model, ds, sent, edges, eval_region, tickers, variant.name);
            const PredictionSet first = preds.filter(variant.name, mc.horizons.front());
            row.metrics = point_metrics(first);
            row.theil_u = theils_u(first);
        } catch (const Error& e) {
            row.failed = true;
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }

    // Deltas are against the row named "full" when it survived, otherwise
    // against the first surviving row.
    const AblationRow* base = nullptr;
    for (const auto& r : rows)
        if (!r.failed && (r.name == "full" || base == nullptr)) {
            base = &r;
            if (r.name == "full") break;
        }
    if (base != nullptr)
        for (auto& r : rows) r.delta_mape = r.failed ? 0.0 : r.metrics.mape - base->metrics.mape;
    return rows;
}

EvaluationReport build_report(const PredictionSet& all, const std::string& model,
                              const std::map<int64_t, double>& proxy, double lo_thr,
                              double hi_thr, int n_boot, double level, uint64_t seed) {
    EvaluationReport rep;
    rep.model = model;
    bool first = true;
    for (int h : all.horizons()) {
        const PredictionSet slice = all.filter(model, h);
        if (slice.rows.empty()) continue;
        HorizonReport hr;
        hr.horizon = h;
        hr.point = point_metrics(slice);
        hr.theil_u = theils_u(slice);
        hr.ic = information_coefficient(slice);
        hr.da_ci = bootstrap_da_ci(slice, n_boot, level, seed);
        rep.horizons.push_back(std::move(hr));
        if (first) {
            rep.regimes = regime_report(slice, proxy, lo_thr, hi_thr);
            first = false;
        }
    }
    if (rep.horizons.empty())
        throw MetricError("build_report: no records for model " + model);
    return rep;
}

}  // namespace nodecast
