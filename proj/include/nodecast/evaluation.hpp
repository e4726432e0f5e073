#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nodecast/baselines.hpp"
#include "nodecast/errors.hpp"
#include "nodecast/model.hpp"
#include "nodecast/training.hpp"

namespace nodecast {

// One forecast: what some model said price would be at `date`, what it turned
// out to be, and the price at the forecast origin. Metrics, significance
// tests, regime buckets and the backtest all consume these records.

struct PredictionRecord {
    std::string model;
    std::string ticker;
    int64_t date = 0;    // trading-day serial of the target
    int horizon = 1;
    double y_pred = 0.0;
    double y_true = 0.0;
    double y_prior = 0.0;  // close at the forecast origin
    double p_up = 0.5;     // direction probability; 0.5 when the model has none
};

struct PredictionSet {
    std::vector<PredictionRecord> rows;

    PredictionSet filter(const std::string& model, int horizon) const;
    std::vector<std::string> models() const;
    std::vector<int> horizons() const;
};

struct PointMetrics {
    double mape = 0.0;        // percent
    double rmse = 0.0;
    double da = 0.0;          // direction accuracy in [0,1]
    double return_mae = 0.0;  // mean |predicted - realized| one-period return
    int n = 0;
};

// MAPE, RMSE, direction accuracy and return MAE over one model+horizon slice.
// Direction accuracy uses the shared strict predicate: a flat move is "down".
PointMetrics point_metrics(const PredictionSet& preds);

// RMSE of the model divided by RMSE of persistence on the same records.
double theils_u(const PredictionSet& preds);

struct IcReport {
    std::vector<double> per_day;
    double mean_ic = 0.0;
    int days_used = 0;
    int days_skipped = 0;  // degenerate or under-populated days
};

// Per-day Spearman rank correlation (average ranks on ties) between predicted
// and realized one-period returns across stocks, averaged over days. Days
// with fewer than three stocks or a constant vector are skipped and counted.
IcReport information_coefficient(const PredictionSet& preds);

struct SignificanceReport {
    double t_stat = 0.0;
    double t_p = 1.0;
    double cohens_d = 0.0;
    double dm_stat = 0.0;
    double dm_p = 1.0;
    int n = 0;
    bool degenerate = false;  // zero-variance differential; statistics unusable
};

// Paired t-test, Cohen's d and Diebold-Mariano on two aligned daily error
// series. DM uses a Bartlett-kernel Newey-West long-run variance with lag
// h-1 and a two-sided normal p; the paired t uses the t-distribution with
// n-1 degrees of freedom. Negative statistics mean series A had the smaller
// errors.
SignificanceReport significance_tests(const std::vector<double>& err_a,
                                      const std::vector<double>& err_b, int h);

// Mean absolute error per target date, ascending by date.
std::map<int64_t, double> daily_mae_by_date(const PredictionSet& preds);

// Convenience wrapper: builds the two daily MAE series and requires their
// dates to line up exactly.
SignificanceReport significance_vs(const PredictionSet& a, const PredictionSet& b, int h);

struct BootstrapCi {
    double lo = 0.0;
    double hi = 0.0;
    double point = 0.0;
};

// Percentile confidence interval for direction accuracy from resampling whole
// days with replacement. Seeded and deterministic.
BootstrapCi bootstrap_da_ci(const PredictionSet& preds, int n_boot, double level,
                            uint64_t seed);

struct RegimeBucket {
    std::string name;
    int n_records = 0;
    int n_days = 0;
    double mape = 0.0;
    double da = 0.0;
    bool empty = true;
};

struct RegimeReport {
    double lo_threshold = 0.0;
    double hi_threshold = 0.0;
    RegimeBucket low, medium, high;
};

// Buckets prediction dates by a volatility proxy into low/medium/high and
// reports MAPE and direction accuracy per bucket. Every prediction date must
// have a proxy value. Empty buckets are reported, not fatal.
RegimeReport regime_report(const PredictionSet& preds,
                           const std::map<int64_t, double>& vol_proxy, double lo_thr,
                           double hi_thr);

// Stand-in for an implied-volatility index on synthetic data: cross-stock
// mean of the rolling `window`-day return volatility, annualized by sqrt 252,
// keyed by trading-day serial. Defined from the day `window` returns exist.
std::map<int64_t, double> volatility_proxy(const FeatureDataset& ds, int window = 20);

// Linear-interpolation percentile of an ascending-sorted sample, q in [0,1].
double percentile_sorted(const std::vector<double>& sorted, double q);

// 33rd/67th percentiles of the proxy over the validation calendar days.
std::pair<double, double> regime_thresholds(const FeatureDataset& ds,
                                            const std::map<int64_t, double>& proxy);

// Rolls a trained model over every window of a split region and emits one
// record per stock and horizon. `region`: 0 train, 1 validation, 2 test.
PredictionSet predict_model(const Nodeformer& model, const FeatureDataset& ds,
                            const SentimentPanel& sent, const ad::Array& edges, int region,
                            const std::vector<std::string>& tickers,
                            const std::string& name);

// Persistence forecasts aligned to the same windows as predict_model.
PredictionSet predict_naive(const FeatureDataset& ds, int region,
                            const std::vector<std::string>& tickers, int T,
                            const std::vector<int>& horizons);

// Per-stock ARIMA fitted once on the training closes, then iterated forecasts
// conditioned on the history available at each origin in the region.
PredictionSet predict_arima(const FeatureDataset& ds, int region,
                            const std::vector<std::string>& tickers, int T,
                            const std::vector<int>& horizons, int max_p = 3, int max_q = 3,
                            int max_d = 2);

struct AblationVariant {
    std::string name;
    ModelConfig config;
};

// The published ablation grid: the full model plus five single-knob variants.
std::vector<AblationVariant> standard_ablations(const ModelConfig& full);

struct AblationRow {
    std::string name;
    bool failed = false;
    std::string error;
    PointMetrics metrics;     // first horizon
    double theil_u = 0.0;
    double delta_mape = 0.0;  // this variant minus the full model
};

// Trains and evaluates every variant on the same data and seed. A variant
// that throws is recorded as failed and the suite continues. When the panel
// carries no sentiment at all, every variant runs with the sentiment branch
// off, which makes the full row and the no-sentiment row bit-identical.
std::vector<AblationRow> ablation_suite(const std::vector<AblationVariant>& variants,
                                        const FeatureDataset& ds, const SentimentPanel& sent,
                                        const ad::Array& edges,
                                        const std::vector<std::string>& tickers,
                                        const TrainConfig& tc, int eval_region);

struct HorizonReport {
    int horizon = 1;
    PointMetrics point;
    double theil_u = 0.0;
    IcReport ic;
    BootstrapCi da_ci;
};

struct EvaluationReport {
    std::string model;
    std::vector<HorizonReport> horizons;
    RegimeReport regimes;  // first horizon
};

// Full per-model report: point metrics, Theil's U, IC, bootstrap DA interval
// per horizon, plus regime buckets on the first horizon.
EvaluationReport build_report(const PredictionSet& all, const std::string& model,
                              const std::map<int64_t, double>& proxy, double lo_thr,
                              double hi_thr, int n_boot, double level, uint64_t seed);

}  // namespace nodecast
