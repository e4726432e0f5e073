#include "nodecast/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

namespace nodecast {

PortfolioState TradeLedger::state_at(int t) const {
    if (t < 0 || t >= n_days()) throw ConfigError("state_at: day index out of range");
    return {weights[t], equity[t], dates[t]};
}

std::vector<double> construct_positions(const std::vector<double>& predicted, int k) {
    if (k < 1) throw ConfigError("construct_positions: k must be positive");
    const int n = static_cast<int>(predicted.size());
    if (n < 2 * k)
        throw BacktestError("construct_positions: " + std::to_string(n) + " stocks cannot fill " +
                            std::to_string(2 * k) + " slots");
    for (double p : predicted)
        if (!std::isfinite(p)) throw BacktestError("construct_positions: non-finite prediction");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return predicted[a] > predicted[b]; });

    const double lot = 1.0 / (2.0 * k);
    std::vector<double> w(n, 0.0);
    for (int j = 0; j < k; ++j) w[order[j]] = lot;
    for (int j = n - k; j < n; ++j) w[order[j]] = -lot;
    return w;
}

TradeLedger simulate(const std::vector<std::vector<double>>& target_weights,
                     const std::vector<std::vector<double>>& realized_returns,
                     const std::vector<int64_t>& dates, double cost_bps, TurnoverMode mode) {
    if (cost_bps < 0.0) throw ConfigError("simulate: negative cost");
    const int D = static_cast<int>(dates.size());
    if (D == 0) throw BacktestError("simulate: no days");
    if (static_cast<int>(target_weights.size()) != D ||
        static_cast<int>(realized_returns.size()) != D)
        throw BacktestError("simulate: weights, returns and dates must cover the same days");
    const int N = static_cast<int>(target_weights[0].size());
    if (N == 0) throw BacktestError("simulate: no stocks");
    for (int t = 0; t < D; ++t) {
        if (static_cast<int>(target_weights[t].size()) != N ||
            static_cast<int>(realized_returns[t].size()) != N)
            throw BacktestError("simulate: ragged day " + std::to_string(t));
        if (t > 0 && dates[t] <= dates[t - 1])
            throw BacktestError("simulate: dates must be strictly increasing");
        for (double w : target_weights[t])
            if (!std::isfinite(w)) throw BacktestError("simulate: non-finite target weight");
    }

    TradeLedger led;
    led.cost_bps = cost_bps;
    led.mode = mode;
    led.dates = dates;
    led.weights = target_weights;

    std::vector<double> prev(N, 0.0);
    double equity = led.initial_equity;
    for (int t = 0; t < D; ++t) {
        const auto& r = realized_returns[t];
        double gross = 0.0;
        for (int i = 0; i < N; ++i) {
            if (prev[i] == 0.0) continue;
            if (std::isnan(r[i]))
                throw BacktestError("simulate: missing return for held stock " +
                                    std::to_string(i) + " on day " + std::to_string(t));
            if (!std::isfinite(r[i]))
                throw BacktestError("simulate: non-finite return on day " + std::to_string(t));
            gross += prev[i] * r[i];
        }
        if (1.0 + gross <= 0.0)
            throw BacktestError("simulate: book wiped out on day " + std::to_string(t));

        const auto& w = target_weights[t];
        double turn = 0.0;
        for (int i = 0; i < N; ++i) {
            const double held = mode == TurnoverMode::naive
                                    ? prev[i]
                                    : (prev[i] == 0.0 ? 0.0
                                                      : prev[i] * (1.0 + r[i]) / (1.0 + gross));
            turn += std::fabs(w[i] - held);
        }
        turn /= 2.0;

        const double cost = 2.0 * turn * cost_bps * 1e-4;
        const double net = gross - cost;
        equity *= 1.0 + net;
        if (equity <= 0.0)
            throw BacktestError("simulate: equity wiped out on day " + std::to_string(t));

        led.turnover.push_back(turn);
        led.gross.push_back(gross);
        led.cost.push_back(cost);
        led.net.push_back(net);
        led.equity.push_back(equity);
        prev = w;
    }
    return led;
}

double SeriesStats::sharpe() const {
    if (!sharpe_defined)
        throw BacktestError("Sharpe is undefined: daily returns have zero variance");
    return sharpe_value;
}

// Annualization, Sharpe and drawdown for one daily-return column. The equity
// path restarts at 1 here; drawdown is scale-free so the caller's initial
// level does not matter.
static SeriesStats column_stats(const std::vector<double>& dailies) {
    const int D = static_cast<int>(dailies.size());
    SeriesStats s;

    double eq = 1.0, peak = 1.0, dd = 0.0;
    for (double x : dailies) {
        eq *= 1.0 + x;
        peak = std::max(peak, eq);
        dd = std::max(dd, (peak - eq) / peak);
    }
    s.ann_return = std::pow(eq, 252.0 / D) - 1.0;
    s.max_drawdown = dd;

    const double mean = std::accumulate(dailies.begin(), dailies.end(), 0.0) / D;
    double ss = 0.0;
    for (double x : dailies) ss += (x - mean) * (x - mean);
    const auto [lo, hi] = std::minmax_element(dailies.begin(), dailies.end());
    if (*lo != *hi && ss > 0.0) {
        s.sharpe_defined = true;
        s.sharpe_value = mean / std::sqrt(ss / (D - 1)) * std::sqrt(252.0);
    }
    return s;
}

PerformanceStats performance_stats(const TradeLedger& ledger) {
    if (ledger.n_days() < 2)
        throw BacktestError("performance_stats: need at least two ledger days");
    PerformanceStats st;
    st.n_days = ledger.n_days();
    st.gross = column_stats(ledger.gross);
    st.net = column_stats(ledger.net);
    st.mean_turnover =
        std::accumulate(ledger.turnover.begin(), ledger.turnover.end(), 0.0) / st.n_days;
    return st;
}

std::string summary_block(const PerformanceStats& stats) {
    char buf[160];
    std::string out;
    out += "                          gross        net\n";
    std::snprintf(buf, sizeof buf, "annualized return     %8.2f%%   %8.2f%%\n",
                  100.0 * stats.gross.ann_return, 100.0 * stats.net.ann_return);
    out += buf;
    auto sharpe_cell = [](const SeriesStats& s) {
        char cell[32];
        if (s.sharpe_defined)
            std::snprintf(cell, sizeof cell, "%9.2f", s.sharpe_value);
        else
            std::snprintf(cell, sizeof cell, "%9s", "undefined");
        return std::string(cell);
    };
    out += "annualized sharpe     " + sharpe_cell(stats.gross) + "   " +
           sharpe_cell(stats.net) + "\n";
    std::snprintf(buf, sizeof buf, "maximum drawdown      %8.2f%%   %8.2f%%\n",
                  100.0 * stats.gross.max_drawdown, 100.0 * stats.net.max_drawdown);
    out += buf;
    std::snprintf(buf, sizeof buf, "mean daily turnover   %8.2f%%   (one-sided)\n",
                  100.0 * stats.mean_turnover);
    out += buf;
    std::snprintf(buf, sizeof buf, "days                  %8d\n", stats.n_days);
    out += buf;
    return out;
}

TradeLedger backtest_predictions(const PredictionSet& preds, const std::string& model,
                                 int horizon, int k, double cost_bps, TurnoverMode mode) {
    const PredictionSet slice = preds.filter(model, horizon);
    if (slice.rows.empty())
        throw BacktestError("backtest_predictions: no records for model " + model);

    std::map<int64_t, std::map<std::string, const PredictionRecord*>> by_date;
    for (const auto& r : slice.rows) {
        if (r.y_prior == 0.0) throw BacktestError("backtest_predictions: zero prior price");
        if (!by_date[r.date].emplace(r.ticker, &r).second)
            throw BacktestError("backtest_predictions: duplicate record for " + r.ticker);
    }
    if (by_date.size() < 2)
        throw BacktestError("backtest_predictions: need at least two prediction dates");

    std::vector<std::string> tickers;
    for (const auto& [tk, rec] : by_date.begin()->second) {
        (void)rec;
        tickers.push_back(tk);
    }
    const int N = static_cast<int>(tickers.size());
    for (const auto& [date, day] : by_date)
        if (static_cast<int>(day.size()) != N ||
            !std::equal(tickers.begin(), tickers.end(), day.begin(),
                        [](const std::string& a, const auto& kv) { return a == kv.first; }))
            throw BacktestError("backtest_predictions: ticker set changes on day " +
                                std::to_string(date));

    // Day t's book is built from the forecasts targeting day t+1, so it earns
    // exactly the returns it predicted. The last day has no forecast beyond
    // it and keeps the previous targets.
    std::vector<int64_t> dates;
    std::vector<std::vector<double>> predicted, realized;
    for (const auto& [date, day] : by_date) {
        dates.push_back(date);
        std::vector<double> p(N), a(N);
        for (int i = 0; i < N; ++i) {
            const PredictionRecord& r = *day.at(tickers[i]);
            p[i] = (r.y_pred - r.y_prior) / r.y_prior;
            a[i] = (r.y_true - r.y_prior) / r.y_prior;
        }
        predicted.push_back(std::move(p));
        realized.push_back(std::move(a));
    }

    const int D = static_cast<int>(dates.size());
    std::vector<std::vector<double>> weights(D);
    for (int t = 0; t + 1 < D; ++t) weights[t] = construct_positions(predicted[t + 1], k);
    weights[D - 1] = weights[D - 2];
    return simulate(weights, realized, dates, cost_bps, mode);
}

}  // namespace nodecast
