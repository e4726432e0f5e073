#include "nodecast/indicators.hpp"

#include <cmath>

#include "nodecast/errors.hpp"

namespace nodecast {

namespace {

double ema_alpha(int n) { return 2.0 / (n + 1.0); }

// One EMA recursion over the whole series, seeded at the first value.
std::vector<double> ema_series(const std::vector<double>& x, int n) {
    const double a = ema_alpha(n);
    std::vector<double> out(x.size());
    out[0] = x[0];
    for (size_t t = 1; t < x.size(); ++t) out[t] = a * x[t] + (1.0 - a) * out[t - 1];
    return out;
}

double truncated_sma(const std::vector<double>& c, int t, int n) {
    const int lo = std::max(0, t - n + 1);
    double s = 0;
    for (int j = lo; j <= t; ++j) s += c[j];
    return s / (t - lo + 1);
}

double rsi_at(const std::vector<double>& c, int t) {
    // Averages of gains and losses over the changes ending at day t,
    // up to 14 of them. No movement at all carries no signal: 50.
    const int lo = std::max(1, t - 13);
    if (lo > t) return 50.0;
    double gain = 0, loss = 0;
    for (int j = lo; j <= t; ++j) {
        const double d = c[j] - c[j - 1];
        if (d > 0) gain += d;
        else loss -= d;
    }
    const int m = t - lo + 1;
    gain /= m;
    loss /= m;
    if (loss == 0.0 && gain == 0.0) return 50.0;
    if (loss == 0.0) return 100.0;
    return 100.0 - 100.0 / (1.0 + gain / loss);
}

double rolling_vol_at(const std::vector<double>& r, int t) {
    // r[j] is the return of day j, defined from day 1. Sample deviation over
    // the last 20 returns (fewer while the window is still filling).
    const int lo = std::max(1, t - 19);
    const int m = t - lo + 1;
    if (m < 2) return 0.0;
    double mean = 0;
    for (int j = lo; j <= t; ++j) mean += r[j];
    mean /= m;
    double ss = 0;
    for (int j = lo; j <= t; ++j) ss += (r[j] - mean) * (r[j] - mean);
    return std::sqrt(ss / (m - 1));
}

}  // namespace

std::vector<IndicatorVector> compute_indicators(const MarketSeries& series, bool use_adj_close) {
    const int d = series.days();
    if (d < indicator_warmup + 1)
        throw DataError("compute_indicators: series '" + series.ticker + "' has " +
                        std::to_string(d) + " days, need at least " +
                        std::to_string(indicator_warmup + 1));

    std::vector<double> c(d);
    for (int t = 0; t < d; ++t) {
        c[t] = use_adj_close ? series.bars[t].adj_close : series.bars[t].close;
        if (!std::isfinite(c[t]) || c[t] <= 0.0)
            throw DataError("compute_indicators: series '" + series.ticker +
                            "' has a non-positive or missing price at day " + std::to_string(t) +
                            " (impute first)");
    }

    const auto e5 = ema_series(c, 5), e10 = ema_series(c, 10), e20 = ema_series(c, 20);
    const auto e12 = ema_series(c, 12), e26 = ema_series(c, 26);

    std::vector<double> ret(d, 0.0);
    for (int t = 1; t < d; ++t) ret[t] = c[t] / c[t - 1] - 1.0;

    std::vector<double> macd(d);
    for (int t = 0; t < d; ++t) macd[t] = e12[t] - e26[t];
    const auto signal = ema_series(macd, 9);

    std::vector<IndicatorVector> out(d);
    for (int t = 0; t < d; ++t) {
        IndicatorVector& v = out[t];
        v.sma5 = truncated_sma(c, t, 5);
        v.sma10 = truncated_sma(c, t, 10);
        v.sma20 = truncated_sma(c, t, 20);
        v.ema5 = e5[t];
        v.ema10 = e10[t];
        v.ema20 = e20[t];
        v.rsi = rsi_at(c, t);
        v.macd = macd[t];
        v.daily_return = ret[t];
        v.log_return = t == 0 ? 0.0 : std::log(c[t] / c[t - 1]);
        v.rolling_vol = rolling_vol_at(ret, t);
        v.macd_signal = signal[t];
    }
    return out;
}

}  // namespace nodecast
