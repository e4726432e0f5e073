#include "nodecast/features.hpp"

#include <cmath>

#include "nodecast/errors.hpp"

namespace nodecast {

namespace {

constexpr int close_feature = 3;

void fill_linear(OhlcvBar& out, const OhlcvBar& a, const OhlcvBar& b, double w) {
    out.open = a.open + (b.open - a.open) * w;
    out.high = a.high + (b.high - a.high) * w;
    out.low = a.low + (b.low - a.low) * w;
    out.close = a.close + (b.close - a.close) * w;
    out.adj_close = a.adj_close + (b.adj_close - a.adj_close) * w;
    out.volume = a.volume + (b.volume - a.volume) * w;
}

// Shared imputation walk. interp_gap decides, per gap, whether to draw the
// line between the anchors; everything else forward-fills the left anchor.
// gap_end is one past the last missing day; right anchor exists iff
// gap_end < n_days.
template <typename Pred>
ImputedSeries impute_with(const MarketSeries& series, Pred interp_gap) {
    const int d = series.days();
    if (d == 0) throw DataError("impute_series: series '" + series.ticker + "' is empty");
    if (series.bars[0].missing())
        throw DataError("impute_series: series '" + series.ticker +
                        "' starts with a gap, nothing to anchor on");

    ImputedSeries out{series, std::vector<uint8_t>(d, 0)};
    int t = 1;
    while (t < d) {
        if (!out.series.bars[t].missing()) {
            ++t;
            continue;
        }
        const int gap_start = t;
        int gap_end = t;
        while (gap_end < d && out.series.bars[gap_end].missing()) ++gap_end;
        const int len = gap_end - gap_start;
        const OhlcvBar& left = out.series.bars[gap_start - 1];

        if (gap_end < d && interp_gap(gap_start, len, gap_end)) {
            const OhlcvBar& right = out.series.bars[gap_end];
            for (int j = 0; j < len; ++j)
                fill_linear(out.series.bars[gap_start + j], left, right,
                            static_cast<double>(j + 1) / (len + 1));
        } else {
            for (int j = 0; j < len; ++j) out.series.bars[gap_start + j] = left;
        }
        for (int j = 0; j < len; ++j) out.imputed[gap_start + j] = 1;
        t = gap_end;
    }
    return out;
}

}  // namespace

ImputedSeries impute_series(const MarketSeries& series, ImputeMode mode) {
    if (mode == ImputeMode::train)
        return impute_with(series, [](int, int len, int) { return len <= 2; });
    return impute_with(series, [](int, int, int) { return false; });
}

DatasetSplit partition_dataset(int n_days, double train_frac, double val_frac, double test_frac) {
    if (train_frac <= 0.0 || val_frac <= 0.0 || test_frac <= 0.0)
        throw ConfigError("partition_dataset: all fractions must be positive");
    if (std::fabs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw ConfigError("partition_dataset: fractions must sum to 1");
    if (n_days < 3) throw ConfigError("partition_dataset: need at least 3 days to split");

    int n1 = static_cast<int>(std::llround(n_days * train_frac));
    int n12 = static_cast<int>(std::llround(n_days * (train_frac + val_frac)));
    n1 = std::max(1, std::min(n1, n_days - 2));
    n12 = std::max(n1 + 1, std::min(n12, n_days - 1));
    return DatasetSplit{n1, n12 - n1, n_days - n12};
}

const std::array<const char*, n_features>& feature_names() {
    static const std::array<const char*, n_features> names = {
        "open", "high", "low", "close", "adj_close", "volume",
        "sma5", "sma10", "sma20", "ema5", "ema10", "ema20",
        "rsi", "macd", "daily_return", "log_return", "rolling_vol"};
    return names;
}

NormalizeResult normalize_expanding(const FeatureMatrix& raw, const DatasetSplit& split,
                                    int calendar_offset) {
    const int d_days = raw.n_days();
    const int n = raw.n_stocks;
    if (calendar_offset + d_days != split.total())
        throw ShapeError("normalize_expanding: matrix covers " + std::to_string(d_days) +
                         " days at offset " + std::to_string(calendar_offset) +
                         ", split expects " + std::to_string(split.total()));
    const int train_days = std::min(split.n_train - calendar_offset, d_days);
    if (train_days <= 0)
        throw DataError("normalize_expanding: no training days remain past the warmup");

    NormalizeResult res;
    res.normalized = raw;
    res.mu.assign(raw.values.size(), 0.0);
    res.sigma.assign(raw.values.size(), 0.0);

    const auto idx = [n](int d, int i, int k) { return (d * n + i) * n_features + k; };

    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < n_features; ++k) {
            // Frozen training statistics, two-pass for accuracy.
            double mu_tr = 0;
            for (int d = 0; d < train_days; ++d) mu_tr += raw.values[idx(d, i, k)];
            mu_tr /= train_days;
            double sd_tr = 0;
            if (train_days >= 2) {
                double ss = 0;
                for (int d = 0; d < train_days; ++d) {
                    const double c = raw.values[idx(d, i, k)] - mu_tr;
                    ss += c * c;
                }
                sd_tr = std::sqrt(ss / (train_days - 1));
            }

            double s = 0, sq = 0;
            for (int d = 0; d < d_days; ++d) {
                const double x = raw.values[idx(d, i, k)];
                s += x;
                sq += x * x;
                double m, sd;
                if (split.region_of(d + calendar_offset) <= 1) {
                    const int cnt = d + 1;
                    m = s / cnt;
                    sd = cnt >= 2 ? std::sqrt(std::max(0.0, sq - cnt * m * m) / (cnt - 1)) : 0.0;
                } else {
                    m = mu_tr;
                    sd = sd_tr;
                }
                res.mu[idx(d, i, k)] = m;
                res.sigma[idx(d, i, k)] = sd;
                res.normalized.values[idx(d, i, k)] = sd < sigma_floor ? 0.0 : (x - m) / sd;
            }
        }
    }

    for (double v : res.normalized.values)
        if (!std::isfinite(v)) throw NumericError("normalize_expanding: non-finite output cell");
    return res;
}

double FeatureDataset::close_mu(int d, int i) const {
    return mu[(d * n_stocks() + i) * n_features + close_feature];
}

double FeatureDataset::close_sigma(int d, int i) const {
    return sigma[(d * n_stocks() + i) * n_features + close_feature];
}

double FeatureDataset::denormalize_close(int d, int i, double z) const {
    const double sd = close_sigma(d, i);
    return sd < sigma_floor ? close_mu(d, i) : close_mu(d, i) + sd * z;
}

FeatureDataset build_dataset(const std::vector<MarketSeries>& market, double train_frac,
                             double val_frac, double test_frac, bool use_adj_close) {
    if (market.empty()) throw DataError("build_dataset: empty universe");
    const auto& cal = market[0].dates;
    for (size_t t = 1; t < cal.size(); ++t)
        if (cal[t] <= cal[t - 1]) throw DataError("build_dataset: calendar not increasing");
    for (const auto& ms : market) {
        if (ms.dates != cal)
            throw DataError("build_dataset: series '" + ms.ticker +
                            "' does not share the universe calendar");
        if (ms.bars.size() != cal.size())
            throw DataError("build_dataset: series '" + ms.ticker + "' has " +
                            std::to_string(ms.bars.size()) + " bars for " +
                            std::to_string(cal.size()) + " dates");
    }

    const int d_cal = static_cast<int>(cal.size());
    const int n = static_cast<int>(market.size());
    const auto split = partition_dataset(d_cal, train_frac, val_frac, test_frac);
    if (d_cal <= indicator_warmup)
        throw DataError("build_dataset: calendar shorter than the indicator warmup");

    // Interpolation peeks at the gap's right edge, so it is only allowed when
    // that edge still lies inside the training range.
    std::vector<ImputedSeries> filled;
    filled.reserve(market.size());
    for (const auto& ms : market)
        filled.push_back(impute_with(ms, [&split](int, int len, int gap_end) {
            return len <= 2 && gap_end < split.n_train;
        }));

    std::vector<std::vector<IndicatorVector>> ind(n);
    for (int i = 0; i < n; ++i) ind[i] = compute_indicators(filled[i].series, use_adj_close);

    const int d_post = d_cal - indicator_warmup;
    FeatureMatrix raw;
    raw.n_stocks = n;
    raw.dates.assign(cal.begin() + indicator_warmup, cal.end());
    for (const auto& ms : market) {
        raw.tickers.push_back(ms.ticker);
        raw.sectors.push_back(ms.sector);
    }
    raw.values.resize(static_cast<size_t>(d_post) * n * n_features);
    raw.imputed.resize(static_cast<size_t>(d_post) * n);

    for (int d = 0; d < d_post; ++d) {
        const int t = d + indicator_warmup;
        for (int i = 0; i < n; ++i) {
            const OhlcvBar& b = filled[i].series.bars[t];
            const IndicatorVector& v = ind[i][t];
            double* row = &raw.at(d, i, 0);
            row[0] = b.open;
            row[1] = b.high;
            row[2] = b.low;
            row[3] = b.close;
            row[4] = b.adj_close;
            row[5] = b.volume;
            row[6] = v.sma5;
            row[7] = v.sma10;
            row[8] = v.sma20;
            row[9] = v.ema5;
            row[10] = v.ema10;
            row[11] = v.ema20;
            row[12] = v.rsi;
            row[13] = v.macd;
            row[14] = v.daily_return;
            row[15] = v.log_return;
            row[16] = v.rolling_vol;
            raw.imputed[d * n + i] = filled[i].imputed[t];
        }
    }

    auto norm = normalize_expanding(raw, split, indicator_warmup);

    FeatureDataset ds;
    ds.features = std::move(norm.normalized);
    ds.mu = std::move(norm.mu);
    ds.sigma = std::move(norm.sigma);
    ds.split = split;
    ds.calendar = cal;
    ds.closes.resize(static_cast<size_t>(d_cal) * n);
    ds.imputed.resize(static_cast<size_t>(d_cal) * n);
    for (int t = 0; t < d_cal; ++t)
        for (int i = 0; i < n; ++i) {
            ds.closes[t * n + i] = filled[i].series.bars[t].close;
            ds.imputed[t * n + i] = filled[i].imputed[t];
        }
    return ds;
}

}  // namespace nodecast
