#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nodecast/indicators.hpp"
#include "nodecast/marketdata.hpp"

namespace nodecast {

enum class ImputeMode { train, eval };

struct ImputedSeries {
    MarketSeries series;
    std::vector<uint8_t> imputed;  // 1 where the bar was filled in
};

// Fill missing bars. Train mode interpolates gaps of one or two days linearly
// between the surrounding observations and forward-fills longer gaps; eval
// mode only ever forward-fills, so nothing from the future leaks backward.
// A series whose first bar is missing has no anchor: DataError.
ImputedSeries impute_series(const MarketSeries& series, ImputeMode mode);

// Chronological three-way split of a shared trading calendar.
struct DatasetSplit {
    int n_train = 0;
    int n_val = 0;
    int n_test = 0;

    int total() const { return n_train + n_val + n_test; }
    // 0 = train, 1 = validation, 2 = test
    int region_of(int day_index) const {
        if (day_index < n_train) return 0;
        if (day_index < n_train + n_val) return 1;
        return 2;
    }
};

// Split day counts at the nearest boundaries to the requested proportions.
// Fractions must be positive and sum to 1; every region must come out
// non-empty. ConfigError otherwise.
DatasetSplit partition_dataset(int n_days, double train_frac, double val_frac, double test_frac);

inline constexpr int n_features = 17;

// Column order of the per-day feature vector: the six raw series first, then
// the derived indicators. This order is frozen; checkpoints depend on it.
const std::array<const char*, n_features>& feature_names();

// Dense [day, stock, feature] grid over the post-warmup calendar.
struct FeatureMatrix {
    std::vector<std::string> tickers;
    std::vector<int> sectors;
    std::vector<int64_t> dates;  // length n_days()
    int n_stocks = 0;
    std::vector<double> values;    // n_days() * n_stocks * n_features
    std::vector<uint8_t> imputed;  // n_days() * n_stocks, bar-level flags

    int n_days() const { return static_cast<int>(dates.size()); }
    double& at(int d, int i, int k) { return values[(d * n_stocks + i) * n_features + k]; }
    double at(int d, int i, int k) const { return values[(d * n_stocks + i) * n_features + k]; }
    bool was_imputed(int d, int i) const { return imputed[d * n_stocks + i] != 0; }
};

struct NormalizeResult {
    FeatureMatrix normalized;
    // The statistics each cell was normalized with, same layout as values.
    // Cells whose sigma sits below the floor were emitted as 0.
    std::vector<double> mu;
    std::vector<double> sigma;
};

inline constexpr double sigma_floor = 1e-8;

// Expanding z-score per (stock, feature): train and validation cells use the
// mean and sample deviation of everything from the matrix start through the
// cell's own day; test cells use statistics frozen over the training days
// only. calendar_offset maps matrix day d to full-calendar day d + offset for
// locating split boundaries. DataError when no training day survives the
// offset.
NormalizeResult normalize_expanding(const FeatureMatrix& raw, const DatasetSplit& split,
                                    int calendar_offset);

// Everything downstream consumers need: normalized features over the
// post-warmup calendar plus the raw close grid over the full calendar (for
// targets, return computations and un-normalizing predictions).
struct FeatureDataset {
    FeatureMatrix features;        // normalized, n_days = calendar - warmup
    std::vector<double> mu;        // per-cell stats actually used
    std::vector<double> sigma;
    DatasetSplit split;            // on the full calendar
    int warmup = indicator_warmup;
    std::vector<int64_t> calendar;  // full trading calendar, all stocks share it
    std::vector<double> closes;     // [calendar day, stock], imputed raw closes
    std::vector<uint8_t> imputed;   // [calendar day, stock]

    int n_stocks() const { return features.n_stocks; }
    int calendar_days() const { return static_cast<int>(calendar.size()); }
    double close_at(int calendar_day, int stock) const {
        return closes[calendar_day * n_stocks() + stock];
    }
    // Close-feature statistics for a post-warmup day (index into features).
    double close_mu(int d, int i) const;
    double close_sigma(int d, int i) const;
    // Inverse of the close z-score at day d: mu + sigma * z, collapsing to mu
    // when sigma sat below the floor.
    double denormalize_close(int d, int i, double z) const;
};

// Full pipeline: validate the shared calendar, impute (interpolation only for
// short gaps lying entirely inside the training range), compute indicators,
// drop warmup days, normalize. Throws DataError on calendar mismatch, leading
// gaps, or too-short series; ConfigError on bad fractions.
FeatureDataset build_dataset(const std::vector<MarketSeries>& market, double train_frac,
                             double val_frac, double test_frac, bool use_adj_close = false);

}  // namespace nodecast
