#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace nodecast {

// One daily bar. NaN fields mean "no observation that day" (a gap the
// imputation pass has to deal with).
struct OhlcvBar {
    double open = std::nan("");
    double high = std::nan("");
    double low = std::nan("");
    double close = std::nan("");
    double adj_close = std::nan("");
    double volume = std::nan("");

    bool missing() const { return std::isnan(close); }
};

struct MarketSeries {
    std::string ticker;
    int sector = 0;
    std::vector<int64_t> dates;  // serial days, strictly increasing
    std::vector<OhlcvBar> bars;  // same length as dates

    int days() const { return static_cast<int>(dates.size()); }
};

// The one direction predicate everything shares: training targets, direction
// labels and accuracy metrics. A flat price counts as "not up".
inline bool price_up(double next, double prior) { return next > prior; }

// Daily sentiment observations for one ticker: a raw aggregate score plus the
// number of posts behind it (the coverage rules key off post_count).
struct SentimentDay {
    double score = 0.0;
    int post_count = 0;
};

struct SentimentSeries {
    std::string ticker;
    std::vector<int64_t> dates;
    std::vector<SentimentDay> days;
};

struct SynthConfig {
    int n_stocks = 8;
    int n_days = 500;
    int n_sectors = 2;
    double sector_factor_strength = 0.5;     // in [0,1]: share of return variance from the sector factor
    std::vector<double> regime_vol_levels = {0.01, 0.02, 0.035};
    double sentiment_lead_strength = 0.0;    // in [0,1]: 1 = scores fully determined by next-day return
    double return_ar_coeff = 0.0;            // AR(1) on daily log returns, |phi| < 1
    uint64_t seed = 42;
    int64_t start_date = 16436;              // 2015-01-01
};

}  // namespace nodecast
