#pragma once

#include <vector>

#include "nodecast/marketdata.hpp"

namespace nodecast {

// The 11 derived indicators for one day. macd_signal (the 9-day EMA of MACD)
// is computed alongside because traders read the pair together, but it is not
// part of the model's feature vector.
struct IndicatorVector {
    double sma5 = 0, sma10 = 0, sma20 = 0;
    double ema5 = 0, ema10 = 0, ema20 = 0;
    double rsi = 50.0;
    double macd = 0;
    double daily_return = 0;
    double log_return = 0;
    double rolling_vol = 0;
    double macd_signal = 0;
};

// Days 0..indicator_warmup-1 have at least one incomplete window. They are
// still filled in deterministically (truncated windows, EMA recursion from
// its seed) so every day has finite values, but they are dropped before any
// training target is built. 26 is the longest lookback in the set: EMA26 has
// seen a full span once 26 prior days exist, RSI needs 14 changes, rolling
// volatility 20 returns.
inline constexpr int indicator_warmup = 26;

// Windowed statistics per day over the (already imputed) series.
// Conventions for short history: SMA/vol/RSI windows truncate to the data
// available, EMA starts from EMA(0) = C0, returns at day 0 are 0, volatility
// needs two returns before a sample deviation exists.
// use_adj_close switches the price input from close to adjusted close.
// Throws DataError when the series is shorter than indicator_warmup + 1 days.
std::vector<IndicatorVector> compute_indicators(const MarketSeries& series,
                                                bool use_adj_close = false);

}  // namespace nodecast
