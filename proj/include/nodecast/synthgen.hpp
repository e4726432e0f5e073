#pragma once

#include <vector>

#include "nodecast/marketdata.hpp"

namespace nodecast {

// Synthetic market generator: per-sector latent factor plus idiosyncratic
// noise driving a log-price random walk, with market-wide volatility regime
// switching and an optional AR(1) term on returns. Every random stream is
// keyed by (seed, purpose, lane) so the output for stock i does not depend on
// how many other stocks are generated or in what order.
std::vector<MarketSeries> generate_market(const SynthConfig& cfg);

// Sentiment with a planted lead: raw_score_t tracks the *next* day's return,
// scaled through tanh and mixed with (1 - lead) noise, clamped to [-1, 1].
// Post counts include occasional zero-post and thin (<5 posts) days so the
// coverage fallbacks downstream have something to do.
std::vector<SentimentSeries> generate_sentiment(const std::vector<MarketSeries>& market,
                                                const SynthConfig& cfg);

// The market-wide daily volatility level used on each day (regime path).
// Exposed because the sentiment generator and tests need the same path.
std::vector<double> regime_path(const SynthConfig& cfg);

int sector_of(int stock_index, int n_sectors);

}  // namespace nodecast
