#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nodecast/errors.hpp"
#include "nodecast/evaluation.hpp"

namespace nodecast {

// Snapshot of the book right after a rebalance.
struct PortfolioState {
    std::vector<double> weights;  // signed, gross exposure sums to 1
    double equity = 1.0;
    int64_t date = 0;
};

// How turnover is measured against the previous book.
//   drifted: previous weights are first carried through the day's returns,
//            so holding a winner that grew counts as a (small) trade back to
//            target. This is the default and what the cost model charges.
//   naive:   plain |w_t - w_{t-1}| against the previous targets, for
//            comparison with simpler conventions.
enum class TurnoverMode { drifted, naive };

// Daily long-short ledger. Day 0 starts from cash, so its gross return is
// zero and its turnover is the initial purchase (0.5 for a fully invested
// book). All columns have one entry per date.
struct TradeLedger {
    double initial_equity = 1.0;
    double cost_bps = 0.0;
    TurnoverMode mode = TurnoverMode::drifted;
    std::vector<int64_t> dates;
    std::vector<std::vector<double>> weights;  // post-rebalance targets
    std::vector<double> turnover;              // one-sided
    std::vector<double> gross;
    std::vector<double> cost;
    std::vector<double> net;
    std::vector<double> equity;

    int n_days() const { return static_cast<int>(dates.size()); }
    int n_stocks() const { return dates.empty() ? 0 : static_cast<int>(weights[0].size()); }
    PortfolioState state_at(int t) const;
};

// Equal-weight top-k long, bottom-k short book from one day's predicted
// returns: +1/(2k) on the k best, -1/(2k) on the k worst, zero elsewhere.
// One descending sort decides membership; ties keep their input position, so
// with the universe passed in ticker order the tie-break is by ticker. Fewer
// than 2k stocks is a BacktestError, non-finite predictions too.
std::vector<double> construct_positions(const std::vector<double>& predicted, int k);

// Runs the daily loop: yesterday's weights earn today's returns, the book
// drifts, rebalances to today's targets, pays cost on the traded notional
// (two-sided, cost_bps per side) and compounds. Returns may be NaN for a
// stock only while it is not carried into the day; a missing return on a
// held position is a BacktestError, as are ragged inputs, unordered dates
// and an equity wipeout.
TradeLedger simulate(const std::vector<std::vector<double>>& target_weights,
                     const std::vector<std::vector<double>>& realized_returns,
                     const std::vector<int64_t>& dates, double cost_bps,
                     TurnoverMode mode = TurnoverMode::drifted);

// One column (gross or net) of the summary. Sharpe is undefined when the
// dailies have zero variance; sharpe() throws BacktestError in that case
// while the other statistics stay usable.
struct SeriesStats {
    double ann_return = 0.0;
    double max_drawdown = 0.0;
    bool sharpe_defined = false;
    double sharpe_value = 0.0;

    double sharpe() const;
};

struct PerformanceStats {
    SeriesStats gross;
    SeriesStats net;
    double mean_turnover = 0.0;  // one-sided, averaged over every day
    int n_days = 0;
};

// Annualized return from compounded dailies (252 per year), Sharpe as
// mean over sample deviation times sqrt(252) with a zero risk-free rate,
// max peak-to-trough drawdown with the peak seeded at the initial equity,
// and mean one-sided turnover. Needs at least two ledger days.
PerformanceStats performance_stats(const TradeLedger& ledger);

// Fixed-width summary block with gross and net columns. Turnover is labeled
// one-sided because reporting conventions differ.
std::string summary_block(const PerformanceStats& stats);

// Convenience wiring from a prediction table: picks one model and horizon,
// groups by date, orders stocks by ticker, builds positions from predicted
// returns and realizes actual returns from the recorded prices. Every date
// must cover the same ticker set.
TradeLedger backtest_predictions(const PredictionSet& preds, const std::string& model,
                                 int horizon, int k, double cost_bps,
                                 TurnoverMode mode = TurnoverMode::drifted);

}  // namespace nodecast
