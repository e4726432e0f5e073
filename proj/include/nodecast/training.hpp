#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nodecast/features.hpp"
#include "nodecast/model.hpp"
#include "nodecast/sentiment.hpp"

namespace nodecast {

// Weights of the four loss terms: squared error, direction cross-entropy,
// cross-sectional correlation, L2. The squared-error weight must be positive,
// the rest non-negative.
struct LossWeights {
    double mse = 1.0;
    double dir = 0.5;
    double corr = 0.2;
    double reg = 1e-4;

    void validate() const;
};

// Multiscale sentiment per stock, aligned with the full trading calendar.
// An empty panel means the run has no sentiment stream at all; window
// assembly then emits zeros and the caller should disable the sentiment path.
struct SentimentPanel {
    std::vector<std::vector<SentimentFeature>> by_stock;

    bool empty() const { return by_stock.empty(); }
};

// Scored posts -> per-day features for every ticker. Order of `tickers`
// defines the stock axis and must match the dataset.
SentimentPanel build_sentiment_panel(const std::vector<ScoredPost>& posts,
                                     const std::vector<int64_t>& calendar,
                                     const std::vector<std::string>& tickers);

// Same from per-day aggregates. Every series must cover the calendar exactly;
// its position defines the stock axis.
SentimentPanel build_sentiment_panel(const std::vector<SentimentSeries>& series,
                                     const std::vector<int64_t>& calendar);

// Valid last-input-day positions for sliding windows over the inclusive day
// range [lo, hi]: inputs [end-T+1, end] and targets end+1..end+h_max all stay
// inside. ConfigError when the range is too short for a single window.
std::vector<int> window_ends(int lo, int hi, int T, int h_max);

// Window ends for one split region (0 train, 1 validation, 2 test), in
// post-warmup day indices. Stride 1; no target leaves the region.
std::vector<int> make_training_windows(const FeatureDataset& ds, int region, int T,
                                       const std::vector<int>& horizons);

// Deterministic Fisher-Yates keyed by (seed, epoch).
void shuffle_windows(std::vector<int>& ends, uint64_t seed, int epoch);

// Everything the loss needs to know about one window's future.
struct WindowTargets {
    ad::Array y;      // [N, H] normalized closes at the horizon days
    ad::Array dir;    // [N, H] raw close rose by the horizon
    ad::Array ret;    // [N] realized simple returns at the first horizon
    ad::Array ret_a;  // [N] scale of the affine map from a z-space prediction
    ad::Array ret_b;  // [N] shift; a*z + b = (price(z) - C_t) / C_t
};

// Slice one window out of the dataset. `end` is the post-warmup index of the
// last input day, `d_in` how many leading feature columns the model takes.
ModelInputs make_window_inputs(const FeatureDataset& ds, const SentimentPanel& sent,
                               const ad::Array& edges, int end, int T, int d_in);

WindowTargets make_window_targets(const FeatureDataset& ds, int end,
                                  const std::vector<int>& horizons);

// Term values of one composite-loss evaluation, before weighting.
struct LossBreakdown {
    double total = 0;
    double mse = 0;
    double dir = 0;
    double corr = 0;
    double reg = 0;
    int corr_used = 0;     // windows that contributed a correlation term
    int corr_skipped = 0;  // degenerate cross-sections left out

    LossBreakdown& operator+=(const LossBreakdown& o);
    void scale(double f);
};

// Composite objective over windows already forwarded on tape t:
//   w.mse  * mean squared error over every prediction element
// + w.dir  * direction cross-entropy, probabilities clamped to [1e-7, 1-1e-7]
// + w.corr * mean over windows of 1 - pearson(predicted, realized returns)
//            across the stock cross-section at the first horizon
// + w.reg  * sum of squares of every non-frozen parameter.
// A window whose predicted or realized return vector has deviation < 1e-12
// is skipped by the correlation term and counted in the breakdown.
ad::Var composite_loss(ad::Tape& t, const Nodeformer& model,
                       const std::vector<ModelOutputs>& outs,
                       const std::vector<WindowTargets>& tgts, const LossWeights& w,
                       LossBreakdown* parts = nullptr);

// One unfreezing stage. unfreeze_top_layers: 0 trains only the sentiment,
// fusion and output heads; k > 0 additionally unfreezes the top k transformer
// layers; -1 unfreezes everything.
struct StageSpec {
    int epochs = 0;
    double peak_lr = 0;
    int unfreeze_top_layers = 0;
};

struct TrainConfig {
    int batch_size = 32;
    int grad_accum = 4;     // optimizer steps happen every batch_size * grad_accum windows
    int warmup_steps = 4000;
    std::vector<StageSpec> stages = {{10, 1e-4, 0}, {20, 5e-5, 3}, {30, 1e-5, -1}};
    LossWeights weights;
    uint64_t seed = 1;
    int val_stride = 1;  // evaluate every k-th validation window
    bool verbose = false;

    int total_epochs() const;
    void validate() const;
};

struct EpochLog {
    int stage = 0;
    int epoch = 0;  // global, 0-based
    double lr = 0;  // last learning rate used in the epoch
    LossBreakdown train;
    double val_mape = 0;  // first horizon, price space
    double val_da = 0;
};

struct TrainResult {
    std::vector<EpochLog> history;
    int best_epoch = -1;       // epoch whose validation MAPE was lowest
    double best_val_mape = 0;  // the parameters in the store are from it
    int total_steps = 0;
};

// Three-stage schedule: freeze masks per stage (asserted bit-exact on exit),
// per-stage warmup-cosine learning rate, gradient accumulation, per-epoch
// validation, best-checkpoint restore at the end. Non-finite loss aborts with
// a TrainError naming stage, epoch and the term values.
TrainResult run_training_stages(const Nodeformer& model, const FeatureDataset& ds,
                                const SentimentPanel& sent, const ad::Array& edges,
                                const TrainConfig& tc);

}  // namespace nodecast
