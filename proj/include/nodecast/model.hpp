#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nodecast/optimizer.hpp"
#include "nodecast/tensor.hpp"

namespace nodecast {

// Architecture hyperparameters plus the ablation switches. The switches only
// control which terms enter the forward pass; parameter initialization is
// keyed by name, so a variant shares bit-identical weights with the full
// model on every parameter it keeps.
struct ModelConfig {
    int layers = 2;
    int heads = 4;
    int d_model = 64;
    int d_ff = 256;
    double dropout = 0.1;
    int seq_len = 64;   // T, trading days per input window
    int n_stocks = 20;  // N
    int d_in = 17;      // per-stock features per day
    int d_stock = 8;    // stock embedding width before projection
    int sent_hidden = 8;
    std::vector<int> horizons = {1, 5, 20};

    bool use_sentiment = true;  // key scaling, sentiment branch, fusion gate
    bool use_graph = true;      // edge bias in cross attention + refinement
    bool use_te = true;         // temporal encoding
    bool use_gating = true;     // per-feature sigmoid gate on the inputs
    bool use_cross = true;      // cross-sectional stage itself (tests only)
    bool price_only = false;    // raw OHLCV/adjusted/volume features only

    int d_k() const { return d_model / heads; }
    int n_horizons() const { return static_cast<int>(horizons.size()); }

    // ConfigError on inconsistent dimensions (d_model not divisible by heads,
    // odd d_model, bad dropout, empty or non-increasing horizons, ...).
    void validate() const;
};

// Sinusoidal position code for one window-relative position:
//   even slots sin(t / 10000^(2k/d)), odd slots cos of the same angle.
// d must be even: ConfigError.
std::vector<double> temporal_encoding(int t_index, int d);

// Fusion weight from market state: sigmoid(w . [vol5, vol10, vol20, |s|] + b).
// gate_in and w have 4 elements, b has 1; the result is a 1-element tensor
// strictly inside (0, 1).
ad::Var compute_gate(ad::Tape& t, ad::Var gate_in, ad::Var w, ad::Var b);

// Convex blend alpha * y_node + (1 - alpha) * y_sent; alpha is 1-element.
ad::Var fuse(ad::Tape& t, ad::Var y_node, ad::Var y_sent, ad::Var alpha);

// Rows 0..T-1 stacked, shape [T, d].
ad::Array temporal_encoding_matrix(int T, int d);

// One training/evaluation window, assembled by the caller. Everything here is
// data: constants on the tape, never differentiated.
struct ModelInputs {
    ad::Array x;          // [T, N, d_in] normalized features
    ad::Array sent_s1;    // [T, N] daily sentiment, zeros when absent
    ad::Array sent_last;  // [N, 3] (s1, s5, s20) at the window end
    ad::Array gate_in;    // [4] market vol over 5/10/20 days + mean |sentiment|
    ad::Array edges;      // [N, N] initial edge weights, symmetric
};

struct ModelOutputs {
    ad::Var y_hat = nullptr;   // [N, n_horizons] fused prediction (z-space)
    ad::Var y_node = nullptr;  // [N, n_horizons] transformer branch
    ad::Var y_sent = nullptr;  // [N, n_horizons] sentiment branch (= y_node
                               // when the sentiment path is off)
    ad::Var p_up = nullptr;    // [N, n_horizons] direction probabilities
    ad::Var alpha = nullptr;   // [1] fusion weight on the transformer branch
    ad::Var anchor = nullptr;  // [N] last normalized close (the persistence
                               // prediction both price heads start from)
    ad::Var states = nullptr;  // [T, N, d_model] final-layer representations

    std::vector<ad::Var> temporal_attn;  // per layer [N, H, T, T]
    std::vector<ad::Var> cross_attn;     // per layer [T, H, N, N]
    std::vector<ad::Var> edges_used;     // per layer [N, N]
};

// The graph-aware transformer. Factorized attention: each layer runs causal
// multi-head attention along time for every stock, then attention across
// stocks at every time step with the edge matrix as an additive bias, with
// one residual + layer norm around the pair and another around the FFN. Edge
// weights are refined between layers from time-averaged representations.
// Price and direction heads read the final time position; both price heads
// are anchored at the last observed normalized close, so a freshly
// initialized model predicts persistence exactly.
class Nodeformer {
public:
    // Registers every parameter the configured variant uses in `store`.
    Nodeformer(ModelConfig cfg, ad::ParamStore& store, uint64_t seed);

    // Builds the forward graph for one window. `dropout_rng` is required in
    // train mode when dropout > 0; eval mode is deterministic.
    ModelOutputs forward(ad::Tape& t, const ModelInputs& in, bool train = false,
                         Rng* dropout_rng = nullptr) const;

    const ModelConfig& config() const { return cfg_; }
    ad::ParamStore& store() const { return *store_; }

    // Name groups for staged freezing and the regularizer.
    std::vector<std::string> sentiment_fusion_params() const;  // branch, gate, beta
    std::vector<std::string> head_params() const;
    std::vector<std::string> layer_params(int layer) const;
    std::vector<std::string> embed_params() const;  // projection, embeddings, gate
    std::vector<std::string> edge_params() const;
    std::vector<std::string> all_params() const;

private:
    ModelConfig cfg_;
    ad::ParamStore* store_;
};

}  // namespace nodecast
