#pragma once

#include <string>
#include <vector>

#include "nodecast/tensor.hpp"

namespace nodecast {

// Static stock graph used to bias attention. Fully connected with soft edge
// weights in [0,1]; symmetric; self-edges pinned to 1.
struct MarketGraph {
    int n_nodes = 0;
    std::vector<std::string> tickers;
    std::vector<int> sectors;
    std::vector<double> edges;  // n_nodes * n_nodes
    double alpha = 0.5;

    double at(int i, int j) const { return edges[i * n_nodes + j]; }
};

// Initial edges from sector membership and historical co-movement:
// e_ij = alpha * [same sector] + (1 - alpha) * max(0, corr_ij), with Pearson
// correlation taken over the training-period returns. NaN entries in a return
// series mean "no observation that day"; every pair must share at least 30
// observed days (GraphError naming the pair otherwise). A pair where either
// side never moves carries no correlation signal and contributes 0.
MarketGraph init_edges(const std::vector<std::vector<double>>& train_returns,
                       const std::vector<std::string>& tickers, const std::vector<int>& sectors,
                       double alpha);

// Learnable edge update from node representations:
// raw_ij = sigmoid(w_e . [h_i || h_j] + b_e), then symmetrized as
// (raw_ij + raw_ji)/2 with the diagonal reset to 1. h: [N, d]; w_e: [2d];
// b_e: [1]. Differentiable in all three.
ad::Var refine_edges(ad::Tape& t, ad::Var h, ad::Var w_e, ad::Var b_e);

}  // namespace nodecast
