#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "nodecast/gradcheck.hpp"
#include "nodecast/graph.hpp"
#include "nodecast/synthgen.hpp"
#include "nodecast/training.hpp"

using namespace nodecast;

namespace {

struct Fixture {
    FeatureDataset ds;
    SentimentPanel sent;
    ad::Array edges;
    std::vector<std::string> tickers;
};

Fixture make_fixture(int n_stocks, int n_days, uint64_t seed, double ar = 0.3,
                     double lead = 0.0, bool with_sentiment = true) {
    SynthConfig sc;
    sc.n_stocks = n_stocks;
    sc.n_days = n_days;
    sc.seed = seed;
    sc.return_ar_coeff = ar;
    sc.sentiment_lead_strength = lead;
    auto market = generate_market(sc);

    Fixture fx;
    fx.ds = build_dataset(market, 0.7, 0.15, 0.15);
    if (with_sentiment)
        fx.sent = build_sentiment_panel(generate_sentiment(market, sc), fx.ds.calendar);

    std::vector<std::vector<double>> rets(n_stocks);
    std::vector<int> sectors;
    for (int i = 0; i < n_stocks; ++i) {
        fx.tickers.push_back(market[i].ticker);
        sectors.push_back(market[i].sector);
        for (int d = 1; d < fx.ds.split.n_train; ++d)
            rets[i].push_back(fx.ds.close_at(d, i) / fx.ds.close_at(d - 1, i) - 1.0);
    }
    MarketGraph g = init_edges(rets, fx.tickers, sectors, 0.5);
    fx.edges = ad::Array({n_stocks, n_stocks}, g.edges);
    return fx;
}

ModelConfig desk_config(int n_stocks, int T, const std::vector<int>& horizons) {
    ModelConfig mc;
    mc.layers = 2;
    mc.heads = 2;
    mc.d_model = 16;
    mc.d_ff = 32;
    mc.dropout = 0.0;
    mc.seq_len = T;
    mc.n_stocks = n_stocks;
    mc.d_stock = 4;
    mc.sent_hidden = 4;
    mc.horizons = horizons;
    return mc;
}

}  // namespace

TEST_CASE("fusion gate hand values") {
    ad::Tape t;
    ad::Var gi = t.constant(ad::Array({4}, {0.01, 0.02, 0.03, 0.4}));
    ad::Var w0 = t.constant(ad::Array({4}, {0, 0, 0, 0}));
    ad::Var b0 = t.constant(ad::Array({1}, {0}));
    CHECK(compute_gate(t, gi, w0, b0)->val.at(0) == 0.5);

    ad::Var bhi = t.constant(ad::Array({1}, {20.0}));
    CHECK(compute_gate(t, gi, w0, bhi)->val.at(0) == doctest::Approx(1.0).epsilon(1e-8));

    ad::Var w = t.constant(ad::Array({4}, {1.0, -2.0, 0.5, 0.1}));
    ad::Var b = t.constant(ad::Array({1}, {0.3}));
    const double z = 0.01 - 0.04 + 0.015 + 0.04 + 0.3;
    CHECK(compute_gate(t, gi, w, b)->val.at(0) ==
          doctest::Approx(1.0 / (1.0 + std::exp(-z))).epsilon(1e-12));

    auto rep = ad::check_inputs(
        {ad::Array({4}, {0.01, 0.02, 0.03, 0.4}), ad::Array({4}, {0.3, -0.2, 0.1, 0.5}),
         ad::Array({1}, {0.1})},
        [](ad::Tape& tt, std::vector<ad::Var> in) {
            return ad::mean_all(compute_gate(tt, in[0], in[1], in[2]));
        });
    CHECK(rep.ok(1e-4));

    ad::Var w3 = t.constant(ad::Array({3}, {0, 0, 0}));
    CHECK_THROWS_AS(compute_gate(t, gi, w3, b0), ShapeError);
}

TEST_CASE("fuse is a convex blend") {
    ad::Tape t;
    ad::Var yn = t.constant(ad::Array({3, 2}, {1, 2, 3, 4, 5, 6}));
    ad::Var ys = t.constant(ad::Array({3, 2}, {6, 5, 4, 3, 2, 1}));

    ad::Var one = t.constant(ad::Array({1}, {1.0}));
    CHECK(fuse(t, yn, ys, one)->val.data == yn->val.data);

    ad::Var zero = t.constant(ad::Array({1}, {0.0}));
    CHECK(fuse(t, yn, ys, zero)->val.data == ys->val.data);

    ad::Var a = t.constant(ad::Array({1}, {0.37}));
    CHECK(fuse(t, yn, yn, a)->val.data == yn->val.data);

    ad::Var mix = fuse(t, yn, ys, a);
    for (int i = 0; i < 6; ++i) {
        const double lo = std::min(yn->val.at(i), ys->val.at(i));
        const double hi = std::max(yn->val.at(i), ys->val.at(i));
        CHECK(mix->val.at(i) >= lo - 1e-12);
        CHECK(mix->val.at(i) <= hi + 1e-12);
        CHECK(mix->val.at(i) ==
              doctest::Approx(0.37 * yn->val.at(i) + 0.63 * ys->val.at(i)).epsilon(1e-12));
    }

    ad::Var bad = t.constant(ad::Array({2, 2}, {1, 2, 3, 4}));
    CHECK_THROWS_AS(fuse(t, yn, bad, a), ShapeError);
    CHECK_THROWS_AS(fuse(t, yn, ys, bad), ShapeError);
}

TEST_CASE("loss weight validation") {
    LossWeights w;
    w.validate();
    w.mse = 0;
    CHECK_THROWS_AS(w.validate(), ConfigError);
    w.mse = 1;
    w.corr = -0.1;
    CHECK_THROWS_AS(w.validate(), ConfigError);
    w.corr = std::nan("");
    CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("composite loss reductions") {
    // one hand-built window: 3 stocks, 1 horizon
    auto targets = [] {
        WindowTargets tgt;
        tgt.y = ad::Array({3, 1}, {0.5, -0.2, 1.0});
        tgt.dir = ad::Array({3, 1}, {1, 0, 1});
        tgt.ret_a = ad::Array({3}, {0.02, 0.05, 0.01});
        tgt.ret_b = ad::Array({3}, {0.001, -0.002, 0.0});
        tgt.ret = ad::Array({3}, {});
        for (int i = 0; i < 3; ++i)
            tgt.ret.data.push_back(tgt.ret_a.at(i) * tgt.y.at(i) + tgt.ret_b.at(i));
        return tgt;
    }();

    ModelConfig mc = desk_config(3, 4, {1});
    ad::ParamStore store;
    Nodeformer model(mc, store, 1);

    auto outputs = [&](ad::Tape& t, std::vector<double> yhat, std::vector<double> pup) {
        ModelOutputs out;
        out.y_hat = t.constant(ad::Array({3, 1}, std::move(yhat)));
        out.p_up = t.constant(ad::Array({3, 1}, std::move(pup)));
        return out;
    };

    SUBCASE("perfect predictions vanish") {
        ad::Tape t;
        LossWeights w;
        w.reg = 0;
        LossBreakdown parts;
        auto out = outputs(t, {0.5, -0.2, 1.0}, {1 - 1e-9, 1e-9, 1 - 1e-9});
        ad::Var loss = composite_loss(t, model, {out}, {targets}, w, &parts);
        CHECK(loss->val.at(0) < 1e-5);
        CHECK(parts.mse == 0.0);
        CHECK(parts.corr == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(parts.corr_used == 1);
    }

    SUBCASE("only the squared term when the rest is off") {
        ad::Tape t;
        LossWeights w;
        w.dir = w.corr = w.reg = 0;
        auto out = outputs(t, {0.6, -0.1, 0.8}, {0.7, 0.4, 0.6});
        LossBreakdown parts;
        ad::Var loss = composite_loss(t, model, {out}, {targets}, w, &parts);
        const double mse = (0.01 + 0.01 + 0.04) / 3.0;
        CHECK(loss->val.at(0) == doctest::Approx(mse).epsilon(1e-12));
        CHECK(parts.total == doctest::Approx(mse).epsilon(1e-12));
    }

    SUBCASE("correlation extremes") {
        LossWeights w;
        w.mse = 1;
        w.dir = w.reg = 0;
        w.corr = 1;

        // predictions whose mapped returns equal the realized ones
        ad::Tape t1;
        LossBreakdown parts;
        auto aligned = outputs(t1, {0.5, -0.2, 1.0}, {0.5, 0.5, 0.5});
        composite_loss(t1, model, {aligned}, {targets}, w, &parts);
        CHECK(parts.corr == doctest::Approx(0.0).epsilon(1e-9));

        // mapped returns = exact negation of realized ones
        WindowTargets anti = targets;
        for (int i = 0; i < 3; ++i) anti.ret.data[i] = -anti.ret.data[i];
        ad::Tape t2;
        auto out = outputs(t2, {0.5, -0.2, 1.0}, {0.5, 0.5, 0.5});
        composite_loss(t2, model, {out}, {anti}, w, &parts);
        CHECK(parts.corr == doctest::Approx(2.0).epsilon(1e-9));
    }

    SUBCASE("degenerate cross-sections are skipped and counted") {
        WindowTargets flat = targets;
        flat.ret.data = {0.01, 0.01, 0.01};
        ad::Tape t;
        LossWeights w;
        auto out = outputs(t, {0.6, -0.1, 0.8}, {0.7, 0.4, 0.6});
        LossBreakdown parts;
        composite_loss(t, model, {out, out}, {targets, flat}, w, &parts);
        CHECK(parts.corr_used == 1);
        CHECK(parts.corr_skipped == 1);
    }

    SUBCASE("direction term matches a hand computation") {
        ad::Tape t;
        LossWeights w;
        w.mse = 1;
        w.dir = 1;
        w.corr = w.reg = 0;
        auto out = outputs(t, {0.5, -0.2, 1.0}, {0.7, 0.4, 0.6});
        LossBreakdown parts;
        composite_loss(t, model, {out}, {targets}, w, &parts);
        const double bce =
            -(std::log(0.7) + std::log(1 - 0.4) + std::log(0.6)) / 3.0;
        CHECK(parts.dir == doctest::Approx(bce).epsilon(1e-12));
    }

    SUBCASE("regularizer sums squares of open parameters") {
        ad::Tape t;
        LossWeights w;
        w.mse = 1;
        w.dir = w.corr = 0;
        w.reg = 1;
        auto out = outputs(t, {0.5, -0.2, 1.0}, {0.5, 0.5, 0.5});
        LossBreakdown parts;
        composite_loss(t, model, {out}, {targets}, w, &parts);
        double ssq = 0;
        for (int id = 0; id < static_cast<int>(store.count()); ++id)
            for (double v : store.entry(id).value) ssq += v * v;
        CHECK(parts.reg == doctest::Approx(ssq).epsilon(1e-9));

        // freezing removes a parameter from the penalty
        store.set_frozen("embed.w", true);
        ad::Tape t2;
        auto out2 = outputs(t2, {0.5, -0.2, 1.0}, {0.5, 0.5, 0.5});
        composite_loss(t2, model, {out2}, {targets}, w, &parts);
        double open_ssq = 0;
        for (int id = 0; id < static_cast<int>(store.count()); ++id) {
            if (store.entry(id).frozen) continue;
            for (double v : store.entry(id).value) open_ssq += v * v;
        }
        CHECK(parts.reg == doctest::Approx(open_ssq).epsilon(1e-9));
        CHECK(open_ssq < ssq);
        store.set_frozen("embed.w", false);
    }
}

TEST_CASE("window end arithmetic") {
    auto ends = window_ends(0, 99, 64, 1);
    REQUIRE(ends.size() == 36);
    CHECK(ends.front() == 63);
    CHECK(ends.back() == 98);
    for (int e : ends) {
        CHECK(e - 64 + 1 >= 0);
        CHECK(e + 1 <= 99);
    }
    CHECK(window_ends(10, 99, 64, 1).size() == 26);
    CHECK_THROWS_AS(window_ends(0, 63, 64, 1), ConfigError);
    CHECK_THROWS_AS(window_ends(0, 99, 0, 1), ConfigError);
}

TEST_CASE("training windows stay inside their split") {
    Fixture fx = make_fixture(4, 260, 11);
    const std::vector<int> horizons = {1, 5};
    const int T = 16;

    for (int region : {0, 1, 2}) {
        auto ends = make_training_windows(fx.ds, region, T, horizons);
        REQUIRE(!ends.empty());
        for (int e : ends) {
            const int first_in = e - T + 1 + fx.ds.warmup;
            CHECK(fx.ds.split.region_of(first_in) == region);
            for (int h : horizons) CHECK(fx.ds.split.region_of(e + h + fx.ds.warmup) == region);
        }
    }
    // no window end is shared between regions
    auto r0 = make_training_windows(fx.ds, 0, T, horizons);
    auto r1 = make_training_windows(fx.ds, 1, T, horizons);
    CHECK(r0.back() + horizons.back() < r1.front() - T + 1 + horizons.back());

    CHECK_THROWS_AS(make_training_windows(fx.ds, 1, 1000, horizons), ConfigError);
}

TEST_CASE("shuffle is deterministic under the seed") {
    std::vector<int> a(100), b(100);
    for (int i = 0; i < 100; ++i) a[i] = b[i] = i;
    shuffle_windows(a, 7, 3);
    shuffle_windows(b, 7, 3);
    CHECK(a == b);

    std::vector<int> c(100);
    for (int i = 0; i < 100; ++i) c[i] = i;
    shuffle_windows(c, 7, 4);
    CHECK(a != c);

    std::sort(a.begin(), a.end());
    std::sort(c.begin(), c.end());
    CHECK(a == c);  // permutations of the same set
}

TEST_CASE("window slices line up with the dataset") {
    Fixture fx = make_fixture(4, 300, 21, 0.2, 0.6);
    const int T = 16;
    const std::vector<int> horizons = {1, 5};
    auto ends = make_training_windows(fx.ds, 0, T, horizons);
    const int end = ends[ends.size() / 2];
    const int c = end + fx.ds.warmup;

    ModelInputs in = make_window_inputs(fx.ds, fx.sent, fx.edges, end, T, 17);
    REQUIRE(in.x.shape == std::vector<int>{T, 4, 17});
    for (int k = 0; k < T; ++k)
        for (int i = 0; i < 4; ++i)
            for (int f = 0; f < 17; ++f)
                CHECK(in.x.at((k * 4 + i) * 17 + f) == fx.ds.features.at(end - T + 1 + k, i, f));

    for (int i = 0; i < 4; ++i) {
        CHECK(in.sent_s1.at((T - 1) * 4 + i) == fx.sent.by_stock[i][c].s1);
        CHECK(in.sent_s1.at(0 * 4 + i) == fx.sent.by_stock[i][c - T + 1].s1);
        CHECK(in.sent_last.at(i * 3 + 0) == fx.sent.by_stock[i][c].s1);
        CHECK(in.sent_last.at(i * 3 + 1) == fx.sent.by_stock[i][c].s5);
        CHECK(in.sent_last.at(i * 3 + 2) == fx.sent.by_stock[i][c].s20);
    }

    // the volatility entries agree with a direct recomputation
    const int windows[3] = {5, 10, 20};
    for (int wi = 0; wi < 3; ++wi) {
        const int w = windows[wi];
        double acc = 0;
        for (int i = 0; i < 4; ++i) {
            std::vector<double> r;
            for (int k = 0; k < w; ++k)
                r.push_back(fx.ds.close_at(c - w + k + 1, i) / fx.ds.close_at(c - w + k, i) - 1.0);
            double mean = 0;
            for (double v : r) mean += v;
            mean /= w;
            double var = 0;
            for (double v : r) var += (v - mean) * (v - mean);
            acc += std::sqrt(var / w);
        }
        CHECK(in.gate_in.at(wi) == doctest::Approx(acc / 4).epsilon(1e-12));
    }
    double mabs = 0;
    for (int i = 0; i < 4; ++i) mabs += std::abs(fx.sent.by_stock[i][c].s1);
    CHECK(in.gate_in.at(3) == doctest::Approx(mabs / 4).epsilon(1e-12));

    // a panel-free assembly feeds zeros
    SentimentPanel none;
    ModelInputs quiet = make_window_inputs(fx.ds, none, fx.edges, end, T, 17);
    for (double v : quiet.sent_s1.data) CHECK(v == 0.0);
    CHECK(quiet.gate_in.at(3) == 0.0);

    WindowTargets tgt = make_window_targets(fx.ds, end, horizons);
    for (int i = 0; i < 4; ++i) {
        CHECK(tgt.y.at(i * 2 + 0) == fx.ds.features.at(end + 1, i, 3));
        CHECK(tgt.y.at(i * 2 + 1) == fx.ds.features.at(end + 5, i, 3));
        const double prior = fx.ds.close_at(c, i);
        CHECK(tgt.dir.at(i * 2 + 0) == (fx.ds.close_at(c + 1, i) > prior ? 1.0 : 0.0));
        CHECK(tgt.ret.at(i) == doctest::Approx(fx.ds.close_at(c + 1, i) / prior - 1.0).epsilon(1e-12));
        // the affine map reproduces (denormalized price -> return) exactly
        for (double z : {-1.3, 0.0, 0.8}) {
            const double direct = (fx.ds.denormalize_close(end + 1, i, z) - prior) / prior;
            CHECK(tgt.ret_a.at(i) * z + tgt.ret_b.at(i) == doctest::Approx(direct).epsilon(1e-12));
        }
    }

    CHECK_THROWS_AS(make_window_inputs(fx.ds, fx.sent, fx.edges, T - 2, T, 17), ConfigError);
    CHECK_THROWS_AS(make_window_targets(fx.ds, fx.ds.features.n_days() - 1, horizons),
                    ConfigError);
}

TEST_CASE("schedule defaults match the published recipe") {
    TrainConfig tc;
    CHECK(tc.total_epochs() == 60);
    REQUIRE(tc.stages.size() == 3);
    CHECK(tc.stages[0].epochs == 10);
    CHECK(tc.stages[0].peak_lr == 1e-4);
    CHECK(tc.stages[0].unfreeze_top_layers == 0);
    CHECK(tc.stages[1].epochs == 20);
    CHECK(tc.stages[1].peak_lr == 5e-5);
    CHECK(tc.stages[1].unfreeze_top_layers == 3);
    CHECK(tc.stages[2].epochs == 30);
    CHECK(tc.stages[2].peak_lr == 1e-5);
    CHECK(tc.stages[2].unfreeze_top_layers == -1);
    CHECK(tc.batch_size == 32);
    CHECK(tc.grad_accum == 4);
    CHECK(tc.warmup_steps == 4000);

    TrainConfig bad = tc;
    bad.stages[1].epochs = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = tc;
    bad.batch_size = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("stage one leaves the transformer untouched") {
    Fixture fx = make_fixture(4, 220, 31);
    ModelConfig mc = desk_config(4, 12, {1});
    ad::ParamStore store;
    Nodeformer model(mc, store, 31);

    std::vector<std::string> locked = model.embed_params();
    for (int l = 0; l < mc.layers; ++l)
        for (const auto& n : model.layer_params(l)) locked.push_back(n);
    for (const auto& n : model.edge_params()) locked.push_back(n);
    std::vector<std::vector<double>> before;
    for (const auto& n : locked) before.push_back(store.entry(store.id(n)).value);
    const std::vector<double> head_before = store.entry(store.id("head.price.w")).value;
    const std::vector<double> fuse_before = store.entry(store.id("fuse.w")).value;

    TrainConfig tc;
    tc.stages = {{2, 1e-3, 0}};
    tc.batch_size = 16;
    tc.grad_accum = 1;
    tc.warmup_steps = 4;
    tc.seed = 5;
    TrainResult res = run_training_stages(model, fx.ds, fx.sent, fx.edges, tc);

    for (size_t k = 0; k < locked.size(); ++k)
        CHECK(store.entry(store.id(locked[k])).value == before[k]);
    CHECK(store.entry(store.id("head.price.w")).value != head_before);
    CHECK(store.entry(store.id("fuse.w")).value != fuse_before);
    CHECK(res.history.size() == 2);
}

TEST_CASE("stage two only reaches the top layers") {
    Fixture fx = make_fixture(4, 220, 32);
    ModelConfig mc = desk_config(4, 12, {1});
    mc.layers = 3;  // so "top 2" leaves the bottom layer frozen
    ad::ParamStore store;
    Nodeformer model(mc, store, 32);

    const std::vector<double> l0 = store.entry(store.id("l0.t.wq")).value;
    const std::vector<double> l2 = store.entry(store.id("l2.t.wq")).value;
    const std::vector<double> emb = store.entry(store.id("embed.w")).value;

    TrainConfig tc;
    tc.stages = {{1, 1e-3, 2}};
    tc.batch_size = 16;
    tc.grad_accum = 1;
    tc.warmup_steps = 2;
    tc.seed = 6;
    run_training_stages(model, fx.ds, fx.sent, fx.edges, tc);

    CHECK(store.entry(store.id("l0.t.wq")).value == l0);
    CHECK(store.entry(store.id("embed.w")).value == emb);
    CHECK(store.entry(store.id("l2.t.wq")).value != l2);
}

TEST_CASE("history bookkeeping and best checkpoint") {
    Fixture fx = make_fixture(4, 220, 33);
    ModelConfig mc = desk_config(4, 12, {1});
    ad::ParamStore store;
    Nodeformer model(mc, store, 33);

    TrainConfig tc;
    tc.stages = {{2, 5e-4, 0}, {2, 5e-4, -1}};
    tc.batch_size = 16;
    tc.grad_accum = 2;
    tc.warmup_steps = 3;
    tc.seed = 7;
    TrainResult res = run_training_stages(model, fx.ds, fx.sent, fx.edges, tc);

    REQUIRE(res.history.size() == 4);
    for (int e = 0; e < 4; ++e) {
        CHECK(res.history[e].epoch == e);
        CHECK(res.history[e].stage == e / 2);
        CHECK(std::isfinite(res.history[e].train.total));
        CHECK(res.history[e].train.total >= 0.0);
        CHECK(res.history[e].val_mape >= 0.0);
    }
    double best = res.history[0].val_mape;
    for (const auto& log : res.history) best = std::min(best, log.val_mape);
    CHECK(res.best_val_mape == best);
    CHECK(res.history[res.best_epoch].val_mape == best);

    // the store holds the winning checkpoint: re-running validation reproduces it
    auto val_ends = make_training_windows(fx.ds, 1, mc.seq_len, mc.horizons);
    double ape = 0;
    int n = 0;
    for (int end : val_ends) {
        ad::Tape t;
        ModelInputs in = make_window_inputs(fx.ds, fx.sent, fx.edges, end, mc.seq_len, mc.d_in);
        ModelOutputs out = model.forward(t, in);
        for (int i = 0; i < 4; ++i) {
            const double pred =
                fx.ds.denormalize_close(end + 1, i, out.y_hat->val.at(i * mc.n_horizons()));
            const double truth = fx.ds.close_at(end + 1 + fx.ds.warmup, i);
            ape += std::abs((pred - truth) / truth);
            ++n;
        }
    }
    CHECK(100.0 * ape / n == doctest::Approx(res.best_val_mape).epsilon(1e-9));

    // emitted fused predictions respect the convexity bound
    ad::Tape t;
    ModelInputs in =
        make_window_inputs(fx.ds, fx.sent, fx.edges, val_ends.front(), mc.seq_len, mc.d_in);
    ModelOutputs out = model.forward(t, in);
    for (int i = 0; i < out.y_hat->size(); ++i) {
        const double lo = std::min(out.y_node->val.at(i), out.y_sent->val.at(i));
        const double hi = std::max(out.y_node->val.at(i), out.y_sent->val.at(i));
        CHECK(out.y_hat->val.at(i) >= lo - 1e-12);
        CHECK(out.y_hat->val.at(i) <= hi + 1e-12);
    }
}

TEST_CASE("non-finite loss aborts with a diagnostic") {
    Fixture fx = make_fixture(4, 220, 34);
    ModelConfig mc = desk_config(4, 12, {1});
    ad::ParamStore store;
    Nodeformer model(mc, store, 34);
    // an overflowed head bias sends the squared error to infinity
    for (double& v : store.entry(store.id("head.price.b")).value)
        v = std::numeric_limits<double>::infinity();

    TrainConfig tc;
    tc.stages = {{1, 1e-4, -1}};
    tc.batch_size = 8;
    tc.grad_accum = 1;
    tc.weights.dir = 0;
    tc.weights.corr = 0;
    CHECK_THROWS_AS(run_training_stages(model, fx.ds, fx.sent, fx.edges, tc), TrainError);
}

TEST_CASE("whole objective passes a finite-difference check") {
    Fixture fx = make_fixture(3, 220, 35, 0.3, 0.5);
    ModelConfig mc = desk_config(3, 8, {1, 5});
    ad::ParamStore store;
    Nodeformer model(mc, store, 35);
    // spread the zero-initialized heads so every path carries gradient
    for (const char* n : {"head.price.w", "head.dir.w", "sent.w2", "fuse.w"}) {
        auto& e = store.entry(store.id(n));
        Rng r(36, n);
        for (double& v : e.value) v = r.normal() * 0.2;
    }

    auto ends = make_training_windows(fx.ds, 0, mc.seq_len, mc.horizons);
    std::vector<int> picks = {ends.front(), ends[ends.size() / 2]};
    LossWeights w;

    auto report = ad::check_params(store, [&](ad::Tape& t) {
        std::vector<ModelOutputs> outs;
        std::vector<WindowTargets> tgts;
        for (int end : picks) {
            ModelInputs in = make_window_inputs(fx.ds, fx.sent, fx.edges, end, mc.seq_len, mc.d_in);
            outs.push_back(model.forward(t, in));
            tgts.push_back(make_window_targets(fx.ds, end, mc.horizons));
        }
        return composite_loss(t, model, outs, tgts, w);
    });
    INFO("worst ", report.worst_param, "[", report.worst_index, "] rel ", report.max_rel);
    CHECK(report.ok(1e-4));
}

TEST_CASE("desk-scale run overfits its training windows") {
    SynthConfig sc;
    sc.n_stocks = 4;
    sc.n_days = 369;
    sc.seed = 40;
    sc.return_ar_coeff = 0.95;
    auto market = generate_market(sc);
    FeatureDataset ds = build_dataset(market, 0.7, 0.15, 0.15);

    std::vector<std::vector<double>> rets(4);
    std::vector<std::string> tickers;
    std::vector<int> sectors;
    for (int i = 0; i < 4; ++i) {
        tickers.push_back(market[i].ticker);
        sectors.push_back(market[i].sector);
        for (int d = 1; d < ds.split.n_train; ++d)
            rets[i].push_back(ds.close_at(d, i) / ds.close_at(d - 1, i) - 1.0);
    }
    ad::Array edges(
        {4, 4}, init_edges(rets, tickers, sectors, 0.5).edges);

    ModelConfig mc = desk_config(4, 32, {1});
    mc.d_model = 32;
    mc.d_ff = 256;
    mc.use_sentiment = false;
    ad::ParamStore store;
    Nodeformer model(mc, store, 40);

    auto train_ends = make_training_windows(ds, 0, 32, {1});
    CHECK(train_ends.size() == 200);

    TrainConfig tc;
    tc.stages = {{1, 5e-3, 0}, {1, 5e-3, 3}, {30, 5e-3, -1}, {10, 2e-3, -1}};
    tc.batch_size = 16;
    tc.grad_accum = 1;
    tc.warmup_steps = 10;
    tc.seed = 40;
    tc.val_stride = 8;
    tc.weights.dir = 0;
    tc.weights.corr = 0;
    tc.weights.reg = 0;
    tc.verbose = false;
    TrainResult res = run_training_stages(model, ds, SentimentPanel{}, edges, tc);

    const double first = res.history.front().train.mse;
    const double last = res.history.back().train.mse;
    INFO("training mse ", first, " -> ", last);
    CHECK(last < 0.1 * first);
}
