#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nodecast/errors.hpp"
#include "nodecast/gradcheck.hpp"
#include "nodecast/graph.hpp"
#include "nodecast/synthgen.hpp"

using namespace nodecast;
using ad::Array;
using ad::Tape;
using ad::Var;

namespace {

// Two zero-mean orthogonal +-1 patterns; y = 3x + 4z has sample correlation
// with x of exactly 3/5 (integer sums, sqrt(25600) = 160).
std::vector<std::vector<double>> corr06_returns() {
    std::vector<double> x(32), z(32);
    for (int t = 0; t < 32; ++t) {
        x[t] = t % 2 ? -1.0 : 1.0;
        z[t] = (t / 2) % 2 ? -1.0 : 1.0;
    }
    std::vector<double> y(32);
    for (int t = 0; t < 32; ++t) y[t] = 3.0 * x[t] + 4.0 * z[t];
    return {x, y};
}

Array rand_h(int n, int d, uint64_t seed) {
    Rng rng(seed, "h");
    Array a = Array::zeros({n, d});
    for (auto& v : a.data) v = rng.uniform(-1.0, 1.0);
    return a;
}

}  // namespace

TEST_CASE("init_edges blends sector membership with clamped correlation") {
    auto rets = corr06_returns();

    auto g = init_edges(rets, {"A", "B"}, {0, 0}, 0.5);
    CHECK(g.at(0, 1) == 0.8);
    CHECK(g.at(1, 0) == 0.8);
    CHECK(g.at(0, 0) == 1.0);
    CHECK(g.at(1, 1) == 1.0);

    g = init_edges(rets, {"A", "B"}, {0, 1}, 0.5);
    CHECK(g.at(0, 1) == doctest::Approx(0.3).epsilon(1e-12));

    // negate one side: correlation -0.6, clamped away entirely
    auto anti = rets;
    for (auto& v : anti[1]) v = -v;
    g = init_edges(anti, {"A", "B"}, {0, 1}, 0.5);
    CHECK(g.at(0, 1) == 0.0);
    g = init_edges(anti, {"A", "B"}, {0, 0}, 0.5);
    CHECK(g.at(0, 1) == 0.5);

    // alpha 1 reduces to the sector block indicator
    g = init_edges(rets, {"A", "B"}, {0, 1}, 1.0);
    CHECK(g.at(0, 1) == 0.0);
    g = init_edges(rets, {"A", "B"}, {0, 0}, 1.0);
    CHECK(g.at(0, 1) == 1.0);
}

TEST_CASE("init_edges: overlap requirement names the offending pair") {
    auto rets = corr06_returns();
    // knock out three of B's days: overlap 29
    rets[1][0] = rets[1][1] = rets[1][2] = std::nan("");
    try {
        init_edges(rets, {"AAA", "BBB"}, {0, 0}, 0.5);
        FAIL("expected GraphError");
    } catch (const GraphError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("AAA") != std::string::npos);
        CHECK(msg.find("BBB") != std::string::npos);
        CHECK(msg.find("29") != std::string::npos);
    }

    // exactly 30 overlapping days is enough
    auto rets30 = corr06_returns();
    rets30[1][0] = rets30[1][1] = std::nan("");
    CHECK_NOTHROW(init_edges(rets30, {"AAA", "BBB"}, {0, 0}, 0.5));

    CHECK_THROWS_AS(init_edges(corr06_returns(), {"A", "B"}, {0, 0}, 1.5), ConfigError);
}

TEST_CASE("init_edges: flat series contributes zero correlation") {
    auto rets = corr06_returns();
    for (auto& v : rets[1]) v = 0.0;
    auto g = init_edges(rets, {"A", "B"}, {0, 0}, 0.5);
    CHECK(g.at(0, 1) == 0.5);
}

TEST_CASE("init_edges recovers planted sector structure") {
    SynthConfig cfg;
    cfg.n_days = 400;
    cfg.n_stocks = 8;
    cfg.n_sectors = 2;
    cfg.sector_factor_strength = 0.85;
    auto mkt = generate_market(cfg);

    const int train_days = 280;
    std::vector<std::vector<double>> rets(mkt.size());
    std::vector<std::string> tickers;
    std::vector<int> sectors;
    for (size_t i = 0; i < mkt.size(); ++i) {
        for (int t = 1; t < train_days; ++t)
            rets[i].push_back(mkt[i].bars[t].close / mkt[i].bars[t - 1].close - 1.0);
        tickers.push_back(mkt[i].ticker);
        sectors.push_back(mkt[i].sector);
    }
    auto g = init_edges(rets, tickers, sectors, 0.5);

    double same = 0, cross = 0;
    int n_same = 0, n_cross = 0;
    for (int i = 0; i < g.n_nodes; ++i)
        for (int j = i + 1; j < g.n_nodes; ++j) {
            if (sectors[i] == sectors[j]) { same += g.at(i, j); ++n_same; }
            else { cross += g.at(i, j); ++n_cross; }
            CHECK(g.at(i, j) == g.at(j, i));
            CHECK(g.at(i, j) >= 0.0);
            CHECK(g.at(i, j) <= 1.0);
        }
    CHECK(same / n_same > cross / n_cross);
}

TEST_CASE("refine_edges: zero parameters give the indifferent graph") {
    Tape t;
    Var h = t.constant(rand_h(4, 6, 1));
    Var w = t.constant(Array::zeros({12}));
    Var b = t.constant(Array::zeros({1}));
    Var e = refine_edges(t, h, w, b);
    REQUIRE(e->shape() == std::vector<int>{4, 4});
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            CHECK(e->val.data[i * 4 + j] == (i == j ? 1.0 : 0.5));
}

TEST_CASE("refine_edges: symmetric output, open-interval range, row-swap invariance") {
    Tape t;
    Array harr = rand_h(5, 8, 2);
    Rng rng(3, "we");
    Array warr = Array::zeros({16});
    for (auto& v : warr.data) v = rng.uniform(-1.5, 1.5);
    Array barr({1}, {0.3});

    Var e = refine_edges(t, t.constant(harr), t.constant(warr), t.constant(barr));
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            CHECK(e->val.data[i * 5 + j] == e->val.data[j * 5 + i]);
            if (i != j) {
                CHECK(e->val.data[i * 5 + j] > 0.0);
                CHECK(e->val.data[i * 5 + j] < 1.0);
            } else {
                CHECK(e->val.data[i * 5 + j] == 1.0);
            }
        }

    // swapping two node representations must not move their mutual edge
    Array swapped = harr;
    for (int k = 0; k < 8; ++k) std::swap(swapped.data[1 * 8 + k], swapped.data[3 * 8 + k]);
    Tape t2;
    Var e2 = refine_edges(t2, t2.constant(swapped), t2.constant(warr), t2.constant(barr));
    CHECK(e2->val.data[1 * 5 + 3] == doctest::Approx(e->val.data[1 * 5 + 3]).epsilon(1e-15));
}

TEST_CASE("refine_edges gradients match finite differences") {
    Array harr = rand_h(4, 5, 7);
    Rng rng(8, "we");
    Array warr = Array::zeros({10});
    for (auto& v : warr.data) v = rng.uniform(-1.0, 1.0);
    Array barr({1}, {-0.2});

    auto report = ad::check_inputs(
        {harr, warr, barr}, [](Tape& t, const std::vector<Var>& in) {
            Var e = refine_edges(t, in[0], in[1], in[2]);
            // weighted readout so every edge influences the scalar differently
            Array w = Array::zeros({4, 4});
            Rng r(9, "readout");
            for (auto& v : w.data) v = r.uniform(-1.0, 1.0);
            return ad::sum_all(ad::mul(e, t.constant(w)));
        });
    CHECK(report.ok(1e-4));
    CHECK(report.coords_checked == 4 * 5 + 10 + 1);
}

TEST_CASE("refine_edges shape and finiteness validation") {
    Tape t;
    Var h = t.constant(rand_h(3, 4, 11));
    CHECK_THROWS_AS(refine_edges(t, h, t.constant(Array::zeros({7})), t.constant(Array::zeros({1}))),
                    ShapeError);
    CHECK_THROWS_AS(refine_edges(t, h, t.constant(Array::zeros({8})), t.constant(Array::zeros({2}))),
                    ShapeError);
    Array bad = rand_h(3, 4, 12);
    bad.data[5] = std::nan("");
    CHECK_THROWS_AS(refine_edges(t, t.constant(bad), t.constant(Array::zeros({8})),
                                 t.constant(Array::zeros({1}))),
                    NumericError);
}
