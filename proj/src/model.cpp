#include "nodecast/model.hpp"

#include <cmath>
#include <limits>

#include "nodecast/graph.hpp"
#include "nodecast/sentiment.hpp"

namespace nodecast {

using ad::Var;

void ModelConfig::validate() const {
    if (layers < 1) throw ConfigError("model: layers must be >= 1");
    if (heads < 1) throw ConfigError("model: heads must be >= 1");
    if (d_model < 2 || d_model % 2 != 0)
        throw ConfigError("model: d_model must be a positive even number");
    if (d_model % heads != 0)
        throw ConfigError("model: d_model " + std::to_string(d_model) +
                          " not divisible by heads " + std::to_string(heads));
    if (d_ff < 1) throw ConfigError("model: d_ff must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("model: dropout must be in [0, 1)");
    if (seq_len < 1) throw ConfigError("model: seq_len must be >= 1");
    if (n_stocks < 1) throw ConfigError("model: n_stocks must be >= 1");
    if (d_in < 4) throw ConfigError("model: d_in must include the close column");
    if (price_only && d_in != 6)
        throw ConfigError("model: price_only expects the six raw features");
    if (d_stock < 1) throw ConfigError("model: d_stock must be >= 1");
    if (sent_hidden < 1) throw ConfigError("model: sent_hidden must be >= 1");
    if (horizons.empty()) throw ConfigError("model: at least one horizon");
    int prev = 0;
    for (int h : horizons) {
        if (h <= prev) throw ConfigError("model: horizons must be strictly increasing from 1");
        prev = h;
    }
}

std::vector<double> temporal_encoding(int t_index, int d) {
    if (d < 2 || d % 2 != 0) throw ConfigError("temporal encoding needs an even dimension");
    if (t_index < 0) throw ConfigError("temporal encoding: negative position");
    std::vector<double> out(d);
    for (int k = 0; k < d / 2; ++k) {
        const double angle = t_index / std::pow(10000.0, (2.0 * k) / d);
        out[2 * k] = std::sin(angle);
        out[2 * k + 1] = std::cos(angle);
    }
    return out;
}

ad::Array temporal_encoding_matrix(int T, int d) {
    ad::Array m({T, d}, {});
    m.data.reserve(static_cast<size_t>(T) * d);
    for (int t = 0; t < T; ++t) {
        auto row = temporal_encoding(t, d);
        m.data.insert(m.data.end(), row.begin(), row.end());
    }
    return m;
}

namespace {

std::string lp(int layer) { return "l" + std::to_string(layer) + "."; }

void require_shape(const ad::Array& a, const std::vector<int>& want, const char* what) {
    if (!ad::same_shape(a.shape, want))
        throw ShapeError(std::string("model: ") + what + " has shape " + ad::shape_str(a.shape) +
                         ", expected " + ad::shape_str(want));
}

}  // namespace

Nodeformer::Nodeformer(ModelConfig cfg, ad::ParamStore& store, uint64_t seed)
    : cfg_(std::move(cfg)), store_(&store) {
    cfg_.validate();
    const int d = cfg_.d_model, din = cfg_.d_in, nh = cfg_.n_horizons();

    // Re-binding an existing store (checkpoint reload) is allowed as long as
    // shapes agree; fresh names are initialized from (seed, name).
    auto add = [&](const std::string& name, std::vector<int> shape, ad::Init init) {
        if (store.has(name)) {
            if (!ad::same_shape(store.entry(store.id(name)).shape, shape))
                throw ConfigError("model: parameter " + name + " exists with a different shape");
            return;
        }
        store.add(name, std::move(shape), init, seed);
    };

    if (cfg_.use_gating) {
        add("gate.w", {din, din}, ad::Init::xavier);
        add("gate.b", {din}, ad::Init::zero);
    }
    add("embed.w", {din, d}, ad::Init::xavier);
    add("embed.stock", {cfg_.n_stocks, cfg_.d_stock}, ad::Init::normal_scaled);
    add("embed.stock_proj", {cfg_.d_stock, d}, ad::Init::xavier);

    for (int l = 0; l < cfg_.layers; ++l) {
        const std::string p = lp(l);
        for (const char* w : {"t.wq", "t.wk", "t.wv", "t.wo"}) add(p + w, {d, d}, ad::Init::xavier);
        if (cfg_.use_cross)
            for (const char* w : {"x.wq", "x.wk", "x.wv", "x.wo"})
                add(p + w, {d, d}, ad::Init::xavier);
        add(p + "ffn.w1", {d, cfg_.d_ff}, ad::Init::xavier);
        add(p + "ffn.b1", {cfg_.d_ff}, ad::Init::zero);
        add(p + "ffn.w2", {cfg_.d_ff, d}, ad::Init::xavier);
        add(p + "ffn.b2", {d}, ad::Init::zero);
        add(p + "ln1.g", {d}, ad::Init::one);
        add(p + "ln1.b", {d}, ad::Init::zero);
        add(p + "ln2.g", {d}, ad::Init::one);
        add(p + "ln2.b", {d}, ad::Init::zero);
    }

    if (cfg_.use_graph && cfg_.use_cross && cfg_.layers > 1) {
        add("edge.w", {2 * d}, ad::Init::xavier);
        add("edge.b", {1}, ad::Init::zero);
    }

    if (cfg_.use_sentiment) {
        add("sent.beta", {1}, ad::Init::zero);
        add("sent.w1", {4, cfg_.sent_hidden}, ad::Init::xavier);
        add("sent.b1", {cfg_.sent_hidden}, ad::Init::zero);
        add("sent.w2", {cfg_.sent_hidden, nh}, ad::Init::zero);
        add("sent.b2", {nh}, ad::Init::zero);
        add("fuse.w", {4}, ad::Init::zero);
        add("fuse.b", {1}, ad::Init::zero);
    }

    // Zero heads on top of the close anchor: the untrained model predicts the
    // last observed price and an even direction coin.
    add("head.price.w", {d, nh}, ad::Init::zero);
    add("head.price.b", {nh}, ad::Init::zero);
    add("head.dir.w", {d, nh}, ad::Init::zero);
    add("head.dir.b", {nh}, ad::Init::zero);
}

ModelOutputs Nodeformer::forward(ad::Tape& t, const ModelInputs& in, bool train,
                                 Rng* dropout_rng) const {
    const ModelConfig& c = cfg_;
    const int T = c.seq_len, N = c.n_stocks, d = c.d_model, H = c.heads, dk = c.d_k();
    const bool with_graph = c.use_graph && c.use_cross;

    require_shape(in.x, {T, N, c.d_in}, "features");
    if (c.use_sentiment) {
        require_shape(in.sent_s1, {T, N}, "sentiment series");
        require_shape(in.sent_last, {N, 3}, "sentiment features");
        require_shape(in.gate_in, {4}, "gate inputs");
    }
    if (with_graph) {
        require_shape(in.edges, {N, N}, "edge matrix");
        for (int i = 0; i < N; ++i)
            for (int j = 0; j < i; ++j)
                if (std::fabs(in.edges.at(i * N + j) - in.edges.at(j * N + i)) > 1e-12)
                    throw GraphError("model: edge matrix is not symmetric");
        for (double e : in.edges.data)
            if (!std::isfinite(e)) throw NumericError("model: non-finite edge weight");
    }
    const bool use_dropout = train && c.dropout > 0.0;
    if (use_dropout && !dropout_rng)
        throw ConfigError("model: train-mode forward with dropout needs an rng");

    const ad::ParamStore& ps = *store_;
    auto P = [&](const std::string& name) { return ps.use(t, name); };

    Var x0 = t.constant(in.x);
    Var x = x0;
    if (c.use_gating) {
        Var g = ad::sigmoid(ad::add_tail(ad::matmul(x0, P("gate.w")), P("gate.b")));
        x = ad::mul(g, x0);
    }

    Var h = ad::matmul(x, P("embed.w"));  // [T, N, d]
    h = ad::add_tail(h, ad::matmul(P("embed.stock"), P("embed.stock_proj")));
    if (c.use_te) {
        Var te = t.constant(temporal_encoding_matrix(T, d));
        h = ad::permute(ad::add_tail(ad::permute(h, {1, 0, 2}), te), {1, 0, 2});
    }

    // additive causal mask: position a may attend to b only when b <= a
    ad::Array mask({T, T}, std::vector<double>(static_cast<size_t>(T) * T, 0.0));
    const double neg_inf = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < T; ++a)
        for (int b = a + 1; b < T; ++b) mask.at(a * T + b) = neg_inf;
    Var mask_v = t.constant(mask);

    Var key_factor = nullptr;
    if (c.use_sentiment)
        key_factor = sentiment_key_factor(t, t.constant(in.sent_s1), P("sent.beta"));

    Var E = with_graph ? t.constant(in.edges) : nullptr;

    ModelOutputs out;
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

    for (int l = 0; l < c.layers; ++l) {
        const std::string p = lp(l);

        // (a) causal attention along time, every stock independently
        Var q = ad::matmul(h, P(p + "t.wq"));
        Var k = ad::matmul(h, P(p + "t.wk"));
        Var v = ad::matmul(h, P(p + "t.wv"));
        if (key_factor) k = ad::mul_lead(k, key_factor);
        auto by_stock = [&](Var z) {
            return ad::permute(ad::reshape(z, {T, N, H, dk}), {1, 2, 0, 3});  // [N,H,T,dk]
        };
        Var scores = ad::mul_scalar(
            ad::matmul(by_stock(q), ad::transpose_last2(by_stock(k))), inv_sqrt_dk);
        scores = ad::add_tail(scores, mask_v);
        Var attn_t = ad::softmax_last(scores);  // [N,H,T,T]
        out.temporal_attn.push_back(attn_t);
        Var ctx = ad::matmul(attn_t, by_stock(v));
        Var y = ad::matmul(ad::reshape(ad::permute(ctx, {2, 0, 1, 3}), {T, N, d}), P(p + "t.wo"));

        // (b) attention across stocks, every time step independently
        if (c.use_cross) {
            Var qx = ad::matmul(y, P(p + "x.wq"));
            Var kx = ad::matmul(y, P(p + "x.wk"));
            Var vx = ad::matmul(y, P(p + "x.wv"));
            auto by_time = [&](Var z) {
                return ad::permute(ad::reshape(z, {T, N, H, dk}), {0, 2, 1, 3});  // [T,H,N,dk]
            };
            Var sx = ad::mul_scalar(ad::matmul(by_time(qx), ad::transpose_last2(by_time(kx))),
                                    inv_sqrt_dk);
            if (E) {
                sx = ad::add_tail(sx, E);
                out.edges_used.push_back(E);
            }
            Var attn_x = ad::softmax_last(sx);  // [T,H,N,N]
            out.cross_attn.push_back(attn_x);
            Var cx = ad::matmul(attn_x, by_time(vx));
            y = ad::matmul(ad::reshape(ad::permute(cx, {0, 2, 1, 3}), {T, N, d}), P(p + "x.wo"));
        }

        if (use_dropout) y = ad::dropout(y, c.dropout, *dropout_rng, true);
        Var h1 = ad::layer_norm(ad::add(h, y), P(p + "ln1.g"), P(p + "ln1.b"));

        Var f = ad::add_tail(
            ad::matmul(ad::relu(ad::add_tail(ad::matmul(h1, P(p + "ffn.w1")), P(p + "ffn.b1"))),
                       P(p + "ffn.w2")),
            P(p + "ffn.b2"));
        if (use_dropout) f = ad::dropout(f, c.dropout, *dropout_rng, true);
        h = ad::layer_norm(ad::add(h1, f), P(p + "ln2.g"), P(p + "ln2.b"));

        if (E && l + 1 < c.layers)
            E = refine_edges(t, ad::mean_axis(h, 0), P("edge.w"), P("edge.b"));
    }
    out.states = h;

    Var rep = ad::select(h, 0, T - 1);                     // [N, d]
    Var anchor = ad::select(ad::select(x0, 0, T - 1), 1, 3);  // [N] last normalized close
    out.anchor = anchor;

    Var delta = ad::add_tail(ad::matmul(rep, P("head.price.w")), P("head.price.b"));
    out.y_node = ad::add_lead(delta, anchor);
    out.p_up = ad::sigmoid(ad::add_tail(ad::matmul(rep, P("head.dir.w")), P("head.dir.b")));

    if (c.use_sentiment) {
        Var branch_in =
            ad::concat({t.constant(in.sent_last), ad::reshape(anchor, {N, 1})}, 1);  // [N,4]
        Var ys = sentiment_branch(t, branch_in, P("sent.w1"), P("sent.b1"), P("sent.w2"),
                                  P("sent.b2"));
        out.y_sent = ad::add_lead(ys, anchor);

        out.alpha = compute_gate(t, t.constant(in.gate_in), P("fuse.w"), P("fuse.b"));
        out.y_hat = fuse(t, out.y_node, out.y_sent, out.alpha);
    } else {
        out.y_sent = out.y_node;
        out.alpha = t.constant(ad::Array({1}, {1.0}));
        out.y_hat = out.y_node;
    }
    return out;
}

ad::Var compute_gate(ad::Tape& t, ad::Var gate_in, ad::Var w, ad::Var b) {
    (void)t;
    if (gate_in->shape() != std::vector<int>{4} || w->shape() != std::vector<int>{4} ||
        b->shape() != std::vector<int>{1})
        throw ShapeError("compute_gate wants gate_in [4], w [4], b [1]");
    Var z = ad::matmul(ad::reshape(gate_in, {1, 4}), ad::reshape(w, {4, 1}));
    return ad::sigmoid(ad::add(ad::reshape(z, {1}), b));
}

ad::Var fuse(ad::Tape& t, ad::Var y_node, ad::Var y_sent, ad::Var alpha) {
    (void)t;
    if (!ad::same_shape(y_node->shape(), y_sent->shape()))
        throw ShapeError("fuse branches disagree: " + ad::shape_str(y_node->shape()) + " vs " +
                         ad::shape_str(y_sent->shape()));
    if (alpha->size() != 1) throw ShapeError("fuse alpha must be a single element");
    return ad::add(ad::scale_by(y_node, alpha),
                   ad::scale_by(y_sent, ad::add_scalar(ad::neg(alpha), 1.0)));
}

std::vector<std::string> Nodeformer::sentiment_fusion_params() const {
    if (!cfg_.use_sentiment) return {};
    return {"sent.beta", "sent.w1", "sent.b1", "sent.w2", "sent.b2", "fuse.w", "fuse.b"};
}

std::vector<std::string> Nodeformer::head_params() const {
    return {"head.price.w", "head.price.b", "head.dir.w", "head.dir.b"};
}

std::vector<std::string> Nodeformer::layer_params(int layer) const {
    const std::string p = lp(layer);
    std::vector<std::string> out;
    for (const char* w : {"t.wq", "t.wk", "t.wv", "t.wo"}) out.push_back(p + w);
    if (cfg_.use_cross)
        for (const char* w : {"x.wq", "x.wk", "x.wv", "x.wo"}) out.push_back(p + w);
    for (const char* w : {"ffn.w1", "ffn.b1", "ffn.w2", "ffn.b2", "ln1.g", "ln1.b", "ln2.g",
                          "ln2.b"})
        out.push_back(p + w);
    return out;
}

std::vector<std::string> Nodeformer::embed_params() const {
    std::vector<std::string> out = {"embed.w", "embed.stock", "embed.stock_proj"};
    if (cfg_.use_gating) {
        out.push_back("gate.w");
        out.push_back("gate.b");
    }
    return out;
}

std::vector<std::string> Nodeformer::edge_params() const {
    if (!(cfg_.use_graph && cfg_.use_cross && cfg_.layers > 1)) return {};
    return {"edge.w", "edge.b"};
}

std::vector<std::string> Nodeformer::all_params() const {
    std::vector<std::string> out = embed_params();
    for (int l = 0; l < cfg_.layers; ++l)
        for (auto& n : layer_params(l)) out.push_back(n);
    for (auto& n : edge_params()) out.push_back(n);
    for (auto& n : sentiment_fusion_params()) out.push_back(n);
    for (auto& n : head_params()) out.push_back(n);
    return out;
}

}  // namespace nodecast
