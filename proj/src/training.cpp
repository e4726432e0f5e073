#include "nodecast/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "nodecast/errors.hpp"
#include "nodecast/optimizer.hpp"
#include "nodecast/rng.hpp"

namespace nodecast {

void LossWeights::validate() const {
    for (double v : {mse, dir, corr, reg})
        if (!std::isfinite(v) || v < 0) throw ConfigError("loss weights must be finite and >= 0");
    if (mse <= 0) throw ConfigError("the squared-error weight must be positive");
}

SentimentPanel build_sentiment_panel(const std::vector<ScoredPost>& posts,
                                     const std::vector<int64_t>& calendar,
                                     const std::vector<std::string>& tickers) {
    SentimentPanel panel;
    panel.by_stock.reserve(tickers.size());
    for (const auto& ticker : tickers)
        panel.by_stock.push_back(multiscale_sentiment(daily_scores(posts, calendar, ticker)));
    return panel;
}

SentimentPanel build_sentiment_panel(const std::vector<SentimentSeries>& series,
                                     const std::vector<int64_t>& calendar) {
    SentimentPanel panel;
    panel.by_stock.reserve(series.size());
    for (const auto& s : series) {
        if (s.dates != calendar)
            throw DataError("sentiment series for " + s.ticker +
                            " does not cover the trading calendar");
        panel.by_stock.push_back(multiscale_sentiment(s.days));
    }
    return panel;
}

std::vector<int> window_ends(int lo, int hi, int T, int h_max) {
    if (T < 1 || h_max < 1) throw ConfigError("window length and horizon must be positive");
    const int first = lo + T - 1;
    const int last = hi - h_max;
    if (last < first)
        throw ConfigError("day range of " + std::to_string(hi - lo + 1) +
                          " cannot host a window of " + std::to_string(T) +
                          " days plus horizon " + std::to_string(h_max));
    std::vector<int> ends(last - first + 1);
    for (int i = 0; i < static_cast<int>(ends.size()); ++i) ends[i] = first + i;
    return ends;
}

std::vector<int> make_training_windows(const FeatureDataset& ds, int region, int T,
                                       const std::vector<int>& horizons) {
    if (region < 0 || region > 2) throw ConfigError("split region must be 0, 1 or 2");
    if (horizons.empty()) throw ConfigError("no horizons configured");
    int lo_c = 0, hi_c = 0;
    switch (region) {
        case 0: lo_c = 0; hi_c = ds.split.n_train - 1; break;
        case 1: lo_c = ds.split.n_train; hi_c = ds.split.n_train + ds.split.n_val - 1; break;
        default: lo_c = ds.split.n_train + ds.split.n_val; hi_c = ds.split.total() - 1; break;
    }
    const int lo = std::max(0, lo_c - ds.warmup);
    const int hi = hi_c - ds.warmup;
    if (hi < lo) throw ConfigError("split region lies entirely inside the indicator warmup");
    return window_ends(lo, hi, T, horizons.back());
}

void shuffle_windows(std::vector<int>& ends, uint64_t seed, int epoch) {
    Rng rng(seed, "shuffle", static_cast<uint64_t>(epoch));
    for (int i = static_cast<int>(ends.size()) - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.next_u64() % static_cast<uint64_t>(i + 1));
        std::swap(ends[i], ends[j]);
    }
}

namespace {

// Population deviation of the w daily simple returns ending at calendar day
// c, averaged across stocks.
double mean_rolling_vol(const FeatureDataset& ds, int c, int w) {
    const int N = ds.n_stocks();
    double acc = 0;
    for (int i = 0; i < N; ++i) {
        double mean = 0;
        std::vector<double> r(w);
        for (int k = 0; k < w; ++k) {
            const double prev = ds.close_at(c - w + k, i);
            if (prev == 0) throw DataError("zero close while computing rolling volatility");
            r[k] = ds.close_at(c - w + k + 1, i) / prev - 1.0;
            mean += r[k];
        }
        mean /= w;
        double var = 0;
        for (double v : r) var += (v - mean) * (v - mean);
        acc += std::sqrt(var / w);
    }
    return acc / N;
}

}  // namespace

ModelInputs make_window_inputs(const FeatureDataset& ds, const SentimentPanel& sent,
                               const ad::Array& edges, int end, int T, int d_in) {
    const int N = ds.n_stocks();
    if (d_in < 1 || d_in > n_features) throw ConfigError("d_in outside the feature grid");
    if (end - T + 1 < 0 || end >= ds.features.n_days())
        throw ConfigError("window does not fit the dataset");
    if (!sent.empty()) {
        if (static_cast<int>(sent.by_stock.size()) != N)
            throw DataError("sentiment panel covers " + std::to_string(sent.by_stock.size()) +
                            " stocks, dataset has " + std::to_string(N));
        for (const auto& s : sent.by_stock)
            if (static_cast<int>(s.size()) != ds.calendar_days())
                throw DataError("sentiment panel is not aligned with the trading calendar");
    }

    ModelInputs in;
    in.x = ad::Array({T, N, d_in}, {});
    in.x.data.reserve(static_cast<size_t>(T) * N * d_in);
    for (int k = 0; k < T; ++k)
        for (int i = 0; i < N; ++i)
            for (int f = 0; f < d_in; ++f) in.x.data.push_back(ds.features.at(end - T + 1 + k, i, f));

    in.sent_s1 = ad::Array({T, N}, std::vector<double>(static_cast<size_t>(T) * N, 0.0));
    in.sent_last = ad::Array({N, 3}, std::vector<double>(static_cast<size_t>(N) * 3, 0.0));
    double mean_abs_s = 0;
    const int c = end + ds.warmup;
    if (!sent.empty()) {
        for (int k = 0; k < T; ++k)
            for (int i = 0; i < N; ++i)
                in.sent_s1.data[k * N + i] = sent.by_stock[i][c - T + 1 + k].s1;
        for (int i = 0; i < N; ++i) {
            const SentimentFeature& f = sent.by_stock[i][c];
            in.sent_last.data[i * 3 + 0] = f.s1;
            in.sent_last.data[i * 3 + 1] = f.s5;
            in.sent_last.data[i * 3 + 2] = f.s20;
            mean_abs_s += std::abs(f.s1);
        }
        mean_abs_s /= N;
    }

    in.gate_in = ad::Array({4}, {mean_rolling_vol(ds, c, 5), mean_rolling_vol(ds, c, 10),
                                 mean_rolling_vol(ds, c, 20), mean_abs_s});
    in.edges = edges;
    return in;
}

WindowTargets make_window_targets(const FeatureDataset& ds, int end,
                                  const std::vector<int>& horizons) {
    const int N = ds.n_stocks();
    const int H = static_cast<int>(horizons.size());
    if (H == 0) throw ConfigError("no horizons configured");
    if (end + horizons.back() >= ds.features.n_days())
        throw ConfigError("window targets run past the end of the data");

    WindowTargets tgt;
    tgt.y = ad::Array({N, H}, {});
    tgt.dir = ad::Array({N, H}, {});
    tgt.ret = ad::Array({N}, {});
    tgt.ret_a = ad::Array({N}, {});
    tgt.ret_b = ad::Array({N}, {});
    const int c = end + ds.warmup;
    const int h0 = horizons[0];
    for (int i = 0; i < N; ++i) {
        const double prior = ds.close_at(c, i);
        if (prior <= 0) throw DataError("non-positive close; returns are undefined");
        for (int h : horizons) {
            tgt.y.data.push_back(ds.features.at(end + h, i, 3));
            tgt.dir.data.push_back(price_up(ds.close_at(c + h, i), prior) ? 1.0 : 0.0);
        }
        tgt.ret.data.push_back(ds.close_at(c + h0, i) / prior - 1.0);
        const double sg = ds.close_sigma(end + h0, i);
        tgt.ret_a.data.push_back((sg < sigma_floor ? 0.0 : sg) / prior);
        tgt.ret_b.data.push_back((ds.close_mu(end + h0, i) - prior) / prior);
    }
    return tgt;
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
    total += o.total;
    mse += o.mse;
    dir += o.dir;
    corr += o.corr;
    reg += o.reg;
    corr_used += o.corr_used;
    corr_skipped += o.corr_skipped;
    return *this;
}

void LossBreakdown::scale(double f) {
    total *= f;
    mse *= f;
    dir *= f;
    corr *= f;
    reg *= f;
}

namespace {

double value_deviation(const std::vector<double>& v) {
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::sqrt(var / static_cast<double>(v.size()));
}

ad::Var mean_of(ad::Tape& t, const std::vector<ad::Var>& xs) {
    ad::Var acc = nullptr;
    for (ad::Var x : xs) acc = acc ? ad::add(acc, x) : x;
    (void)t;
    return ad::mul_scalar(acc, 1.0 / static_cast<double>(xs.size()));
}

}  // namespace

ad::Var composite_loss(ad::Tape& t, const Nodeformer& model,
                       const std::vector<ModelOutputs>& outs,
                       const std::vector<WindowTargets>& tgts, const LossWeights& w,
                       LossBreakdown* parts) {
    w.validate();
    if (outs.empty() || outs.size() != tgts.size())
        throw ConfigError("composite_loss wants one target set per forwarded window");

    std::vector<ad::Var> mses, bces, corrs;
    int corr_skipped = 0;
    for (size_t k = 0; k < outs.size(); ++k) {
        const ModelOutputs& out = outs[k];
        const WindowTargets& tgt = tgts[k];
        if (!ad::same_shape(out.y_hat->shape(), tgt.y.shape))
            throw ShapeError("prediction " + ad::shape_str(out.y_hat->shape()) +
                             " vs target " + ad::shape_str(tgt.y.shape));

        ad::Var y = t.constant(tgt.y);
        mses.push_back(ad::mean_all(ad::square(ad::sub(out.y_hat, y))));

        if (w.dir > 0) {
            ad::Var d = t.constant(tgt.dir);
            ad::Var p = ad::clamp(out.p_up, 1e-7, 1.0 - 1e-7);
            ad::Var miss = ad::add_scalar(ad::neg(p), 1.0);
            ad::Var ll = ad::add(ad::mul(d, ad::log_op(p)),
                                 ad::mul(ad::add_scalar(ad::neg(d), 1.0), ad::log_op(miss)));
            bces.push_back(ad::neg(ad::mean_all(ll)));
        }

        if (w.corr > 0) {
            ad::Var pred_ret = ad::add(ad::mul(ad::select(out.y_hat, 1, 0), t.constant(tgt.ret_a)),
                                       t.constant(tgt.ret_b));
            if (value_deviation(pred_ret->val.data) < 1e-12 ||
                value_deviation(tgt.ret.data) < 1e-12) {
                ++corr_skipped;
            } else {
                corrs.push_back(
                    ad::add_scalar(ad::neg(ad::pearson(pred_ret, t.constant(tgt.ret))), 1.0));
            }
        }
    }

    ad::Var zero = t.constant(ad::Array({1}, {0.0}));
    ad::Var mse = mean_of(t, mses);
    ad::Var bce = bces.empty() ? zero : mean_of(t, bces);
    ad::Var corr = corrs.empty() ? zero : mean_of(t, corrs);

    const ad::ParamStore& store = model.store();
    ad::Var reg = nullptr;
    if (w.reg > 0)
        for (int id = 0; id < static_cast<int>(store.count()); ++id) {
            if (store.entry(id).frozen) continue;
            ad::Var term = ad::sum_all(ad::square(store.use(t, id)));
            reg = reg ? ad::add(reg, term) : term;
        }
    if (!reg) reg = zero;

    ad::Var total = ad::add(
        ad::add(ad::mul_scalar(mse, w.mse), ad::mul_scalar(bce, w.dir)),
        ad::add(ad::mul_scalar(corr, w.corr), ad::mul_scalar(reg, w.reg)));

    if (parts) {
        parts->total = total->val.at(0);
        parts->mse = mse->val.at(0);
        parts->dir = bce->val.at(0);
        parts->corr = corr->val.at(0);
        parts->reg = reg->val.at(0);
        parts->corr_used = static_cast<int>(corrs.size());
        parts->corr_skipped = corr_skipped;
    }
    return total;
}

int TrainConfig::total_epochs() const {
    int n = 0;
    for (const auto& s : stages) n += s.epochs;
    return n;
}

void TrainConfig::validate() const {
    if (batch_size < 1 || grad_accum < 1) throw ConfigError("batch size and accumulation >= 1");
    if (warmup_steps < 0) throw ConfigError("negative warmup");
    if (stages.empty()) throw ConfigError("no training stages configured");
    for (const auto& s : stages) {
        if (s.epochs < 1) throw ConfigError("every stage needs at least one epoch");
        if (!(s.peak_lr > 0)) throw ConfigError("stage learning rate must be positive");
    }
    if (val_stride < 1) throw ConfigError("validation stride >= 1");
    weights.validate();
}

namespace {

std::vector<std::string> stage_trainable(const Nodeformer& model, int unfreeze_top_layers) {
    if (unfreeze_top_layers < 0) return model.all_params();
    std::vector<std::string> open = model.sentiment_fusion_params();
    for (const auto& n : model.head_params()) open.push_back(n);
    const int L = model.config().layers;
    for (int l = L - 1; l >= std::max(0, L - unfreeze_top_layers); --l)
        for (const auto& n : model.layer_params(l)) open.push_back(n);
    return open;
}

std::vector<std::vector<double>> snapshot(const ad::ParamStore& store) {
    std::vector<std::vector<double>> out;
    out.reserve(store.count());
    for (int id = 0; id < static_cast<int>(store.count()); ++id)
        out.push_back(store.entry(id).value);
    return out;
}

}  // namespace

TrainResult run_training_stages(const Nodeformer& model, const FeatureDataset& ds,
                                const SentimentPanel& sent, const ad::Array& edges,
                                const TrainConfig& tc) {
    tc.validate();
    const ModelConfig& mc = model.config();
    if (mc.n_stocks != ds.n_stocks())
        throw ConfigError("model is sized for " + std::to_string(mc.n_stocks) +
                          " stocks, dataset has " + std::to_string(ds.n_stocks()));
    ad::ParamStore& store = model.store();
    const int T = mc.seq_len;
    const int h0 = mc.horizons[0];

    std::vector<int> train_ends = make_training_windows(ds, 0, T, mc.horizons);
    std::vector<int> val_ends = make_training_windows(ds, 1, T, mc.horizons);

    ad::Adam adam(store);
    Rng drop_base(tc.seed, "dropout");
    uint64_t drop_lane = 0;
    const int group = tc.batch_size * tc.grad_accum;

    TrainResult res;
    std::vector<std::vector<double>> best_params;

    auto validate_pass = [&]() {
        double ape = 0;
        int hits = 0, n = 0;
        for (size_t vi = 0; vi < val_ends.size(); vi += static_cast<size_t>(tc.val_stride)) {
            const int end = val_ends[vi];
            ad::Tape t;
            ModelInputs in = make_window_inputs(ds, sent, edges, end, T, mc.d_in);
            ModelOutputs out = model.forward(t, in);
            const int c = end + ds.warmup;
            for (int i = 0; i < mc.n_stocks; ++i) {
                const double z = out.y_hat->val.at(i * mc.n_horizons());
                const double pred = ds.denormalize_close(end + h0, i, z);
                const double truth = ds.close_at(c + h0, i);
                const double prior = ds.close_at(c, i);
                if (truth == 0) throw MetricError("zero close in the validation window");
                ape += std::abs((pred - truth) / truth);
                hits += price_up(pred, prior) == price_up(truth, prior) ? 1 : 0;
                ++n;
            }
        }
        return std::pair<double, double>(100.0 * ape / n, static_cast<double>(hits) / n);
    };

    int global_epoch = 0;
    for (size_t si = 0; si < tc.stages.size(); ++si) {
        const StageSpec& st = tc.stages[si];

        for (const auto& n : model.all_params()) store.set_frozen(n, true);
        for (const auto& n : stage_trainable(model, st.unfreeze_top_layers))
            store.set_frozen(n, false);
        std::vector<std::pair<int, std::vector<double>>> frozen_before;
        for (int id = 0; id < static_cast<int>(store.count()); ++id)
            if (store.entry(id).frozen) frozen_before.emplace_back(id, store.entry(id).value);

        const int steps_per_epoch =
            static_cast<int>((train_ends.size() + group - 1) / static_cast<size_t>(group));
        const int stage_steps = st.epochs * steps_per_epoch;
        const int warmup = std::min(tc.warmup_steps, stage_steps);
        int step_in_stage = 0;

        for (int e = 0; e < st.epochs; ++e, ++global_epoch) {
            std::vector<int> order = train_ends;
            shuffle_windows(order, tc.seed, global_epoch);

            LossBreakdown epoch_acc;
            int epoch_windows = 0;
            double last_lr = 0;

            for (size_t g = 0; g < order.size(); g += static_cast<size_t>(group)) {
                const int gcount = static_cast<int>(
                    std::min<size_t>(static_cast<size_t>(group), order.size() - g));
                store.zero_grads();

                for (int m = 0; m < gcount; m += tc.batch_size) {
                    const int mcount = std::min(tc.batch_size, gcount - m);
                    ad::Tape t;
                    std::vector<ModelOutputs> outs;
                    std::vector<WindowTargets> tgts;
                    outs.reserve(mcount);
                    tgts.reserve(mcount);
                    for (int k = 0; k < mcount; ++k) {
                        const int end = order[g + static_cast<size_t>(m + k)];
                        ModelInputs in = make_window_inputs(ds, sent, edges, end, T, mc.d_in);
                        Rng drop = drop_base.fork("window", drop_lane++);
                        outs.push_back(model.forward(t, in, true, &drop));
                        tgts.push_back(make_window_targets(ds, end, mc.horizons));
                    }
                    LossBreakdown parts;
                    ad::Var loss = composite_loss(t, model, outs, tgts, tc.weights, &parts);
                    if (!std::isfinite(parts.total)) {
                        char buf[160];
                        std::snprintf(buf, sizeof buf,
                                      "non-finite loss at stage %zu epoch %d step %d "
                                      "(mse=%g dir=%g corr=%g reg=%g)",
                                      si + 1, global_epoch, res.total_steps, parts.mse, parts.dir,
                                      parts.corr, parts.reg);
                        throw TrainError(buf);
                    }
                    t.backward(ad::mul_scalar(loss, static_cast<double>(mcount) / gcount));
                    store.collect_grads(t);

                    LossBreakdown weighted = parts;
                    weighted.scale(mcount);
                    weighted.corr_used = parts.corr_used;
                    weighted.corr_skipped = parts.corr_skipped;
                    epoch_acc += weighted;
                    epoch_windows += mcount;
                }

                ++step_in_stage;
                last_lr = ad::warmup_cosine_lr(st.peak_lr, step_in_stage, warmup, stage_steps);
                adam.step(last_lr);
                ++res.total_steps;
            }

            EpochLog log;
            log.stage = static_cast<int>(si);
            log.epoch = global_epoch;
            log.lr = last_lr;
            log.train = epoch_acc;
            log.train.scale(1.0 / epoch_windows);
            log.train.corr_used = epoch_acc.corr_used;
            log.train.corr_skipped = epoch_acc.corr_skipped;
            auto [mape, da] = validate_pass();
            log.val_mape = mape;
            log.val_da = da;
            res.history.push_back(log);

            if (res.best_epoch < 0 || mape < res.best_val_mape) {
                res.best_epoch = global_epoch;
                res.best_val_mape = mape;
                best_params = snapshot(store);
            }
            if (tc.verbose)
                std::printf("stage %zu epoch %3d  loss %.5f  mse %.5f  val mape %.3f%%  da %.3f\n",
                            si + 1, global_epoch, log.train.total, log.train.mse, mape, da);
        }

        for (const auto& [id, before] : frozen_before)
            if (store.entry(id).value != before)
                throw TrainError("frozen parameter moved during stage: " + store.entry(id).name);
    }

    for (int id = 0; id < static_cast<int>(store.count()); ++id)
        store.entry(id).value = best_params[id];
    return res;
}

}  // namespace nodecast
