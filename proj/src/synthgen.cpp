#include "nodecast/synthgen.hpp"

#include <cmath>

#include "nodecast/dates.hpp"
#include "nodecast/errors.hpp"
#include "nodecast/rng.hpp"

namespace nodecast {

namespace {

void validate(const SynthConfig& cfg) {
    if (cfg.n_stocks < 1) throw ConfigError("synthgen: n_stocks must be >= 1");
    if (cfg.n_days < 2) throw ConfigError("synthgen: n_days must be >= 2");
    if (cfg.n_sectors < 1) throw ConfigError("synthgen: n_sectors must be >= 1");
    if (cfg.sector_factor_strength < 0.0 || cfg.sector_factor_strength > 1.0)
        throw ConfigError("synthgen: sector_factor_strength must be in [0,1]");
    if (cfg.sentiment_lead_strength < 0.0 || cfg.sentiment_lead_strength > 1.0)
        throw ConfigError("synthgen: sentiment_lead_strength must be in [0,1]");
    if (std::fabs(cfg.return_ar_coeff) >= 1.0)
        throw ConfigError("synthgen: |return_ar_coeff| must be < 1");
    if (cfg.regime_vol_levels.empty()) throw ConfigError("synthgen: regime_vol_levels is empty");
    for (double v : cfg.regime_vol_levels)
        if (v <= 0.0) throw ConfigError("synthgen: regime vol levels must be positive");
}

std::string make_ticker(int i) {
    // SYN00, SYN01, ... so lexical order equals generation order.
    char buf[16];
    std::snprintf(buf, sizeof(buf), "SYN%02d", i);
    return buf;
}

}  // namespace

int sector_of(int stock_index, int n_sectors) { return stock_index % n_sectors; }

std::vector<double> regime_path(const SynthConfig& cfg) {
    validate(cfg);
    // The regime chain is inherently sequential, so this is the one stream
    // that is not day-keyed. It depends only on (seed, n_days, levels).
    Rng rng(cfg.seed, "regime");
    const int k = static_cast<int>(cfg.regime_vol_levels.size());
    std::vector<double> path(cfg.n_days);
    int state = static_cast<int>(rng.below(k));
    for (int t = 0; t < cfg.n_days; ++t) {
        path[t] = cfg.regime_vol_levels[state];
        if (k > 1 && rng.uniform() < 0.03) {
            // jump to a different level, uniformly among the others
            int next = static_cast<int>(rng.below(k - 1));
            state = next >= state ? next + 1 : next;
        }
    }
    return path;
}

std::vector<MarketSeries> generate_market(const SynthConfig& cfg) {
    validate(cfg);
    const auto dates = trading_calendar(cfg.start_date, cfg.n_days);
    const auto vol = regime_path(cfg);
    const double w = cfg.sector_factor_strength;
    const double phi = cfg.return_ar_coeff;

    // Sector factor shocks keyed by (seed, sector, day) so they are shared by
    // every member stock and never depend on how many stocks exist.
    std::vector<std::vector<double>> factor(cfg.n_sectors);
    for (int s = 0; s < cfg.n_sectors; ++s) {
        Rng srng(cfg.seed, "sector-factor", s);
        factor[s].resize(cfg.n_days);
        for (int t = 0; t < cfg.n_days; ++t) factor[s][t] = srng.fork("day", t).normal();
    }

    std::vector<MarketSeries> out(cfg.n_stocks);
    for (int i = 0; i < cfg.n_stocks; ++i) {
        MarketSeries& ms = out[i];
        ms.ticker = make_ticker(i);
        ms.sector = sector_of(i, cfg.n_sectors);
        ms.dates = dates;
        ms.bars.resize(cfg.n_days);

        // All randomness for stock i flows from (seed, stock, i), with each
        // day forked off independently. Generation order cannot matter.
        Rng stock_rng(cfg.seed, "stock", i);
        const double base = 20.0 + 180.0 * stock_rng.fork("base").uniform();
        double log_close = std::log(base);
        double prev_close = base;
        double prev_ret = 0.0;

        for (int t = 0; t < cfg.n_days; ++t) {
            Rng rng = stock_rng.fork("day", t);
            double ret = 0.0;
            if (t > 0) {
                const double shock =
                    std::sqrt(w) * factor[ms.sector][t] + std::sqrt(1.0 - w) * rng.normal();
                ret = phi * prev_ret + vol[t] * shock;
                log_close += ret;
            }
            prev_ret = ret;
            const double close = std::exp(log_close);

            OhlcvBar& b = ms.bars[t];
            b.close = close;
            b.adj_close = close;
            const double open_ref = t == 0 ? close : prev_close;
            b.open = open_ref * std::exp(rng.normal(0.0, 0.25 * vol[t]));
            const double hi_wick = std::fabs(rng.normal(0.0, 0.5 * vol[t]));
            const double lo_wick = std::fabs(rng.normal(0.0, 0.5 * vol[t]));
            b.high = std::max(b.open, close) * std::exp(hi_wick);
            b.low = std::min(b.open, close) * std::exp(-lo_wick);
            b.volume = std::floor(std::exp(rng.normal(std::log(1e6), 0.5)));
            prev_close = close;
        }
    }
    return out;
}

std::vector<SentimentSeries> generate_sentiment(const std::vector<MarketSeries>& market,
                                                const SynthConfig& cfg) {
    validate(cfg);
    const auto vol = regime_path(cfg);
    const double lead = cfg.sentiment_lead_strength;

    std::vector<SentimentSeries> out(market.size());
    for (size_t i = 0; i < market.size(); ++i) {
        const MarketSeries& ms = market[i];
        if (ms.days() != cfg.n_days)
            throw DataError("generate_sentiment: series '" + ms.ticker + "' has " +
                            std::to_string(ms.days()) + " days, config says " +
                            std::to_string(cfg.n_days));
        SentimentSeries& ss = out[i];
        ss.ticker = ms.ticker;
        ss.dates = ms.dates;
        ss.days.resize(cfg.n_days);

        Rng stock_rng(cfg.seed, "sentiment", static_cast<uint64_t>(i));
        for (int t = 0; t < cfg.n_days; ++t) {
            Rng rng = stock_rng.fork("day", t);
            // The planted signal: today's crowd mood anticipates tomorrow's
            // move, squashed by tanh relative to tomorrow's vol scale. The
            // final day has no tomorrow, so it carries noise only.
            double core = 0.0;
            if (t + 1 < cfg.n_days) {
                const double r_next = ms.bars[t + 1].close / ms.bars[t].close - 1.0;
                core = std::tanh(r_next / (1.5 * vol[t + 1]));
            }
            const double noise = (1.0 - lead) * rng.uniform(-1.0, 1.0);
            double score = lead * core + noise;
            score = std::max(-1.0, std::min(1.0, score));
            ss.days[t].score = score;

            // Mostly well-covered days, plus a sprinkle of empty and thin
            // ones to exercise the downstream fallback rules.
            const double u = rng.uniform();
            if (u < 0.04)
                ss.days[t].post_count = 0;
            else if (u < 0.12)
                ss.days[t].post_count = 1 + static_cast<int>(rng.below(4));
            else
                ss.days[t].post_count = 5 + static_cast<int>(rng.below(40));
        }
    }
    return out;
}

}  // namespace nodecast
