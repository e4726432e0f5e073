#include "nodecast/sentiment.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <regex>

#include "nodecast/errors.hpp"

namespace nodecast {

void validate_probs(const ClassProbs& p) {
    if (p.p_neg < 0 || p.p_neu < 0 || p.p_pos < 0)
        throw DataError("sentiment: negative class probability");
    if (std::fabs(p.p_neg + p.p_neu + p.p_pos - 1.0) > 1e-6)
        throw DataError("sentiment: class probabilities sum to " +
                        std::to_string(p.p_neg + p.p_neu + p.p_pos) + ", expected 1");
}

namespace {

void replace_all(std::string& s, const std::string& from, const std::string& to) {
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
}

std::string decode_entities(std::string s) {
    s = std::regex_replace(s, std::regex("&#[0-9]+;"), " ");
    replace_all(s, "&lt;", "<");
    replace_all(s, "&gt;", ">");
    replace_all(s, "&quot;", "\"");
    replace_all(s, "&apos;", "'");
    replace_all(s, "&nbsp;", " ");
    replace_all(s, "&amp;", "&");
    return s;
}

std::string strip_retweet_markers(std::string s) {
    for (;;) {
        size_t i = 0;
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (s.compare(i, 2, "RT") == 0 && (i + 2 == s.size() || s[i + 2] == ' ' || s[i + 2] == ':')) {
            size_t j = i + 2;
            if (j < s.size() && s[j] == ':') ++j;
            s.erase(0, j);
            continue;
        }
        return s.erase(0, i);
    }
}

std::string lowercase_ordinals(const std::string& s) {
    static const std::regex ord("([0-9]+)(ST|ND|RD|TH|St|Nd|Rd|Th)");
    std::string out;
    out.reserve(s.size());
    size_t last = 0;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), ord); it != std::sregex_iterator();
         ++it) {
        out.append(s, last, it->position() - last);
        out += it->str(1);
        for (char c : it->str(2)) out += static_cast<char>(std::tolower(c));
        last = it->position() + it->length();
    }
    out.append(s, last, std::string::npos);
    return out;
}

std::string collapse_elongation(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        const size_t n = out.size();
        if (std::isalpha(static_cast<unsigned char>(c)) && n >= 2 && out[n - 1] == c &&
            out[n - 2] == c)
            continue;
        out += c;
    }
    return out;
}

bool allowed_char(char c) {
    if (std::isalnum(static_cast<unsigned char>(c))) return true;
    static const std::string extra = "$@<>#.,!?'%+&:/()-";
    return extra.find(c) != std::string::npos;
}

}  // namespace

std::string preprocess_text(const std::string& raw) {
    std::string s = decode_entities(raw);
    s = strip_retweet_markers(s);
    s = std::regex_replace(s, std::regex(R"((https?://\S+|www\.\S+))"), "<URL>");
    s = std::regex_replace(s, std::regex(R"(@\w+)"), "@user");
    s = std::regex_replace(s, std::regex(R"(\$\s+([A-Za-z]))"), "$$$1");
    s = lowercase_ordinals(s);
    s = collapse_elongation(s);

    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (!allowed_char(c)) c = ' ';
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out += ' ';
        pending_space = false;
        out += c;
    }
    return out;
}

LexiconScorer::LexiconScorer(std::set<std::string> positive, std::set<std::string> negative)
    : pos_(std::move(positive)), neg_(std::move(negative)) {}

LexiconScorer LexiconScorer::builtin() {
    return LexiconScorer(
        {"gain",  "gains",  "up",     "bull",   "bullish", "rally",  "surge",   "surges",
         "soar",  "soars",  "beat",   "beats",  "strong",  "growth", "profit",  "profits",
         "win",   "wins",   "buy",    "moon",   "rocket",  "record", "high",    "breakout",
         "upgrade", "outperform", "crushing", "great", "good", "love", "winner", "solid"},
        {"loss",  "losses", "down",  "bear",   "bearish", "crash",  "crashes", "plunge",
         "plunges", "miss", "misses", "missed", "weak",   "decline", "sell",   "short",
         "dump",  "dumps",  "low",   "bankruptcy", "fraud", "downgrade", "underperform",
         "bad",   "terrible", "fear", "panic", "risk",    "drop",   "drops",  "tank"});
}

LexiconScorer LexiconScorer::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("lexicon: cannot open '" + path + "'");
    std::set<std::string> pos, neg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t i = line.find_first_not_of(" \t");
        if (i == std::string::npos || line[i] == '#') continue;
        const char sign = line[i];
        size_t j = line.find_first_not_of(" \t", i + 1);
        if ((sign != '+' && sign != '-') || j == std::string::npos)
            throw DataError("lexicon: '" + path + "' line " + std::to_string(lineno) +
                            ": expected '+ word' or '- word'");
        size_t end = line.find_last_not_of(" \t\r");
        std::string word = line.substr(j, end - j + 1);
        for (auto& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        (sign == '+' ? pos : neg).insert(word);
    }
    return LexiconScorer(std::move(pos), std::move(neg));
}

ClassProbs LexiconScorer::score(const std::string& cleaned_text) const {
    int pos_hits = 0, neg_hits = 0;
    std::string token;
    const auto flush = [&] {
        if (token.empty()) return;
        if (pos_.count(token)) ++pos_hits;
        else if (neg_.count(token)) ++neg_hits;
        token.clear();
    };
    for (char c : cleaned_text) {
        if (std::isalnum(static_cast<unsigned char>(c)))
            token += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        else
            flush();
    }
    flush();

    const double en = std::exp(static_cast<double>(neg_hits));
    const double eu = std::exp(1.0);
    const double ep = std::exp(static_cast<double>(pos_hits));
    const double z = en + eu + ep;
    return ClassProbs{en / z, eu / z, ep / z};
}

std::vector<SentimentDay> daily_scores(const std::vector<ScoredPost>& posts,
                                       const std::vector<int64_t>& calendar,
                                       const std::string& ticker) {
    std::map<int64_t, int> day_of;
    for (size_t t = 0; t < calendar.size(); ++t) day_of[calendar[t]] = static_cast<int>(t);

    std::vector<double> sum(calendar.size(), 0.0);
    std::vector<int> count(calendar.size(), 0);
    for (const auto& p : posts) {
        if (p.ticker != ticker) continue;
        auto it = day_of.find(p.date);
        if (it == day_of.end()) continue;
        validate_probs(p.probs);
        sum[it->second] += p.probs.score();
        ++count[it->second];
    }

    std::vector<SentimentDay> out(calendar.size());
    for (size_t t = 0; t < calendar.size(); ++t) {
        out[t].post_count = count[t];
        out[t].score = count[t] ? sum[t] / count[t] : 0.0;
    }
    return out;
}

std::vector<SentimentFeature> multiscale_sentiment(const std::vector<SentimentDay>& days) {
    constexpr double a5 = 2.0 / 6.0;
    constexpr double a20 = 2.0 / 21.0;

    std::vector<SentimentFeature> out(days.size());
    double e1 = 0, e5 = 0, e20 = 0;
    SentimentFeature snapshot;  // last sufficient-coverage output, zeros initially
    bool seeded = false;

    for (size_t t = 0; t < days.size(); ++t) {
        SentimentFeature& f = out[t];
        f.post_count = days[t].post_count;

        if (days[t].post_count == 0) {
            // No information today: hold the last well-covered day's values
            // and let the averages continue from there, so tomorrow's update
            // is anchored to what the model actually saw.
            f.s1 = snapshot.s1;
            f.s5 = snapshot.s5;
            f.s20 = snapshot.s20;
            f.fallback = true;
            e1 = snapshot.s1;
            e5 = snapshot.s5;
            e20 = snapshot.s20;
            continue;
        }

        double raw;
        if (days[t].post_count >= 5) {
            raw = days[t].score;
        } else {
            raw = seeded ? e5 : 0.0;
            f.fallback = true;
        }

        if (!seeded) {
            e1 = e5 = e20 = raw;
            seeded = true;
        } else {
            e1 = raw;  // alpha = 2/(1+1) = 1
            e5 = a5 * raw + (1.0 - a5) * e5;
            e20 = a20 * raw + (1.0 - a20) * e20;
        }
        f.s1 = e1;
        f.s5 = e5;
        f.s20 = e20;
        if (days[t].post_count >= 5) snapshot = f;
    }
    return out;
}

ad::Var sentiment_key_factor(ad::Tape& t, ad::Var s, ad::Var beta) {
    (void)t;
    if (beta->size() != 1) throw ShapeError("sentiment_key_factor: beta must be a scalar");
    return ad::add_scalar(ad::scale_by(s, beta), 1.0);
}

ad::Var sentiment_branch(ad::Tape& t, ad::Var x, ad::Var w1, ad::Var b1, ad::Var w2, ad::Var b2) {
    (void)t;
    if (x->shape().size() != 2 || x->shape()[1] != 4)
        throw ShapeError("sentiment_branch: input must be [rows, 4], got " +
                         ad::shape_str(x->shape()));
    ad::Var h = ad::tanh_op(ad::add_tail(ad::matmul(x, w1), b1));
    return ad::add_tail(ad::matmul(h, w2), b2);
}

}  // namespace nodecast
