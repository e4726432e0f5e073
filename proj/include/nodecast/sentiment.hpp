#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "nodecast/marketdata.hpp"
#include "nodecast/tensor.hpp"

namespace nodecast {

// Three-class probabilities from a post scorer. The continuous score is the
// positive-negative margin.
struct ClassProbs {
    double p_neg = 0, p_neu = 1, p_pos = 0;
    double score() const { return p_pos - p_neg; }
};

// Throws DataError unless probabilities are non-negative and sum to 1
// within 1e-6.
void validate_probs(const ClassProbs& p);

struct ScoredPost {
    std::string ticker;
    int64_t date = 0;
    ClassProbs probs;
};

// Social media text normalization, applied before any scoring. The rules run
// in a fixed order (entities, retweet markers, URLs, handles, cashtag
// spacing, ordinals, de-elongation, character allowlist) and the whole
// function is idempotent.
std::string preprocess_text(const std::string& raw);

class Scorer {
public:
    virtual ~Scorer() = default;
    virtual ClassProbs score(const std::string& cleaned_text) const = 0;
};

// Deterministic stand-in for a learned classifier: counts positive and
// negative word hits and pushes (neg_hits, 1, pos_hits) through a softmax.
// No hits lands on the neutral default with score exactly 0.
class LexiconScorer : public Scorer {
public:
    LexiconScorer(std::set<std::string> positive, std::set<std::string> negative);

    // Built-in word lists, useful when no lexicon file is supplied.
    static LexiconScorer builtin();
    // Text file: one entry per line, "+ word" or "- word", '#' comments.
    static LexiconScorer from_file(const std::string& path);

    ClassProbs score(const std::string& cleaned_text) const override;

private:
    std::set<std::string> pos_, neg_;
};

// Per-day mean post score and count for one ticker over a calendar. Posts on
// dates outside the calendar are ignored.
std::vector<SentimentDay> daily_scores(const std::vector<ScoredPost>& posts,
                                       const std::vector<int64_t>& calendar,
                                       const std::string& ticker);

// One day of model-facing sentiment features.
struct SentimentFeature {
    double s1 = 0, s5 = 0, s20 = 0;  // 1/5/20-day exponential averages
    int post_count = 0;
    bool fallback = false;  // a sparsity rule fired (or pre-stream zero fill)
};

// Streaming aggregation with the sparsity fallbacks:
//   >= 5 posts  - the day's mean is the raw score; averages update; this
//                 becomes the new sufficient-coverage snapshot
//   1-4 posts   - raw score replaced by the running 5-day average before the
//                 day (0 when nothing has been seen yet); averages update
//   0 posts     - emit the snapshot from the most recent sufficient-coverage
//                 day and continue the averages from it
// Averages seed at the first day that carries any posts; days before that
// emit zeros. All outputs stay inside [-1, 1].
std::vector<SentimentFeature> multiscale_sentiment(const std::vector<SentimentDay>& days);

// 1 + beta * S, the per-(stock, day) factor that scales attention keys.
// s: any shape, beta: single element. beta = 0 gives exact ones.
ad::Var sentiment_key_factor(ad::Tape& t, ad::Var s, ad::Var beta);

// Two-layer regressor for the sentiment branch: x [rows, 4] holding
// [s1, s5, s20, last normalized close] per row, tanh hidden layer, linear
// output, one column per horizon. Zero output weights give exact zeros.
ad::Var sentiment_branch(ad::Tape& t, ad::Var x, ad::Var w1, ad::Var b1, ad::Var w2, ad::Var b2);

}  // namespace nodecast
