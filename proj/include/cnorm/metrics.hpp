#pragma once

#include <string>
#include <vector>

namespace cnorm {

// Per-gold-position accuracy from a permutation experiment. Index = gold
// position; denominators must be uniform across positions.
struct PositionAccuracy {
    std::vector<double> per_position;
    std::vector<int> sample_counts;

    void validate() const;
};

struct MetricSummary {
    double oaa = 0.0;  // mean accuracy over positions
    double opa = 0.0;  // max accuracy over positions
};

// Substring match after normalization (lowercase, collapse whitespace, strip
// punctuation at token boundaries).
bool score_answer(const std::string& generated, const std::vector<std::string>& gold_answers);

// KV grading: the gold value's hex digits must appear contiguously in the
// generation after stripping every non-hexadecimal character, so a correctly
// valued but reformatted answer still counts.
bool score_kv_answer(const std::string& generated, const std::string& gold_value_hex);

double compute_oaa(const PositionAccuracy& p);
double compute_opa(const PositionAccuracy& p);

MetricSummary summarize(const PositionAccuracy& p);

// Sample Pearson correlation. Throws on length mismatch, fewer than two
// points, or a constant series.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

std::string normalize_answer_text(const std::string& s);

}  // namespace cnorm
