#pragma once

#include <map>
#include <string>
#include <vector>

namespace cnorm {

// Final-token, last-layer attention weights over T prompt tokens. Weights may
// be unnormalized; consumers normalize by the sum.
struct AttentionVector {
    std::vector<double> weights;
    std::string prompt_id;
    std::string format_tag;

    size_t length() const { return weights.size(); }

    // Throws on T < 2, a negative weight, or an all-zero vector.
    void validate() const;
};

struct AbsResult {
    double mu = 0.0;     // attention-mass-weighted mean normalized position
    double score = 0.0;  // 1 - 2*|mu - 0.5|
};

// mu = sum_t ((t-1)/(T-1)) * a_t / sum_j a_j, t = 1..T. Scale-invariant.
AbsResult attention_balance_score(const AttentionVector& a);

// Argmax of the per-format mean score. Ties prefer "none" (no rewriting),
// then the lexicographically smallest label. All formats must be scored on
// prompt sets of equal size.
std::string select_format(const std::map<std::string, std::vector<AbsResult>>& scores);

// Normalized attention mass per span, spans given as half-open [start, end)
// token ranges. Spans must be disjoint and within [0, T).
std::vector<double> span_attention_profile(
    const AttentionVector& a, const std::vector<std::pair<int, int>>& spans);

// Attention trace persistence: JSONL, one record per line with prompt_id,
// format_tag, T, weights.
std::vector<AttentionVector> load_attention_trace(const std::string& path);
void save_attention_trace(const std::vector<AttentionVector>& vectors,
                          const std::string& path);

}  // namespace cnorm
