#include "cnorm/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "cnorm/util.hpp"

namespace cnorm {

void PositionAccuracy::validate() const {
    if (per_position.empty())
        throw std::invalid_argument("PositionAccuracy: empty");
    if (sample_counts.size() != per_position.size())
        throw std::invalid_argument("PositionAccuracy: counts/accuracies length mismatch");
    for (double v : per_position)
        if (!(v >= 0.0 && v <= 1.0))
            throw std::invalid_argument("PositionAccuracy: accuracy outside [0,1]");
    for (int c : sample_counts) {
        if (c <= 0) throw std::invalid_argument("PositionAccuracy: non-positive count");
        if (c != sample_counts.front())
            throw std::invalid_argument("PositionAccuracy: non-uniform denominators");
    }
}

std::string normalize_answer_text(const std::string& s) {
    std::istringstream in(s);
    std::string token;
    std::string out;
    auto is_punct = [](char c) {
        return std::ispunct(static_cast<unsigned char>(c)) != 0;
    };
    while (in >> token) {
        size_t b = 0;
        size_t e = token.size();
        while (b < e && is_punct(token[b])) ++b;
        while (e > b && is_punct(token[e - 1])) --e;
        if (b == e) continue;
        if (!out.empty()) out.push_back(' ');
        for (size_t i = b; i < e; ++i)
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(token[i]))));
    }
    return out;
}

bool score_answer(const std::string& generated, const std::vector<std::string>& gold_answers) {
    if (gold_answers.empty())
        throw std::invalid_argument("score_answer: gold_answers is empty");
    std::string gen = normalize_answer_text(generated);
    for (const auto& gold : gold_answers) {
        std::string g = normalize_answer_text(gold);
        if (!g.empty() && gen.find(g) != std::string::npos) return true;
    }
    return false;
}

bool score_kv_answer(const std::string& generated, const std::string& gold_value_hex) {
    std::string stripped;
    for (char c : generated) {
        char lc = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (is_hex_digit(lc)) stripped.push_back(lc);
    }
    std::string gold;
    for (char c : gold_value_hex) {
        char lc = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (is_hex_digit(lc)) gold.push_back(lc);
    }
    return !gold.empty() && stripped.find(gold) != std::string::npos;
}

double compute_oaa(const PositionAccuracy& p) {
    p.validate();
    double sum = 0.0;
    for (double v : p.per_position) sum += v;
    return sum / static_cast<double>(p.per_position.size());
}

double compute_opa(const PositionAccuracy& p) {
    p.validate();
    return *std::max_element(p.per_position.begin(), p.per_position.end());
}

MetricSummary summarize(const PositionAccuracy& p) {
    return {compute_oaa(p), compute_opa(p)};
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size())
        throw std::invalid_argument("pearson: series length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson: need at least two points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        double dx = x[i] - mx;
        double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw std::invalid_argument("pearson: constant series, correlation undefined");
    return sxy / std::sqrt(sxx * syy);
}

}  // namespace cnorm
