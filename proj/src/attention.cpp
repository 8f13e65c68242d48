#include "cnorm/attention.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace cnorm {

using nlohmann::json;

void AttentionVector::validate() const {
    if (weights.size() < 2)
        throw std::invalid_argument("AttentionVector: T must be >= 2, got " +
                                    std::to_string(weights.size()));
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::invalid_argument("AttentionVector: negative weight");
        sum += w;
    }
    if (sum <= 0.0) throw std::invalid_argument("AttentionVector: all weights are zero");
}

AbsResult attention_balance_score(const AttentionVector& a) {
    a.validate();
    const size_t t_count = a.weights.size();
    double sum = 0.0;
    for (double w : a.weights) sum += w;
    double mu = 0.0;
    for (size_t t = 0; t < t_count; ++t) {
        double pos = static_cast<double>(t) / static_cast<double>(t_count - 1);
        mu += pos * (a.weights[t] / sum);
    }
    AbsResult r;
    r.mu = mu;
    r.score = 1.0 - 2.0 * std::abs(mu - 0.5);
    return r;
}

std::string select_format(const std::map<std::string, std::vector<AbsResult>>& scores) {
    if (scores.empty()) throw std::invalid_argument("select_format: no formats");
    size_t count = scores.begin()->second.size();
    if (count == 0) throw std::invalid_argument("select_format: empty score list");
    for (const auto& [label, list] : scores)
        if (list.size() != count)
            throw std::invalid_argument(
                "select_format: format '" + label +
                "' was scored on a different number of prompts");

    std::string best;
    double best_mean = -1.0;
    bool best_is_none = false;
    for (const auto& [label, list] : scores) {
        double mean = 0.0;
        for (const auto& r : list) mean += r.score;
        mean /= static_cast<double>(list.size());
        bool is_none = label == "none";
        bool better = mean > best_mean;
        if (!better && mean == best_mean) {
            // Tie: prefer no rewriting, then the smallest label.
            if (is_none && !best_is_none) better = true;
            else if (is_none == best_is_none && label < best) better = true;
        }
        if (best.empty() || better) {
            best = label;
            best_mean = mean;
            best_is_none = is_none;
        }
    }
    return best;
}

std::vector<double> span_attention_profile(
    const AttentionVector& a, const std::vector<std::pair<int, int>>& spans) {
    a.validate();
    const int t_count = static_cast<int>(a.weights.size());
    std::vector<bool> covered(static_cast<size_t>(t_count), false);
    for (const auto& [start, end] : spans) {
        if (start < 0 || end > t_count || start >= end)
            throw std::invalid_argument("span_attention_profile: span [" +
                                        std::to_string(start) + "," +
                                        std::to_string(end) + ") out of range");
        for (int t = start; t < end; ++t) {
            if (covered[static_cast<size_t>(t)])
                throw std::invalid_argument("span_attention_profile: overlapping spans");
            covered[static_cast<size_t>(t)] = true;
        }
    }
    double sum = 0.0;
    for (double w : a.weights) sum += w;
    std::vector<double> masses;
    masses.reserve(spans.size());
    for (const auto& [start, end] : spans) {
        double m = 0.0;
        for (int t = start; t < end; ++t) m += a.weights[static_cast<size_t>(t)];
        masses.push_back(m / sum);
    }
    return masses;
}

std::vector<AttentionVector> load_attention_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open attention trace: " + path);
    std::vector<AttentionVector> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line);
        AttentionVector a;
        a.prompt_id = j.at("prompt_id").get<std::string>();
        a.format_tag = j.value("format_tag", "");
        a.weights = j.at("weights").get<std::vector<double>>();
        auto t = j.at("T").get<size_t>();
        if (t != a.weights.size())
            throw std::runtime_error("attention trace line " + std::to_string(lineno) +
                                     ": T does not match weights length");
        out.push_back(std::move(a));
    }
    return out;
}

void save_attention_trace(const std::vector<AttentionVector>& vectors,
                          const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write attention trace: " + path);
    for (const auto& a : vectors) {
        json j = {{"prompt_id", a.prompt_id},
                  {"format_tag", a.format_tag},
                  {"T", a.weights.size()},
                  {"weights", a.weights}};
        out << j.dump() << "\n";
    }
}

}  // namespace cnorm
