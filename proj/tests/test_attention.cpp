#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <map>
#include <random>
#include <stdexcept>

#include "cnorm/attention.hpp"

using namespace cnorm;

namespace {

AttentionVector vec(std::vector<double> w) {
    AttentionVector a;
    a.weights = std::move(w);
    a.prompt_id = "p";
    return a;
}

}  // namespace

TEST_CASE("uniform attention scores 1.0 at any length") {
    for (size_t t : {2u, 3u, 10u, 1000u}) {
        auto r = attention_balance_score(vec(std::vector<double>(t, 0.3)));
        CHECK(r.mu == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(r.score == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("one-hot mass at either boundary scores 0") {
    auto first = attention_balance_score(vec({1, 0, 0, 0}));
    CHECK(first.mu == 0.0);
    CHECK(first.score == 0.0);
    auto last = attention_balance_score(vec({0, 0, 0, 1}));
    CHECK(last.mu == 1.0);
    CHECK(last.score == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("T=2 weights [1,3] give mu=0.75, score=0.5") {
    auto r = attention_balance_score(vec({1, 3}));
    CHECK(r.mu == 0.75);
    CHECK(r.score == 0.5);
}

TEST_CASE("invalid attention vectors are rejected") {
    CHECK_THROWS_AS(attention_balance_score(vec({1})), std::invalid_argument);
    CHECK_THROWS_AS(attention_balance_score(vec({0, 0, 0})), std::invalid_argument);
    CHECK_THROWS_AS(attention_balance_score(vec({1, -0.5})), std::invalid_argument);
}

TEST_CASE("scale invariance and reflection symmetry (randomized)") {
    std::mt19937_64 rng(1234);
    for (int trial = 0; trial < 1000; ++trial) {
        size_t t = 2 + rng() % 64;
        std::vector<double> w(t);
        for (auto& x : w) x = static_cast<double>(rng() % 1000) / 100.0 + 1e-3;
        auto base = attention_balance_score(vec(w));

        double c = static_cast<double>(rng() % 900 + 100) / 100.0;
        std::vector<double> scaled = w;
        for (auto& x : scaled) x *= c;
        auto s = attention_balance_score(vec(scaled));
        CHECK(s.mu == doctest::Approx(base.mu).epsilon(1e-12));
        CHECK(s.score == doctest::Approx(base.score).epsilon(1e-12));

        std::vector<double> reversed(w.rbegin(), w.rend());
        auto r = attention_balance_score(vec(reversed));
        CHECK(r.mu == doctest::Approx(1.0 - base.mu).epsilon(1e-12));
        CHECK(r.score == doctest::Approx(base.score).epsilon(1e-12));

        CHECK(base.score >= 0.0);
        CHECK(base.score <= 1.0);
    }
}

TEST_CASE("select_format is the mean-score argmax") {
    CHECK(select_format({{"-", {{0.5, 0.8}}}, {":", {{0.5, 0.9}}}}) == ":");
}

TEST_CASE("select_format tie-breaking prefers none, then smallest label") {
    std::map<std::string, std::vector<AbsResult>> tie = {
        {"-", {{0.5, 0.6}, {0.5, 0.8}}}, {"&", {{0.5, 0.7}, {0.5, 0.7}}}};
    CHECK(select_format(tie) == "&");  // tie at 0.7, '&' < '-'

    tie["none"] = {{0.5, 0.7}, {0.5, 0.7}};
    CHECK(select_format(tie) == "none");
}

TEST_CASE("select_format validates its input") {
    std::map<std::string, std::vector<AbsResult>> empty;
    CHECK_THROWS_AS(select_format(empty), std::invalid_argument);
    std::map<std::string, std::vector<AbsResult>> no_scores = {{"-", {}}};
    CHECK_THROWS_AS(select_format(no_scores), std::invalid_argument);
    std::map<std::string, std::vector<AbsResult>> unequal = {
        {"-", {{0.5, 1.0}}}, {"&", {{0.5, 1.0}, {0.5, 1.0}}}};
    CHECK_THROWS_AS(select_format(unequal), std::invalid_argument);
}

TEST_CASE("span_attention_profile computes normalized masses") {
    auto uniform = vec(std::vector<double>(10, 1.0));
    auto halves = span_attention_profile(uniform, {{0, 5}, {5, 10}});
    CHECK(halves[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(halves[1] == doctest::Approx(0.5).epsilon(1e-12));

    auto onehot = span_attention_profile(vec({1, 0, 0}), {{0, 1}});
    CHECK(onehot[0] == 1.0);

    auto masses = span_attention_profile(vec({1, 2, 3, 4}), {{0, 2}, {2, 4}});
    CHECK(masses[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(masses[1] == doctest::Approx(0.7).epsilon(1e-12));

    // full disjoint cover sums to 1
    double total = 0;
    for (double m : span_attention_profile(vec({5, 1, 2, 9, 4}), {{0, 2}, {2, 3}, {3, 5}}))
        total += m;
    CHECK(std::abs(total - 1.0) < 1e-12);
}

TEST_CASE("span_attention_profile rejects bad spans") {
    auto a = vec({1, 1, 1, 1});
    std::vector<std::pair<int, int>> overlapping = {{0, 2}, {1, 3}};
    std::vector<std::pair<int, int>> out_of_range = {{0, 5}};
    std::vector<std::pair<int, int>> negative = {{-1, 2}};
    std::vector<std::pair<int, int>> empty_span = {{2, 2}};
    CHECK_THROWS_AS(span_attention_profile(a, overlapping), std::invalid_argument);
    CHECK_THROWS_AS(span_attention_profile(a, out_of_range), std::invalid_argument);
    CHECK_THROWS_AS(span_attention_profile(a, negative), std::invalid_argument);
    CHECK_THROWS_AS(span_attention_profile(a, empty_span), std::invalid_argument);
}

TEST_CASE("attention traces round-trip through JSONL") {
    std::vector<AttentionVector> vectors;
    AttentionVector a = vec({0.1, 0.4, 0.5});
    a.prompt_id = "p1";
    a.format_tag = "-";
    vectors.push_back(a);
    std::string path = "cnorm_test_trace.jsonl";
    save_attention_trace(vectors, path);
    auto loaded = load_attention_trace(path);
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0].prompt_id == "p1");
    CHECK(loaded[0].format_tag == "-");
    CHECK(loaded[0].weights == a.weights);
    std::remove(path.c_str());
}
