#include <doctest.h>

#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cnorm/harness.hpp"
#include "test_support.hpp"

using namespace cnorm;
using namespace cnorm::testsupport;

namespace {

PermutationPlan full_plan(int positions, std::vector<std::uint64_t> seeds = {1, 2, 3}) {
    PermutationPlan plan;
    for (int i = 0; i < positions; ++i) plan.positions.push_back(i);
    plan.seeds = std::move(seeds);
    return plan;
}

HarnessOptions bare_options() {
    HarnessOptions options;
    options.prompt_template = bare_template();
    options.template_id = "bare";
    return options;
}

// A backend with no attention support, for the calibrate error path.
struct TextOnlyBackend : Backend {
    GenerationRecord generate(const std::string&, const GenerateOptions& options) override {
        if (options.return_attention)
            throw std::runtime_error("attention unavailable");
        return {"UNKNOWN", std::nullopt, 1};
    }
    int tokenize_count(const std::string&) const override { return 1; }
    bool supports_attention() const override { return false; }
    bool supports_tokenize() const override { return false; }
    std::string id() const override { return "text-only"; }
};

}  // namespace

TEST_CASE("uniform mock profile answers correctly at every gold position") {
    auto dataset = make_equal_qa_dataset(5, 10, 10);
    MockModelConfig cfg;
    cfg.tau = 0.05;
    cfg.default_profile = {1.0, 1.0, 1.0};
    MockBackend backend(cfg);
    auto result = run_permutation_experiment(dataset, backend,
                                             FormatConfig::from_label("none", 0.5),
                                             full_plan(10), bare_options());
    CHECK(result.summary.oaa == 1.0);
    CHECK(result.summary.opa == 1.0);
    CHECK(result.cells.size() == 5 * 10 * 3);
}

TEST_CASE("end-heavy mock profile yields the closed-form OAA") {
    auto dataset = make_equal_qa_dataset(5, 10, 10);
    MockBackend backend(uniform_vs_ushape_config());  // default profile is (1,0,3)
    auto result = run_permutation_experiment(dataset, backend,
                                             FormatConfig::from_label("none", 0.5),
                                             full_plan(10), bare_options());
    // 10 equal docs over 100 tokens: positions 0,1 sit in the start zone,
    // 8,9 in the end zone, the rest carry zero weight.
    CHECK(result.summary.oaa == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(result.summary.opa == 1.0);
    for (size_t pos = 0; pos < 10; ++pos) {
        double expected = (pos <= 1 || pos >= 8) ? 1.0 : 0.0;
        CHECK(result.position_accuracy.per_position[pos] == expected);
    }
}

TEST_CASE("permutation completeness and uniform denominators") {
    auto dataset = make_equal_qa_dataset(4, 6, 8);
    MockBackend backend(uniform_vs_ushape_config());
    auto plan = full_plan(6, {11, 22});
    auto result = run_permutation_experiment(dataset, backend,
                                             FormatConfig::from_label("-", 0.5), plan,
                                             bare_options());
    CHECK(result.cells.size() == 4 * 6 * 2);
    for (int c : result.position_accuracy.sample_counts) CHECK(c == 4 * 2);
    CHECK(result.per_seed.size() == 2);
}

TEST_CASE("permute_documents isolates position as the only varying factor") {
    auto dataset = make_equal_qa_dataset(1, 5, 4);
    const auto& sample = dataset.samples[0];
    auto at2 = permute_documents(sample, 2, 9);
    auto at4 = permute_documents(sample, 4, 9);
    CHECK(at2[2].is_gold);
    CHECK(at4[4].is_gold);
    // distractor relative order is identical for the same seed
    std::vector<std::string> d2, d4;
    for (const auto& d : at2)
        if (!d.is_gold) d2.push_back(d.id);
    for (const auto& d : at4)
        if (!d.is_gold) d4.push_back(d.id);
    CHECK(d2 == d4);
    CHECK_THROWS_AS(permute_documents(sample, 7, 9), std::out_of_range);
}

TEST_CASE("plan validation") {
    auto dataset = make_equal_qa_dataset(2, 4, 4);
    MockBackend backend(uniform_vs_ushape_config());
    PermutationPlan empty;
    CHECK_THROWS_AS(run_permutation_experiment(dataset, backend,
                                               FormatConfig::from_label("-", 0.5), empty,
                                               bare_options()),
                    std::invalid_argument);
    PermutationPlan out_of_range = full_plan(9);
    CHECK_THROWS_AS(run_permutation_experiment(dataset, backend,
                                               FormatConfig::from_label("-", 0.5),
                                               out_of_range, bare_options()),
                    std::invalid_argument);
    PermutationPlan duplicate;
    duplicate.positions = {0, 0};
    duplicate.seeds = {1};
    CHECK_THROWS_AS(run_permutation_experiment(dataset, backend,
                                               FormatConfig::from_label("-", 0.5),
                                               duplicate, bare_options()),
                    std::invalid_argument);
}

TEST_CASE("calibrate picks the uniform-attention delimiter and is stable in S") {
    auto dataset = make_equal_qa_dataset(12, 10, 10);
    MockBackend backend(uniform_vs_ushape_config());
    auto candidates = candidate_formats({"none", "-", "&"}, 0.5);
    for (int s = 1; s <= 10; ++s) {
        auto report = calibrate(dataset, backend, candidates, s, CalibrationMode::FromEvalSet,
                                bare_options());
        CHECK(report.selected.label() == "-");
        CHECK(report.sample_count == s);
        CHECK(report.per_format.size() == 3);
        for (const auto& fs : report.per_format)
            CHECK(fs.per_prompt.size() == static_cast<size_t>(s));
    }
}

TEST_CASE("calibrate error paths") {
    auto dataset = make_equal_qa_dataset(3, 4, 4);
    MockBackend backend(uniform_vs_ushape_config());
    auto candidates = candidate_formats({"-", "&"}, 0.5);
    CHECK_THROWS_AS(calibrate(dataset, backend, candidates, 0,
                              CalibrationMode::FromEvalSet, bare_options()),
                    std::invalid_argument);
    CHECK_THROWS_AS(calibrate(dataset, backend, candidates, 4,
                              CalibrationMode::FromEvalSet, bare_options()),
                    std::invalid_argument);
    TextOnlyBackend text_only;
    CHECK_THROWS_AS(calibrate(dataset, text_only, candidates, 2,
                              CalibrationMode::FromEvalSet, bare_options()),
                    std::runtime_error);
}

TEST_CASE("pipeline equals calibrate followed by the experiment") {
    auto dataset = make_equal_qa_dataset(6, 10, 10);
    MockBackend backend(uniform_vs_ushape_config());
    auto candidates = candidate_formats({"none", "-", "&"}, 0.5);
    auto plan = full_plan(10, {5});
    auto options = bare_options();

    auto [report, result] = run_cnorm_pipeline(dataset, backend, candidates, 4,
                                               CalibrationMode::FromEvalSet, plan, options);
    auto manual_report = calibrate(dataset, backend, candidates, 4,
                                   CalibrationMode::FromEvalSet, options);
    auto manual_result = run_permutation_experiment(dataset, backend,
                                                    manual_report.selected, plan, options);
    CHECK(report.selected == manual_report.selected);
    CHECK(result.summary.oaa == manual_result.summary.oaa);
    CHECK(result.summary.opa == manual_result.summary.opa);
    CHECK(result.cells.size() == manual_result.cells.size());
    for (size_t i = 0; i < result.cells.size(); ++i)
        CHECK(result.cells[i].correct == manual_result.cells[i].correct);
}

TEST_CASE("held-out calibration excludes the calibration prompts from the run") {
    auto dataset = make_equal_qa_dataset(6, 10, 10);
    MockBackend backend(uniform_vs_ushape_config());
    auto candidates = candidate_formats({"none", "-"}, 0.5);
    auto [report, result] = run_cnorm_pipeline(dataset, backend, candidates, 2,
                                               CalibrationMode::HeldOut, full_plan(10, {1}),
                                               bare_options());
    CHECK(result.cells.size() == 4 * 10);  // 6 samples minus 2 held out
    for (const auto& c : result.cells) {
        CHECK(c.sample_id != "q0");
        CHECK(c.sample_id != "q1");
    }
}

TEST_CASE("backend failure policy: flagged as incorrect by default, abort in strict mode") {
    struct FailingBackend : Backend {
        GenerationRecord generate(const std::string&, const GenerateOptions&) override {
            throw std::runtime_error("boom");
        }
        int tokenize_count(const std::string&) const override { return 1; }
        bool supports_attention() const override { return false; }
        bool supports_tokenize() const override { return false; }
        std::string id() const override { return "failing"; }
    };
    auto dataset = make_equal_qa_dataset(2, 3, 4);
    FailingBackend backend;
    auto options = bare_options();
    auto result = run_permutation_experiment(dataset, backend,
                                             FormatConfig::from_label("none", 0.5),
                                             full_plan(3, {1}), options);
    CHECK(result.summary.oaa == 0.0);
    for (const auto& c : result.cells) {
        CHECK(c.failed);
        CHECK_FALSE(c.correct);
        CHECK(c.error == "boom");
    }
    options.strict_failures = true;
    CHECK_THROWS_AS(run_permutation_experiment(dataset, backend,
                                               FormatConfig::from_label("none", 0.5),
                                               full_plan(3, {1}), options),
                    std::runtime_error);
}

TEST_CASE("tokenization study reports token counts, OAAs, and pearson r") {
    auto dataset = make_equal_qa_dataset(4, 10, 10);
    auto cfg = uniform_vs_ushape_config();
    cfg.splitting_delimiters = "&:";
    cfg.profiles[":"] = {1.0, 1.0, 1.0};
    MockBackend backend(cfg);
    auto report = run_tokenization_study(dataset, backend, {"-", "&", ":"}, 1.0,
                                         full_plan(10, {1}), bare_options());
    REQUIRE(report.points.size() == 3);
    CHECK(std::isfinite(report.pearson_r));
    // '-' merges each one-sentence document into a single token; '&' and ':'
    // split, inflating the count.
    CHECK(report.points[0].mean_token_count < report.points[1].mean_token_count);

    CHECK_THROWS_AS(run_tokenization_study(dataset, backend, {"-"}, 1.0, full_plan(10, {1}),
                                           bare_options()),
                    std::invalid_argument);

    std::string path = "cnorm_test_tok_report.json";
    save_tokenization_report(report, path);
    auto loaded = load_tokenization_report(path);
    CHECK(loaded.pearson_r == report.pearson_r);
    REQUIRE(loaded.points.size() == report.points.size());
    CHECK(loaded.points[1].delimiter == "&");
    CHECK(loaded.points[1].oaa == report.points[1].oaa);
    std::remove(path.c_str());
}

TEST_CASE("experiment results round-trip through the versioned report file") {
    auto dataset = make_equal_qa_dataset(3, 5, 6);
    MockBackend backend(uniform_vs_ushape_config());
    auto result = run_permutation_experiment(dataset, backend,
                                             FormatConfig::from_label("&", 0.5),
                                             full_plan(5, {1, 2}), bare_options());
    std::string path = "cnorm_test_result.json";
    save_experiment_result(result, path);
    auto loaded = load_experiment_result(path);
    CHECK(loaded.format == result.format);
    CHECK(loaded.backend_id == result.backend_id);
    CHECK(loaded.summary.oaa == result.summary.oaa);
    CHECK(loaded.summary.opa == result.summary.opa);
    CHECK(loaded.position_accuracy.per_position == result.position_accuracy.per_position);
    REQUIRE(loaded.cells.size() == result.cells.size());
    for (size_t i = 0; i < loaded.cells.size(); ++i) {
        CHECK(loaded.cells[i].sample_id == result.cells[i].sample_id);
        CHECK(loaded.cells[i].correct == result.cells[i].correct);
        CHECK(loaded.cells[i].seed == result.cells[i].seed);
    }

    // schema mismatch is detected
    {
        std::ofstream out(path);
        out << R"({"schema":"cnorm/other-v9"})";
    }
    CHECK_THROWS_AS(load_experiment_result(path), std::runtime_error);
    std::remove(path.c_str());

    std::string cal_path = "cnorm_test_cal.json";
    auto cal = calibrate(dataset, backend, candidate_formats({"none", "-"}, 0.5), 2,
                         CalibrationMode::FromEvalSet, bare_options());
    save_calibration_report(cal, cal_path);
    auto cal_loaded = load_calibration_report(cal_path);
    CHECK(cal_loaded.selected == cal.selected);
    CHECK(cal_loaded.sample_count == 2);
    CHECK(cal_loaded.per_format.size() == cal.per_format.size());
    std::remove(cal_path.c_str());
}

TEST_CASE("a replayed trace reproduces the live run's metrics exactly") {
    auto dataset = make_equal_qa_dataset(3, 6, 8);
    std::string trace = "cnorm_test_harness_trace.jsonl";
    auto plan = full_plan(6, {4, 5});
    ExperimentResult live;
    {
        auto mock = std::make_shared<MockBackend>(uniform_vs_ushape_config());
        RecordingBackend recording(mock, trace);
        live = run_permutation_experiment(dataset, recording,
                                          FormatConfig::from_label("&", 0.5), plan,
                                          bare_options());
    }
    ReplayBackend replay(trace);
    auto replayed = run_permutation_experiment(dataset, replay,
                                               FormatConfig::from_label("&", 0.5), plan,
                                               bare_options());
    CHECK(replayed.summary.oaa == live.summary.oaa);
    CHECK(replayed.summary.opa == live.summary.opa);
    CHECK(replayed.position_accuracy.per_position == live.position_accuracy.per_position);
    CHECK(replayed.mean_prompt_tokens == live.mean_prompt_tokens);
    REQUIRE(replayed.cells.size() == live.cells.size());
    for (size_t i = 0; i < live.cells.size(); ++i)
        CHECK(replayed.cells[i].correct == live.cells[i].correct);
    std::remove(trace.c_str());
}
