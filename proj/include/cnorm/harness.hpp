#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cnorm/attention.hpp"
#include "cnorm/backend.hpp"
#include "cnorm/dataset.hpp"
#include "cnorm/metrics.hpp"
#include "cnorm/normalizer.hpp"

namespace cnorm {

struct PermutationPlan {
    std::vector<int> positions;        // gold positions to test, distinct
    std::vector<std::uint64_t> seeds;  // distractor shuffle seeds
    std::vector<std::string> sample_ids;  // empty = every sample in the dataset

    void validate(int document_count) const;
};

struct CellResult {
    std::string sample_id;
    int position = 0;
    std::uint64_t seed = 0;
    bool correct = false;
    bool failed = false;  // backend failure; counted as incorrect and flagged
    std::string error;
};

struct SeedSummary {
    std::uint64_t seed = 0;
    double oaa = 0.0;
    double opa = 0.0;
};

struct ExperimentResult {
    std::vector<CellResult> cells;  // raw bits, the source of truth
    PositionAccuracy position_accuracy;
    MetricSummary summary;
    std::vector<SeedSummary> per_seed;
    FormatConfig format;
    std::string backend_id;
    std::string template_id;
    double mean_prompt_tokens = 0.0;
};

struct HarnessOptions {
    PromptTemplate prompt_template;
    std::string template_id = "default";
    std::uint64_t selection_seed = 0;  // sentence-selection seed for the normalizer
    bool strict_failures = false;      // abort on backend failure instead of flagging
    int max_tokens = 64;
};

enum class CalibrationMode { FromEvalSet, HeldOut };

struct CalibrationReport {
    struct FormatScores {
        FormatConfig format;
        std::vector<double> per_prompt;  // ABS per calibration prompt
        double mean = 0.0;
    };
    std::vector<FormatScores> per_format;
    FormatConfig selected;
    int sample_count = 0;
    std::vector<std::string> prompt_ids;
};

struct TokenizationReport {
    struct DelimiterPoint {
        std::string delimiter;
        double mean_token_count = 0.0;
        double oaa = 0.0;
    };
    std::vector<DelimiterPoint> points;
    double pearson_r = 0.0;
};

// Deterministic distractor order for one (sample, seed): Fisher-Yates with
// mt19937_64 seeded by mix(seed, fnv1a64(sample.id)), gold inserted at
// `position` afterwards. Exposed so oracles can reproduce the layout.
std::vector<Document> permute_documents(const QaSample& sample, int position,
                                        std::uint64_t seed);

ExperimentResult run_permutation_experiment(const QaDataset& dataset, Backend& backend,
                                            const FormatConfig& format,
                                            const PermutationPlan& plan,
                                            const HarnessOptions& options);

CalibrationReport calibrate(const QaDataset& dataset, Backend& backend,
                            const std::vector<FormatConfig>& candidates, int sample_count,
                            CalibrationMode mode, const HarnessOptions& options);

// calibrate + run_permutation_experiment with the selected format. In
// HeldOut mode the calibration prompts are excluded from the experiment.
std::pair<CalibrationReport, ExperimentResult> run_cnorm_pipeline(
    const QaDataset& dataset, Backend& backend,
    const std::vector<FormatConfig>& candidates, int sample_count, CalibrationMode mode,
    const PermutationPlan& plan, const HarnessOptions& options);

// One permutation run per delimiter; reports mean prompt token count, OAA,
// and pearson(token counts, OAAs). Needs >= 2 delimiters.
TokenizationReport run_tokenization_study(const QaDataset& dataset, Backend& backend,
                                          const std::vector<std::string>& delimiters,
                                          double ratio, const PermutationPlan& plan,
                                          const HarnessOptions& options);

// Versioned JSON report files.
void save_experiment_result(const ExperimentResult& result, const std::string& path);
ExperimentResult load_experiment_result(const std::string& path);
void save_calibration_report(const CalibrationReport& report, const std::string& path);
CalibrationReport load_calibration_report(const std::string& path);
void save_tokenization_report(const TokenizationReport& report, const std::string& path);
TokenizationReport load_tokenization_report(const std::string& path);

}  // namespace cnorm
