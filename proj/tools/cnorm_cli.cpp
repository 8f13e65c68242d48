// cnorm: generate synthetic KV benchmarks, calibrate context formats via the
// Attention Balance Score, run gold-position permutation experiments, and
// inspect result files.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "cnorm/backend.hpp"
#include "cnorm/dataset.hpp"
#include "cnorm/harness.hpp"
#include "cnorm/normalizer.hpp"

namespace fs = std::filesystem;
using namespace cnorm;

namespace {

struct BackendSpec {
    std::string spec;  // mock:<config.json> | replay:<trace> | remote:<url>
    std::string record_trace;

    std::shared_ptr<Backend> build() const {
        std::shared_ptr<Backend> backend;
        if (spec.rfind("mock:", 0) == 0) {
            std::string cfg_path = spec.substr(5);
            MockModelConfig cfg = cfg_path.empty() ? MockModelConfig{}
                                                   : MockModelConfig::load(cfg_path);
            backend = std::make_shared<MockBackend>(cfg);
        } else if (spec.rfind("replay:", 0) == 0) {
            backend = std::make_shared<ReplayBackend>(spec.substr(7));
        } else if (spec.rfind("remote:", 0) == 0) {
            RemoteConfig cfg;
            cfg.base_url = spec.substr(7);
            if (const char* auth = std::getenv("CNORM_AUTH")) cfg.auth_header = auth;
            backend = std::make_shared<RemoteBackend>(cfg);
        } else {
            throw CLI::ValidationError(
                "--backend", "expected mock:<config>, replay:<trace>, or remote:<url>");
        }
        if (!record_trace.empty())
            backend = std::make_shared<RecordingBackend>(backend, record_trace);
        return backend;
    }
};

void check_output(const std::string& path, bool force) {
    if (!force && fs::exists(path))
        throw std::runtime_error("output file exists (use --force to overwrite): " + path);
}

std::vector<std::string> split_labels(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

PermutationPlan make_plan(int num_positions, const std::string& seeds_csv) {
    PermutationPlan plan;
    for (int i = 0; i < num_positions; ++i) plan.positions.push_back(i);
    for (const auto& s : split_labels(seeds_csv))
        plan.seeds.push_back(std::stoull(s));
    return plan;
}

HarnessOptions make_options(const std::string& template_path, std::uint64_t selection_seed) {
    HarnessOptions options;
    if (!template_path.empty()) {
        options.prompt_template = PromptTemplate::load(template_path);
        options.template_id = template_path;
    }
    options.selection_seed = selection_seed;
    return options;
}

void print_result_table(const ExperimentResult& r) {
    std::printf("backend:   %s\n", r.backend_id.c_str());
    std::printf("format:    %s (p=%.3g)\n", r.format.label().c_str(), r.format.ratio);
    std::printf("OAA: %.4f   OPA: %.4f   mean prompt tokens: %.1f\n", r.summary.oaa,
                r.summary.opa, r.mean_prompt_tokens);
    std::printf("%-10s %-10s %-10s\n", "position", "accuracy", "n");
    for (size_t i = 0; i < r.position_accuracy.per_position.size(); ++i)
        std::printf("%-10zu %-10.4f %-10d\n", i, r.position_accuracy.per_position[i],
                    r.position_accuracy.sample_counts[i]);
    for (const auto& s : r.per_seed)
        std::printf("seed %llu: OAA=%.4f OPA=%.4f\n",
                    static_cast<unsigned long long>(s.seed), s.oaa, s.opa);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Context-format normalization and long-context robustness toolkit"};
    app.require_subcommand(1);
    app.set_config("--config");

    // gen-kv
    auto* gen = app.add_subcommand("gen-kv", "Generate a synthetic key-value dataset");
    KvGenConfig kv_config;
    std::string gen_out;
    bool gen_force = false;
    gen->add_option("--pairs", kv_config.num_pairs, "Key-value pairs per sample");
    gen->add_option("--chars", kv_config.char_len, "Characters per key and value");
    gen->add_option("--n", kv_config.num_samples, "Number of samples");
    gen->add_option("--seed", kv_config.seed, "PRNG seed");
    gen->add_option("-o,--out", gen_out, "Output JSONL path")->required();
    gen->add_flag("--force", gen_force, "Overwrite existing output");

    // shared experiment flags
    struct RunArgs {
        std::string qa_path;
        std::string kv_path;
        std::string kv_style = "plain";
        BackendSpec backend;
        std::string out;
        bool force = false;
        std::string template_path;
        std::uint64_t selection_seed = 0;
        int num_positions = 10;
        std::string seeds = "1,2,3";
        std::string delims;
        double ratio = 0.5;
        int samples = 8;
        std::string mode = "eval";
    };
    auto add_common = [](CLI::App* cmd, RunArgs& a, bool needs_backend = true) {
        cmd->add_option("--qa", a.qa_path, "QA dataset (JSONL)");
        cmd->add_option("--kv", a.kv_path, "KV dataset (JSONL), run via the KV prompt shape");
        cmd->add_option("--kv-style", a.kv_style,
                        "KV surface style: plain | uuid | modified-uuid:<c>");
        if (needs_backend)
            cmd->add_option("--backend", a.backend.spec,
                            "mock:<config.json> | replay:<trace> | remote:<url>")
                ->required();
        cmd->add_option("--record-trace", a.backend.record_trace,
                        "Record all backend calls to this JSONL trace");
        cmd->add_option("-o,--out", a.out, "Output report path")->required();
        cmd->add_flag("--force", a.force, "Overwrite existing output");
        cmd->add_option("--template", a.template_path, "Prompt template file");
        cmd->add_option("--selection-seed", a.selection_seed,
                        "Seed for sentence selection in the normalizer");
    };

    auto load_dataset = [](const RunArgs& a) {
        if (a.qa_path.empty() == a.kv_path.empty())
            throw CLI::ValidationError("--qa/--kv", "exactly one dataset source required");
        if (!a.qa_path.empty()) return load_qa_dataset(a.qa_path);
        FormatStyle style = FormatStyle::plain_text();
        if (a.kv_style == "uuid") style = FormatStyle::uuid();
        else if (a.kv_style.rfind("modified-uuid:", 0) == 0)
            style = FormatStyle::modified_uuid(a.kv_style.back());
        else if (a.kv_style != "plain")
            throw CLI::ValidationError("--kv-style", "unknown style " + a.kv_style);
        KvDataset kv = load_kv_dataset(a.kv_path);
        QaDataset qa;
        qa.source = a.kv_path;
        for (const auto& s : kv.samples) qa.samples.push_back(kv_to_qa(s, style));
        return qa;
    };

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "Select the best delimiter by mean ABS");
    RunArgs cal_args;
    add_common(cal, cal_args);
    cal->add_option("--delims", cal_args.delims,
                    "Comma-separated candidate delimiters (default full set)");
    cal->add_option("--ratio", cal_args.ratio, "Format ratio p");
    cal->add_option("--samples", cal_args.samples, "Calibration sample count S");
    cal->add_option("--mode", cal_args.mode, "eval | heldout");

    // run-perm
    auto* perm = app.add_subcommand("run-perm", "Run a gold-position permutation experiment");
    RunArgs perm_args;
    add_common(perm, perm_args);
    std::string perm_delim = "none";
    perm->add_option("--delim", perm_delim, "Delimiter ('none' or one character)");
    perm->add_option("--ratio", perm_args.ratio, "Format ratio p");
    perm->add_option("--positions", perm_args.num_positions, "Gold positions 0..N-1");
    perm->add_option("--seeds", perm_args.seeds, "Comma-separated shuffle seeds");

    // pipeline
    auto* pipe = app.add_subcommand("pipeline",
                                    "Calibrate, then run the experiment with f*");
    RunArgs pipe_args;
    add_common(pipe, pipe_args);
    std::string pipe_cal_out;
    pipe->add_option("--delims", pipe_args.delims, "Candidate delimiters");
    pipe->add_option("--ratio", pipe_args.ratio, "Format ratio p");
    pipe->add_option("--samples", pipe_args.samples, "Calibration sample count S");
    pipe->add_option("--mode", pipe_args.mode, "eval | heldout");
    pipe->add_option("--positions", pipe_args.num_positions, "Gold positions 0..N-1");
    pipe->add_option("--seeds", pipe_args.seeds, "Comma-separated shuffle seeds");
    pipe->add_option("--calibration-out", pipe_cal_out, "Calibration report path");

    // tok-study
    auto* tok = app.add_subcommand("tok-study",
                                   "Token-count vs OAA study across delimiters");
    RunArgs tok_args;
    add_common(tok, tok_args);
    tok->add_option("--delims", tok_args.delims, "Comma-separated delimiters (>= 2)")
        ->required();
    tok->add_option("--ratio", tok_args.ratio, "Format ratio p");
    tok->add_option("--positions", tok_args.num_positions, "Gold positions 0..N-1");
    tok->add_option("--seeds", tok_args.seeds, "Comma-separated shuffle seeds");

    // report
    auto* rep = app.add_subcommand("report", "Print a result file as a table");
    std::string rep_in, rep_compare;
    rep->add_option("--in", rep_in, "Experiment result JSON")->required();
    rep->add_option("--compare", rep_compare, "Second result for a side-by-side delta");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) {
            check_output(gen_out, gen_force);
            save_kv_dataset(generate_kv_dataset(kv_config), gen_out);
            std::printf("wrote %d samples to %s\n", kv_config.num_samples, gen_out.c_str());
        } else if (cal->parsed()) {
            check_output(cal_args.out, cal_args.force);
            auto dataset = load_dataset(cal_args);
            auto backend = cal_args.backend.build();
            auto labels = cal_args.delims.empty() ? default_delimiter_labels()
                                                  : split_labels(cal_args.delims);
            auto candidates = candidate_formats(labels, cal_args.ratio);
            auto mode = cal_args.mode == "heldout" ? CalibrationMode::HeldOut
                                                   : CalibrationMode::FromEvalSet;
            auto options = make_options(cal_args.template_path, cal_args.selection_seed);
            auto report = calibrate(dataset, *backend, candidates, cal_args.samples, mode,
                                    options);
            save_calibration_report(report, cal_args.out);
            std::printf("selected delimiter: %s (mean ABS per format below)\n",
                        report.selected.label().c_str());
            for (const auto& fs : report.per_format)
                std::printf("  %-6s %.6f\n", fs.format.label().c_str(), fs.mean);
        } else if (perm->parsed()) {
            check_output(perm_args.out, perm_args.force);
            auto dataset = load_dataset(perm_args);
            auto backend = perm_args.backend.build();
            auto format = FormatConfig::from_label(perm_delim, perm_args.ratio);
            auto plan = make_plan(perm_args.num_positions, perm_args.seeds);
            auto options = make_options(perm_args.template_path, perm_args.selection_seed);
            auto result =
                run_permutation_experiment(dataset, *backend, format, plan, options);
            save_experiment_result(result, perm_args.out);
            print_result_table(result);
        } else if (pipe->parsed()) {
            check_output(pipe_args.out, pipe_args.force);
            auto dataset = load_dataset(pipe_args);
            auto backend = pipe_args.backend.build();
            auto labels = pipe_args.delims.empty() ? default_delimiter_labels()
                                                   : split_labels(pipe_args.delims);
            auto candidates = candidate_formats(labels, pipe_args.ratio);
            auto mode = pipe_args.mode == "heldout" ? CalibrationMode::HeldOut
                                                    : CalibrationMode::FromEvalSet;
            auto plan = make_plan(pipe_args.num_positions, pipe_args.seeds);
            auto options = make_options(pipe_args.template_path, pipe_args.selection_seed);
            auto [report, result] = run_cnorm_pipeline(dataset, *backend, candidates,
                                                       pipe_args.samples, mode, plan, options);
            save_experiment_result(result, pipe_args.out);
            if (!pipe_cal_out.empty()) save_calibration_report(report, pipe_cal_out);
            std::printf("selected delimiter: %s\n", report.selected.label().c_str());
            print_result_table(result);
        } else if (tok->parsed()) {
            check_output(tok_args.out, tok_args.force);
            auto dataset = load_dataset(tok_args);
            auto backend = tok_args.backend.build();
            auto plan = make_plan(tok_args.num_positions, tok_args.seeds);
            auto options = make_options(tok_args.template_path, tok_args.selection_seed);
            auto report = run_tokenization_study(dataset, *backend,
                                                 split_labels(tok_args.delims),
                                                 tok_args.ratio, plan, options);
            save_tokenization_report(report, tok_args.out);
            std::printf("%-8s %-18s %-10s\n", "delim", "mean tokens", "OAA");
            for (const auto& p : report.points)
                std::printf("%-8s %-18.2f %-10.4f\n", p.delimiter.c_str(),
                            p.mean_token_count, p.oaa);
            std::printf("pearson r = %.4f\n", report.pearson_r);
        } else if (rep->parsed()) {
            auto result = load_experiment_result(rep_in);
            print_result_table(result);
            if (!rep_compare.empty()) {
                auto other = load_experiment_result(rep_compare);
                std::printf("\ncomparison (%s vs %s):\n", result.format.label().c_str(),
                            other.format.label().c_str());
                std::printf("  OAA: %.4f vs %.4f (delta %+.4f)\n", result.summary.oaa,
                            other.summary.oaa, result.summary.oaa - other.summary.oaa);
                std::printf("  OPA: %.4f vs %.4f (delta %+.4f)\n", result.summary.opa,
                            other.summary.opa, result.summary.opa - other.summary.opa);
            }
        }
    } catch (const CLI::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
