#include "cnorm/harness.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cnorm/util.hpp"

namespace cnorm {

using nlohmann::json;

void PermutationPlan::validate(int document_count) const {
    if (positions.empty()) throw std::invalid_argument("PermutationPlan: no positions");
    if (seeds.empty()) throw std::invalid_argument("PermutationPlan: no seeds");
    std::set<int> seen;
    for (int p : positions) {
        if (p < 0 || p >= document_count)
            throw std::invalid_argument("PermutationPlan: position " + std::to_string(p) +
                                        " outside document count " +
                                        std::to_string(document_count));
        if (!seen.insert(p).second)
            throw std::invalid_argument("PermutationPlan: duplicate position " +
                                        std::to_string(p));
    }
}

std::vector<Document> permute_documents(const QaSample& sample, int position,
                                        std::uint64_t seed) {
    int gold = sample.gold_document_index();
    std::vector<Document> distractors;
    distractors.reserve(sample.documents.size() - 1);
    for (int i = 0; i < static_cast<int>(sample.documents.size()); ++i)
        if (i != gold) distractors.push_back(sample.documents[static_cast<size_t>(i)]);

    // Fisher-Yates with portable index draws; the order depends only on
    // (seed, sample id), never on the target position.
    std::mt19937_64 rng(mix_seed(seed, fnv1a64(sample.id)));
    for (size_t i = distractors.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng() % i);
        std::swap(distractors[i - 1], distractors[j]);
    }

    if (position < 0 || position >= static_cast<int>(sample.documents.size()))
        throw std::out_of_range("permute_documents: position out of range");
    distractors.insert(distractors.begin() + position,
                       sample.documents[static_cast<size_t>(gold)]);
    return distractors;
}

namespace {

std::vector<const QaSample*> select_samples(const QaDataset& dataset,
                                            const std::vector<std::string>& ids) {
    std::vector<const QaSample*> out;
    if (ids.empty()) {
        for (const auto& s : dataset.samples) out.push_back(&s);
        return out;
    }
    for (const auto& id : ids) {
        auto it = std::find_if(dataset.samples.begin(), dataset.samples.end(),
                               [&](const QaSample& s) { return s.id == id; });
        if (it == dataset.samples.end())
            throw std::invalid_argument("plan references unknown sample id '" + id + "'");
        out.push_back(&*it);
    }
    return out;
}

struct CellWork {
    const QaSample* sample;
    int position;
    std::uint64_t seed;
};

struct CellOutcome {
    CellResult result;
    int prompt_tokens = 0;
};

CellOutcome run_cell(const CellWork& work, Backend& backend, const FormatConfig& format,
                     const HarnessOptions& options) {
    CellOutcome out;
    out.result.sample_id = work.sample->id;
    out.result.position = work.position;
    out.result.seed = work.seed;
    try {
        auto ordered = permute_documents(*work.sample, work.position, work.seed);
        std::vector<NormalizedDocument> normalized;
        normalized.reserve(ordered.size());
        for (const auto& doc : ordered)
            normalized.push_back(normalize_document(doc, format, options.selection_seed));

        auto assembled = assemble_prompt_with_spans(work.sample->question, normalized,
                                                    options.prompt_template);

        GenerateOptions gen_options;
        gen_options.max_tokens = options.max_tokens;
        gen_options.format_tag = format.label();
        gen_options.gold_answer = work.sample->gold_answers.front();
        if (backend.supports_tokenize()) {
            try {
                auto [off, len] = assembled.doc_char_ranges[static_cast<size_t>(work.position)];
                int start = backend.tokenize_count(assembled.text.substr(0, off));
                int span_len = backend.tokenize_count(assembled.text.substr(off, len));
                gen_options.gold_token_span = {start, start + span_len};
            } catch (const std::exception&) {
                // Replay traces may lack prefix token counts; the span only
                // matters for the mock, which always supports tokenize.
            }
        }

        GenerationRecord rec = backend.generate(assembled.text, gen_options);
        out.prompt_tokens = rec.token_count;
        out.result.correct = score_answer(rec.text, work.sample->gold_answers);
    } catch (const std::exception& e) {
        out.result.failed = true;
        out.result.correct = false;
        out.result.error = e.what();
    }
    return out;
}

}  // namespace

ExperimentResult run_permutation_experiment(const QaDataset& dataset, Backend& backend,
                                            const FormatConfig& format,
                                            const PermutationPlan& plan,
                                            const HarnessOptions& options) {
    format.validate();
    if (dataset.samples.empty())
        throw std::invalid_argument("run_permutation_experiment: empty dataset");
    auto samples = select_samples(dataset, plan.sample_ids);
    for (const auto* s : samples)
        plan.validate(static_cast<int>(s->documents.size()));

    std::vector<CellWork> work;
    for (const auto* s : samples)
        for (int pos : plan.positions)
            for (std::uint64_t seed : plan.seeds) work.push_back({s, pos, seed});

    std::vector<CellOutcome> outcomes(work.size());
    for (size_t i = 0; i < work.size(); ++i) {
        outcomes[i] = run_cell(work[i], backend, format, options);
        if (outcomes[i].result.failed && options.strict_failures)
            throw std::runtime_error("backend failure on sample " +
                                     outcomes[i].result.sample_id + ": " +
                                     outcomes[i].result.error);
    }

    ExperimentResult result;
    result.format = format;
    result.backend_id = backend.id();
    result.template_id = options.template_id;

    int max_position = *std::max_element(plan.positions.begin(), plan.positions.end());
    std::vector<int> correct_by_pos(static_cast<size_t>(max_position) + 1, 0);
    std::vector<int> count_by_pos(static_cast<size_t>(max_position) + 1, 0);
    std::map<std::uint64_t, std::pair<std::vector<int>, std::vector<int>>> by_seed;

    long total_tokens = 0;
    for (const auto& o : outcomes) {
        result.cells.push_back(o.result);
        total_tokens += o.prompt_tokens;
        size_t pos = static_cast<size_t>(o.result.position);
        count_by_pos[pos] += 1;
        if (o.result.correct) correct_by_pos[pos] += 1;
        auto& [sc, sn] = by_seed[o.result.seed];
        if (sc.empty()) {
            sc.assign(count_by_pos.size(), 0);
            sn.assign(count_by_pos.size(), 0);
        }
        sn[pos] += 1;
        if (o.result.correct) sc[pos] += 1;
    }
    result.mean_prompt_tokens =
        static_cast<double>(total_tokens) / static_cast<double>(outcomes.size());

    auto to_accuracy = [&](const std::vector<int>& correct,
                           const std::vector<int>& counts) {
        PositionAccuracy pa;
        for (int pos : plan.positions) {
            size_t p = static_cast<size_t>(pos);
            pa.per_position.push_back(static_cast<double>(correct[p]) /
                                      static_cast<double>(counts[p]));
            pa.sample_counts.push_back(counts[p]);
        }
        return pa;
    };

    result.position_accuracy = to_accuracy(correct_by_pos, count_by_pos);
    result.summary = summarize(result.position_accuracy);
    for (const auto& [seed, sc] : by_seed) {
        PositionAccuracy pa = to_accuracy(sc.first, sc.second);
        result.per_seed.push_back({seed, compute_oaa(pa), compute_opa(pa)});
    }
    return result;
}

CalibrationReport calibrate(const QaDataset& dataset, Backend& backend,
                            const std::vector<FormatConfig>& candidates, int sample_count,
                            CalibrationMode /*mode*/, const HarnessOptions& options) {
    if (sample_count < 1) throw std::invalid_argument("calibrate: sample_count must be >= 1");
    if (candidates.empty()) throw std::invalid_argument("calibrate: no candidate formats");
    if (!backend.supports_attention())
        throw std::runtime_error("calibrate: backend '" + backend.id() +
                                 "' does not support attention output");
    if (sample_count > static_cast<int>(dataset.samples.size()))
        throw std::invalid_argument("calibrate: sample_count " +
                                    std::to_string(sample_count) + " exceeds dataset size " +
                                    std::to_string(dataset.samples.size()));

    CalibrationReport report;
    report.sample_count = sample_count;

    // Calibration prompts are the first S samples; in held-out mode the
    // pipeline excludes exactly these from the evaluation run.
    std::map<std::string, std::vector<AbsResult>> scores;
    for (const auto& candidate : candidates) {
        candidate.validate();
        CalibrationReport::FormatScores fs;
        fs.format = candidate;
        for (int i = 0; i < sample_count; ++i) {
            const QaSample& sample = dataset.samples[static_cast<size_t>(i)];
            std::vector<NormalizedDocument> normalized;
            for (const auto& doc : sample.documents)
                normalized.push_back(
                    normalize_document(doc, candidate, options.selection_seed));
            std::string prompt =
                assemble_prompt(sample.question, normalized, options.prompt_template);
            GenerateOptions gen_options;
            gen_options.max_tokens = options.max_tokens;
            gen_options.return_attention = true;
            gen_options.format_tag = candidate.label();
            GenerationRecord rec = backend.generate(prompt, gen_options);
            if (!rec.attention)
                throw std::runtime_error("calibrate: backend returned no attention");
            AbsResult abs = attention_balance_score(*rec.attention);
            fs.per_prompt.push_back(abs.score);
            scores[candidate.label()].push_back(abs);
            if (&candidate == &candidates.front())
                report.prompt_ids.push_back(sample.id);
        }
        double mean = 0.0;
        for (double s : fs.per_prompt) mean += s;
        fs.mean = mean / static_cast<double>(fs.per_prompt.size());
        report.per_format.push_back(std::move(fs));
    }

    std::string selected_label = select_format(scores);
    auto it = std::find_if(candidates.begin(), candidates.end(),
                           [&](const FormatConfig& c) { return c.label() == selected_label; });
    report.selected = *it;
    return report;
}

std::pair<CalibrationReport, ExperimentResult> run_cnorm_pipeline(
    const QaDataset& dataset, Backend& backend,
    const std::vector<FormatConfig>& candidates, int sample_count, CalibrationMode mode,
    const PermutationPlan& plan, const HarnessOptions& options) {
    CalibrationReport report =
        calibrate(dataset, backend, candidates, sample_count, mode, options);

    QaDataset eval = dataset;
    if (mode == CalibrationMode::HeldOut) {
        eval.samples.erase(eval.samples.begin(), eval.samples.begin() + sample_count);
        if (eval.samples.empty())
            throw std::invalid_argument(
                "run_cnorm_pipeline: held-out calibration consumed every sample");
    }
    ExperimentResult result =
        run_permutation_experiment(eval, backend, report.selected, plan, options);
    return {std::move(report), std::move(result)};
}

TokenizationReport run_tokenization_study(const QaDataset& dataset, Backend& backend,
                                          const std::vector<std::string>& delimiters,
                                          double ratio, const PermutationPlan& plan,
                                          const HarnessOptions& options) {
    if (delimiters.size() < 2)
        throw std::invalid_argument(
            "run_tokenization_study: need at least two delimiters for a correlation");
    if (!backend.supports_tokenize())
        throw std::runtime_error("run_tokenization_study: backend cannot tokenize");

    TokenizationReport report;
    std::vector<double> token_counts;
    std::vector<double> oaas;
    for (const auto& label : delimiters) {
        FormatConfig format = FormatConfig::from_label(label, ratio);
        ExperimentResult result =
            run_permutation_experiment(dataset, backend, format, plan, options);
        report.points.push_back({label, result.mean_prompt_tokens, result.summary.oaa});
        token_counts.push_back(result.mean_prompt_tokens);
        oaas.push_back(result.summary.oaa);
    }
    report.pearson_r = pearson(token_counts, oaas);
    return report;
}

// ---- persistence ----------------------------------------------------------

namespace {

std::string now_iso8601() {
    auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

json format_to_json(const FormatConfig& f) {
    return {{"delimiter", f.label()}, {"ratio", f.ratio}};
}

FormatConfig format_from_json(const json& j) {
    return FormatConfig::from_label(j.at("delimiter").get<std::string>(),
                                    j.at("ratio").get<double>());
}

void write_json(const json& j, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write report file: " + path);
    out << j.dump(2) << "\n";
}

json read_json(const std::string& path, const std::string& expected_schema) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open report file: " + path);
    json j = json::parse(in);
    if (j.value("schema", "") != expected_schema)
        throw std::runtime_error(path + ": expected schema '" + expected_schema +
                                 "', found '" + j.value("schema", "<missing>") + "'");
    return j;
}

}  // namespace

void save_experiment_result(const ExperimentResult& result, const std::string& path) {
    json cells = json::array();
    for (const auto& c : result.cells) {
        json cj = {{"sample_id", c.sample_id}, {"position", c.position},
                   {"seed", c.seed},           {"correct", c.correct}};
        if (c.failed) {
            cj["failed"] = true;
            cj["error"] = c.error;
        }
        cells.push_back(std::move(cj));
    }
    json per_seed = json::array();
    for (const auto& s : result.per_seed)
        per_seed.push_back({{"seed", s.seed}, {"oaa", s.oaa}, {"opa", s.opa}});
    json j = {{"schema", "cnorm/experiment-result-v1"},
              {"created_at", now_iso8601()},
              {"config",
               {{"format", format_to_json(result.format)},
                {"backend_id", result.backend_id},
                {"template_id", result.template_id}}},
              {"cells", cells},
              {"per_position",
               {{"accuracy", result.position_accuracy.per_position},
                {"counts", result.position_accuracy.sample_counts}}},
              {"oaa", result.summary.oaa},
              {"opa", result.summary.opa},
              {"per_seed", per_seed},
              {"mean_prompt_tokens", result.mean_prompt_tokens}};
    write_json(j, path);
}

ExperimentResult load_experiment_result(const std::string& path) {
    json j = read_json(path, "cnorm/experiment-result-v1");
    ExperimentResult r;
    r.format = format_from_json(j.at("config").at("format"));
    r.backend_id = j.at("config").at("backend_id").get<std::string>();
    r.template_id = j.at("config").at("template_id").get<std::string>();
    for (const auto& cj : j.at("cells")) {
        CellResult c;
        c.sample_id = cj.at("sample_id").get<std::string>();
        c.position = cj.at("position").get<int>();
        c.seed = cj.at("seed").get<std::uint64_t>();
        c.correct = cj.at("correct").get<bool>();
        c.failed = cj.value("failed", false);
        c.error = cj.value("error", "");
        r.cells.push_back(std::move(c));
    }
    r.position_accuracy.per_position =
        j.at("per_position").at("accuracy").get<std::vector<double>>();
    r.position_accuracy.sample_counts =
        j.at("per_position").at("counts").get<std::vector<int>>();
    r.summary.oaa = j.at("oaa").get<double>();
    r.summary.opa = j.at("opa").get<double>();
    for (const auto& sj : j.at("per_seed"))
        r.per_seed.push_back({sj.at("seed").get<std::uint64_t>(),
                              sj.at("oaa").get<double>(), sj.at("opa").get<double>()});
    r.mean_prompt_tokens = j.at("mean_prompt_tokens").get<double>();
    return r;
}

void save_calibration_report(const CalibrationReport& report, const std::string& path) {
    json per_format = json::array();
    for (const auto& fs : report.per_format)
        per_format.push_back({{"format", format_to_json(fs.format)},
                              {"per_prompt", fs.per_prompt},
                              {"mean", fs.mean}});
    json j = {{"schema", "cnorm/calibration-report-v1"},
              {"created_at", now_iso8601()},
              {"per_format", per_format},
              {"selected", format_to_json(report.selected)},
              {"sample_count", report.sample_count},
              {"prompt_ids", report.prompt_ids}};
    write_json(j, path);
}

CalibrationReport load_calibration_report(const std::string& path) {
    json j = read_json(path, "cnorm/calibration-report-v1");
    CalibrationReport r;
    for (const auto& fj : j.at("per_format")) {
        CalibrationReport::FormatScores fs;
        fs.format = format_from_json(fj.at("format"));
        fs.per_prompt = fj.at("per_prompt").get<std::vector<double>>();
        fs.mean = fj.at("mean").get<double>();
        r.per_format.push_back(std::move(fs));
    }
    r.selected = format_from_json(j.at("selected"));
    r.sample_count = j.at("sample_count").get<int>();
    r.prompt_ids = j.at("prompt_ids").get<std::vector<std::string>>();
    return r;
}

void save_tokenization_report(const TokenizationReport& report, const std::string& path) {
    json points = json::array();
    for (const auto& p : report.points)
        points.push_back({{"delimiter", p.delimiter},
                          {"mean_token_count", p.mean_token_count},
                          {"oaa", p.oaa}});
    json j = {{"schema", "cnorm/tokenization-report-v1"},
              {"created_at", now_iso8601()},
              {"points", points},
              {"pearson_r", report.pearson_r}};
    write_json(j, path);
}

TokenizationReport load_tokenization_report(const std::string& path) {
    json j = read_json(path, "cnorm/tokenization-report-v1");
    TokenizationReport r;
    for (const auto& pj : j.at("points"))
        r.points.push_back({pj.at("delimiter").get<std::string>(),
                            pj.at("mean_token_count").get<double>(),
                            pj.at("oaa").get<double>()});
    r.pearson_r = j.at("pearson_r").get<double>();
    return r;
}

}  // namespace cnorm
