#include "cnorm/backend.hpp"

#include <cctype>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cnorm/util.hpp"

namespace cnorm {

using nlohmann::json;

std::string prompt_id_for(const std::string& prompt) {
    return hex64(fnv1a64(prompt));
}

void ZoneWeights::validate() const {
    if (start < 0 || mid < 0 || end < 0)
        throw std::invalid_argument("ZoneWeights: negative zone weight");
    if (start + mid + end <= 0)
        throw std::invalid_argument("ZoneWeights: all zone weights are zero");
}

void MockModelConfig::validate() const {
    default_profile.validate();
    for (const auto& [tag, zones] : profiles) zones.validate();
    if (!(tau > 0.0 && tau <= 1.0))
        throw std::invalid_argument("MockModelConfig: tau must be in (0,1]");
}

namespace {

ZoneWeights zones_from_json(const json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

json zones_to_json(const ZoneWeights& z) {
    return json::array({z.start, z.mid, z.end});
}

}  // namespace

MockModelConfig MockModelConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mock config: " + path);
    json j = json::parse(in);
    MockModelConfig cfg;
    cfg.tau = j.value("tau", 0.05);
    cfg.splitting_delimiters = j.value("splitting_delimiters", "");
    if (j.contains("default_profile"))
        cfg.default_profile = zones_from_json(j.at("default_profile"));
    if (j.contains("profiles"))
        for (const auto& [tag, zones] : j.at("profiles").items())
            cfg.profiles[tag] = zones_from_json(zones);
    cfg.validate();
    return cfg;
}

void MockModelConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write mock config: " + path);
    json profiles_json = json::object();
    for (const auto& [tag, zones] : profiles) profiles_json[tag] = zones_to_json(zones);
    json j = {{"tau", tau},
              {"splitting_delimiters", splitting_delimiters},
              {"default_profile", zones_to_json(default_profile)},
              {"profiles", profiles_json}};
    out << j.dump(2) << "\n";
}

MockBackend::MockBackend(MockModelConfig config) : config_(std::move(config)) {
    config_.validate();
}

std::vector<std::string> MockBackend::tokenize(const std::string& text) const {
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(current);
            current.clear();
        }
    };
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (config_.splitting_delimiters.find(c) != std::string::npos) {
            flush();
            tokens.emplace_back(1, c);
        } else {
            current.push_back(c);
        }
    }
    flush();
    return tokens;
}

int MockBackend::tokenize_count(const std::string& text) const {
    return static_cast<int>(tokenize(text).size());
}

GenerationRecord MockBackend::generate(const std::string& prompt,
                                       const GenerateOptions& options) {
    if (prompt.empty()) throw std::invalid_argument("MockBackend: empty prompt");
    const int n = tokenize_count(prompt);
    if (n < 1) throw std::invalid_argument("MockBackend: prompt has no tokens");

    ZoneWeights zones = config_.default_profile;
    if (auto it = config_.profiles.find(options.format_tag); it != config_.profiles.end())
        zones = it->second;

    std::vector<double> weights(static_cast<size_t>(n));
    double sum = 0.0;
    for (int t = 0; t < n; ++t) {
        double pos = static_cast<double>(t) / static_cast<double>(n);
        double w = pos < 0.2 ? zones.start : pos < 0.8 ? zones.mid : zones.end;
        weights[static_cast<size_t>(t)] = w;
        sum += w;
    }

    GenerationRecord rec;
    rec.token_count = n;
    if (options.gold_token_span) {
        auto [s, e] = *options.gold_token_span;
        if (s < 0 || e > n || s >= e)
            throw std::invalid_argument("MockBackend: gold span [" + std::to_string(s) +
                                        "," + std::to_string(e) +
                                        ") outside prompt of " + std::to_string(n) +
                                        " tokens");
        double gold_mass = 0.0;
        for (int t = s; t < e; ++t) gold_mass += weights[static_cast<size_t>(t)];
        gold_mass /= sum;
        rec.text = gold_mass >= config_.tau ? options.gold_answer : "UNKNOWN";
    } else {
        rec.text = "UNKNOWN";
    }
    if (options.return_attention) {
        AttentionVector a;
        a.weights = std::move(weights);
        a.prompt_id = prompt_id_for(prompt);
        a.format_tag = options.format_tag;
        rec.attention = std::move(a);
    }
    return rec;
}

ReplayBackend::ReplayBackend(const std::string& trace_path) : path_(trace_path) {
    std::ifstream in(trace_path);
    if (!in) throw std::runtime_error("cannot open trace file: " + trace_path);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error("trace line " + std::to_string(lineno) +
                                     ": parse error: " + e.what());
        }
        StoredRecord stored;
        std::string id = j.at("prompt_id").get<std::string>();
        if (j.value("kind", "generate") == "tokenize") {
            stored.tokenize_only_count = j.at("token_count").get<int>();
        } else {
            stored.record.text = j.at("text").get<std::string>();
            stored.record.token_count = j.at("token_count").get<int>();
            if (j.contains("attention") && !j.at("attention").is_null()) {
                AttentionVector a;
                a.prompt_id = id;
                a.format_tag = j.value("format_tag", "");
                a.weights = j.at("attention").at("weights").get<std::vector<double>>();
                stored.record.attention = std::move(a);
            }
        }
        records_[id] = std::move(stored);
    }
}

GenerationRecord ReplayBackend::generate(const std::string& prompt,
                                         const GenerateOptions& options) {
    auto it = records_.find(prompt_id_for(prompt));
    if (it == records_.end() || it->second.tokenize_only_count)
        throw std::runtime_error("ReplayBackend: no recorded generation for prompt id " +
                                 prompt_id_for(prompt));
    GenerationRecord rec = it->second.record;
    if (options.return_attention && !rec.attention)
        throw std::runtime_error(
            "ReplayBackend: attention requested but the recorded run did not capture it");
    if (!options.return_attention) rec.attention.reset();
    return rec;
}

int ReplayBackend::tokenize_count(const std::string& text) const {
    auto it = records_.find(prompt_id_for(text));
    if (it == records_.end())
        throw std::runtime_error("ReplayBackend: no recorded token count for text id " +
                                 prompt_id_for(text));
    if (it->second.tokenize_only_count) return *it->second.tokenize_only_count;
    return it->second.record.token_count;
}

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner,
                                   const std::string& trace_path)
    : inner_(std::move(inner)), trace_path_(trace_path) {
    std::ofstream out(trace_path_, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open trace for writing: " + trace_path_);
}

void RecordingBackend::append(const std::string& line) const {
    std::lock_guard<std::mutex> lock(write_mutex_);
    std::ofstream out(trace_path_, std::ios::app);
    out << line << "\n";
}

GenerationRecord RecordingBackend::generate(const std::string& prompt,
                                            const GenerateOptions& options) {
    // Always capture attention in the trace if the backend can produce it, so
    // the replay supports both modes.
    GenerateOptions inner_options = options;
    if (inner_->supports_attention()) inner_options.return_attention = true;
    GenerationRecord rec = inner_->generate(prompt, inner_options);

    json j = {{"kind", "generate"},
              {"prompt_id", prompt_id_for(prompt)},
              {"format_tag", options.format_tag},
              {"text", rec.text},
              {"token_count", rec.token_count}};
    if (rec.attention)
        j["attention"] = {{"T", rec.attention->weights.size()},
                          {"weights", rec.attention->weights}};
    append(j.dump());

    if (!options.return_attention) rec.attention.reset();
    return rec;
}

int RecordingBackend::tokenize_count(const std::string& text) const {
    int count = inner_->tokenize_count(text);
    json j = {{"kind", "tokenize"}, {"prompt_id", prompt_id_for(text)},
              {"token_count", count}};
    append(j.dump());
    return count;
}

}  // namespace cnorm
