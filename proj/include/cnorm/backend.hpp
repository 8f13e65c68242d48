#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cnorm/attention.hpp"

namespace cnorm {

struct GenerationRecord {
    std::string text;
    std::optional<AttentionVector> attention;
    int token_count = 0;
};

struct GenerateOptions {
    int max_tokens = 64;
    bool return_attention = false;
    // Metadata the mock backend needs to decide whether it "found" the gold
    // evidence. Real backends ignore these fields.
    std::string format_tag;
    std::optional<std::pair<int, int>> gold_token_span;  // half-open [start, end)
    std::string gold_answer;
};

// The model boundary. Implementations must be deterministic for fixed state
// and inputs, and safely shareable across concurrent harness workers.
class Backend {
public:
    virtual ~Backend() = default;

    virtual GenerationRecord generate(const std::string& prompt,
                                      const GenerateOptions& options) = 0;

    // Throws if the backend cannot tokenize (check supports_tokenize first).
    virtual int tokenize_count(const std::string& text) const = 0;

    virtual bool supports_attention() const = 0;
    virtual bool supports_tokenize() const = 0;
    virtual std::string id() const = 0;
};

// Mock positional-bias model: attention over prompt tokens follows a
// three-zone weight profile keyed by delimiter tag, and the answer is the
// gold string iff the attention mass on the gold span clears a threshold.
struct ZoneWeights {
    double start = 1.0;  // normalized positions [0, 0.2)
    double mid = 1.0;    // [0.2, 0.8)
    double end = 1.0;    // [0.8, 1.0]

    void validate() const;  // at least one zone weight must be positive
};

struct MockModelConfig {
    ZoneWeights default_profile;
    std::map<std::string, ZoneWeights> profiles;  // delimiter tag -> zones
    double tau = 0.05;                            // answer threshold, in (0,1)
    std::string splitting_delimiters;  // characters emitted as their own tokens

    void validate() const;
    static MockModelConfig load(const std::string& path);
    void save(const std::string& path) const;
};

class MockBackend : public Backend {
public:
    explicit MockBackend(MockModelConfig config);

    GenerationRecord generate(const std::string& prompt,
                              const GenerateOptions& options) override;
    // Whitespace-delimited units; each configured splitting delimiter becomes
    // an isolated token, splitting its unit ("a-b" -> a, -, b).
    int tokenize_count(const std::string& text) const override;
    bool supports_attention() const override { return true; }
    bool supports_tokenize() const override { return true; }
    std::string id() const override { return "mock"; }

    const MockModelConfig& config() const { return config_; }

    std::vector<std::string> tokenize(const std::string& text) const;

private:
    MockModelConfig config_;
};

// Replays stored GenerationRecords keyed by prompt content (FNV-1a hash).
class ReplayBackend : public Backend {
public:
    explicit ReplayBackend(const std::string& trace_path);

    GenerationRecord generate(const std::string& prompt,
                              const GenerateOptions& options) override;
    int tokenize_count(const std::string& text) const override;
    bool supports_attention() const override { return true; }
    bool supports_tokenize() const override { return true; }
    std::string id() const override { return "replay:" + path_; }

private:
    struct StoredRecord {
        GenerationRecord record;
        std::optional<int> tokenize_only_count;
    };
    std::string path_;
    std::map<std::string, StoredRecord> records_;  // prompt_id -> record
};

// Wraps any backend and appends every generate/tokenize result to a JSONL
// trace, making the run replayable offline.
class RecordingBackend : public Backend {
public:
    RecordingBackend(std::shared_ptr<Backend> inner, const std::string& trace_path);

    GenerationRecord generate(const std::string& prompt,
                              const GenerateOptions& options) override;
    int tokenize_count(const std::string& text) const override;
    bool supports_attention() const override { return inner_->supports_attention(); }
    bool supports_tokenize() const override { return inner_->supports_tokenize(); }
    std::string id() const override { return inner_->id(); }

private:
    void append(const std::string& line) const;

    std::shared_ptr<Backend> inner_;
    std::string trace_path_;
    mutable std::mutex write_mutex_;
};

struct RemoteConfig {
    std::string base_url;            // e.g. http://127.0.0.1:8080
    std::string auth_header;         // optional "Bearer ..." value
    int timeout_seconds = 120;
    int max_retries = 3;             // transport errors only
    int initial_backoff_ms = 100;
};

struct RemoteCapabilities {
    bool attention_supported = false;
    std::string attention_convention;
    int max_prompt_tokens = 0;
};

// HTTP client for the wire contract: POST /v1/generate, POST /v1/tokenize,
// GET /v1/capabilities.
class RemoteBackend : public Backend {
public:
    explicit RemoteBackend(RemoteConfig config);
    ~RemoteBackend() override;

    GenerationRecord generate(const std::string& prompt,
                              const GenerateOptions& options) override;
    int tokenize_count(const std::string& text) const override;
    bool supports_attention() const override;
    bool supports_tokenize() const override { return true; }
    std::string id() const override { return "remote:" + config_.base_url; }

    RemoteCapabilities capabilities() const;

private:
    struct Impl;
    RemoteConfig config_;
    std::unique_ptr<Impl> impl_;
};

std::string prompt_id_for(const std::string& prompt);

}  // namespace cnorm
