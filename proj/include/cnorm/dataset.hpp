#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace cnorm {

// Lowercase hexadecimal string. Keys and values of the synthetic key-value
// benchmark are HexStrings.
struct HexString {
    std::string chars;

    // Throws std::invalid_argument on empty input or non-[0-9a-f] characters.
    explicit HexString(std::string s);
    HexString() = default;

    size_t length() const { return chars.size(); }
    bool operator==(const HexString&) const = default;
};

// Surface format of a key/value identifier: plain hex, UUID-style hyphen
// grouping, or UUID grouping with the hyphen swapped for another delimiter.
struct FormatStyle {
    enum class Kind { Uuid, PlainText, ModifiedUuid };

    Kind kind = Kind::PlainText;
    char delimiter = '-';  // meaningful only for ModifiedUuid

    static FormatStyle uuid() { return {Kind::Uuid, '-'}; }
    static FormatStyle plain_text() { return {Kind::PlainText, '-'}; }
    // Throws if d is not a single printable non-hexadecimal character.
    static FormatStyle modified_uuid(char d);

    std::string label() const;
    bool operator==(const FormatStyle&) const = default;
};

struct KvGenConfig {
    int num_pairs = 40;
    int char_len = 32;
    int num_samples = 500;
    std::uint64_t seed = 0;

    // Throws std::invalid_argument naming the violated field.
    void validate() const;
};

struct KvSample {
    std::string id;
    std::vector<std::pair<HexString, HexString>> pairs;  // (key, value)
    int gold_index = 0;
};

struct Document {
    std::string id;
    std::string text;
    bool is_gold = false;
};

struct QaSample {
    std::string id;
    std::string question;
    std::vector<std::string> gold_answers;
    std::vector<Document> documents;

    int gold_document_index() const;  // throws if not exactly one gold
};

struct KvDataset {
    std::vector<KvSample> samples;
    KvGenConfig config;
};

struct QaDataset {
    std::vector<QaSample> samples;
    std::string source;
};

// Deterministic generator: identical configs (including seed) produce
// byte-identical datasets. PRNG is std::mt19937_64 seeded with config.seed;
// hex characters are drawn as nibbles of successive 64-bit outputs, high
// nibble first, so output does not depend on distribution internals.
KvDataset generate_kv_dataset(const KvGenConfig& config);

// PlainText: identity. Uuid on 32 chars: 8-4-4-4-12 joined by '-'; any other
// groupable length uses consecutive 4-char groups. ModifiedUuid: Uuid form
// with '-' replaced by the configured delimiter.
// Throws if s.length() is not divisible by 4.
std::string apply_format_style(const HexString& s, const FormatStyle& style);

// Renders one key-value extraction prompt with the gold pair moved to
// gold_position (distractors keep relative order).
std::string render_kv_prompt(const KvSample& sample, const FormatStyle& style,
                             int gold_position);

// Converts a KV sample to the generic QA shape so the permutation harness can
// drive it: each pair becomes a one-line "key: value" document, the question
// is the formatted gold key, the gold answer is the raw gold value hex.
QaSample kv_to_qa(const KvSample& sample, const FormatStyle& style);

// JSONL persistence. load_qa_dataset rejects invariant violations with the
// offending line number and sample id in the message.
QaDataset load_qa_dataset(const std::string& path);
void save_qa_dataset(const QaDataset& ds, const std::string& path);
KvDataset load_kv_dataset(const std::string& path);
void save_kv_dataset(const KvDataset& ds, const std::string& path);

}  // namespace cnorm
