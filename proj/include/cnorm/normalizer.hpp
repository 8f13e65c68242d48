#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cnorm/dataset.hpp"

namespace cnorm {

// One candidate context format: a delimiter f (nullopt = `none`, i.e. leave
// text untouched) and the fraction p of sentences to rewrite.
struct FormatConfig {
    std::optional<char> delimiter;
    double ratio = 0.5;

    // Throws on ratio outside [0,1] or a non-printable/whitespace delimiter.
    void validate() const;

    std::string label() const;  // "none" or the single delimiter character
    static FormatConfig from_label(const std::string& label, double ratio);
    bool operator==(const FormatConfig&) const = default;
};

// Lossless sentence split: text == sentences[0] + separators[0] +
// sentences[1] + ... Separators are the inter-sentence whitespace runs.
struct Segmentation {
    std::vector<std::string> sentences;
    std::vector<std::string> separators;  // size = sentences.size() - 1 (or 0)

    std::string rejoin() const;
};

struct NormalizedDocument {
    Document original;
    std::string text;
    FormatConfig config;
    std::set<size_t> reformatted_indices;
};

// Boundary rule: a sentence ends after '.', '!' or '?' followed by at least
// one whitespace character; the terminator stays with its sentence.
Segmentation segment_sentences(const std::string& text);

// Replaces every maximal run of whitespace in the sentence with a single
// delimiter character. Nothing else changes.
std::string reformat_sentence(const std::string& sentence, char delimiter);

// Rewrites ceil(p * n) sentences chosen by a deterministic pseudo-random rule
// seeded by (document id, selection_seed). With delimiter `none` the selected
// sentences are left as-is, so the text is always unchanged in that case.
NormalizedDocument normalize_document(const Document& doc, const FormatConfig& config,
                                      std::uint64_t selection_seed);

// One FormatConfig per delimiter label ("none" or a single character), all
// sharing ratio p. Throws on an empty list or duplicates.
std::vector<FormatConfig> candidate_formats(const std::vector<std::string>& delimiters,
                                            double p);

// Default candidate set from the delimiter study: none, -, _, :, ., ~, +, /, &.
std::vector<std::string> default_delimiter_labels();

struct PromptTemplate {
    std::string body = "{documents}\n\nQuestion: {question}\nAnswer:";
    std::string doc_prefix = "Document [{k}]: ";  // {k} is the 1-based index
    std::string doc_separator = "\n";

    static PromptTemplate load(const std::string& path);
};

std::string assemble_prompt(const std::string& question,
                            const std::vector<NormalizedDocument>& docs,
                            const PromptTemplate& tmpl);

// Same as assemble_prompt but also reports each document's character range
// within the prompt, so callers can map documents to token spans.
struct AssembledPrompt {
    std::string text;
    std::vector<std::pair<size_t, size_t>> doc_char_ranges;  // (offset, length)
};
AssembledPrompt assemble_prompt_with_spans(const std::string& question,
                                           const std::vector<NormalizedDocument>& docs,
                                           const PromptTemplate& tmpl);

}  // namespace cnorm
