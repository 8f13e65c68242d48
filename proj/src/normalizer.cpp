#include "cnorm/normalizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "cnorm/util.hpp"

namespace cnorm {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

// Bumped if the selection rule or the default delimiter set ever changes, so
// old run artifacts cannot be silently mixed with new ones.
constexpr std::uint64_t kDelimiterSetVersion = 1;

}  // namespace

void FormatConfig::validate() const {
    if (!(ratio >= 0.0 && ratio <= 1.0))
        throw std::invalid_argument("FormatConfig.ratio must be in [0,1]");
    if (delimiter) {
        char d = *delimiter;
        if (!std::isprint(static_cast<unsigned char>(d)) || is_space(d))
            throw std::invalid_argument(
                "FormatConfig.delimiter must be a printable non-whitespace character");
    }
}

std::string FormatConfig::label() const {
    return delimiter ? std::string(1, *delimiter) : "none";
}

FormatConfig FormatConfig::from_label(const std::string& label, double ratio) {
    FormatConfig cfg;
    cfg.ratio = ratio;
    if (label != "none") {
        if (label.size() != 1)
            throw std::invalid_argument("delimiter label must be 'none' or a single character: '" +
                                        label + "'");
        cfg.delimiter = label[0];
    }
    cfg.validate();
    return cfg;
}

std::string Segmentation::rejoin() const {
    std::string out;
    for (size_t i = 0; i < sentences.size(); ++i) {
        out += sentences[i];
        if (i < separators.size()) out += separators[i];
    }
    return out;
}

Segmentation segment_sentences(const std::string& text) {
    Segmentation seg;
    if (text.empty()) return seg;
    size_t sentence_start = 0;
    size_t i = 0;
    while (i < text.size()) {
        if (is_terminator(text[i]) && i + 1 < text.size() && is_space(text[i + 1])) {
            seg.sentences.push_back(text.substr(sentence_start, i + 1 - sentence_start));
            size_t ws_start = i + 1;
            size_t ws_end = ws_start;
            while (ws_end < text.size() && is_space(text[ws_end])) ++ws_end;
            if (ws_end == text.size()) {
                // Trailing whitespace belongs to the last sentence, not a
                // separator; fold it back.
                seg.sentences.back() += text.substr(ws_start);
                return seg;
            }
            seg.separators.push_back(text.substr(ws_start, ws_end - ws_start));
            sentence_start = ws_end;
            i = ws_end;
        } else {
            ++i;
        }
    }
    seg.sentences.push_back(text.substr(sentence_start));
    return seg;
}

std::string reformat_sentence(const std::string& sentence, char delimiter) {
    std::string out;
    out.reserve(sentence.size());
    size_t i = 0;
    while (i < sentence.size()) {
        if (is_space(sentence[i])) {
            out.push_back(delimiter);
            while (i < sentence.size() && is_space(sentence[i])) ++i;
        } else {
            out.push_back(sentence[i]);
            ++i;
        }
    }
    return out;
}

NormalizedDocument normalize_document(const Document& doc, const FormatConfig& config,
                                      std::uint64_t selection_seed) {
    config.validate();
    NormalizedDocument out;
    out.original = doc;
    out.config = config;

    Segmentation seg = segment_sentences(doc.text);
    size_t n = seg.sentences.size();
    size_t k = n == 0 ? 0
                      : static_cast<size_t>(
                            std::ceil(config.ratio * static_cast<double>(n) - 1e-9));
    if (k > n) k = n;

    // Selection is pseudo-random but fully determined by the document id and
    // the caller's seed; always-first selection would confound with the
    // position effects under study.
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::mt19937_64 rng(mix_seed(fnv1a64(doc.id) ^ kDelimiterSetVersion, selection_seed));
    for (size_t i = n; i > 1; --i) {
        size_t j = static_cast<size_t>(rng() % i);
        std::swap(order[i - 1], order[j]);
    }
    out.reformatted_indices.insert(order.begin(), order.begin() + static_cast<long>(k));

    if (config.delimiter) {
        for (size_t idx : out.reformatted_indices)
            seg.sentences[idx] = reformat_sentence(seg.sentences[idx], *config.delimiter);
    }
    out.text = seg.rejoin();
    return out;
}

std::vector<FormatConfig> candidate_formats(const std::vector<std::string>& delimiters,
                                            double p) {
    if (delimiters.empty())
        throw std::invalid_argument("candidate_formats: empty delimiter list");
    std::vector<FormatConfig> out;
    for (const auto& label : delimiters) {
        FormatConfig cfg = FormatConfig::from_label(label, p);
        if (std::find(out.begin(), out.end(), cfg) != out.end())
            throw std::invalid_argument("candidate_formats: duplicate delimiter '" +
                                        label + "'");
        out.push_back(cfg);
    }
    return out;
}

std::vector<std::string> default_delimiter_labels() {
    return {"none", "-", "_", ":", ".", "~", "+", "/", "&"};
}

PromptTemplate PromptTemplate::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open template file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    PromptTemplate t;
    t.body = ss.str();
    if (t.body.find("{question}") == std::string::npos ||
        t.body.find("{documents}") == std::string::npos)
        throw std::runtime_error("template " + path +
                                 " must contain {question} and {documents}");
    return t;
}

namespace {

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    size_t pos = 0;
    while ((pos = s.find(from, pos)) != std::string::npos) {
        s.replace(pos, from.size(), to);
        pos += to.size();
    }
    return s;
}

}  // namespace

AssembledPrompt assemble_prompt_with_spans(const std::string& question,
                                           const std::vector<NormalizedDocument>& docs,
                                           const PromptTemplate& tmpl) {
    size_t q_pos = tmpl.body.find("{question}");
    size_t d_pos = tmpl.body.find("{documents}");
    if (q_pos == std::string::npos || d_pos == std::string::npos)
        throw std::invalid_argument("prompt template missing {question} or {documents}");

    std::string block;
    std::vector<std::pair<size_t, size_t>> ranges;
    for (size_t i = 0; i < docs.size(); ++i) {
        if (i > 0) block += tmpl.doc_separator;
        block += replace_all(tmpl.doc_prefix, "{k}", std::to_string(i + 1));
        ranges.emplace_back(block.size(), docs[i].text.size());
        block += docs[i].text;
    }

    AssembledPrompt out;
    out.text = replace_all(tmpl.body, "{documents}", block);
    size_t block_at = tmpl.body.find("{documents}");
    // Offsets shift if {question} expands before the document block.
    std::string prefix = out.text.substr(0, block_at);
    size_t shift = replace_all(prefix, "{question}", question).size();
    out.text = replace_all(out.text, "{question}", question);
    for (auto& r : ranges) r.first += shift;
    out.doc_char_ranges = std::move(ranges);
    return out;
}

std::string assemble_prompt(const std::string& question,
                            const std::vector<NormalizedDocument>& docs,
                            const PromptTemplate& tmpl) {
    return assemble_prompt_with_spans(question, docs, tmpl).text;
}

}  // namespace cnorm
