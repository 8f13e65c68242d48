#include "cnorm/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "cnorm/util.hpp"

namespace cnorm {

using nlohmann::json;

HexString::HexString(std::string s) : chars(std::move(s)) {
    if (chars.empty()) throw std::invalid_argument("HexString: empty");
    for (char c : chars) {
        if (!is_hex_digit(c))
            throw std::invalid_argument("HexString: non-hex character '" +
                                        std::string(1, c) + "'");
    }
}

FormatStyle FormatStyle::modified_uuid(char d) {
    if (!std::isprint(static_cast<unsigned char>(d)) || is_hex_digit(d))
        throw std::invalid_argument(
            "ModifiedUuid delimiter must be a printable non-hex character");
    return {Kind::ModifiedUuid, d};
}

std::string FormatStyle::label() const {
    switch (kind) {
        case Kind::Uuid: return "uuid";
        case Kind::PlainText: return "plain";
        case Kind::ModifiedUuid: return std::string("modified-uuid:") + delimiter;
    }
    return "?";
}

void KvGenConfig::validate() const {
    if (num_pairs < 2)
        throw std::invalid_argument("KvGenConfig.num_pairs must be >= 2");
    if (char_len < 8)
        throw std::invalid_argument("KvGenConfig.char_len must be >= 8");
    if (char_len % 4 != 0)
        throw std::invalid_argument("KvGenConfig.char_len must be divisible by 4");
    if (num_samples < 1)
        throw std::invalid_argument("KvGenConfig.num_samples must be >= 1");
}

int QaSample::gold_document_index() const {
    int found = -1;
    for (size_t i = 0; i < documents.size(); ++i) {
        if (documents[i].is_gold) {
            if (found >= 0)
                throw std::invalid_argument("QaSample " + id +
                                            ": more than one gold document");
            found = static_cast<int>(i);
        }
    }
    if (found < 0)
        throw std::invalid_argument("QaSample " + id + ": no gold document");
    return found;
}

namespace {

// Nibble-at-a-time hex generation keeps the byte stream independent of
// std::uniform_int_distribution, which varies across standard libraries.
class HexGen {
public:
    explicit HexGen(std::uint64_t seed) : rng_(seed) {}

    std::string draw(int len) {
        static const char* digits = "0123456789abcdef";
        std::string out;
        out.reserve(static_cast<size_t>(len));
        while (static_cast<int>(out.size()) < len) {
            if (nibbles_left_ == 0) {
                word_ = rng_();
                nibbles_left_ = 16;
            }
            out.push_back(digits[(word_ >> 60) & 0xf]);
            word_ <<= 4;
            --nibbles_left_;
        }
        return out;
    }

    std::uint64_t draw_u64() { return rng_(); }

private:
    std::mt19937_64 rng_;
    std::uint64_t word_ = 0;
    int nibbles_left_ = 0;
};

}  // namespace

KvDataset generate_kv_dataset(const KvGenConfig& config) {
    config.validate();
    HexGen gen(config.seed);
    KvDataset ds;
    ds.config = config;
    ds.samples.reserve(static_cast<size_t>(config.num_samples));
    for (int s = 0; s < config.num_samples; ++s) {
        KvSample sample;
        sample.id = "kv-" + std::to_string(s);
        std::set<std::string> seen;
        while (static_cast<int>(sample.pairs.size()) < config.num_pairs) {
            std::string k = gen.draw(config.char_len);
            std::string v = gen.draw(config.char_len);
            // Regenerate on collision; keys and values must be pairwise
            // distinct within the sample.
            if (k == v || seen.count(k) || seen.count(v)) continue;
            seen.insert(k);
            seen.insert(v);
            sample.pairs.emplace_back(HexString(k), HexString(v));
        }
        sample.gold_index =
            static_cast<int>(gen.draw_u64() % static_cast<std::uint64_t>(config.num_pairs));
        ds.samples.push_back(std::move(sample));
    }
    return ds;
}

std::string apply_format_style(const HexString& s, const FormatStyle& style) {
    if (style.kind == FormatStyle::Kind::PlainText) return s.chars;
    if (s.length() % 4 != 0)
        throw std::invalid_argument("apply_format_style: length " +
                                    std::to_string(s.length()) +
                                    " not groupable into 4-char groups");
    char delim = style.kind == FormatStyle::Kind::Uuid ? '-' : style.delimiter;
    std::vector<size_t> groups;
    if (s.length() == 32) {
        groups = {8, 4, 4, 4, 12};  // canonical UUID grouping
    } else {
        groups.assign(s.length() / 4, 4);
    }
    std::string out;
    out.reserve(s.length() + groups.size() - 1);
    size_t pos = 0;
    for (size_t i = 0; i < groups.size(); ++i) {
        if (i > 0) out.push_back(delim);
        out.append(s.chars, pos, groups[i]);
        pos += groups[i];
    }
    return out;
}

namespace {

std::vector<std::pair<HexString, HexString>> pairs_with_gold_at(
    const KvSample& sample, int gold_position) {
    if (gold_position < 0 || gold_position >= static_cast<int>(sample.pairs.size()))
        throw std::out_of_range("gold_position " + std::to_string(gold_position) +
                                " out of range for " +
                                std::to_string(sample.pairs.size()) + " pairs");
    std::vector<std::pair<HexString, HexString>> out;
    out.reserve(sample.pairs.size());
    for (int i = 0; i < static_cast<int>(sample.pairs.size()); ++i)
        if (i != sample.gold_index) out.push_back(sample.pairs[static_cast<size_t>(i)]);
    out.insert(out.begin() + gold_position, sample.pairs[static_cast<size_t>(sample.gold_index)]);
    return out;
}

}  // namespace

std::string render_kv_prompt(const KvSample& sample, const FormatStyle& style,
                             int gold_position) {
    auto ordered = pairs_with_gold_at(sample, gold_position);
    const auto& gold = sample.pairs[static_cast<size_t>(sample.gold_index)];
    std::ostringstream out;
    out << "Extract the value corresponding to the specified key in the JSON "
           "object below.\n\n";
    for (const auto& [k, v] : ordered)
        out << apply_format_style(k, style) << ": " << apply_format_style(v, style)
            << "\n";
    out << "\nKey: " << apply_format_style(gold.first, style)
        << "\nCorresponding value:";
    return out.str();
}

QaSample kv_to_qa(const KvSample& sample, const FormatStyle& style) {
    QaSample qa;
    qa.id = sample.id;
    const auto& gold = sample.pairs[static_cast<size_t>(sample.gold_index)];
    qa.question = apply_format_style(gold.first, style);
    qa.gold_answers = {gold.second.chars};
    for (size_t i = 0; i < sample.pairs.size(); ++i) {
        const auto& [k, v] = sample.pairs[i];
        Document doc;
        doc.id = sample.id + "/p" + std::to_string(i);
        doc.text = apply_format_style(k, style) + ": " + apply_format_style(v, style);
        doc.is_gold = static_cast<int>(i) == sample.gold_index;
        qa.documents.push_back(std::move(doc));
    }
    return qa;
}

namespace {

void validate_qa_sample(const QaSample& s, int line) {
    auto fail = [&](const std::string& msg) {
        throw std::runtime_error("line " + std::to_string(line) + ", sample '" +
                                 s.id + "': " + msg);
    };
    if (s.id.empty()) fail("empty id");
    if (s.gold_answers.empty()) fail("gold_answers is empty");
    int golds = 0;
    for (const auto& d : s.documents) {
        if (d.text.empty()) fail("document '" + d.id + "' has empty text");
        if (d.is_gold) ++golds;
    }
    if (golds != 1)
        fail("expected exactly one gold document, found " + std::to_string(golds));
}

}  // namespace

QaDataset load_qa_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);
    QaDataset ds;
    ds.source = path;
    std::set<std::string> ids;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw std::runtime_error("line " + std::to_string(lineno) +
                                     ": parse error: " + e.what());
        }
        QaSample s;
        try {
            s.id = j.at("id").get<std::string>();
            s.question = j.at("question").get<std::string>();
            s.gold_answers = j.at("gold_answers").get<std::vector<std::string>>();
            for (const auto& dj : j.at("documents")) {
                Document d;
                d.id = dj.at("id").get<std::string>();
                d.text = dj.at("text").get<std::string>();
                d.is_gold = dj.at("is_gold").get<bool>();
                s.documents.push_back(std::move(d));
            }
        } catch (const json::exception& e) {
            throw std::runtime_error("line " + std::to_string(lineno) +
                                     ": malformed record: " + e.what());
        }
        validate_qa_sample(s, lineno);
        if (!ids.insert(s.id).second)
            throw std::runtime_error("line " + std::to_string(lineno) +
                                     ": duplicate sample id '" + s.id + "'");
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

void save_qa_dataset(const QaDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write dataset file: " + path);
    for (const auto& s : ds.samples) {
        json docs = json::array();
        for (const auto& d : s.documents)
            docs.push_back({{"id", d.id}, {"text", d.text}, {"is_gold", d.is_gold}});
        json j = {{"id", s.id},
                  {"question", s.question},
                  {"gold_answers", s.gold_answers},
                  {"documents", docs}};
        out << j.dump() << "\n";
    }
}

KvDataset load_kv_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);
    KvDataset ds;
    std::set<std::string> ids;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line);
        KvSample s;
        s.id = j.at("id").get<std::string>();
        for (const auto& pj : j.at("pairs"))
            s.pairs.emplace_back(HexString(pj.at(0).get<std::string>()),
                                 HexString(pj.at(1).get<std::string>()));
        s.gold_index = j.at("gold_index").get<int>();
        if (s.gold_index < 0 || s.gold_index >= static_cast<int>(s.pairs.size()))
            throw std::runtime_error("line " + std::to_string(lineno) +
                                     ": gold_index out of range");
        if (!ids.insert(s.id).second)
            throw std::runtime_error("line " + std::to_string(lineno) +
                                     ": duplicate sample id '" + s.id + "'");
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

void save_kv_dataset(const KvDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write dataset file: " + path);
    for (const auto& s : ds.samples) {
        json pairs = json::array();
        for (const auto& [k, v] : s.pairs) pairs.push_back({k.chars, v.chars});
        json j = {{"id", s.id}, {"pairs", pairs}, {"gold_index", s.gold_index}};
        out << j.dump() << "\n";
    }
}

}  // namespace cnorm
