#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "gmnet/errors.hpp"
#include "gmnet/text.hpp"

namespace gmnet {

// Reserved token ids.
inline constexpr int kPad = 0;
inline constexpr int kBos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;

enum class Split { Train, Val, Test };

inline std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw FormatError("unknown split tag: \"" + s + "\"");
}

struct CaptionRecord {
    std::string clip_id;
    std::string caption;
    Split split = Split::Train;
};

// Token id sequence [BOS, w_1 .. w_n, EOS].
struct VocabEncodedCaption {
    std::vector<int> ids;

    std::size_t steps() const { return ids.empty() ? 0 : ids.size() - 1; }
    std::vector<int> words() const {
        if (ids.size() < 2) return {};
        return std::vector<int>(ids.begin() + 1, ids.end() - 1);
    }
};

class Vocabulary {
public:
    Vocabulary() {
        for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) add_token(t);
    }

    int add_token(const std::string& tok) {
        auto it = to_id_.find(tok);
        if (it != to_id_.end()) return it->second;
        const int id = static_cast<int>(tokens_.size());
        to_id_[tok] = id;
        tokens_.push_back(tok);
        return id;
    }

    int id_of(const std::string& tok) const {
        auto it = to_id_.find(tok);
        return it == to_id_.end() ? kUnk : it->second;
    }

    const std::string& token_of(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
            throw DataError("token id " + std::to_string(id) + " out of range");
        return tokens_[static_cast<std::size_t>(id)];
    }

    std::size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> to_id_;
};

// Tokens with frequency >= min_count get ids in descending-frequency order,
// ties broken alphabetically; everything else maps to <unk>.
inline Vocabulary build_vocab(const std::vector<CaptionRecord>& records, int min_count = 1) {
    if (records.empty()) throw UsageError("build_vocab: no records");
    std::map<std::string, std::int64_t> freq;
    for (const auto& r : records)
        for (const auto& tok : tokenize(r.caption)) ++freq[tok];
    std::vector<std::pair<std::string, std::int64_t>> ranked(freq.begin(), freq.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocabulary v;
    for (const auto& [tok, count] : ranked)
        if (count >= min_count) v.add_token(tok);
    return v;
}

inline VocabEncodedCaption encode_caption(const Vocabulary& v, const std::string& text,
                                          std::size_t l_max = 20) {
    const auto tokens = tokenize(text);
    if (tokens.empty()) throw DataError("encode_caption: empty caption after tokenization");
    if (l_max < 3) throw UsageError("encode_caption: l_max must leave room for one word");
    VocabEncodedCaption out;
    out.ids.push_back(kBos);
    for (const auto& tok : tokens) {
        if (out.ids.size() == l_max - 1) break;  // truncate, keeping EOS
        out.ids.push_back(v.id_of(tok));
    }
    out.ids.push_back(kEos);
    return out;
}

inline std::string decode_caption(const Vocabulary& v, const std::vector<int>& ids) {
    std::vector<std::string> words;
    for (int id : ids) {
        if (id == kBos || id == kPad) continue;
        if (id == kEos) break;
        words.push_back(v.token_of(id));
    }
    return join_tokens(words);
}

// --- caption JSON-lines ------------------------------------------------

inline std::vector<CaptionRecord> load_caption_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open caption file: " + path);
    std::vector<CaptionRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
        }
        if (!j.contains("id") || !j.contains("caption") || !j.contains("split"))
            throw FormatError(path + ":" + std::to_string(lineno) +
                              ": record needs id, caption and split fields");
        CaptionRecord r;
        r.clip_id = j["id"].get<std::string>();
        r.caption = j["caption"].get<std::string>();
        r.split = parse_split(j["split"].get<std::string>());
        if (r.caption.empty())
            throw FormatError(path + ":" + std::to_string(lineno) + ": empty caption");
        out.push_back(std::move(r));
    }
    return out;
}

inline void save_caption_records(const std::string& path,
                                 const std::vector<CaptionRecord>& records) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const auto& r : records) {
        nlohmann::json j{{"id", r.clip_id}, {"caption", r.caption},
                         {"split", split_name(r.split)}};
        out << j.dump() << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

struct Prediction {
    std::string clip_id;
    std::string caption;
};

inline std::vector<Prediction> load_predictions(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open prediction file: " + path);
    std::vector<Prediction> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
        }
        if (!j.contains("id") || !j.contains("caption"))
            throw FormatError(path + ":" + std::to_string(lineno) +
                              ": record needs id and caption fields");
        out.push_back(Prediction{j["id"].get<std::string>(), j["caption"].get<std::string>()});
    }
    return out;
}

inline void save_predictions(const std::string& path, const std::vector<Prediction>& preds) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (const auto& p : preds) {
        out << nlohmann::json{{"id", p.clip_id}, {"caption", p.caption}}.dump() << "\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

// --- MSVD-convention split ---------------------------------------------

struct SplitRecords {
    std::vector<CaptionRecord> train;
    std::vector<CaptionRecord> val;
    std::vector<CaptionRecord> test;
    bool proportional = false;  // set when the corpus is not 1970 clips
};

// Partition one-record-per-clip lists by position: 1200/100/670 for the
// canonical 1970-clip corpus, the same proportions otherwise. Corpora with
// several captions per clip must be split by unique clip id first.
inline SplitRecords split_msvd(const std::vector<CaptionRecord>& records) {
    std::set<std::string> seen;
    for (const auto& r : records)
        if (!seen.insert(r.clip_id).second)
            throw DataError("split_msvd: duplicate clip id " + r.clip_id);
    const std::size_t n = records.size();
    SplitRecords out;
    std::size_t n_train = 1200, n_val = 100;
    if (n != 1970) {
        out.proportional = true;
        n_train = static_cast<std::size_t>(
            std::llround(static_cast<double>(n) * 1200.0 / 1970.0));
        n_val = static_cast<std::size_t>(
            std::llround(static_cast<double>(n) * 100.0 / 1970.0));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (i < n_train) out.train.push_back(records[i]);
        else if (i < n_train + n_val) out.val.push_back(records[i]);
        else out.test.push_back(records[i]);
    }
    return out;
}

} // namespace gmnet
