#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gmnet/corpus.hpp"
#include "gmnet/errors.hpp"
#include "gmnet/features.hpp"
#include "gmnet/rng.hpp"

namespace gmnet {

// Desk-scale synthetic corpus. Each clip is a word-concept sequence: frame
// t carries concept t's Gaussian-perturbed unit-norm prototype, frames past
// the last word carry a dedicated stop prototype, and a handful of trailing
// channels hold a sinusoidal position code. The caption is the concept word
// sequence, so captions are decodable frame by frame: attention has a
// localizable target per step, word identity is linear in the prototype
// channels, and the position code carries the temporal ordering (without
// it, content-based attention has no way to recover word order).
struct SyntheticSpec {
    std::size_t n_clips = 20;
    std::size_t m = 16;          // frames per clip
    std::size_t d = 32;          // feature width
    std::size_t vocab_size = 30; // includes the 4 reserved ids
    std::size_t len_min = 4;     // caption length range, in words
    std::size_t len_max = 8;
    std::uint64_t seed = 7;
};

struct SyntheticCorpus {
    std::vector<FeatureClip> clips;
    std::vector<CaptionRecord> records;
};

inline constexpr double kConceptNoiseStd = 0.1;
inline constexpr double kPositionAmplitude = 1.5;

namespace detail {

inline std::string concept_word(std::size_t k) {
    std::string s = std::to_string(k);
    while (s.size() < 2) s = "0" + s;
    return "w" + s;
}

inline std::string clip_name(std::size_t i) {
    std::string s = std::to_string(i);
    while (s.size() < 4) s = "0" + s;
    return "clip" + s;
}

inline std::size_t position_dims(std::size_t d) {
    return std::clamp<std::size_t>(d / 4, 2, 8);
}

} // namespace detail

inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_clips == 0 || spec.m == 0 || spec.len_min == 0)
        throw UsageError("generate_synthetic: sizes must be positive");
    if (spec.d < 4)
        throw UsageError("generate_synthetic: feature width must be at least 4");
    if (spec.vocab_size < 5)
        throw UsageError("generate_synthetic: vocab_size must exceed the 4 reserved ids");
    if (spec.len_max < spec.len_min)
        throw UsageError("generate_synthetic: len_max below len_min");
    if (spec.len_max > 18)
        throw UsageError("generate_synthetic: captions must fit the default L_max of 20");
    if (spec.len_max >= spec.m)
        throw UsageError("generate_synthetic: need one frame per word plus a stop frame");

    Rng rng(spec.seed);
    const std::size_t n_concepts = spec.vocab_size - 4;
    const std::size_t pos_dims = detail::position_dims(spec.d);
    const std::size_t proto_dims = spec.d - pos_dims;

    // Unit-norm prototypes; the last one marks frames after the caption.
    std::vector<std::vector<double>> prototypes(n_concepts + 1,
                                                std::vector<double>(proto_dims));
    for (auto& proto : prototypes) {
        double sq = 0.0;
        for (double& v : proto) {
            v = rng.normal();
            sq += v * v;
        }
        const double inv = 1.0 / std::sqrt(std::max(sq, 1e-30));
        for (double& v : proto) v *= inv;
    }

    // Splits are assigned up front by hash rank of the clip id: exact
    // 60/20/20 sizes, independent of the platform hash.
    std::vector<std::string> ids(spec.n_clips);
    for (std::size_t i = 0; i < spec.n_clips; ++i) ids[i] = detail::clip_name(i);
    std::vector<std::size_t> rank(spec.n_clips);
    for (std::size_t i = 0; i < rank.size(); ++i) rank[i] = i;
    std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
        const auto ha = fnv1a(ids[a]);
        const auto hb = fnv1a(ids[b]);
        if (ha != hb) return ha < hb;
        return ids[a] < ids[b];
    });
    std::vector<Split> splits(spec.n_clips);
    const std::size_t n_train = spec.n_clips * 6 / 10;
    const std::size_t n_val = spec.n_clips * 2 / 10;
    for (std::size_t r = 0; r < rank.size(); ++r) {
        splits[rank[r]] = r < n_train ? Split::Train
                                      : (r < n_train + n_val ? Split::Val : Split::Test);
    }

    // Concepts are dealt from reshuffled decks, visiting train clips first,
    // so the train split covers the whole concept inventory whenever it
    // holds at least n_concepts word slots.
    std::vector<std::size_t> visit;
    visit.reserve(spec.n_clips);
    for (int pass = 0; pass < 2; ++pass)
        for (std::size_t i = 0; i < spec.n_clips; ++i)
            if ((splits[i] == Split::Train) == (pass == 0)) visit.push_back(i);

    std::vector<std::size_t> deck;
    auto draw_concept = [&]() {
        if (deck.empty()) {
            deck.resize(n_concepts);
            for (std::size_t k = 0; k < n_concepts; ++k) deck[k] = k;
            rng.shuffle(deck);
        }
        const std::size_t k = deck.back();
        deck.pop_back();
        return k;
    };

    SyntheticCorpus out;
    out.clips.resize(spec.n_clips);
    out.records.resize(spec.n_clips);
    for (std::size_t idx : visit) {
        const std::size_t len = spec.len_min + rng.index(spec.len_max - spec.len_min + 1);
        std::vector<std::size_t> concepts(len);
        for (auto& c : concepts) c = draw_concept();

        FeatureClip clip;
        clip.clip_id = ids[idx];
        clip.features = Tensor({spec.m, spec.d});
        for (std::size_t f = 0; f < spec.m; ++f) {
            const std::size_t c = f < len ? concepts[f] : n_concepts;  // stop prototype
            const double phase = 2.0 * M_PI * static_cast<double>(f) /
                                 static_cast<double>(spec.m);
            for (std::size_t j = 0; j < spec.d; ++j) {
                double base;
                if (j < proto_dims) {
                    base = prototypes[c][j];
                } else {
                    const std::size_t pj = j - proto_dims;
                    const double arg = static_cast<double>(pj / 2 + 1) * phase;
                    base = kPositionAmplitude * (pj % 2 == 0 ? std::sin(arg) : std::cos(arg));
                }
                const double v = base + kConceptNoiseStd * rng.normal();
                // features travel as f32 in GMNF files; round here so the
                // in-memory corpus equals its own save/load round trip
                clip.features(f, j) = static_cast<double>(static_cast<float>(v));
            }
        }

        std::vector<std::string> words(len);
        for (std::size_t w = 0; w < len; ++w) words[w] = detail::concept_word(concepts[w]);
        out.clips[idx] = std::move(clip);
        out.records[idx] = CaptionRecord{ids[idx], join_tokens(words), splits[idx]};
    }
    return out;
}

} // namespace gmnet
