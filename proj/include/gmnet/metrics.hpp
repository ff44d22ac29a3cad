#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmnet/errors.hpp"
#include "gmnet/text.hpp"

namespace gmnet {

// One evaluation unit: a candidate caption against one or more references,
// all pre-tokenized (lowercase, whitespace split).
struct EvalPair {
    std::string clip_id;
    std::vector<std::string> candidate;
    std::vector<std::vector<std::string>> references;
};

inline EvalPair make_eval_pair(const std::string& id, const std::string& candidate,
                               const std::vector<std::string>& references) {
    EvalPair p;
    p.clip_id = id;
    p.candidate = tokenize(candidate);
    for (const auto& r : references) p.references.push_back(tokenize(r));
    return p;
}

struct MetricReport {
    double bleu4 = 0.0;    // [0, 1]
    double rouge_l = 0.0;  // [0, 1]
    double cider = 0.0;    // typically [0, 10]
    std::size_t n_pairs = 0;

    double bleu4_percent() const { return bleu4 * 100.0; }
    double rouge_l_percent() const { return rouge_l * 100.0; }
    // The raw score carries the x10 scale, so percent is a further x10.
    double cider_percent() const { return cider * 10.0; }
};

inline void to_json(nlohmann::json& j, const MetricReport& r) {
    j = nlohmann::json{{"bleu4", r.bleu4},
                       {"rouge_l", r.rouge_l},
                       {"cider", r.cider},
                       {"n_pairs", r.n_pairs}};
}

namespace detail {

// n-gram counts keyed by space-joined tokens. Tokens cannot contain spaces,
// so the key is unambiguous at fixed n; std::map keeps every downstream
// accumulation order deterministic.
using NgramCounts = std::map<std::string, std::int64_t>;

inline NgramCounts ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
    NgramCounts out;
    if (tokens.size() < n || n == 0) return out;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (std::size_t k = 1; k < n; ++k) {
            key += ' ';
            key += tokens[i + k];
        }
        ++out[key];
    }
    return out;
}

inline void require_pairs(const std::vector<EvalPair>& pairs, const char* op) {
    if (pairs.empty()) throw UsageError(std::string(op) + ": no pairs");
    for (const auto& p : pairs)
        if (p.references.empty())
            throw UsageError(std::string(op) + ": pair " + p.clip_id + " has no references");
}

// Permutation-invariant mean: sorting fixes the fp summation order.
inline double sorted_mean(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

inline std::size_t lcs_length(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
    const std::size_t n = a.size(), m = b.size();
    if (n == 0 || m == 0) return 0;
    std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

} // namespace detail

// Corpus-level BLEU-4: clipped modified n-gram precisions pooled over the
// corpus (integer counts), geometric mean over n = 1..4, brevity penalty
// exp(1 - r/c) from per-pair closest-length references. No smoothing: any
// empty pooled precision zeroes the score. An empty candidate only drives
// the brevity penalty to zero.
inline double bleu4(const std::vector<EvalPair>& pairs) {
    detail::require_pairs(pairs, "bleu4");
    std::int64_t clipped[4] = {0, 0, 0, 0};
    std::int64_t total[4] = {0, 0, 0, 0};
    std::int64_t cand_len = 0, ref_len = 0;

    for (const auto& p : pairs) {
        cand_len += static_cast<std::int64_t>(p.candidate.size());
        std::size_t best_len = p.references[0].size();
        for (const auto& r : p.references) {
            const auto diff = [&](std::size_t len) {
                const auto c = static_cast<std::int64_t>(p.candidate.size());
                return std::llabs(static_cast<std::int64_t>(len) - c);
            };
            if (diff(r.size()) < diff(best_len) ||
                (diff(r.size()) == diff(best_len) && r.size() < best_len))
                best_len = r.size();
        }
        ref_len += static_cast<std::int64_t>(best_len);

        for (std::size_t n = 1; n <= 4; ++n) {
            const auto cand = detail::ngram_counts(p.candidate, n);
            detail::NgramCounts ref_max;
            for (const auto& r : p.references)
                for (const auto& [key, count] : detail::ngram_counts(r, n))
                    ref_max[key] = std::max(ref_max[key], count);
            for (const auto& [key, count] : cand) {
                total[n - 1] += count;
                auto it = ref_max.find(key);
                if (it != ref_max.end()) clipped[n - 1] += std::min(count, it->second);
            }
        }
    }

    if (cand_len == 0) return 0.0;
    double log_sum = 0.0;
    for (int n = 0; n < 4; ++n) {
        if (clipped[n] == 0 || total[n] == 0) return 0.0;
        log_sum += 0.25 * std::log(static_cast<double>(clipped[n]) /
                                   static_cast<double>(total[n]));
    }
    const double bp = cand_len >= ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(ref_len) /
                                               static_cast<double>(cand_len));
    return bp * std::exp(log_sum);
}

// ROUGE-L: per-pair LCS F-measure with beta = 1.2, best reference taken,
// mean over pairs.
inline double rouge_l(const std::vector<EvalPair>& pairs) {
    detail::require_pairs(pairs, "rouge_l");
    constexpr double beta2 = 1.2 * 1.2;
    std::vector<double> scores;
    scores.reserve(pairs.size());
    for (const auto& p : pairs) {
        double best = 0.0;
        for (const auto& r : p.references) {
            if (p.candidate.empty() || r.empty()) continue;
            const auto lcs = static_cast<double>(detail::lcs_length(p.candidate, r));
            if (lcs == 0.0) continue;
            const double prec = lcs / static_cast<double>(p.candidate.size());
            const double rec = lcs / static_cast<double>(r.size());
            best = std::max(best, (1.0 + beta2) * prec * rec / (rec + beta2 * prec));
        }
        scores.push_back(best);
    }
    return detail::sorted_mean(std::move(scores));
}

// CIDEr: TF-IDF vectors over n = 1..4 grams, cosine similarity against each
// reference, averaged over references and n, scaled by 10; corpus score is
// the mean over pairs. IDF = log(N / df) with df = number of clips whose
// references contain the n-gram, clamped to at least 1. TF is the raw count:
// the per-sentence length normalization in the usual definition is a uniform
// vector scale, which cancels in the cosine.
inline double cider(const std::vector<EvalPair>& pairs) {
    detail::require_pairs(pairs, "cider");
    const std::size_t n_clips = pairs.size();
    if (n_clips < 2)
        std::cerr << "cider: warning: fewer than 2 clips, IDF statistics are degenerate\n";

    // document frequencies from the reference corpus
    detail::NgramCounts df[4];
    for (const auto& p : pairs) {
        std::set<std::string> seen[4];
        for (const auto& r : p.references)
            for (std::size_t n = 1; n <= 4; ++n)
                for (const auto& [key, count] : detail::ngram_counts(r, n))
                    seen[n - 1].insert(key);
        for (std::size_t n = 0; n < 4; ++n)
            for (const auto& key : seen[n]) ++df[n][key];
    }
    auto idf = [&](std::size_t n, const std::string& key) {
        auto it = df[n].find(key);
        const auto d = it == df[n].end() ? std::int64_t{1} : std::max<std::int64_t>(it->second, 1);
        return std::log(static_cast<double>(n_clips) / static_cast<double>(d));
    };
    using Vec = std::map<std::string, double>;
    auto tfidf = [&](const std::vector<std::string>& tokens, std::size_t n) {
        Vec v;
        for (const auto& [key, count] : detail::ngram_counts(tokens, n + 1))
            v[key] = static_cast<double>(count) * idf(n, key);
        return v;
    };
    auto norm2 = [](const Vec& v) {
        double s = 0.0;
        for (const auto& [key, x] : v) s += x * x;
        return s;
    };
    auto dot = [](const Vec& a, const Vec& b) {
        double s = 0.0;
        for (const auto& [key, x] : a) {
            auto it = b.find(key);
            if (it != b.end()) s += x * it->second;
        }
        return s;
    };

    std::vector<double> scores;
    scores.reserve(n_clips);
    for (const auto& p : pairs) {
        Vec cand[4];
        double cand_n2[4];
        for (std::size_t n = 0; n < 4; ++n) {
            cand[n] = tfidf(p.candidate, n);
            cand_n2[n] = norm2(cand[n]);
        }
        double ngram_sum = 0.0;
        for (std::size_t n = 0; n < 4; ++n) {
            std::vector<double> sims;
            sims.reserve(p.references.size());
            for (const auto& r : p.references) {
                const Vec ref = tfidf(r, n);
                const double rn2 = norm2(ref);
                const double d = dot(cand[n], ref);
                double sim = 0.0;
                if (d > 0.0 && d * d == cand_n2[n] * rn2) {
                    sim = 1.0;  // Cauchy-Schwarz equality: cosine is exactly one
                } else if (cand_n2[n] > 0.0 && rn2 > 0.0) {
                    sim = d / (std::sqrt(cand_n2[n]) * std::sqrt(rn2));
                }
                sims.push_back(sim);
            }
            ngram_sum += detail::sorted_mean(std::move(sims));
        }
        scores.push_back(ngram_sum / 4.0 * 10.0);
    }
    return detail::sorted_mean(std::move(scores));
}

inline MetricReport evaluate_corpus(const std::vector<EvalPair>& pairs) {
    detail::require_pairs(pairs, "evaluate_corpus");
    MetricReport r;
    r.bleu4 = bleu4(pairs);
    r.rouge_l = rouge_l(pairs);
    r.cider = cider(pairs);
    r.n_pairs = pairs.size();
    return r;
}

} // namespace gmnet
