#include <catch_amalgamated.hpp>

#include <cmath>

#include "gmnet/metrics.hpp"
#include "gmnet/rng.hpp"

using namespace gmnet;

namespace {

// The documented toy corpus. Expected values below were frozen from an
// independent reimplementation (explicit n-gram tables, dense vectors).
std::vector<EvalPair> toy_corpus() {
    return {
        make_eval_pair("clip0", "a man is playing a guitar",
                       {"a man is playing guitar", "a man plays guitar"}),
        make_eval_pair("clip1", "a dog runs fast", {"a dog runs in the park"}),
        make_eval_pair("clip2", "someone cooks dinner", {"a person cooks dinner tonight"}),
    };
}

std::vector<EvalPair> identical_corpus() {
    return {
        make_eval_pair("c0", "a man rides a horse", {"a man rides a horse"}),
        make_eval_pair("c1", "two dogs play outside", {"two dogs play outside"}),
        make_eval_pair("c2", "children sing happy songs", {"children sing happy songs"}),
    };
}

} // namespace

TEST_CASE("bleu4 basics") {
    SECTION("identical corpus scores exactly one") {
        CHECK(bleu4(identical_corpus()) == 1.0);
    }
    SECTION("no common 4-gram gives zero") {
        auto pairs = std::vector<EvalPair>{
            make_eval_pair("c0", "x y z w q", {"a man is playing guitar"})};
        CHECK(bleu4(pairs) == 0.0);
    }
    SECTION("single-pair hand count") {
        // p1 = 5/6, p2 = 3/5, p3 = 2/4, p4 = 1/3, BP = 1
        auto pairs = std::vector<EvalPair>{
            make_eval_pair("c0", "a man is playing a guitar", {"a man is playing guitar"})};
        const double expected = std::pow((5.0 / 6) * (3.0 / 5) * (2.0 / 4) * (1.0 / 3), 0.25);
        CHECK(bleu4(pairs) == Catch::Approx(expected).margin(1e-12));
    }
    SECTION("clipping against repeated reference n-grams") {
        // cand = a^6 vs ref = a^4: p_n = (5-n)/(7-n)
        auto pairs = std::vector<EvalPair>{make_eval_pair("c0", "a a a a a a", {"a a a a"})};
        const double expected = std::pow((4.0 / 6) * (3.0 / 5) * (2.0 / 4) * (1.0 / 3), 0.25);
        CHECK(bleu4(pairs) == Catch::Approx(expected).margin(1e-12));
    }
    SECTION("brevity penalty for short candidates") {
        auto pairs = std::vector<EvalPair>{
            make_eval_pair("c0", "a man is playing", {"a man is playing guitar"})};
        CHECK(bleu4(pairs) == Catch::Approx(std::exp(1.0 - 5.0 / 4.0)).margin(1e-12));
    }
    SECTION("closest reference length, ties to the shorter") {
        auto pairs = std::vector<EvalPair>{
            make_eval_pair("c0", "a b c d", {"a b c", "a b c d e"})};
        CHECK(bleu4(pairs) == 1.0);  // r = 3, no penalty
    }
    SECTION("empty candidate zeroes the score without erroring") {
        auto pairs = identical_corpus();
        for (auto& p : pairs) p.candidate.clear();
        CHECK(bleu4(pairs) == 0.0);
    }
    SECTION("empty input is a usage error") {
        CHECK_THROWS_AS(bleu4({}), UsageError);
        std::vector<EvalPair> no_refs{EvalPair{"c0", {"a"}, {}}};
        CHECK_THROWS_AS(bleu4(no_refs), UsageError);
    }
}

TEST_CASE("rouge_l basics") {
    SECTION("identical corpus scores exactly one") {
        CHECK(rouge_l(identical_corpus()) == 1.0);
    }
    SECTION("disjoint token sets give zero") {
        auto pairs = std::vector<EvalPair>{make_eval_pair("c0", "x y z", {"a b c d"})};
        CHECK(rouge_l(pairs) == 0.0);
    }
    SECTION("hand LCS") {
        // LCS("a b c d", "a c d e") = 3, P = R = 3/4 -> F = 3/4
        auto pairs = std::vector<EvalPair>{make_eval_pair("c0", "a b c d", {"a c d e"})};
        CHECK(rouge_l(pairs) == Catch::Approx(0.75).margin(1e-12));
    }
    SECTION("multi-reference takes the best") {
        auto pairs = std::vector<EvalPair>{
            make_eval_pair("c0", "a b c d", {"x y z", "a c d e"})};
        CHECK(rouge_l(pairs) == Catch::Approx(0.75).margin(1e-12));
    }
}

TEST_CASE("cider basics") {
    SECTION("identical single-reference corpus scores exactly ten") {
        CHECK(cider(identical_corpus()) == 10.0);
    }
    SECTION("no shared n-gram of any order gives zero") {
        auto pairs = toy_corpus();
        pairs[0].candidate = tokenize("xx yy zz ww");
        double score = cider({pairs[0]});  // degenerate single clip still defined
        CHECK(score == 0.0);
    }
    SECTION("empty input is a usage error") {
        CHECK_THROWS_AS(cider({}), UsageError);
    }
}

TEST_CASE("toy corpus matches the independent oracle") {
    auto pairs = toy_corpus();
    // pooled BLEU counts: p1 = 10/13, p2 = 6/10, p3 = 3/7, p4 = 1/4,
    // c = 13, r = 16
    CHECK(bleu4(pairs) == Catch::Approx(0.37438718681892663).margin(1e-9));
    CHECK(rouge_l(pairs) == Catch::Approx(0.66059590694735892).margin(1e-9));
    CHECK(cider(pairs) == Catch::Approx(3.3860305544041029).margin(1e-9));

    MetricReport r = evaluate_corpus(pairs);
    CHECK(r.bleu4 == bleu4(pairs));
    CHECK(r.rouge_l == rouge_l(pairs));
    CHECK(r.cider == cider(pairs));
    CHECK(r.n_pairs == 3);
}

TEST_CASE("percent scaling matches the reporting convention") {
    MetricReport r = evaluate_corpus(identical_corpus());
    CHECK(r.bleu4_percent() == 100.0);
    CHECK(r.rouge_l_percent() == 100.0);
    CHECK(r.cider_percent() == 100.0);
}

TEST_CASE("scores are invariant to pair and reference order") {
    auto pairs = toy_corpus();
    const MetricReport base = evaluate_corpus(pairs);
    Rng rng(99);
    for (int shuffle = 0; shuffle < 20; ++shuffle) {
        auto shuffled = pairs;
        rng.shuffle(shuffled);
        for (auto& p : shuffled) rng.shuffle(p.references);
        MetricReport r = evaluate_corpus(shuffled);
        CHECK(r.bleu4 == base.bleu4);
        CHECK(r.rouge_l == base.rouge_l);
        CHECK(r.cider == base.cider);
    }
}

TEST_CASE("score bounds on random corpora") {
    Rng rng(123);
    const std::vector<std::string> words{"a", "b", "c", "d", "e", "f"};
    auto random_sentence = [&](std::size_t min_len) {
        std::vector<std::string> out;
        const std::size_t len = min_len + rng.index(5);
        for (std::size_t i = 0; i < len; ++i) out.push_back(words[rng.index(words.size())]);
        return out;
    };
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<EvalPair> pairs;
        const std::size_t n = 2 + rng.index(4);
        for (std::size_t i = 0; i < n; ++i) {
            EvalPair p;
            p.clip_id = "c" + std::to_string(i);
            p.candidate = random_sentence(1);
            const std::size_t n_refs = 1 + rng.index(3);
            for (std::size_t k = 0; k < n_refs; ++k)
                p.references.push_back(random_sentence(4));
            pairs.push_back(std::move(p));
        }
        MetricReport r = evaluate_corpus(pairs);
        CHECK(r.bleu4 >= 0.0);
        CHECK(r.bleu4 <= 1.0);
        CHECK(r.rouge_l >= 0.0);
        CHECK(r.rouge_l <= 1.0);
        CHECK(r.cider >= 0.0);

        // duplicating an existing reference changes neither ROUGE-L (max
        // over references) nor BLEU's clipped counts (max ref counts)
        auto extended = pairs;
        for (auto& p : extended) p.references.push_back(p.references[0]);
        CHECK(rouge_l(extended) == r.rouge_l);
        CHECK(bleu4(extended) >= r.bleu4);

        // determinism
        MetricReport again = evaluate_corpus(pairs);
        CHECK(again.bleu4 == r.bleu4);
        CHECK(again.rouge_l == r.rouge_l);
        CHECK(again.cider == r.cider);
    }
}
