#include <catch_amalgamated.hpp>

#include <cmath>

#include "gmnet/gradcheck.hpp"
#include "gmnet/graph.hpp"
#include "gmnet/rng.hpp"

using namespace gmnet;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -2.0, double hi = 2.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

} // namespace

TEST_CASE("matmul forward") {
    Graph g;
    SECTION("identity") {
        Var I = leaf(g, Tensor::matrix(2, 2, {1, 0, 0, 1}));
        Var A = leaf(g, Tensor::matrix(2, 2, {1, 2, 3, 4}));
        Var C = matmul(I, A);
        CHECK(C.value().data() == std::vector<double>{1, 2, 3, 4});
    }
    SECTION("row times column") {
        Var a = leaf(g, Tensor::matrix(1, 2, {1, 2}));
        Var b = leaf(g, Tensor::matrix(2, 1, {3, 4}));
        Var c = matmul(a, b);
        REQUIRE(c.value().numel() == 1);
        CHECK(c.value()[0] == 11.0);  // 1*3 + 2*4
    }
    SECTION("shape mismatch names both shapes") {
        Var a = leaf(g, Tensor::matrix(2, 3, std::vector<double>(6, 1.0)));
        Var b = leaf(g, Tensor::matrix(2, 2, std::vector<double>(4, 1.0)));
        CHECK_THROWS_MATCHES(matmul(a, b), DimensionError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("[2x3]") &&
                                 Catch::Matchers::ContainsSubstring("[2x2]")));
    }
}

TEST_CASE("matmul gradient vs central finite differences") {
    Rng rng(11);
    auto f = [](Graph& g, const std::vector<Var>& leaves) {
        return sum_all(matmul(leaves[0], leaves[1]));
    };
    auto res = grad_check(f, {{"a", random_tensor(rng, {3, 4})},
                              {"b", random_tensor(rng, {4, 2})}});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("elementwise forward values") {
    Graph g;
    SECTION("symmetry points") {
        Var x = leaf(g, Tensor::vector({0.0}));
        CHECK(tanh(x).value()[0] == 0.0);
        CHECK(sigmoid(x).value()[0] == 0.5);
    }
    SECTION("add") {
        Var a = leaf(g, Tensor::vector({1, 2}));
        Var b = leaf(g, Tensor::vector({3, 4}));
        CHECK(add(a, b).value().data() == std::vector<double>{4, 6});
    }
    SECTION("incompatible shapes") {
        Var a = leaf(g, Tensor::vector({1, 2}));
        Var b = leaf(g, Tensor::vector({1, 2, 3}));
        CHECK_THROWS_AS(add(a, b), DimensionError);
        CHECK_THROWS_AS(mul(a, b), DimensionError);
    }
}

TEST_CASE("sigmoid derivative at zero is 1/4") {
    auto f = [](Graph& g, const std::vector<Var>& leaves) {
        return sum_all(sigmoid(leaves[0]));
    };
    std::vector<std::pair<std::string, Tensor>> point{{"x", Tensor::vector({0.0})}};
    // analytic y(1-y) = 0.25 at x = 0; the checker compares it to differences
    auto res = grad_check(f, point);
    CHECK(res.max_rel_err < 1e-6);
    Graph g;
    Var x = leaf(g, Tensor::vector({0.0}));
    Var y = sum_all(sigmoid(x));
    g.backward(y.id());
    CHECK(x.grad()[0] == Catch::Approx(0.25).margin(1e-15));
}

TEST_CASE("vector-over-rows broadcast") {
    Graph g;
    Var m = leaf(g, Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    Var v = leaf(g, Tensor::vector({10, 20, 30}));
    CHECK(add(m, v).value().data() == std::vector<double>{11, 22, 33, 14, 25, 36});
    CHECK(mul(v, m).value().data() == std::vector<double>{10, 40, 90, 40, 100, 180});

    Rng rng(5);
    for (auto op : {0, 1}) {
        auto f = [op](Graph& gr, const std::vector<Var>& l) {
            return sum_all(op == 0 ? add(l[0], l[1]) : mul(l[0], l[1]));
        };
        auto res = grad_check(f, {{"m", random_tensor(rng, {3, 4})},
                                  {"v", random_tensor(rng, {4})}});
        CHECK(res.max_rel_err < 1e-6);
    }
}

TEST_CASE("softmax forward") {
    Graph g;
    SECTION("constant input is uniform") {
        for (double c : {-7.5, 0.0, 123.0}) {
            Var x = leaf(g, Tensor::vector({c, c, c, c}));
            auto out = softmax(x).value();
            for (std::size_t i = 0; i < 4; ++i)
                CHECK(out[i] == Catch::Approx(0.25).margin(1e-15));
        }
    }
    SECTION("log inputs") {
        Var x = leaf(g, Tensor::vector({std::log(1.0), std::log(2.0), std::log(3.0)}));
        auto out = softmax(x).value();
        CHECK(out[0] == Catch::Approx(1.0 / 6).epsilon(1e-12));
        CHECK(out[1] == Catch::Approx(2.0 / 6).epsilon(1e-12));
        CHECK(out[2] == Catch::Approx(3.0 / 6).epsilon(1e-12));
    }
    SECTION("empty input") {
        Var x = leaf(g, Tensor({0}));
        CHECK_THROWS_AS(softmax(x), DimensionError);
    }
}

TEST_CASE("softmax properties: mass and shift invariance") {
    Rng rng(42);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 1 + rng.index(8);
        Tensor x = random_tensor(rng, {n}, -30.0, 30.0);
        Graph g;
        auto s = softmax(leaf(g, x)).value();
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(s[i] > 0.0);
            sum += s[i];
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-12);

        const double shift = rng.uniform(-50.0, 50.0);
        Tensor xs = x;
        for (std::size_t i = 0; i < n; ++i) xs[i] += shift;
        auto s2 = softmax(leaf(g, xs)).value();
        for (std::size_t i = 0; i < n; ++i) CHECK(std::fabs(s[i] - s2[i]) <= 1e-12);
    }
}

TEST_CASE("layer_norm forward") {
    Graph g;
    Var gain = leaf(g, Tensor::full({4}, 1.0));
    Var bias = leaf(g, Tensor::zeros({4}));
    SECTION("constant input -> zeros (eps absorbs zero variance)") {
        Var x = leaf(g, Tensor::full({4}, 3.7));
        auto out = layer_norm(x, gain, bias, 1e-5).value();
        for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == 0.0);
    }
    SECTION("direct evaluation at eps = 0") {
        Var x = leaf(g, Tensor::vector({1, 2, 3, 4}));
        auto out = layer_norm(x, gain, bias, 0.0).value();
        CHECK(out[0] == Catch::Approx(-1.3416).margin(1e-3));
        CHECK(out[1] == Catch::Approx(-0.4472).margin(1e-3));
        CHECK(out[2] == Catch::Approx(0.4472).margin(1e-3));
        CHECK(out[3] == Catch::Approx(1.3416).margin(1e-3));
    }
    SECTION("errors") {
        Var x1 = leaf(g, Tensor::vector({1.0}));
        Var g1 = leaf(g, Tensor::vector({1.0}));
        Var b1 = leaf(g, Tensor::vector({0.0}));
        CHECK_THROWS_AS(layer_norm(x1, g1, b1, 1e-5), DimensionError);
        Var x = leaf(g, Tensor::vector({1, 2, 3, 4}));
        CHECK_THROWS_AS(layer_norm(x, gain, bias, -1e-9), ConfigError);
    }
}

TEST_CASE("layer_norm gradient vs finite differences") {
    Rng rng(7);
    auto f = [](Graph& g, const std::vector<Var>& l) {
        return sum_all(mul(layer_norm(l[0], l[1], l[2], 1e-5), l[3]));
    };
    auto res = grad_check(f, {{"a", random_tensor(rng, {6})},
                              {"gain", random_tensor(rng, {6}, 0.5, 1.5)},
                              {"bias", random_tensor(rng, {6})},
                              {"w", random_tensor(rng, {6})}});
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("layer_norm scale/shift invariance") {
    Rng rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 2 + rng.index(15);
        Tensor x = random_tensor(rng, {n});
        const double alpha = rng.uniform(0.1, 5.0);
        const double beta = rng.uniform(-3.0, 3.0);
        Tensor y(x.shape());
        for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i] + beta;

        Graph g;
        Var gain = leaf(g, Tensor::full({n}, 1.0));
        Var bias = leaf(g, Tensor::zeros({n}));
        auto a = layer_norm(leaf(g, x), gain, bias, 0.0).value();
        auto b = layer_norm(leaf(g, y), gain, bias, 0.0).value();
        for (std::size_t i = 0; i < n; ++i) CHECK(std::fabs(a[i] - b[i]) <= 1e-8);
    }
}

TEST_CASE("layer_norm normalizes rows to zero mean") {
    // mean of (out - bias)/gain must vanish
    Rng rng(31);
    Tensor x = random_tensor(rng, {9});
    Graph g;
    auto out = layer_norm(leaf(g, x), leaf(g, Tensor::full({9}, 2.0)),
                          leaf(g, Tensor::full({9}, 0.3)), 1e-5).value();
    double mean = 0.0;
    for (std::size_t i = 0; i < 9; ++i) mean += (out[i] - 0.3) / 2.0;
    mean /= 9.0;
    CHECK(std::fabs(mean) < 1e-10);
}

TEST_CASE("layer_norm_rows matches per-row layer_norm") {
    Rng rng(77);
    Tensor m = random_tensor(rng, {3, 5});
    Tensor gain = random_tensor(rng, {5}, 0.5, 1.5);
    Tensor bias = random_tensor(rng, {5});
    Graph g;
    auto rows_out = layer_norm_rows(leaf(g, m), leaf(g, gain), leaf(g, bias), 1e-5).value();
    for (std::size_t t = 0; t < 3; ++t) {
        std::vector<double> row(m.data().begin() + static_cast<long>(t * 5),
                                m.data().begin() + static_cast<long>((t + 1) * 5));
        auto single = layer_norm(leaf(g, Tensor::vector(row)), leaf(g, gain), leaf(g, bias),
                                 1e-5).value();
        for (std::size_t j = 0; j < 5; ++j) CHECK(rows_out(t, j) == single[j]);
    }

    auto f = [](Graph& gr, const std::vector<Var>& l) {
        return sum_all(mul(layer_norm_rows(l[0], l[1], l[2], 1e-5), l[3]));
    };
    auto res = grad_check(f, {{"a", random_tensor(rng, {4, 6})},
                              {"gain", random_tensor(rng, {6}, 0.5, 1.5)},
                              {"bias", random_tensor(rng, {6})},
                              {"w", random_tensor(rng, {4, 6})}});
    CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("reduce_time forward") {
    Graph g;
    SECTION("zeros") {
        auto out = reduce_time(leaf(g, Tensor({2, 3}))).value();
        CHECK(out.data() == std::vector<double>{0, 0, 0});
    }
    SECTION("column sums") {
        auto out = reduce_time(leaf(g, Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}))).value();
        CHECK(out.data() == std::vector<double>{5, 7, 9});
    }
    SECTION("single row is identity") {
        auto out = reduce_time(leaf(g, Tensor::matrix(1, 2, {7, 8}))).value();
        CHECK(out.data() == std::vector<double>{7, 8});
    }
    SECTION("empty time axis gives zeros") {
        auto out = reduce_time(leaf(g, Tensor({0, 4}))).value();
        CHECK(out.data() == std::vector<double>(4, 0.0));
    }
    SECTION("rank error") {
        CHECK_THROWS_AS(reduce_time(leaf(g, Tensor::vector({1, 2}))), DimensionError);
    }
}

TEST_CASE("reduce_time splits additively over the time axis") {
    // Integer-valued inputs keep double addition exact, so the equality is
    // bitwise and any lost or double-counted row shows up.
    Rng rng(99);
    auto random_int_tensor = [&](std::vector<std::size_t> shape) {
        Tensor t(std::move(shape));
        for (std::size_t i = 0; i < t.numel(); ++i)
            t[i] = static_cast<double>(rng.index(17)) - 8.0;
        return t;
    };
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t ta = rng.index(4), tb = 1 + rng.index(4), h = 1 + rng.index(6);
        Tensor a = random_int_tensor({ta, h});
        Tensor b = random_int_tensor({tb, h});
        Tensor cat({ta + tb, h});
        std::copy(a.data().begin(), a.data().end(), cat.data().begin());
        std::copy(b.data().begin(), b.data().end(),
                  cat.data().begin() + static_cast<long>(ta * h));
        Graph g;
        auto whole = reduce_time(leaf(g, cat)).value();
        auto pa = reduce_time(leaf(g, a)).value();
        auto pb = reduce_time(leaf(g, b)).value();
        for (std::size_t j = 0; j < h; ++j) CHECK(whole[j] == pa[j] + pb[j]);
    }
}

TEST_CASE("cross_entropy forward") {
    Graph g;
    SECTION("forced targets with margin 40") {
        Tensor logits({3, 5});
        std::vector<int> targets{1, 4, 2};
        for (std::size_t t = 0; t < 3; ++t) logits(t, static_cast<std::size_t>(targets[t])) = 40.0;
        auto loss = cross_entropy(leaf(g, logits), targets, {1, 1, 1}).value();
        CHECK(loss[0] <= 1e-6);
        CHECK(loss[0] >= 0.0);
    }
    SECTION("uniform logits") {
        auto loss = cross_entropy(leaf(g, Tensor({3, 8})), {0, 5, 7}, {1, 1, 1}).value();
        CHECK(loss[0] == Catch::Approx(3.0 * std::log(8.0)).margin(1e-4));
    }
    SECTION("all-false mask gives exactly zero") {
        Rng rng(3);
        auto loss = cross_entropy(leaf(g, random_tensor(rng, {4, 6})), {0, 1, 2, 3},
                                  {0, 0, 0, 0}).value();
        CHECK(loss[0] == 0.0);
    }
    SECTION("target out of range names the step") {
        CHECK_THROWS_MATCHES(cross_entropy(leaf(g, Tensor({2, 3})), {1, 3}, {1, 1}), DataError,
                             Catch::Matchers::MessageMatches(
                                 Catch::Matchers::ContainsSubstring("step 1")));
    }
    SECTION("masked-out step may carry a bogus target") {
        auto loss = cross_entropy(leaf(g, Tensor({2, 3})), {1, 99}, {1, 0}).value();
        CHECK(loss[0] == Catch::Approx(std::log(3.0)).margin(1e-12));
    }
}

TEST_CASE("cross_entropy gradient vs finite differences") {
    Rng rng(13);
    std::vector<int> targets{2, 0, 4};
    std::vector<std::uint8_t> mask{1, 1, 0};
    auto f = [&](Graph& g, const std::vector<Var>& l) {
        return cross_entropy(l[0], targets, mask);
    };
    auto res = grad_check(f, {{"logits", random_tensor(rng, {3, 5})}});
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("backward basics") {
    SECTION("root = leaf gives gradient one") {
        Graph g;
        Var x = leaf(g, Tensor::scalar(3.0));
        g.backward(x.id());
        CHECK(x.grad()[0] == 1.0);
    }
    SECTION("sum of squares") {
        Graph g;
        Var x = leaf(g, Tensor::vector({1, 2, 3}));
        Var root = sum_all(mul(x, x));
        g.backward(root.id());
        CHECK(x.grad().data() == std::vector<double>{2, 4, 6});
    }
    SECTION("unreachable leaf gets exactly zero") {
        Graph g;
        Var x = leaf(g, Tensor::vector({1, 2, 3}));
        Var y = leaf(g, Tensor::vector({4, 5}));
        Var root = sum_all(mul(x, x));
        sum_all(y);  // on the tape but not feeding the root
        g.backward(root.id());
        CHECK(y.grad().data() == std::vector<double>{0, 0});
    }
    SECTION("non-scalar root rejected") {
        Graph g;
        Var x = leaf(g, Tensor::vector({1, 2}));
        CHECK_THROWS_AS(g.backward(x.id()), UsageError);
    }
}

TEST_CASE("grad_check oracle behaviour") {
    SECTION("linear function is exact for central differences") {
        auto f = [](Graph& g, const std::vector<Var>& l) {
            return sum_all(mul(l[0], leaf(g, Tensor::vector({2.0, -3.0, 0.5}))));
        };
        auto res = grad_check(f, {{"x", Tensor::vector({0.3, -1.2, 2.0})}});
        CHECK(res.max_rel_err < 1e-9);
    }
    SECTION("rejects non-positive eps") {
        auto f = [](Graph&, const std::vector<Var>& l) { return sum_all(l[0]); };
        CHECK_THROWS_AS(grad_check(f, {{"x", Tensor::vector({1.0})}}, 0.0), ConfigError);
    }
    SECTION("corrupted layer_norm backward is detected") {
        Rng rng(17);
        auto f = [](Graph& g, const std::vector<Var>& l) {
            Var gain = leaf(g, Tensor::full({5}, 1.0));
            Var bias = leaf(g, Tensor::zeros({5}));
            return sum_all(mul(layer_norm(l[0], gain, bias, 1e-5), l[1]));
        };
        std::vector<std::pair<std::string, Tensor>> point{
            {"a", random_tensor(rng, {5})}, {"w", random_tensor(rng, {5})}};
        testhook::corrupt_layer_norm_backward = true;
        auto bad = grad_check(f, point);
        testhook::corrupt_layer_norm_backward = false;
        CHECK(bad.max_rel_err > 1e-2);
        auto good = grad_check(f, point);
        CHECK(good.max_rel_err < 1e-5);
    }
}

TEST_CASE("every primitive passes the finite-difference property") {
    // 20 random draws per op kind, inputs in [-2, 2], threshold 1e-5.
    Rng rng(20260810);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 1 + rng.index(3), k = 1 + rng.index(3), n = 1 + rng.index(3);
        const std::size_t h = 2 + rng.index(4);

        std::vector<std::pair<std::string, ScalarBuilder>> cases;
        cases.emplace_back("matmul", [&](Graph& g, const std::vector<Var>& l) {
            return sum_all(matmul(l[0], l[1]));
        });
        auto res = grad_check(cases[0].second, {{"a", random_tensor(rng, {m, k})},
                                                {"b", random_tensor(rng, {k, n})}});
        INFO("matmul trial " << trial);
        CHECK(res.max_rel_err < 1e-5);

        res = grad_check([](Graph& g, const std::vector<Var>& l) {
            return sum_all(matvec(l[0], l[1]));
        }, {{"a", random_tensor(rng, {m, k})}, {"x", random_tensor(rng, {k})}});
        CHECK(res.max_rel_err < 1e-5);

        res = grad_check([](Graph& g, const std::vector<Var>& l) {
            return sum_all(vecmat(l[0], l[1]));
        }, {{"x", random_tensor(rng, {m})}, {"a", random_tensor(rng, {m, n})}});
        CHECK(res.max_rel_err < 1e-5);

        res = grad_check([](Graph& g, const std::vector<Var>& l) {
            return sum_all(mul(add(l[0], l[1]), l[0]));
        }, {{"a", random_tensor(rng, {h})}, {"b", random_tensor(rng, {h})}});
        CHECK(res.max_rel_err < 1e-5);

        res = grad_check([](Graph& g, const std::vector<Var>& l) {
            return sum_all(mul(tanh(l[0]), sigmoid(l[1])));
        }, {{"a", random_tensor(rng, {h})}, {"b", random_tensor(rng, {h})}});
        CHECK(res.max_rel_err < 1e-5);

        res = grad_check([](Graph& g, const std::vector<Var>& l) {
            return sum_all(mul(softmax(l[0]), l[1]));
        }, {{"a", random_tensor(rng, {h})}, {"w", random_tensor(rng, {h})}});
        CHECK(res.max_rel_err < 1e-5);

        res = grad_check([](Graph& g, const std::vector<Var>& l) {
            return sum_all(mul(reduce_time(l[0]), l[1]));
        }, {{"a", random_tensor(rng, {m, h})}, {"w", random_tensor(rng, {h})}});
        CHECK(res.max_rel_err < 1e-5);

        res = grad_check([h](Graph& g, const std::vector<Var>& l) {
            Var cat = concat(l[0], l[1]);
            Var sl = slice(cat, 1, h);
            return sum_all(mul(sl, sl));
        }, {{"a", random_tensor(rng, {h})}, {"b", random_tensor(rng, {h})}});
        CHECK(res.max_rel_err < 1e-5);

        const std::size_t row = rng.index(m);
        res = grad_check([row](Graph& g, const std::vector<Var>& l) {
            return sum_all(mul(row_lookup(l[0], row), l[1]));
        }, {{"table", random_tensor(rng, {m, h})}, {"w", random_tensor(rng, {h})}});
        CHECK(res.max_rel_err < 1e-5);

        res = grad_check([](Graph& g, const std::vector<Var>& l) {
            Var s = stack_rows({l[0], l[1], l[0]});
            return sum_all(mul(s, s));
        }, {{"r0", random_tensor(rng, {h})}, {"r1", random_tensor(rng, {h})}});
        CHECK(res.max_rel_err < 1e-5);

        res = grad_check([](Graph& g, const std::vector<Var>& l) {
            return sum_all(scale(mul(l[0], l[0]), -1.7));
        }, {{"a", random_tensor(rng, {h})}});
        CHECK(res.max_rel_err < 1e-5);
    }
}
