#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gmnet/graph.hpp"

namespace gmnet {

// Central finite-difference check of the tape's analytic gradients. This is
// the verification oracle: it never calls backward() for the numeric side,
// only two fresh forward evaluations per coordinate.

struct GradCheckResult {
    double max_rel_err = 0.0;
    // (leaf name, worst relative error over its coordinates)
    std::vector<std::pair<std::string, double>> per_leaf;
};

using ScalarBuilder = std::function<Var(Graph&, const std::vector<Var>&)>;

namespace detail {

inline double eval_scalar(const ScalarBuilder& f,
                          const std::vector<std::pair<std::string, Tensor>>& point) {
    Graph g;
    std::vector<Var> leaves;
    leaves.reserve(point.size());
    for (const auto& [name, t] : point) leaves.push_back(leaf(g, t));
    Var root = f(g, leaves);
    if (!root.value().is_scalar())
        throw UsageError("grad_check: function must return a scalar");
    const double v = root.value()[0];
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite value at probe point");
    return v;
}

} // namespace detail

inline GradCheckResult grad_check(const ScalarBuilder& f,
                                  std::vector<std::pair<std::string, Tensor>> point,
                                  double eps = 1e-5) {
    if (eps <= 0.0) throw ConfigError("grad_check: eps must be positive");

    // Analytic gradients from one taped pass.
    std::vector<Tensor> analytic;
    {
        Graph g;
        std::vector<Var> leaves;
        for (const auto& [name, t] : point) leaves.push_back(leaf(g, t));
        Var root = f(g, leaves);
        if (!root.value().is_scalar())
            throw UsageError("grad_check: function must return a scalar");
        g.backward(root.id());
        for (const Var& l : leaves) analytic.push_back(l.grad());
    }

    GradCheckResult result;
    for (std::size_t li = 0; li < point.size(); ++li) {
        double worst = 0.0;
        Tensor& t = point[li].second;
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const double saved = t[i];
            t[i] = saved + eps;
            const double fp = detail::eval_scalar(f, point);
            t[i] = saved - eps;
            const double fm = detail::eval_scalar(f, point);
            t[i] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double a = analytic[li][i];
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            worst = std::max(worst, std::fabs(a - numeric) / denom);
        }
        result.per_leaf.emplace_back(point[li].first, worst);
        result.max_rel_err = std::max(result.max_rel_err, worst);
    }
    return result;
}

} // namespace gmnet
