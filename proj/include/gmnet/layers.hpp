#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gmnet/graph.hpp"
#include "gmnet/params.hpp"

namespace gmnet {

// Binds ParamStore entries into a graph as leaves, one leaf per name,
// created on first use. After backward(), bound() tells the training loop
// which parameters participated and where to read their gradients.
class ParamBinder {
public:
    ParamBinder(Graph& g, const ParamStore& store) : g_(&g), store_(&store) {}

    Var operator[](const std::string& name) {
        auto it = bound_.find(name);
        if (it != bound_.end()) return it->second;
        Var v = leaf(*g_, store_->value(name));  // ConfigError if missing
        bound_.emplace(name, v);
        return v;
    }

    // Route an existing graph leaf under a parameter name (used by the
    // whole-model gradient checker).
    void bind(const std::string& name, Var v) {
        if (!bound_.emplace(name, v).second)
            throw UsageError("ParamBinder: " + name + " is already bound");
    }

    bool touched(const std::string& name) const { return bound_.count(name) != 0; }
    const std::map<std::string, Var>& bound() const { return bound_; }
    Graph& graph() { return *g_; }

private:
    Graph* g_;
    const ParamStore* store_;
    std::map<std::string, Var> bound_;
};

// W x (+ b), weights under name.w / name.b.
inline Var linear(ParamBinder& p, const std::string& name, Var x, bool with_bias = true) {
    Var y = matvec(p[name + ".w"], x);
    if (with_bias) y = add(y, p[name + ".b"]);
    return y;
}

// Embedding row lookup; the gradient scatters into the selected row only.
inline Var embed(ParamBinder& p, const std::string& table, int id) {
    Var t = p[table];
    if (id < 0 || static_cast<std::size_t>(id) >= t.value().rows())
        throw DataError("embed: token id " + std::to_string(id) + " out of range for table " +
                        table + " " + t.value().shape_string());
    return row_lookup(t, static_cast<std::size_t>(id));
}

struct LstmState {
    Var h;
    Var c;
};

inline LstmState lstm_zero_state(Graph& g, std::size_t hidden) {
    return LstmState{leaf(g, Tensor::zeros({hidden})), leaf(g, Tensor::zeros({hidden}))};
}

// Standard LSTM cell. Gates act on concat(x, h); packed weight rows are
// ordered (i, f, g, o). Weights under prefix.w [4H x (X+H)], prefix.b [4H].
inline LstmState lstm_step(ParamBinder& p, const std::string& prefix, Var x, const LstmState& s) {
    Var w = p[prefix + ".w"];
    Var b = p[prefix + ".b"];
    const std::size_t four_h = w.value().rows();
    if (four_h % 4 != 0)
        throw DimensionError("lstm_step: " + prefix + ".w must have 4H rows");
    const std::size_t h = four_h / 4;
    if (s.h.value().numel() != h || s.c.value().numel() != h)
        throw DimensionError("lstm_step: state size " + std::to_string(s.h.value().numel()) +
                             " does not match cell " + prefix + " (H = " + std::to_string(h) + ")");
    Var z = add(matvec(w, concat(x, s.h)), b);
    Var gi = sigmoid(slice(z, 0, h));
    Var gf = sigmoid(slice(z, h, h));
    Var gg = tanh(slice(z, 2 * h, h));
    Var go = sigmoid(slice(z, 3 * h, h));
    Var c = add(mul(gf, s.c), mul(gi, gg));
    return LstmState{mul(go, tanh(c)), c};
}

// Additive attention over feature rows:
//   e_j = v . tanh(features_j W + h_prev U),  weights = softmax(e),
//   context = sum_j weights_j features_j.
// Parameters: prefix.w [D'xA], prefix.u [HxA], prefix.v [A].
inline std::pair<Var, Var> attention_step(ParamBinder& p, const std::string& prefix,
                                          Var features, Var h_prev) {
    detail::require_rank(features.value(), 2, "attention_step");
    if (features.value().rows() == 0) throw DataError("attention_step: no feature rows");
    Var proj = matmul(features, p[prefix + ".w"]);          // [m x A]
    Var hterm = vecmat(h_prev, p[prefix + ".u"]);           // [A]
    Var scores = matvec(tanh(add(proj, hterm)), p[prefix + ".v"]);  // [m]
    Var weights = softmax(scores);
    Var context = vecmat(weights, features);                // [D']
    return {context, weights};
}

} // namespace gmnet
