#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "gmnet/errors.hpp"
#include "gmnet/rng.hpp"
#include "gmnet/tensor.hpp"

namespace gmnet {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

enum class InitKind {
    Xavier,   // Uniform(-s, s), s = sqrt(6 / (fan_in + fan_out))
    Zeros,
    Ones,
    LstmBias, // zeros with the forget-gate quarter set to 1
};

struct ParamSpec {
    std::string name;
    std::vector<std::size_t> shape;
    InitKind kind = InitKind::Xavier;
};

// Named learnable tensors plus their Adam moments. Entry order is insertion
// order, which fixes the RNG consumption order at init and the record order
// in checkpoints.
class ParamStore {
public:
    void add(const std::string& name, Tensor value) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        index_[name] = entries_.size();
        entries_.push_back(Entry{name, std::move(value), Tensor(), Tensor()});
        Entry& e = entries_.back();
        e.m = Tensor::zeros(e.value.shape());
        e.v = Tensor::zeros(e.value.shape());
    }

    bool has(const std::string& name) const { return index_.count(name) != 0; }

    const Tensor& value(const std::string& name) const { return entry(name).value; }
    Tensor& mutable_value(const std::string& name) { return entry(name).value; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(entries_.size());
        for (const auto& e : entries_) out.push_back(e.name);
        return out;
    }

    std::size_t size() const { return entries_.size(); }
    std::int64_t step() const { return step_; }

    // One Adam update with bias correction. Parameters without a gradient
    // entry are treated as having a zero gradient this step.
    void adam_step(const std::map<std::string, Tensor>& grads, const AdamConfig& cfg = {}) {
        for (const auto& [name, g] : grads) {
            if (!has(name)) throw ConfigError("adam_step: gradient for unknown parameter " + name);
            if (!g.same_shape(value(name)))
                throw ConfigError("adam_step: gradient shape " + g.shape_string() +
                                  " does not match parameter " + name + " " +
                                  value(name).shape_string());
        }
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
        static const Tensor kEmpty;
        for (Entry& e : entries_) {
            auto it = grads.find(e.name);
            const bool have = it != grads.end();
            for (std::size_t i = 0; i < e.value.numel(); ++i) {
                const double gi = have ? it->second[i] : 0.0;
                e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * gi;
                e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * gi * gi;
                const double mhat = e.m[i] / bc1;
                const double vhat = e.v[i] / bc2;
                e.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            }
        }
    }

private:
    struct Entry {
        std::string name;
        Tensor value;
        Tensor m;
        Tensor v;
    };

    Entry& entry(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return entries_[it->second];
    }
    const Entry& entry(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return entries_[it->second];
    }

    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
    std::int64_t step_ = 0;
};

namespace detail {

inline Tensor init_tensor(const ParamSpec& spec, Rng& rng) {
    Tensor t(spec.shape);
    switch (spec.kind) {
        case InitKind::Zeros:
            break;
        case InitKind::Ones:
            for (std::size_t i = 0; i < t.numel(); ++i) t[i] = 1.0;
            break;
        case InitKind::LstmBias: {
            if (t.rank() != 1 || t.numel() % 4 != 0)
                throw ConfigError("lstm bias " + spec.name + " must be a vector of length 4H");
            const std::size_t h = t.numel() / 4;
            // gate order (i, f, g, o): forget slice is [H, 2H)
            for (std::size_t i = h; i < 2 * h; ++i) t[i] = 1.0;
            break;
        }
        case InitKind::Xavier: {
            // Rank-1 weights use fan_out = 1.
            const double fan_in = static_cast<double>(t.rank() == 2 ? t.cols() : t.numel());
            const double fan_out = static_cast<double>(t.rank() == 2 ? t.rows() : 1);
            const double s = std::sqrt(6.0 / (fan_in + fan_out));
            for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-s, s);
            break;
        }
    }
    return t;
}

} // namespace detail

// Deterministic init: a single seeded stream consumed in declaration order.
inline ParamStore init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
    Rng rng(seed);
    ParamStore store;
    for (const ParamSpec& spec : specs) {
        for (std::size_t d : spec.shape)
            if (d == 0) throw ConfigError("parameter " + spec.name + " has a zero dimension");
        store.add(spec.name, detail::init_tensor(spec, rng));
    }
    return store;
}

// Global-norm gradient clipping; returns the pre-clip norm.
inline double clip_gradients(std::map<std::string, Tensor>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads)
        for (std::size_t i = 0; i < g.numel(); ++i) sq += g[i] * g[i];
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double s = max_norm / norm;
        for (auto& [name, g] : grads)
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] *= s;
    }
    return norm;
}

} // namespace gmnet
