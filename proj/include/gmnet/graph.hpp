#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "gmnet/errors.hpp"
#include "gmnet/tensor.hpp"

namespace gmnet {

class Graph;

// Handle to a node in the active graph: the (tensor value, node id) pair.
class Var {
public:
    Var() = default;
    Var(Graph* g, int id) : g_(g), id_(id) {}

    Graph* graph() const { return g_; }
    int id() const { return id_; }
    bool valid() const { return g_ != nullptr; }

    const Tensor& value() const;
    const Tensor& grad() const;

private:
    Graph* g_ = nullptr;
    int id_ = -1;
};

namespace testhook {
// Deliberately breaks the layer_norm input gradient so the gradient
// checker's negative test has a fault to find. Never set outside tests.
inline bool corrupt_layer_norm_backward = false;
} // namespace testhook

// Define-by-run tape. Nodes are appended in execution order, so ids are
// topologically sorted (inputs precede outputs). A graph is rebuilt per
// training step and confined to one thread for its lifetime.
class Graph {
public:
    using GradFn = std::function<void(Graph&, int)>;

    int add_leaf(Tensor value) { return add_node(std::move(value), {}, nullptr); }

    int add_node(Tensor value, std::vector<int> inputs, GradFn fn) {
#ifndef NDEBUG
        if (!value.all_finite())
            throw NumericError("non-finite value produced by graph op at node " +
                               std::to_string(nodes_.size()));
#endif
        nodes_.push_back(NodeRec{std::move(value), std::move(inputs), std::move(fn)});
        return static_cast<int>(nodes_.size()) - 1;
    }

    std::size_t size() const { return nodes_.size(); }

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    Tensor& grad(int id) { return grads_[static_cast<std::size_t>(id)]; }
    const Tensor& grad(int id) const { return grads_[static_cast<std::size_t>(id)]; }
    bool has_grads() const { return !grads_.empty(); }

    // Reverse-topological accumulation from a scalar root. Nodes the root
    // does not depend on keep their zero gradient.
    void backward(int root) {
        if (root < 0 || static_cast<std::size_t>(root) >= nodes_.size())
            throw UsageError("backward: root id out of range");
        if (!nodes_[static_cast<std::size_t>(root)].value.is_scalar())
            throw UsageError("backward: root must be a scalar, got shape " +
                             nodes_[static_cast<std::size_t>(root)].value.shape_string());

        grads_.clear();
        for (const auto& n : nodes_) grads_.push_back(Tensor::zeros(n.value.shape()));

        std::vector<char> reachable(nodes_.size(), 0);
        mark_reachable(root, reachable);

        for (double& v : grads_[static_cast<std::size_t>(root)].data()) v = 1.0;
        for (int id = root; id >= 0; --id) {
            auto& n = nodes_[static_cast<std::size_t>(id)];
            if (reachable[static_cast<std::size_t>(id)] && n.fn) n.fn(*this, id);
        }
    }

private:
    struct NodeRec {
        Tensor value;
        std::vector<int> inputs;
        GradFn fn;
    };

    void mark_reachable(int root, std::vector<char>& reachable) const {
        std::vector<int> stack{root};
        while (!stack.empty()) {
            int id = stack.back();
            stack.pop_back();
            if (reachable[static_cast<std::size_t>(id)]) continue;
            reachable[static_cast<std::size_t>(id)] = 1;
            for (int in : nodes_[static_cast<std::size_t>(id)].inputs) stack.push_back(in);
        }
    }

    // deque: node values must stay at stable addresses while the tape grows,
    // since Var::value() hands out references.
    std::deque<NodeRec> nodes_;
    std::deque<Tensor> grads_;
};

inline const Tensor& Var::value() const { return g_->value(id_); }
inline const Tensor& Var::grad() const { return g_->grad(id_); }

inline Var leaf(Graph& g, Tensor value) { return Var(&g, g.add_leaf(std::move(value))); }

namespace detail {

inline void require_same_graph(const Var& a, const Var& b) {
    if (a.graph() != b.graph()) throw UsageError("operands belong to different graphs");
}

inline void require_rank(const Tensor& t, std::size_t r, const char* op) {
    if (t.rank() != r)
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(r) +
                             " tensor, got " + t.shape_string());
}

} // namespace detail

// ---------------------------------------------------------------------------
// Primitive ops. Each registers its chain rule as a closure on the tape.
// ---------------------------------------------------------------------------

// C[MxN] = A[MxK] . B[KxN]
inline Var matmul(Var a, Var b) {
    detail::require_same_graph(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    detail::require_rank(A, 2, "matmul");
    detail::require_rank(B, 2, "matmul");
    if (A.cols() != B.rows())
        throw DimensionError("matmul: inner dimensions disagree, " + A.shape_string() +
                             " vs " + B.shape_string());
    const std::size_t M = A.rows(), K = A.cols(), N = B.cols();
    Tensor C({M, N});
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t k = 0; k < K; ++k) {
            const double aik = A(i, k);
            for (std::size_t j = 0; j < N; ++j) C(i, j) += aik * B(k, j);
        }
    Graph& g = *a.graph();
    int ida = a.id(), idb = b.id();
    int id = g.add_node(std::move(C), {ida, idb}, [ida, idb, M, K, N](Graph& gr, int self) {
        const Tensor& dC = gr.grad(self);
        const Tensor& Av = gr.value(ida);
        const Tensor& Bv = gr.value(idb);
        Tensor& dA = gr.grad(ida);
        Tensor& dB = gr.grad(idb);
        // dA = dC . B^T
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t j = 0; j < N; ++j) {
                const double d = dC(i, j);
                for (std::size_t k = 0; k < K; ++k) dA(i, k) += d * Bv(k, j);
            }
        // dB = A^T . dC
        for (std::size_t i = 0; i < M; ++i)
            for (std::size_t k = 0; k < K; ++k) {
                const double av = Av(i, k);
                for (std::size_t j = 0; j < N; ++j) dB(k, j) += av * dC(i, j);
            }
    });
    return Var(&g, id);
}

// y[M] = A[MxK] . x[K]
inline Var matvec(Var a, Var x) {
    detail::require_same_graph(a, x);
    const Tensor& A = a.value();
    const Tensor& X = x.value();
    detail::require_rank(A, 2, "matvec");
    detail::require_rank(X, 1, "matvec");
    if (A.cols() != X.dim(0))
        throw DimensionError("matvec: " + A.shape_string() + " vs " + X.shape_string());
    const std::size_t M = A.rows(), K = A.cols();
    Tensor y({M});
    for (std::size_t i = 0; i < M; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) s += A(i, k) * X[k];
        y[i] = s;
    }
    Graph& g = *a.graph();
    int ida = a.id(), idx = x.id();
    int id = g.add_node(std::move(y), {ida, idx}, [ida, idx, M, K](Graph& gr, int self) {
        const Tensor& dy = gr.grad(self);
        const Tensor& Av = gr.value(ida);
        const Tensor& Xv = gr.value(idx);
        Tensor& dA = gr.grad(ida);
        Tensor& dX = gr.grad(idx);
        for (std::size_t i = 0; i < M; ++i) {
            const double d = dy[i];
            for (std::size_t k = 0; k < K; ++k) {
                dA(i, k) += d * Xv[k];
                dX[k] += Av(i, k) * d;
            }
        }
    });
    return Var(&g, id);
}

// y[N] = x[M]^T . A[MxN]
inline Var vecmat(Var x, Var a) {
    detail::require_same_graph(x, a);
    const Tensor& X = x.value();
    const Tensor& A = a.value();
    detail::require_rank(X, 1, "vecmat");
    detail::require_rank(A, 2, "vecmat");
    if (X.dim(0) != A.rows())
        throw DimensionError("vecmat: " + X.shape_string() + " vs " + A.shape_string());
    const std::size_t M = A.rows(), N = A.cols();
    Tensor y({N});
    for (std::size_t i = 0; i < M; ++i) {
        const double xv = X[i];
        for (std::size_t j = 0; j < N; ++j) y[j] += xv * A(i, j);
    }
    Graph& g = *x.graph();
    int idx = x.id(), ida = a.id();
    int id = g.add_node(std::move(y), {idx, ida}, [idx, ida, M, N](Graph& gr, int self) {
        const Tensor& dy = gr.grad(self);
        const Tensor& Xv = gr.value(idx);
        const Tensor& Av = gr.value(ida);
        Tensor& dX = gr.grad(idx);
        Tensor& dA = gr.grad(ida);
        for (std::size_t i = 0; i < M; ++i) {
            double s = 0.0;
            const double xv = Xv[i];
            for (std::size_t j = 0; j < N; ++j) {
                s += Av(i, j) * dy[j];
                dA(i, j) += xv * dy[j];
            }
            dX[i] += s;
        }
    });
    return Var(&g, id);
}

namespace detail {

enum class Broadcast { None, BOverRowsOfA, AOverRowsOfB };

inline Broadcast binary_broadcast(const Tensor& A, const Tensor& B, const char* op) {
    if (A.same_shape(B)) return Broadcast::None;
    if (A.rank() == 2 && B.rank() == 1 && B.dim(0) == A.cols()) return Broadcast::BOverRowsOfA;
    if (B.rank() == 2 && A.rank() == 1 && A.dim(0) == B.cols()) return Broadcast::AOverRowsOfB;
    throw DimensionError(std::string(op) + ": incompatible shapes " + A.shape_string() +
                         " vs " + B.shape_string() +
                         " (need equal shapes or a vector broadcast over rows)");
}

} // namespace detail

inline Var add(Var a, Var b) {
    detail::require_same_graph(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    auto bc = detail::binary_broadcast(A, B, "add");
    const Tensor& M = (bc == detail::Broadcast::AOverRowsOfB) ? B : A;  // matrix-shaped side
    Tensor out(M.shape());
    if (bc == detail::Broadcast::None) {
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] + B[i];
    } else {
        const Tensor& vec = (bc == detail::Broadcast::BOverRowsOfA) ? B : A;
        const std::size_t rows = M.rows(), cols = M.cols();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) out(r, c) = M(r, c) + vec[c];
    }
    Graph& g = *a.graph();
    int ida = a.id(), idb = b.id();
    int id = g.add_node(std::move(out), {ida, idb}, [ida, idb, bc](Graph& gr, int self) {
        const Tensor& dy = gr.grad(self);
        auto accumulate = [&](int in, bool is_vector_side) {
            Tensor& din = gr.grad(in);
            if (!is_vector_side) {
                din += dy;
            } else {
                const std::size_t rows = dy.rows(), cols = dy.cols();
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) din[c] += dy(r, c);
            }
        };
        accumulate(ida, bc == detail::Broadcast::AOverRowsOfB);
        accumulate(idb, bc == detail::Broadcast::BOverRowsOfA);
    });
    return Var(&g, id);
}

inline Var mul(Var a, Var b) {
    detail::require_same_graph(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    auto bc = detail::binary_broadcast(A, B, "mul");
    const Tensor& M = (bc == detail::Broadcast::AOverRowsOfB) ? B : A;
    Tensor out(M.shape());
    if (bc == detail::Broadcast::None) {
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = A[i] * B[i];
    } else {
        const Tensor& vec = (bc == detail::Broadcast::BOverRowsOfA) ? B : A;
        const std::size_t rows = M.rows(), cols = M.cols();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) out(r, c) = M(r, c) * vec[c];
    }
    Graph& g = *a.graph();
    int ida = a.id(), idb = b.id();
    int id = g.add_node(std::move(out), {ida, idb}, [ida, idb, bc](Graph& gr, int self) {
        const Tensor& dy = gr.grad(self);
        const Tensor& Av = gr.value(ida);
        const Tensor& Bv = gr.value(idb);
        if (bc == detail::Broadcast::None) {
            Tensor& dA = gr.grad(ida);
            Tensor& dB = gr.grad(idb);
            for (std::size_t i = 0; i < dy.numel(); ++i) {
                dA[i] += dy[i] * Bv[i];
                dB[i] += dy[i] * Av[i];
            }
        } else {
            const bool a_is_vec = (bc == detail::Broadcast::AOverRowsOfB);
            const Tensor& Mat = a_is_vec ? Bv : Av;
            const Tensor& Vec = a_is_vec ? Av : Bv;
            Tensor& dMat = a_is_vec ? gr.grad(idb) : gr.grad(ida);
            Tensor& dVec = a_is_vec ? gr.grad(ida) : gr.grad(idb);
            const std::size_t rows = dy.rows(), cols = dy.cols();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) {
                    dMat(r, c) += dy(r, c) * Vec[c];
                    dVec[c] += dy(r, c) * Mat(r, c);
                }
        }
    });
    return Var(&g, id);
}

inline Var tanh(Var a) {
    const Tensor& A = a.value();
    Tensor out(A.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::tanh(A[i]);
    Graph& g = *a.graph();
    int ida = a.id();
    int id = g.add_node(std::move(out), {ida}, [ida](Graph& gr, int self) {
        const Tensor& dy = gr.grad(self);
        const Tensor& y = gr.value(self);
        Tensor& dA = gr.grad(ida);
        for (std::size_t i = 0; i < dy.numel(); ++i) dA[i] += dy[i] * (1.0 - y[i] * y[i]);
    });
    return Var(&g, id);
}

inline Var sigmoid(Var a) {
    const Tensor& A = a.value();
    Tensor out(A.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double x = A[i];
        // Split on sign to avoid exp overflow.
        out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                          : std::exp(x) / (1.0 + std::exp(x));
    }
    Graph& g = *a.graph();
    int ida = a.id();
    int id = g.add_node(std::move(out), {ida}, [ida](Graph& gr, int self) {
        const Tensor& dy = gr.grad(self);
        const Tensor& y = gr.value(self);
        Tensor& dA = gr.grad(ida);
        for (std::size_t i = 0; i < dy.numel(); ++i) dA[i] += dy[i] * y[i] * (1.0 - y[i]);
    });
    return Var(&g, id);
}

// Stable softmax over a rank-1 tensor (max subtraction).
inline Var softmax(Var a) {
    const Tensor& A = a.value();
    detail::require_rank(A, 1, "softmax");
    if (A.numel() == 0) throw DimensionError("softmax: empty input");
    const std::size_t N = A.numel();
    double mx = A[0];
    for (std::size_t i = 1; i < N; ++i) mx = std::max(mx, A[i]);
    Tensor out({N});
    double sum = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        out[i] = std::exp(A[i] - mx);
        sum += out[i];
    }
    for (std::size_t i = 0; i < N; ++i) out[i] /= sum;
    Graph& g = *a.graph();
    int ida = a.id();
    int id = g.add_node(std::move(out), {ida}, [ida](Graph& gr, int self) {
        const Tensor& dy = gr.grad(self);
        const Tensor& s = gr.value(self);
        Tensor& dA = gr.grad(ida);
        double dot = 0.0;
        for (std::size_t i = 0; i < dy.numel(); ++i) dot += dy[i] * s[i];
        for (std::size_t i = 0; i < dy.numel(); ++i) dA[i] += s[i] * (dy[i] - dot);
    });
    return Var(&g, id);
}

namespace detail {

// Shared by the rank-1 op and the per-row variant.
inline void layer_norm_forward_row(const double* x, std::size_t H, double eps,
                                   const double* gain, const double* bias,
                                   double* out, double& mu, double& inv_r) {
    mu = 0.0;
    for (std::size_t i = 0; i < H; ++i) mu += x[i];
    mu /= static_cast<double>(H);
    double var = 0.0;
    for (std::size_t i = 0; i < H; ++i) {
        const double d = x[i] - mu;
        var += d * d;
    }
    var /= static_cast<double>(H);
    inv_r = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < H; ++i) out[i] = gain[i] * (x[i] - mu) * inv_r + bias[i];
}

inline void layer_norm_backward_row(const double* x, std::size_t H, double mu, double inv_r,
                                    const double* gain, const double* dy,
                                    double* dx, double* dgain, double* dbias) {
    // xhat_i = (x_i - mu) * inv_r; dxhat_i = dy_i * gain_i
    // dx = inv_r * (dxhat - mean(dxhat) - xhat * mean(dxhat .* xhat))
    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
    for (std::size_t i = 0; i < H; ++i) {
        const double xhat = (x[i] - mu) * inv_r;
        const double dxhat = dy[i] * gain[i];
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xhat;
        dgain[i] += dy[i] * xhat;
        dbias[i] += dy[i];
    }
    mean_dxhat /= static_cast<double>(H);
    mean_dxhat_xhat /= static_cast<double>(H);
    const double fault = testhook::corrupt_layer_norm_backward ? 1.5 : 1.0;
    for (std::size_t i = 0; i < H; ++i) {
        const double xhat = (x[i] - mu) * inv_r;
        const double dxhat = dy[i] * gain[i];
        dx[i] += fault * inv_r * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
    }
}

inline void check_layer_norm_args(const Tensor& a, const Tensor& gain, const Tensor& bias,
                                  double eps, std::size_t H) {
    if (H < 2)
        throw DimensionError("layer_norm: need at least 2 elements, got " +
                             std::to_string(H));
    if (eps < 0.0) throw ConfigError("layer_norm: eps must be non-negative");
    if (gain.rank() != 1 || gain.numel() != H || bias.rank() != 1 || bias.numel() != H)
        throw DimensionError("layer_norm: gain/bias must be vectors of length " +
                             std::to_string(H) + ", got " + gain.shape_string() + " and " +
                             bias.shape_string());
    (void)a;
}

} // namespace detail

// out = gain .* (a - mean) / sqrt(var + eps) + bias, statistics over a's
// own elements.
inline Var layer_norm(Var a, Var gain, Var bias, double eps) {
    detail::require_same_graph(a, gain);
    detail::require_same_graph(a, bias);
    const Tensor& A = a.value();
    detail::require_rank(A, 1, "layer_norm");
    const std::size_t H = A.numel();
    detail::check_layer_norm_args(A, gain.value(), bias.value(), eps, H);
    Tensor out({H});
    double mu, inv_r;
    detail::layer_norm_forward_row(A.data().data(), H, eps, gain.value().data().data(),
                                   bias.value().data().data(), out.data().data(), mu, inv_r);
    Graph& g = *a.graph();
    int ida = a.id(), idg = gain.id(), idb = bias.id();
    int id = g.add_node(std::move(out), {ida, idg, idb},
                        [ida, idg, idb, H, mu, inv_r](Graph& gr, int self) {
        const Tensor& dy = gr.grad(self);
        detail::layer_norm_backward_row(gr.value(ida).data().data(), H, mu, inv_r,
                                        gr.value(idg).data().data(), dy.data().data(),
                                        gr.grad(ida).data().data(),
                                        gr.grad(idg).data().data(),
                                        gr.grad(idb).data().data());
    });
    return Var(&g, id);
}

// Row-wise layer norm over a [TxH] matrix with shared gain/bias.
inline Var layer_norm_rows(Var a, Var gain, Var bias, double eps) {
    detail::require_same_graph(a, gain);
    detail::require_same_graph(a, bias);
    const Tensor& A = a.value();
    detail::require_rank(A, 2, "layer_norm_rows");
    const std::size_t T = A.rows(), H = A.cols();
    detail::check_layer_norm_args(A, gain.value(), bias.value(), eps, H);
    Tensor out({T, H});
    std::vector<double> mus(T), inv_rs(T);
    for (std::size_t t = 0; t < T; ++t) {
        detail::layer_norm_forward_row(A.data().data() + t * H, H, eps,
                                       gain.value().data().data(), bias.value().data().data(),
                                       out.data().data() + t * H, mus[t], inv_rs[t]);
    }
    Graph& g = *a.graph();
    int ida = a.id(), idg = gain.id(), idb = bias.id();
    int id = g.add_node(std::move(out), {ida, idg, idb},
                        [ida, idg, idb, T, H, mus, inv_rs](Graph& gr, int self) {
        const Tensor& dy = gr.grad(self);
        for (std::size_t t = 0; t < T; ++t) {
            detail::layer_norm_backward_row(gr.value(ida).data().data() + t * H, H, mus[t],
                                            inv_rs[t], gr.value(idg).data().data(),
                                            dy.data().data() + t * H,
                                            gr.grad(ida).data().data() + t * H,
                                            gr.grad(idg).data().data(),
                                            gr.grad(idb).data().data());
        }
    });
    return Var(&g, id);
}

// Column sums over the time axis: [TxH] -> [H]. T = 0 gives zeros.
inline Var reduce_time(Var a) {
    const Tensor& A = a.value();
    detail::require_rank(A, 2, "reduce_time");
    const std::size_t T = A.rows(), H = A.cols();
    Tensor out({H});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < H; ++j) out[j] += A(t, j);
    Graph& g = *a.graph();
    int ida = a.id();
    int id = g.add_node(std::move(out), {ida}, [ida, T, H](Graph& gr, int self) {
        const Tensor& dy = gr.grad(self);
        Tensor& dA = gr.grad(ida);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t j = 0; j < H; ++j) dA(t, j) += dy[j];
    });
    return Var(&g, id);
}

// Summed (not averaged) masked token cross-entropy:
//   -sum_t mask_t * log softmax(logits_t)[target_t]
inline Var cross_entropy(Var logits, const std::vector<int>& targets,
                         const std::vector<std::uint8_t>& mask) {
    const Tensor& L = logits.value();
    detail::require_rank(L, 2, "cross_entropy");
    const std::size_t T = L.rows(), V = L.cols();
    if (targets.size() != T || mask.size() != T)
        throw DimensionError("cross_entropy: targets/mask length must equal logits rows (" +
                             std::to_string(T) + ")");
    for (std::size_t t = 0; t < T; ++t) {
        if (mask[t] && (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= V))
            throw DataError("cross_entropy: target id " + std::to_string(targets[t]) +
                            " out of range at step " + std::to_string(t));
    }
    Tensor probs({T, V});
    double loss = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
        double mx = L(t, 0);
        for (std::size_t v = 1; v < V; ++v) mx = std::max(mx, L(t, v));
        double sum = 0.0;
        for (std::size_t v = 0; v < V; ++v) {
            probs(t, v) = std::exp(L(t, v) - mx);
            sum += probs(t, v);
        }
        for (std::size_t v = 0; v < V; ++v) probs(t, v) /= sum;
        if (mask[t]) {
            const double lse = mx + std::log(sum);
            loss += lse - L(t, static_cast<std::size_t>(targets[t]));
        }
    }
    Graph& g = *logits.graph();
    int idl = logits.id();
    int id = g.add_node(Tensor::scalar(loss), {idl},
                        [idl, targets, mask, probs, T, V](Graph& gr, int self) {
        const double d = gr.grad(self)[0];
        Tensor& dL = gr.grad(idl);
        for (std::size_t t = 0; t < T; ++t) {
            if (!mask[t]) continue;
            for (std::size_t v = 0; v < V; ++v) {
                double p = probs(t, v);
                if (v == static_cast<std::size_t>(targets[t])) p -= 1.0;
                dL(t, v) += d * p;
            }
        }
    });
    return Var(&g, id);
}

inline Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw UsageError("concat: no inputs");
    Graph& g = *parts[0].graph();
    std::vector<int> ids;
    std::vector<std::size_t> lens;
    std::size_t total = 0;
    for (const Var& p : parts) {
        detail::require_same_graph(parts[0], p);
        detail::require_rank(p.value(), 1, "concat");
        ids.push_back(p.id());
        lens.push_back(p.value().numel());
        total += p.value().numel();
    }
    Tensor out({total});
    std::size_t off = 0;
    for (const Var& p : parts) {
        const Tensor& v = p.value();
        std::copy(v.data().begin(), v.data().end(), out.data().begin() + static_cast<long>(off));
        off += v.numel();
    }
    int id = g.add_node(std::move(out), ids, [ids, lens](Graph& gr, int self) {
        const Tensor& dy = gr.grad(self);
        std::size_t off2 = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            Tensor& din = gr.grad(ids[i]);
            for (std::size_t j = 0; j < lens[i]; ++j) din[j] += dy[off2 + j];
            off2 += lens[i];
        }
    });
    return Var(&g, id);
}

inline Var concat(Var a, Var b) { return concat(std::vector<Var>{a, b}); }

inline Var slice(Var a, std::size_t offset, std::size_t len) {
    const Tensor& A = a.value();
    detail::require_rank(A, 1, "slice");
    if (offset + len > A.numel())
        throw DimensionError("slice: range [" + std::to_string(offset) + ", " +
                             std::to_string(offset + len) + ") exceeds length " +
                             std::to_string(A.numel()));
    Tensor out({len});
    for (std::size_t i = 0; i < len; ++i) out[i] = A[offset + i];
    Graph& g = *a.graph();
    int ida = a.id();
    int id = g.add_node(std::move(out), {ida}, [ida, offset, len](Graph& gr, int self) {
        const Tensor& dy = gr.grad(self);
        Tensor& dA = gr.grad(ida);
        for (std::size_t i = 0; i < len; ++i) dA[offset + i] += dy[i];
    });
    return Var(&g, id);
}

// Select row r of a [RxC] tensor; the gradient scatters into that row only.
inline Var row_lookup(Var a, std::size_t r) {
    const Tensor& A = a.value();
    detail::require_rank(A, 2, "row_lookup");
    if (r >= A.rows())
        throw DataError("row_lookup: row " + std::to_string(r) + " out of range for " +
                        A.shape_string());
    const std::size_t C = A.cols();
    Tensor out({C});
    for (std::size_t j = 0; j < C; ++j) out[j] = A(r, j);
    Graph& g = *a.graph();
    int ida = a.id();
    int id = g.add_node(std::move(out), {ida}, [ida, r, C](Graph& gr, int self) {
        const Tensor& dy = gr.grad(self);
        Tensor& dA = gr.grad(ida);
        for (std::size_t j = 0; j < C; ++j) dA(r, j) += dy[j];
    });
    return Var(&g, id);
}

// Stack T rank-1 tensors of equal length into a [TxH] matrix.
inline Var stack_rows(const std::vector<Var>& rows) {
    if (rows.empty()) throw UsageError("stack_rows: no inputs");
    Graph& g = *rows[0].graph();
    const std::size_t H = rows[0].value().numel();
    std::vector<int> ids;
    for (const Var& r : rows) {
        detail::require_same_graph(rows[0], r);
        detail::require_rank(r.value(), 1, "stack_rows");
        if (r.value().numel() != H)
            throw DimensionError("stack_rows: row lengths differ");
        ids.push_back(r.id());
    }
    const std::size_t T = rows.size();
    Tensor out({T, H});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < H; ++j) out(t, j) = rows[t].value()[j];
    int id = g.add_node(std::move(out), ids, [ids, H](Graph& gr, int self) {
        const Tensor& dy = gr.grad(self);
        for (std::size_t t = 0; t < ids.size(); ++t) {
            Tensor& din = gr.grad(ids[t]);
            for (std::size_t j = 0; j < H; ++j) din[j] += dy(t, j);
        }
    });
    return Var(&g, id);
}

inline Var scale(Var a, double c) {
    const Tensor& A = a.value();
    Tensor out(A.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c * A[i];
    Graph& g = *a.graph();
    int ida = a.id();
    int id = g.add_node(std::move(out), {ida}, [ida, c](Graph& gr, int self) {
        const Tensor& dy = gr.grad(self);
        Tensor& dA = gr.grad(ida);
        for (std::size_t i = 0; i < dy.numel(); ++i) dA[i] += c * dy[i];
    });
    return Var(&g, id);
}

inline Var sum_all(Var a) {
    const Tensor& A = a.value();
    double s = 0.0;
    for (std::size_t i = 0; i < A.numel(); ++i) s += A[i];
    Graph& g = *a.graph();
    int ida = a.id();
    int id = g.add_node(Tensor::scalar(s), {ida}, [ida](Graph& gr, int self) {
        const double d = gr.grad(self)[0];
        Tensor& dA = gr.grad(ida);
        for (std::size_t i = 0; i < dA.numel(); ++i) dA[i] += d;
    });
    return Var(&g, id);
}

} // namespace gmnet
