#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "iseat/errors.hpp"
#include "iseat/tensor.hpp"

namespace iseat::nd {

enum class Activation { relu, tanh, softplus };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::softplus: return "softplus";
    }
    return "?";
}

namespace kernel {

// Row blocking keeps four output rows live per sweep so the streamed operand
// is read once per block instead of once per row.

// C = A[m×k] · B[k×n]
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    std::fill(c, c + m * n, T(0));
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        T* c0 = c + i * n;
        T* c1 = c0 + n;
        T* c2 = c1 + n;
        T* c3 = c2 + n;
        for (std::size_t l = 0; l < k; ++l) {
            const T a0 = a[i * k + l];
            const T a1 = a[(i + 1) * k + l];
            const T a2 = a[(i + 2) * k + l];
            const T a3 = a[(i + 3) * k + l];
            const T* brow = b + l * n;
            for (std::size_t j = 0; j < n; ++j) {
                const T bv = brow[j];
                c0[j] += a0 * bv;
                c1[j] += a1 * bv;
                c2[j] += a2 * bv;
                c3[j] += a3 * bv;
            }
        }
    }
    for (; i < m; ++i) {
        T* crow = c + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const T av = a[i * k + l];
            const T* brow = b + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m×k] += A[m×n] · B[k×n]ᵀ
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t k) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const T* a0 = a + i * n;
        const T* a1 = a0 + n;
        const T* a2 = a1 + n;
        const T* a3 = a2 + n;
        for (std::size_t l = 0; l < k; ++l) {
            const T* brow = b + l * n;
            T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
            for (std::size_t j = 0; j < n; ++j) {
                const T bv = brow[j];
                s0 += a0[j] * bv;
                s1 += a1[j] * bv;
                s2 += a2[j] * bv;
                s3 += a3[j] * bv;
            }
            c[i * k + l] += s0;
            c[(i + 1) * k + l] += s1;
            c[(i + 2) * k + l] += s2;
            c[(i + 3) * k + l] += s3;
        }
    }
    for (; i < m; ++i) {
        const T* arow = a + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const T* brow = b + l * n;
            T s = 0;
            for (std::size_t j = 0; j < n; ++j) s += arow[j] * brow[j];
            c[i * k + l] += s;
        }
    }
}

// C[k×n] += A[m×k]ᵀ · B[m×n]
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        const T* b0 = b + i * n;
        const T* b1 = b0 + n;
        const T* b2 = b1 + n;
        const T* b3 = b2 + n;
        for (std::size_t l = 0; l < k; ++l) {
            const T a0 = a[i * k + l];
            const T a1 = a[(i + 1) * k + l];
            const T a2 = a[(i + 2) * k + l];
            const T a3 = a[(i + 3) * k + l];
            T* crow = c + l * n;
            for (std::size_t j = 0; j < n; ++j)
                crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
    }
    for (; i < m; ++i) {
        const T* brow = b + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const T av = a[i * k + l];
            T* crow = c + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace kernel

// Dynamic computation record: operations are evaluated eagerly as nodes are
// appended, so the node list is topologically ordered by construction.
// backward() walks it in reverse and accumulates gradients additively, which
// makes duplicated input references behave like a sum of paths.
//
// Every public operation verifies that the values it produced are finite and
// names the offending node otherwise.
template <typename T>
class Graph {
public:
    using NodeId = std::size_t;

    NodeId input(Tensor<T> v) {
        const NodeId id = push(Op::input, v, npos, npos, true);
        inputs_.push_back(id);
        return id;
    }

    NodeId constant(Tensor<T> v) { return push(Op::constant, std::move(v), npos, npos, false); }

    NodeId matmul(NodeId a, NodeId b) {
        const auto& ta = val(a);
        const auto& tb = val(b);
        require(ta.rank() == 2 && tb.rank() == 2 && ta.cols() == tb.rows(),
                "matmul shape mismatch " + ta.shape_str() + " x " + tb.shape_str());
        Tensor<T> out({ta.rows(), tb.cols()});
        kernel::gemm_nn(ta.data(), tb.data(), out.data(), ta.rows(), ta.cols(), tb.cols());
        return push(Op::matmul, std::move(out), a, b);
    }

    // [m×n] + [n], broadcast over rows
    NodeId add_bias(NodeId a, NodeId b) {
        const auto& ta = val(a);
        const auto& tb = val(b);
        require(ta.rank() == 2 && tb.size() == ta.cols(),
                "add_bias shape mismatch " + ta.shape_str() + " + " + tb.shape_str());
        Tensor<T> out = ta;
        for (std::size_t r = 0; r < ta.rows(); ++r) {
            T* row = out.row(r);
            for (std::size_t j = 0; j < ta.cols(); ++j) row[j] += tb[j];
        }
        return push(Op::add_bias, std::move(out), a, b);
    }

    NodeId add(NodeId a, NodeId b) { return binary_elem(Op::add, a, b); }
    NodeId sub(NodeId a, NodeId b) { return binary_elem(Op::sub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return binary_elem(Op::mul, a, b); }

    NodeId scale(NodeId a, T c) {
        Tensor<T> out = val(a);
        for (T& v : out.values()) v *= c;
        const NodeId id = push(Op::scale, std::move(out), a, npos);
        nodes_[id].c = c;
        return id;
    }

    NodeId activation(NodeId a, Activation act) {
        Tensor<T> out = val(a);
        for (T& v : out.values()) v = activate(v, act);
        const NodeId id = push(Op::act, std::move(out), a, npos);
        nodes_[id].act = act;
        return id;
    }

    // per-row softmax cross-entropy with max-subtraction: [m×C], labels -> [m]
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels) {
        const auto& tl = val(logits);
        require(tl.rank() == 2 && tl.cols() >= 2, "softmax_cross_entropy expects [m×C], C>=2");
        require(labels.size() == tl.rows(), "label count " + std::to_string(labels.size()) +
                                                " != batch rows " + std::to_string(tl.rows()));
        const std::size_t m = tl.rows(), c = tl.cols();
        for (std::size_t r = 0; r < m; ++r)
            require(labels[r] >= 0 && static_cast<std::size_t>(labels[r]) < c,
                    "label out of range at row " + std::to_string(r));
        Tensor<T> out({m});
        Tensor<T> probs({m, c});
        for (std::size_t r = 0; r < m; ++r) {
            const T* row = tl.row(r);
            T mx = row[0];
            for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
            T sum = 0;
            for (std::size_t j = 0; j < c; ++j) {
                const T e = std::exp(row[j] - mx);
                probs.at(r, j) = e;
                sum += e;
            }
            for (std::size_t j = 0; j < c; ++j) probs.at(r, j) /= sum;
            out[r] = std::log(sum) + mx - row[static_cast<std::size_t>(labels[r])];
        }
        const NodeId id = push(Op::softmax_ce, std::move(out), logits, npos);
        nodes_[id].aux0 = std::move(probs);
        nodes_[id].labels = std::move(labels);
        return id;
    }

    // per-row KL(softmax(ref) || softmax(other)): [m×C], [m×C] -> [m]
    NodeId softmax_kl(NodeId ref, NodeId other) {
        const auto& ta = val(ref);
        const auto& tb = val(other);
        require(ta.rank() == 2 && ta.same_shape(tb), "softmax_kl shape mismatch " +
                                                         ta.shape_str() + " vs " + tb.shape_str());
        const std::size_t m = ta.rows(), c = ta.cols();
        Tensor<T> out({m});
        Tensor<T> la({m, c}), lb({m, c});
        for (std::size_t r = 0; r < m; ++r) {
            log_softmax_row(ta.row(r), la.row(r), c);
            log_softmax_row(tb.row(r), lb.row(r), c);
            T kl = 0;
            for (std::size_t j = 0; j < c; ++j)
                kl += std::exp(la.at(r, j)) * (la.at(r, j) - lb.at(r, j));
            out[r] = kl;
        }
        const NodeId id = push(Op::softmax_kl, std::move(out), ref, other);
        nodes_[id].aux0 = std::move(la);
        nodes_[id].aux1 = std::move(lb);
        return id;
    }

    // Σ_j x_rj² per row: [m×n] -> [m]
    NodeId row_sumsq(NodeId a) {
        const auto& ta = val(a);
        require(ta.rank() == 2, "row_sumsq expects rank-2 input");
        Tensor<T> out({ta.rows()});
        for (std::size_t r = 0; r < ta.rows(); ++r) {
            const T* row = ta.row(r);
            T s = 0;
            for (std::size_t j = 0; j < ta.cols(); ++j) s += row[j] * row[j];
            out[r] = s;
        }
        return push(Op::row_sumsq, std::move(out), a, npos);
    }

    // Σ_i w_i v_i with constant weights: [m] -> [1]
    NodeId weighted_sum(NodeId a, std::vector<T> w) {
        const auto& ta = val(a);
        require(w.size() == ta.size(), "weighted_sum weight count mismatch");
        T s = 0;
        for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * ta[i];
        const NodeId id = push(Op::weighted_sum, Tensor<T>::scalar(s), a, npos);
        nodes_[id].weights = std::move(w);
        return id;
    }

    NodeId sum(NodeId a) { return weighted_sum(a, std::vector<T>(val(a).size(), T(1))); }

    NodeId mean(NodeId a) {
        const std::size_t n = val(a).size();
        return weighted_sum(a, std::vector<T>(n, T(1) / static_cast<T>(n)));
    }

    const Tensor<T>& value(NodeId id) const { return nodes_.at(id).value; }
    std::size_t node_count() const { return nodes_.size(); }
    const std::vector<NodeId>& declared_inputs() const { return inputs_; }

    // Reverse-mode sweep from `output` seeded with `seed`; returns gradients for
    // the declared inputs, in declaration order.
    std::vector<Tensor<T>> backward(NodeId output, const Tensor<T>& seed) const {
        require(output < nodes_.size(), "backward: unknown output node");
        require(seed.same_shape(nodes_[output].value),
                "backward: seed shape " + seed.shape_str() + " does not match output " +
                    nodes_[output].value.shape_str());
        std::vector<Tensor<T>> grads(nodes_.size());
        grads[output] = seed;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            if (grads[i].empty() || !nodes_[i].requires_grad) continue;
            propagate(i, grads);
        }
        std::vector<Tensor<T>> out;
        out.reserve(inputs_.size());
        for (const NodeId id : inputs_) {
            if (grads[id].empty()) grads[id] = Tensor<T>(nodes_[id].value.shape());
            out.push_back(std::move(grads[id]));
        }
        for (const auto& g : out)
            if (!g.all_finite()) throw NumericError("backward produced non-finite gradients");
        return out;
    }

    // scalar-output convenience: seed = 1
    std::vector<Tensor<T>> backward(NodeId output) const {
        require(nodes_.at(output).value.size() == 1, "backward without seed needs scalar output");
        return backward(output, Tensor<T>::scalar(T(1)));
    }

private:
    enum class Op {
        input,
        constant,
        matmul,
        add_bias,
        add,
        sub,
        mul,
        scale,
        act,
        softmax_ce,
        softmax_kl,
        row_sumsq,
        weighted_sum
    };

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    struct Node {
        Op op;
        NodeId a = npos, b = npos;
        Tensor<T> value;
        Tensor<T> aux0, aux1;
        std::vector<int> labels;
        std::vector<T> weights;
        T c = 0;
        Activation act = Activation::relu;
        bool requires_grad = false;
    };

    static const char* op_name(Op op) {
        switch (op) {
            case Op::input: return "input";
            case Op::constant: return "constant";
            case Op::matmul: return "matmul";
            case Op::add_bias: return "add_bias";
            case Op::add: return "add";
            case Op::sub: return "sub";
            case Op::mul: return "mul";
            case Op::scale: return "scale";
            case Op::act: return "activation";
            case Op::softmax_ce: return "softmax_cross_entropy";
            case Op::softmax_kl: return "softmax_kl";
            case Op::row_sumsq: return "row_sumsq";
            case Op::weighted_sum: return "weighted_sum";
        }
        return "?";
    }

    static void require(bool ok, const std::string& msg) {
        if (!ok) throw ShapeError(msg);
    }

    static T activate(T x, Activation act) {
        switch (act) {
            case Activation::relu: return x > T(0) ? x : T(0);
            case Activation::tanh: return std::tanh(x);
            case Activation::softplus:
                return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
        }
        return x;
    }

    static void log_softmax_row(const T* in, T* out, std::size_t c) {
        T mx = in[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, in[j]);
        T sum = 0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(in[j] - mx);
        const T lse = std::log(sum) + mx;
        for (std::size_t j = 0; j < c; ++j) out[j] = in[j] - lse;
    }

    const Tensor<T>& val(NodeId id) const {
        require(id < nodes_.size(), "reference to unknown node " + std::to_string(id));
        return nodes_[id].value;
    }

    NodeId binary_elem(Op op, NodeId a, NodeId b) {
        const auto& ta = val(a);
        const auto& tb = val(b);
        require(ta.same_shape(tb), std::string(op_name(op)) + " shape mismatch " +
                                       ta.shape_str() + " vs " + tb.shape_str());
        Tensor<T> out = ta;
        switch (op) {
            case Op::add:
                for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
                break;
            case Op::sub:
                for (std::size_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
                break;
            case Op::mul:
                for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
                break;
            default: require(false, "bad binary op");
        }
        return push(op, std::move(out), a, b);
    }

    NodeId push(Op op, Tensor<T> value, NodeId a, NodeId b, bool force_grad = false) {
        Node n;
        n.op = op;
        n.a = a;
        n.b = b;
        n.value = std::move(value);
        n.requires_grad = force_grad || (a != npos && nodes_[a].requires_grad) ||
                          (b != npos && nodes_[b].requires_grad);
        nodes_.push_back(std::move(n));
        const NodeId id = nodes_.size() - 1;
        if (!nodes_[id].value.all_finite())
            throw NumericError("non-finite values at node " + std::to_string(id) + " (" +
                               op_name(op) + ")");
        return id;
    }

    void accum(std::vector<Tensor<T>>& grads, NodeId id, std::size_t i, T v) const {
        if (grads[id].empty()) grads[id] = Tensor<T>(nodes_[id].value.shape());
        grads[id][i] += v;
    }

    Tensor<T>& grad_buf(std::vector<Tensor<T>>& grads, NodeId id) const {
        if (grads[id].empty()) grads[id] = Tensor<T>(nodes_[id].value.shape());
        return grads[id];
    }

    void propagate(NodeId id, std::vector<Tensor<T>>& grads) const {
        const Node& n = nodes_[id];
        const Tensor<T>& g = grads[id];
        auto needs = [&](NodeId in) { return in != npos && nodes_[in].requires_grad; };
        switch (n.op) {
            case Op::input:
            case Op::constant: break;
            case Op::matmul: {
                const auto& ta = nodes_[n.a].value;
                const auto& tb = nodes_[n.b].value;
                if (needs(n.a))
                    kernel::gemm_nt_acc(g.data(), tb.data(), grad_buf(grads, n.a).data(),
                                        ta.rows(), tb.cols(), ta.cols());
                if (needs(n.b))
                    kernel::gemm_tn_acc(ta.data(), g.data(), grad_buf(grads, n.b).data(),
                                        ta.rows(), ta.cols(), tb.cols());
                break;
            }
            case Op::add_bias: {
                if (needs(n.a)) {
                    auto& ga = grad_buf(grads, n.a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                }
                if (needs(n.b)) {
                    auto& gb = grad_buf(grads, n.b);
                    const std::size_t ccols = nodes_[n.b].value.size();
                    for (std::size_t r = 0; r < g.rows(); ++r)
                        for (std::size_t j = 0; j < ccols; ++j) gb[j] += g.at(r, j);
                }
                break;
            }
            case Op::add:
            case Op::sub: {
                if (needs(n.a)) {
                    auto& ga = grad_buf(grads, n.a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                }
                if (needs(n.b)) {
                    auto& gb = grad_buf(grads, n.b);
                    const T s = n.op == Op::sub ? T(-1) : T(1);
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += s * g[i];
                }
                break;
            }
            case Op::mul: {
                const auto& ta = nodes_[n.a].value;
                const auto& tb = nodes_[n.b].value;
                if (needs(n.a)) {
                    auto& ga = grad_buf(grads, n.a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * tb[i];
                }
                if (needs(n.b)) {
                    auto& gb = grad_buf(grads, n.b);
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ta[i];
                }
                break;
            }
            case Op::scale: {
                if (needs(n.a)) {
                    auto& ga = grad_buf(grads, n.a);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.c * g[i];
                }
                break;
            }
            case Op::act: {
                if (!needs(n.a)) break;
                const auto& x = nodes_[n.a].value;
                auto& ga = grad_buf(grads, n.a);
                switch (n.act) {
                    case Activation::relu:
                        for (std::size_t i = 0; i < g.size(); ++i)
                            ga[i] += x[i] > T(0) ? g[i] : T(0);
                        break;
                    case Activation::tanh:
                        for (std::size_t i = 0; i < g.size(); ++i) {
                            const T t = n.value[i];
                            ga[i] += g[i] * (T(1) - t * t);
                        }
                        break;
                    case Activation::softplus:
                        for (std::size_t i = 0; i < g.size(); ++i) {
                            const T s = x[i] > T(0) ? T(1) / (T(1) + std::exp(-x[i]))
                                                    : T(1) - T(1) / (T(1) + std::exp(x[i]));
                            ga[i] += g[i] * s;
                        }
                        break;
                }
                break;
            }
            case Op::softmax_ce: {
                if (!needs(n.a)) break;
                auto& ga = grad_buf(grads, n.a);
                const auto& probs = n.aux0;
                const std::size_t c = probs.cols();
                for (std::size_t r = 0; r < probs.rows(); ++r) {
                    const T s = g[r];
                    const std::size_t y = static_cast<std::size_t>(n.labels[r]);
                    for (std::size_t j = 0; j < c; ++j)
                        ga.at(r, j) += s * (probs.at(r, j) - (j == y ? T(1) : T(0)));
                }
                break;
            }
            case Op::softmax_kl: {
                const auto& la = n.aux0;
                const auto& lb = n.aux1;
                const std::size_t c = la.cols();
                for (std::size_t r = 0; r < la.rows(); ++r) {
                    const T s = g[r];
                    const T kl = n.value[r];
                    for (std::size_t j = 0; j < c; ++j) {
                        const T p = std::exp(la.at(r, j));
                        if (needs(n.a))
                            grad_buf(grads, n.a).at(r, j) +=
                                s * p * ((la.at(r, j) - lb.at(r, j)) - kl);
                        if (needs(n.b))
                            grad_buf(grads, n.b).at(r, j) += s * (std::exp(lb.at(r, j)) - p);
                    }
                }
                break;
            }
            case Op::row_sumsq: {
                if (!needs(n.a)) break;
                const auto& x = nodes_[n.a].value;
                auto& ga = grad_buf(grads, n.a);
                for (std::size_t r = 0; r < x.rows(); ++r) {
                    const T s = g[r];
                    for (std::size_t j = 0; j < x.cols(); ++j)
                        ga.at(r, j) += s * T(2) * x.at(r, j);
                }
                break;
            }
            case Op::weighted_sum: {
                if (!needs(n.a)) break;
                auto& ga = grad_buf(grads, n.a);
                const T s = g[0];
                for (std::size_t i = 0; i < n.weights.size(); ++i) ga[i] += s * n.weights[i];
                break;
            }
        }
    }

    std::vector<Node> nodes_;
    std::vector<NodeId> inputs_;
};

}  // namespace iseat::nd
