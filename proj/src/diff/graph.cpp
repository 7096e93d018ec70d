#include "nclust/diff/graph.hpp"

#include "nclust/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nclust::diff {

std::string_view op_name(OpKind kind) {
    switch (kind) {
    case OpKind::constant: return "constant";
    case OpKind::param: return "param";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::concat: return "concat";
    case OpKind::relu: return "relu";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::segment_softmax: return "segment_softmax";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::segment_weighted_sum: return "segment_weighted_sum";
    case OpKind::affine: return "affine";
    case OpKind::cross_entropy: return "cross_entropy";
    case OpKind::bce_with_logits: return "bce_with_logits";
    case OpKind::mean_rows: return "mean_rows";
    case OpKind::sum: return "sum";
    }
    return "unknown";
}

const Tensor& Var::value() const { return graph_->value(id_); }
const Tensor& Var::grad() const { return graph_->grad(id_); }

Var Graph::constant(Tensor value) {
    nodes_.push_back(Node{OpKind::constant, {}, std::move(value), {}, {}, nullptr, false});
    return Var(this, nodes_.size() - 1);
}

Var Graph::param(Param& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
    nodes_.push_back(Node{OpKind::param, {}, p.value, {}, {}, &p, p.trainable});
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
}

Var Graph::record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward) {
    if (check_finite_ && !value.all_finite()) {
        throw NumericalError(std::string("non-finite output from ") + std::string(op_name(kind)));
    }
    bool needs = false;
    for (auto id : inputs) needs = needs || nodes_.at(id).needs_grad;
    nodes_.push_back(Node{kind, std::move(inputs), std::move(value), {}, needs ? std::move(backward) : BackwardFn{},
                          nullptr, needs});
    return Var(this, nodes_.size() - 1);
}

Tensor& Graph::grad_buffer(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
    return n.grad;
}

void Graph::backward(Var loss) {
    if (&loss.graph() != this) throw StateError("backward: loss belongs to another graph");
    const Tensor& lv = value(loss.id());
    if (lv.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_string(lv.shape()));
    for (auto& n : nodes_) n.grad = Tensor{};
    grad_buffer(loss.id()).fill(1.0);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.empty() || !n.needs_grad) continue;
        if (n.kind == OpKind::param) {
            Param& p = *n.param;
            if (!p.trainable) continue;
            if (p.grad.empty()) p.grad = Tensor(p.value.shape(), 0.0);
            auto dst = p.grad.values();
            auto src = n.grad.values();
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
            continue;
        }
        if (n.backward) n.backward(*this, n.grad);
    }
}

namespace {

[[noreturn]] void shape_mismatch(std::string_view op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                     shape_string(b.shape()));
}

void require_same_graph(Var a, Var b) {
    if (&a.graph() != &b.graph()) throw StateError("operands belong to different graphs");
}

enum class Broadcast { none, row, column };

Broadcast broadcast_kind(std::string_view op, const Tensor& a, const Tensor& b) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::none;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
    if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::column;
    shape_mismatch(op, a, b);
}

std::size_t bidx(Broadcast mode, std::size_t r, std::size_t c, std::size_t cols_b) {
    switch (mode) {
    case Broadcast::none: return r * cols_b + c;
    case Broadcast::row: return c;
    case Broadcast::column: return r;
    }
    return 0;
}

void accumulate(Tensor& dst, std::size_t i, Real v) { dst[i] += v; }

void check_segments(std::string_view op, std::span<const std::size_t> segments, std::size_t rows,
                    std::size_t num_segments) {
    if (segments.size() != rows) {
        throw ShapeError(std::string(op) + ": " + std::to_string(segments.size()) + " segment ids for " +
                         std::to_string(rows) + " rows");
    }
    for (auto s : segments) {
        if (s >= num_segments) throw ShapeError(std::string(op) + ": segment id out of range");
    }
}

} // namespace

namespace {

// Row-major kernels; accumulate into the output.
// C[m×n] += A[m×k]·B[k×n]
void gemm_acc(const Real* A, const Real* B, Real* C, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        Real* c = C + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const Real av = A[i * k + p];
            if (av == 0.0) continue;
            const Real* b = B + p * n;
            for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// dA[m×k] += G[m×n]·Bᵀ
void gemm_abt_acc(const Real* G, const Real* B, Real* dA, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const Real* gr = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const Real* b = B + p * n;
            Real s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += gr[j] * b[j];
            dA[i * k + p] += s;
        }
    }
}

// dB[k×n] += Aᵀ·G
void gemm_atb_acc(const Real* A, const Real* G, Real* dB, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const Real* gr = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const Real av = A[i * k + p];
            if (av == 0.0) continue;
            Real* d = dB + p * n;
            for (std::size_t j = 0; j < n; ++j) d[j] += av * gr[j];
        }
    }
}

} // namespace

Var matmul(Var a, Var b) {
    require_same_graph(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.cols() != B.rows()) shape_mismatch("matmul", A, B);
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    Tensor out = Tensor::zeros(m, n);
    gemm_acc(A.values().data(), B.values().data(), out.values().data(), m, k, n);
    const auto ia = a.id(), ib = b.id();
    return a.graph().record(OpKind::matmul, {ia, ib}, std::move(out), [ia, ib, m, k, n](Graph& g, const Tensor& G) {
        if (g.needs_grad(ia))
            gemm_abt_acc(G.values().data(), g.value(ib).values().data(), g.grad_buffer(ia).values().data(), m, k, n);
        if (g.needs_grad(ib))
            gemm_atb_acc(g.value(ia).values().data(), G.values().data(), g.grad_buffer(ib).values().data(), m, k, n);
    });
}

namespace {

// sign = +1 for add, −1 for sub.
Var add_like(Var a, Var b, Real sign, OpKind kind) {
    require_same_graph(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    const Broadcast mode = broadcast_kind(op_name(kind), A, B);
    const std::size_t R = A.rows(), C = A.cols(), cb = B.cols();
    Tensor out = A;
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out(r, c) += sign * B[bidx(mode, r, c, cb)];
    const auto ia = a.id(), ib = b.id();
    return a.graph().record(kind, {ia, ib}, std::move(out), [=](Graph& g, const Tensor& G) {
        if (g.needs_grad(ia)) {
            Tensor& dA = g.grad_buffer(ia);
            for (std::size_t i = 0; i < G.size(); ++i) dA[i] += G[i];
        }
        if (g.needs_grad(ib)) {
            Tensor& dB = g.grad_buffer(ib);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) accumulate(dB, bidx(mode, r, c, cb), sign * G(r, c));
        }
    });
}

} // namespace

Var add(Var a, Var b) { return add_like(a, b, 1.0, OpKind::add); }
Var sub(Var a, Var b) { return add_like(a, b, -1.0, OpKind::sub); }

Var mul(Var a, Var b) {
    require_same_graph(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    const Broadcast mode = broadcast_kind("mul", A, B);
    const std::size_t R = A.rows(), C = A.cols(), cb = B.cols();
    Tensor out = A;
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out(r, c) *= B[bidx(mode, r, c, cb)];
    const auto ia = a.id(), ib = b.id();
    return a.graph().record(OpKind::mul, {ia, ib}, std::move(out), [=](Graph& g, const Tensor& G) {
        const Tensor& A = g.value(ia);
        const Tensor& B = g.value(ib);
        if (g.needs_grad(ia)) {
            Tensor& dA = g.grad_buffer(ia);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) dA(r, c) += G(r, c) * B[bidx(mode, r, c, cb)];
        }
        if (g.needs_grad(ib)) {
            Tensor& dB = g.grad_buffer(ib);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < C; ++c) accumulate(dB, bidx(mode, r, c, cb), G(r, c) * A(r, c));
        }
    });
}

Var scale(Var a, Real factor) {
    Tensor out = a.value();
    for (auto& v : out.values()) v *= factor;
    const auto ia = a.id();
    return a.graph().record(OpKind::scale, {ia}, std::move(out), [=](Graph& g, const Tensor& G) {
        Tensor& dA = g.grad_buffer(ia);
        for (std::size_t i = 0; i < G.size(); ++i) dA[i] += factor * G[i];
    });
}

Var concat(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat: no operands");
    Graph& graph = parts.front().graph();
    const std::size_t R = parts.front().value().rows();
    std::size_t C = 0;
    std::vector<std::size_t> ids, offsets;
    for (const Var& p : parts) {
        require_same_graph(parts.front(), p);
        if (p.value().rows() != R) shape_mismatch("concat", parts.front().value(), p.value());
        ids.push_back(p.id());
        offsets.push_back(C);
        C += p.value().cols();
    }
    Tensor out = Tensor::zeros(R, C);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const Tensor& P = parts[i].value();
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < P.cols(); ++c) out(r, offsets[i] + c) = P(r, c);
    }
    return graph.record(OpKind::concat, ids, std::move(out), [ids, offsets, R](Graph& g, const Tensor& G) {
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (!g.needs_grad(ids[i])) continue;
            Tensor& dP = g.grad_buffer(ids[i]);
            for (std::size_t r = 0; r < R; ++r)
                for (std::size_t c = 0; c < dP.cols(); ++c) dP(r, c) += G(r, offsets[i] + c);
        }
    });
}

Var relu(Var a) {
    Tensor out = a.value();
    for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
    const auto ia = a.id();
    return a.graph().record(OpKind::relu, {ia}, std::move(out), [ia](Graph& g, const Tensor& G) {
        const Tensor& A = g.value(ia);
        Tensor& dA = g.grad_buffer(ia);
        for (std::size_t i = 0; i < G.size(); ++i)
            if (A[i] > 0.0) dA[i] += G[i];
    });
}

Var softmax_rows(Var a) {
    const Tensor& A = a.value();
    const std::size_t R = A.rows(), C = A.cols();
    Tensor out = A;
    for (std::size_t r = 0; r < R; ++r) {
        auto row = out.row_span(r);
        const Real mx = *std::max_element(row.begin(), row.end());
        Real total = 0.0;
        for (auto& v : row) total += (v = std::exp(v - mx));
        for (auto& v : row) v /= total;
    }
    const auto ia = a.id();
    Tensor y = out;
    return a.graph().record(OpKind::softmax_rows, {ia}, std::move(out), [ia, y = std::move(y), R, C](Graph& g, const Tensor& G) {
        Tensor& dA = g.grad_buffer(ia);
        for (std::size_t r = 0; r < R; ++r) {
            Real dot = 0.0;
            for (std::size_t c = 0; c < C; ++c) dot += y(r, c) * G(r, c);
            for (std::size_t c = 0; c < C; ++c) dA(r, c) += y(r, c) * (G(r, c) - dot);
        }
    });
}

Var segment_softmax(Var logits, std::span<const std::size_t> segments, std::size_t num_segments) {
    const Tensor& L = logits.value();
    if (L.cols() != 1) throw ShapeError("segment_softmax: expected a K×1 column, got " + shape_string(L.shape()));
    const std::size_t K = L.rows();
    check_segments("segment_softmax", segments, K, num_segments);
    std::vector<std::size_t> seg(segments.begin(), segments.end());
    std::vector<Real> mx(num_segments, -std::numeric_limits<Real>::infinity());
    for (std::size_t k = 0; k < K; ++k) mx[seg[k]] = std::max(mx[seg[k]], L[k]);
    std::vector<Real> total(num_segments, 0.0);
    Tensor out = Tensor::zeros(K, 1);
    for (std::size_t k = 0; k < K; ++k) total[seg[k]] += (out[k] = std::exp(L[k] - mx[seg[k]]));
    for (std::size_t k = 0; k < K; ++k) out[k] /= total[seg[k]];
    const auto il = logits.id();
    Tensor y = out;
    return logits.graph().record(OpKind::segment_softmax, {il}, std::move(out),
                                 [il, seg = std::move(seg), y = std::move(y), num_segments](Graph& g, const Tensor& G) {
                                     std::vector<Real> dot(num_segments, 0.0);
                                     for (std::size_t k = 0; k < seg.size(); ++k) dot[seg[k]] += y[k] * G[k];
                                     Tensor& dL = g.grad_buffer(il);
                                     for (std::size_t k = 0; k < seg.size(); ++k) dL[k] += y[k] * (G[k] - dot[seg[k]]);
                                 });
}

Var gather_rows(Var a, std::span<const std::size_t> index) {
    const Tensor& A = a.value();
    const std::size_t C = A.cols();
    for (auto i : index) {
        if (i >= A.rows()) throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range for " +
                                            shape_string(A.shape()));
    }
    std::vector<std::size_t> idx(index.begin(), index.end());
    Tensor out = Tensor::zeros(idx.size(), C);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        auto src = A.row_span(idx[r]);
        std::copy(src.begin(), src.end(), out.row_span(r).begin());
    }
    const auto ia = a.id();
    return a.graph().record(OpKind::gather_rows, {ia}, std::move(out), [ia, idx = std::move(idx), C](Graph& g, const Tensor& G) {
        Tensor& dA = g.grad_buffer(ia);
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t c = 0; c < C; ++c) dA(idx[r], c) += G(r, c);
    });
}

Var segment_weighted_sum(Var values, Var weights, std::span<const std::size_t> segments, std::size_t num_segments) {
    require_same_graph(values, weights);
    const Tensor& V = values.value();
    const Tensor& W = weights.value();
    const std::size_t K = V.rows(), C = V.cols();
    if (W.cols() != 1 || W.rows() != K) shape_mismatch("segment_weighted_sum", V, W);
    check_segments("segment_weighted_sum", segments, K, num_segments);
    std::vector<std::size_t> seg(segments.begin(), segments.end());
    Tensor out = Tensor::zeros(num_segments, C);
    for (std::size_t k = 0; k < K; ++k) {
        const Real w = W[k];
        for (std::size_t c = 0; c < C; ++c) out(seg[k], c) += w * V(k, c);
    }
    const auto iv = values.id(), iw = weights.id();
    return values.graph().record(OpKind::segment_weighted_sum, {iv, iw}, std::move(out),
                                 [iv, iw, seg = std::move(seg), C](Graph& g, const Tensor& G) {
                                     const Tensor& V = g.value(iv);
                                     const Tensor& W = g.value(iw);
                                     if (g.needs_grad(iv)) {
                                         Tensor& dV = g.grad_buffer(iv);
                                         for (std::size_t k = 0; k < seg.size(); ++k)
                                             for (std::size_t c = 0; c < C; ++c) dV(k, c) += W[k] * G(seg[k], c);
                                     }
                                     if (g.needs_grad(iw)) {
                                         Tensor& dW = g.grad_buffer(iw);
                                         for (std::size_t k = 0; k < seg.size(); ++k) {
                                             Real s = 0.0;
                                             for (std::size_t c = 0; c < C; ++c) s += V(k, c) * G(seg[k], c);
                                             dW[k] += s;
                                         }
                                     }
                                 });
}

Var affine(Var x, Var weight, Var bias) {
    require_same_graph(x, weight);
    require_same_graph(x, bias);
    const Tensor& X = x.value();
    const Tensor& Wt = weight.value();
    const Tensor& b = bias.value();
    if (X.cols() != Wt.rows()) shape_mismatch("affine", X, Wt);
    if (b.rows() != 1 || b.cols() != Wt.cols()) shape_mismatch("affine", Wt, b);
    const std::size_t m = X.rows(), k = X.cols(), n = Wt.cols();
    Tensor out = Tensor::zeros(m, n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out(i, j) = b[j];
    gemm_acc(X.values().data(), Wt.values().data(), out.values().data(), m, k, n);
    const auto ix = x.id(), iw = weight.id(), ib = bias.id();
    return x.graph().record(OpKind::affine, {ix, iw, ib}, std::move(out), [=](Graph& g, const Tensor& G) {
        if (g.needs_grad(ix))
            gemm_abt_acc(G.values().data(), g.value(iw).values().data(), g.grad_buffer(ix).values().data(), m, k, n);
        if (g.needs_grad(iw))
            gemm_atb_acc(g.value(ix).values().data(), G.values().data(), g.grad_buffer(iw).values().data(), m, k, n);
        if (g.needs_grad(ib)) {
            Tensor& db = g.grad_buffer(ib);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) db[j] += G(i, j);
        }
    });
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
    const Tensor& L = logits.value();
    const std::size_t R = L.rows(), C = L.cols();
    if (labels.size() != R) {
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         shape_string(L.shape()));
    }
    for (auto y : labels)
        if (y >= C) throw ShapeError("cross_entropy: label " + std::to_string(y) + " out of range");
    std::vector<std::size_t> lab(labels.begin(), labels.end());
    Tensor probs = L;
    Real loss = 0.0;
    for (std::size_t r = 0; r < R; ++r) {
        auto row = probs.row_span(r);
        const Real mx = *std::max_element(row.begin(), row.end());
        Real total = 0.0;
        for (auto v : row) total += std::exp(v - mx);
        const Real lse = mx + std::log(total);
        loss += lse - L(r, lab[r]);
        for (auto& v : row) v = std::exp(v - lse);
    }
    const auto il = logits.id();
    return logits.graph().record(OpKind::cross_entropy, {il}, Tensor::scalar(loss / static_cast<Real>(R)),
                                 [il, lab = std::move(lab), probs = std::move(probs), R, C](Graph& g, const Tensor& G) {
                                     Tensor& dL = g.grad_buffer(il);
                                     const Real s = G[0] / static_cast<Real>(R);
                                     for (std::size_t r = 0; r < R; ++r)
                                         for (std::size_t c = 0; c < C; ++c)
                                             dL(r, c) += s * (probs(r, c) - (c == lab[r] ? 1.0 : 0.0));
                                 });
}

Var bce_with_logits(Var logits, const Tensor& targets) {
    const Tensor& L = logits.value();
    if (L.rows() != targets.rows() || L.cols() != targets.cols()) shape_mismatch("bce_with_logits", L, targets);
    const std::size_t n = L.size();
    Real loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Real x = L[i], y = targets[i];
        loss += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    }
    const auto il = logits.id();
    return logits.graph().record(OpKind::bce_with_logits, {il}, Tensor::scalar(loss / static_cast<Real>(n)),
                                 [il, targets, n](Graph& g, const Tensor& G) {
                                     const Tensor& L = g.value(il);
                                     Tensor& dL = g.grad_buffer(il);
                                     const Real s = G[0] / static_cast<Real>(n);
                                     for (std::size_t i = 0; i < n; ++i) {
                                         const Real sig = 1.0 / (1.0 + std::exp(-L[i]));
                                         dL[i] += s * (sig - targets[i]);
                                     }
                                 });
}

Var mean_rows(Var a) {
    const Tensor& A = a.value();
    const std::size_t R = A.rows(), C = A.cols();
    if (R == 0) throw ShapeError("mean_rows: no rows");
    Tensor out = Tensor::zeros(1, C);
    for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) out[c] += A(r, c);
    for (auto& v : out.values()) v /= static_cast<Real>(R);
    const auto ia = a.id();
    return a.graph().record(OpKind::mean_rows, {ia}, std::move(out), [ia, R, C](Graph& g, const Tensor& G) {
        Tensor& dA = g.grad_buffer(ia);
        const Real inv = 1.0 / static_cast<Real>(R);
        for (std::size_t r = 0; r < R; ++r)
            for (std::size_t c = 0; c < C; ++c) dA(r, c) += G[c] * inv;
    });
}

Var sum(Var a) {
    Real total = 0.0;
    for (auto v : a.value().values()) total += v;
    const auto ia = a.id();
    return a.graph().record(OpKind::sum, {ia}, Tensor::scalar(total), [ia](Graph& g, const Tensor& G) {
        Tensor& dA = g.grad_buffer(ia);
        for (auto& v : dA.values()) v += G[0];
    });
}

} // namespace nclust::diff
