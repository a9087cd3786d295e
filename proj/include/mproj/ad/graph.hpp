#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <span>
#include <vector>

#include "mproj/ad/tensor.hpp"
#include "mproj/util/parallel.hpp"

namespace mproj::ad {

namespace kernels {

/// C[M,N] = A[M,K] * B[K,N]. Each output row accumulates over k in a fixed
/// order, so results are bit-identical for any row batching or thread count.
inline void matmul_nn(const double* A, const double* B, double* C, int64_t M, int64_t K, int64_t N,
                      int threads = 1) {
    parallel_for(M, threads, [&](int64_t i) {
        const double* a = A + i * K;
        double* c = C + i * N;
        std::memset(c, 0, sizeof(double) * N);
        for (int64_t k = 0; k < K; ++k) {
            const double av = a[k];
            const double* b = B + k * N;
            for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    });
}

/// C[M,K] = A[M,N] * B^T where B is [K,N]: rows of A dotted with rows of B.
inline void matmul_nt(const double* A, const double* B, double* C, int64_t M, int64_t N, int64_t K,
                      int threads = 1) {
    parallel_for(M, threads, [&](int64_t i) {
        const double* a = A + i * N;
        double* c = C + i * K;
        for (int64_t k = 0; k < K; ++k) {
            const double* b = B + k * N;
            double acc = 0.0;
            for (int64_t j = 0; j < N; ++j) acc += a[j] * b[j];
            c[k] = acc;
        }
    });
}

/// C[K,N] += A^T * B with A [M,K], B [M,N] (accumulates into C).
inline void matmul_tn_acc(const double* A, const double* B, double* C, int64_t M, int64_t K,
                          int64_t N) {
    for (int64_t i = 0; i < M; ++i) {
        const double* a = A + i * K;
        const double* b = B + i * N;
        for (int64_t k = 0; k < K; ++k) {
            const double av = a[k];
            if (av == 0.0) continue;
            double* c = C + k * N;
            for (int64_t j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

}  // namespace kernels

enum class Op {
    input,
    add,
    sub,
    mul,
    scale,      // multiply by a compile-time scalar
    matmul,
    conv2d,
    relu,
    leaky_relu,
    sigmoid,
    softplus,
    exp,
    log,
    clamp,
    sum,
    mean,
    slice_rows,
    slice_cols,
    concat_cols,
    broadcast,
    reshape,
};

/// Eager reverse-mode tape. Every op computes its value at creation; nodes
/// are therefore already in topological order and backward is a single
/// reverse sweep. One graph has one owner; parameters enter as inputs with
/// requires_grad set.
class Graph {
  public:
    struct Node {
        Op op;
        std::vector<int> inputs;
        Tensor value;
        Tensor grad;           // allocated lazily during backward
        bool requires_grad = false;
        bool grad_alloc = false;
        // op attributes
        double a0 = 0.0, a1 = 0.0;           // scalars (slope, clamp bounds, scale)
        int64_t i0 = 0, i1 = 0, i2 = 0, i3 = 0;  // ranges / conv geometry
        std::vector<int64_t> shape_attr;
    };

    int threads = 1;
    bool check_finite = true;

    int input(Tensor t, bool requires_grad = false) {
        Node n;
        n.op = Op::input;
        n.value = std::move(t);
        n.requires_grad = requires_grad;
        return push(std::move(n));
    }
    int constant(Tensor t) { return input(std::move(t), false); }

    const Tensor& value(int id) const { return node_at(id).value; }

    /// Gradient of the last backward() target w.r.t. node id; zero tensor if
    /// the node was not touched.
    Tensor grad(int id) const {
        const Node& n = node_at(id);
        if (n.grad_alloc) return n.grad;
        return Tensor::zeros(n.value.shape);
    }

    int add(int a, int b) { return binary(Op::add, a, b); }
    int sub(int a, int b) { return binary(Op::sub, a, b); }
    int mul(int a, int b) { return binary(Op::mul, a, b); }

    int scale(int a, double s) {
        Node n = unary_node(Op::scale, a);
        n.a0 = s;
        n.value = value(a);
        for (auto& x : n.value.v) x *= s;
        return push(std::move(n));
    }
    int neg(int a) { return scale(a, -1.0); }

    int matmul(int a, int b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (A.rank() != 2 || B.rank() != 2 || A.shape[1] != B.shape[0])
            throw usage_error("matmul shapes incompatible: " + A.shape_str() + " x " + B.shape_str());
        Node n;
        n.op = Op::matmul;
        n.inputs = {a, b};
        n.requires_grad = node_at(a).requires_grad || node_at(b).requires_grad;
        n.value = Tensor({A.shape[0], B.shape[1]});
        kernels::matmul_nn(A.v.data(), B.v.data(), n.value.v.data(), A.shape[0], A.shape[1],
                           B.shape[1], threads);
        return push(std::move(n));
    }

    /// conv2d with square kernel, stride and zero padding; input [B,C,H,W],
    /// weight [O,C,k,k], optional bias [O].
    int conv2d(int x, int w, int bias, int64_t stride, int64_t pad) {
        const Tensor& X = value(x);
        const Tensor& W = value(w);
        if (X.rank() != 4 || W.rank() != 4 || X.shape[1] != W.shape[1])
            throw usage_error("conv2d shapes incompatible: " + X.shape_str() + " and " + W.shape_str());
        if (W.shape[2] != W.shape[3]) throw usage_error("conv2d expects a square kernel");
        const int64_t B = X.shape[0], C = X.shape[1], H = X.shape[2], Wd = X.shape[3];
        const int64_t O = W.shape[0], k = W.shape[2];
        const int64_t Ho = (H + 2 * pad - k) / stride + 1;
        const int64_t Wo = (Wd + 2 * pad - k) / stride + 1;
        if (Ho < 1 || Wo < 1) throw usage_error("conv2d output would be empty");
        if (bias >= 0 && (value(bias).rank() != 1 || value(bias).shape[0] != O))
            throw usage_error("conv2d bias must be [out_channels]");

        Node n;
        n.op = Op::conv2d;
        n.inputs = bias >= 0 ? std::vector<int>{x, w, bias} : std::vector<int>{x, w};
        n.requires_grad = node_at(x).requires_grad || node_at(w).requires_grad ||
                          (bias >= 0 && node_at(bias).requires_grad);
        n.i0 = stride;
        n.i1 = pad;
        n.value = Tensor({B, O, Ho, Wo});
        const double* xp = X.v.data();
        const double* wp = W.v.data();
        double* yp = n.value.v.data();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t o = 0; o < O; ++o) {
                const double bval = bias >= 0 ? value(bias).v[o] : 0.0;
                for (int64_t oy = 0; oy < Ho; ++oy)
                    for (int64_t ox = 0; ox < Wo; ++ox) {
                        double acc = bval;
                        for (int64_t c = 0; c < C; ++c)
                            for (int64_t ky = 0; ky < k; ++ky) {
                                const int64_t iy = oy * stride - pad + ky;
                                if (iy < 0 || iy >= H) continue;
                                for (int64_t kx = 0; kx < k; ++kx) {
                                    const int64_t ix = ox * stride - pad + kx;
                                    if (ix < 0 || ix >= Wd) continue;
                                    acc += xp[((b * C + c) * H + iy) * Wd + ix] *
                                           wp[((o * C + c) * k + ky) * k + kx];
                                }
                            }
                        yp[((b * O + o) * Ho + oy) * Wo + ox] = acc;
                    }
            }
        return push(std::move(n));
    }

    int relu(int a) {
        Node n = unary_node(Op::relu, a);
        n.value = value(a);
        for (auto& x : n.value.v) x = x > 0.0 ? x : 0.0;
        return push(std::move(n));
    }

    int leaky_relu(int a, double slope = 0.01) {
        Node n = unary_node(Op::leaky_relu, a);
        n.a0 = slope;
        n.value = value(a);
        for (auto& x : n.value.v) x = x > 0.0 ? x : slope * x;
        return push(std::move(n));
    }

    int sigmoid(int a) {
        Node n = unary_node(Op::sigmoid, a);
        n.value = value(a);
        for (auto& x : n.value.v) x = stable_sigmoid(x);
        return push(std::move(n));
    }

    /// softplus(x) = log(1 + exp(x)), the smooth positive map.
    int softplus(int a) {
        Node n = unary_node(Op::softplus, a);
        n.value = value(a);
        for (auto& x : n.value.v) x = x > 30.0 ? x : std::log1p(std::exp(x));
        return push(std::move(n));
    }

    int exp(int a) {
        Node n = unary_node(Op::exp, a);
        n.value = value(a);
        for (auto& x : n.value.v) x = std::exp(x);
        return push(std::move(n));
    }

    int log(int a) {
        Node n = unary_node(Op::log, a);
        n.value = value(a);
        for (auto& x : n.value.v) x = std::log(x);
        return push(std::move(n));
    }

    /// Hard clamp; gradient passes through inside [lo, hi] and is zero outside.
    int clamp(int a, double lo, double hi) {
        Node n = unary_node(Op::clamp, a);
        n.a0 = lo;
        n.a1 = hi;
        n.value = value(a);
        for (auto& x : n.value.v) x = std::clamp(x, lo, hi);
        return push(std::move(n));
    }

    int sum(int a) {
        Node n = unary_node(Op::sum, a);
        double acc = 0.0;
        for (double x : value(a).v) acc += x;
        n.value = Tensor::scalar(acc);
        return push(std::move(n));
    }

    int mean(int a) {
        Node n = unary_node(Op::mean, a);
        double acc = 0.0;
        for (double x : value(a).v) acc += x;
        n.value = Tensor::scalar(acc / static_cast<double>(value(a).numel()));
        return push(std::move(n));
    }

    int slice_rows(int a, int64_t r0, int64_t r1) {
        const Tensor& A = value(a);
        if (A.rank() != 2 || r0 < 0 || r1 > A.shape[0] || r0 >= r1)
            throw usage_error("slice_rows range invalid for " + A.shape_str());
        Node n = unary_node(Op::slice_rows, a);
        n.i0 = r0;
        n.i1 = r1;
        n.value = Tensor({r1 - r0, A.shape[1]});
        std::copy(A.v.begin() + r0 * A.shape[1], A.v.begin() + r1 * A.shape[1], n.value.v.begin());
        return push(std::move(n));
    }

    int slice_cols(int a, int64_t c0, int64_t c1) {
        const Tensor& A = value(a);
        if (A.rank() != 2 || c0 < 0 || c1 > A.shape[1] || c0 >= c1)
            throw usage_error("slice_cols range invalid for " + A.shape_str());
        Node n = unary_node(Op::slice_cols, a);
        n.i0 = c0;
        n.i1 = c1;
        n.value = Tensor({A.shape[0], c1 - c0});
        for (int64_t r = 0; r < A.shape[0]; ++r)
            std::copy(A.v.begin() + r * A.shape[1] + c0, A.v.begin() + r * A.shape[1] + c1,
                      n.value.v.begin() + r * (c1 - c0));
        return push(std::move(n));
    }

    int concat_cols(int a, int b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (A.rank() != 2 || B.rank() != 2 || A.shape[0] != B.shape[0])
            throw usage_error("concat_cols needs matching row counts");
        Node n;
        n.op = Op::concat_cols;
        n.inputs = {a, b};
        n.requires_grad = node_at(a).requires_grad || node_at(b).requires_grad;
        n.value = Tensor({A.shape[0], A.shape[1] + B.shape[1]});
        for (int64_t r = 0; r < A.shape[0]; ++r) {
            std::copy(A.v.begin() + r * A.shape[1], A.v.begin() + (r + 1) * A.shape[1],
                      n.value.v.begin() + r * n.value.shape[1]);
            std::copy(B.v.begin() + r * B.shape[1], B.v.begin() + (r + 1) * B.shape[1],
                      n.value.v.begin() + r * n.value.shape[1] + A.shape[1]);
        }
        return push(std::move(n));
    }

    /// Broadcast [1] -> any, [N] or [1,N] -> [M,N], [M,1] -> [M,N].
    int broadcast(int a, std::vector<int64_t> target) {
        const Tensor& A = value(a);
        Node n = unary_node(Op::broadcast, a);
        n.shape_attr = target;
        Tensor out(target);
        const int64_t tn = out.numel();
        if (A.numel() == 1) {
            for (auto& x : out.v) x = A.v[0];
        } else if (target.size() == 2 &&
                   ((A.rank() == 1 && A.shape[0] == target[1]) ||
                    (A.rank() == 2 && A.shape[0] == 1 && A.shape[1] == target[1]))) {
            for (int64_t r = 0; r < target[0]; ++r)
                std::copy(A.v.begin(), A.v.end(), out.v.begin() + r * target[1]);
        } else if (target.size() == 2 && A.rank() == 2 && A.shape[1] == 1 && A.shape[0] == target[0]) {
            for (int64_t r = 0; r < target[0]; ++r)
                for (int64_t c = 0; c < target[1]; ++c) out.v[r * target[1] + c] = A.v[r];
        } else {
            throw usage_error("unsupported broadcast from " + A.shape_str());
        }
        (void)tn;
        n.value = std::move(out);
        return push(std::move(n));
    }

    int reshape(int a, std::vector<int64_t> target) {
        const Tensor& A = value(a);
        if (Tensor::numel_of(target) != A.numel())
            throw usage_error("reshape must preserve element count");
        Node n = unary_node(Op::reshape, a);
        n.shape_attr = target;
        n.value = Tensor(std::move(target), A.v);
        return push(std::move(n));
    }

    /// Reverse sweep from a scalar loss. Gradients flow only into subgraphs
    /// that can reach a requires_grad input, so unrelated branches cost
    /// nothing. Accumulated grads stay on the nodes; read them with grad().
    void backward(int loss) {
        Node& L = node_at(loss);
        if (L.value.numel() != 1) throw usage_error("backward needs a scalar loss");
        for (auto& n : nodes_) {
            n.grad_alloc = false;
            n.grad = Tensor();
        }
        ensure_grad(loss);
        L.grad.v[0] = 1.0;
        for (int id = loss; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.grad_alloc || n.op == Op::input) continue;
            propagate(n);
            if (check_finite && !n.grad.all_finite())
                throw stage_error("non-finite gradient produced at node " + std::to_string(id));
        }
    }

    size_t size() const { return nodes_.size(); }

  private:
    std::vector<Node> nodes_;

    static double stable_sigmoid(double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
    }

    Node& node_at(int id) {
        if (id < 0 || id >= static_cast<int>(nodes_.size()))
            throw usage_error("node " + std::to_string(id) + " is not in this graph");
        return nodes_[id];
    }
    const Node& node_at(int id) const {
        if (id < 0 || id >= static_cast<int>(nodes_.size()))
            throw usage_error("node " + std::to_string(id) + " is not in this graph");
        return nodes_[id];
    }

    Node unary_node(Op op, int a) {
        Node n;
        n.op = op;
        n.inputs = {a};
        n.requires_grad = node_at(a).requires_grad;
        return n;
    }

    int binary(Op op, int a, int b) {
        const Tensor& A = value(a);
        const Tensor& B = value(b);
        if (!A.same_shape(B))
            throw usage_error("elementwise op needs equal shapes, got " + A.shape_str() + " and " +
                              B.shape_str() + " (broadcast explicitly)");
        Node n;
        n.op = op;
        n.inputs = {a, b};
        n.requires_grad = node_at(a).requires_grad || node_at(b).requires_grad;
        n.value = A;
        switch (op) {
            case Op::add:
                for (size_t i = 0; i < n.value.v.size(); ++i) n.value.v[i] += B.v[i];
                break;
            case Op::sub:
                for (size_t i = 0; i < n.value.v.size(); ++i) n.value.v[i] -= B.v[i];
                break;
            case Op::mul:
                for (size_t i = 0; i < n.value.v.size(); ++i) n.value.v[i] *= B.v[i];
                break;
            default:
                throw usage_error("not a binary op");
        }
        return push(std::move(n));
    }

    int push(Node&& n) {
        if (check_finite && !n.value.all_finite())
            throw stage_error("non-finite value produced by forward op");
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    void ensure_grad(int id) {
        Node& n = nodes_[id];
        if (!n.grad_alloc) {
            n.grad = Tensor::zeros(n.value.shape);
            n.grad_alloc = true;
        }
    }

    /// Accumulate n's grad into its inputs (skipping branches that cannot
    /// reach a parameter).
    void propagate(Node& n) {
        auto want = [&](int idx) { return nodes_[n.inputs[idx]].requires_grad; };
        auto gin = [&](int idx) -> Tensor& {
            ensure_grad(n.inputs[idx]);
            return nodes_[n.inputs[idx]].grad;
        };
        const Tensor& g = n.grad;
        switch (n.op) {
            case Op::input:
                break;
            case Op::add: {
                for (int s = 0; s < 2; ++s)
                    if (want(s)) {
                        Tensor& d = gin(s);
                        for (size_t i = 0; i < g.v.size(); ++i) d.v[i] += g.v[i];
                    }
                break;
            }
            case Op::sub: {
                if (want(0)) {
                    Tensor& d = gin(0);
                    for (size_t i = 0; i < g.v.size(); ++i) d.v[i] += g.v[i];
                }
                if (want(1)) {
                    Tensor& d = gin(1);
                    for (size_t i = 0; i < g.v.size(); ++i) d.v[i] -= g.v[i];
                }
                break;
            }
            case Op::mul: {
                const Tensor& A = nodes_[n.inputs[0]].value;
                const Tensor& B = nodes_[n.inputs[1]].value;
                if (want(0)) {
                    Tensor& d = gin(0);
                    for (size_t i = 0; i < g.v.size(); ++i) d.v[i] += g.v[i] * B.v[i];
                }
                if (want(1)) {
                    Tensor& d = gin(1);
                    for (size_t i = 0; i < g.v.size(); ++i) d.v[i] += g.v[i] * A.v[i];
                }
                break;
            }
            case Op::scale: {
                if (want(0)) {
                    Tensor& d = gin(0);
                    for (size_t i = 0; i < g.v.size(); ++i) d.v[i] += n.a0 * g.v[i];
                }
                break;
            }
            case Op::matmul: {
                const Tensor& A = nodes_[n.inputs[0]].value;
                const Tensor& B = nodes_[n.inputs[1]].value;
                const int64_t M = A.shape[0], K = A.shape[1], N = B.shape[1];
                if (want(0)) {
                    // dA += g * B^T
                    Tensor da({M, K});
                    kernels::matmul_nt(g.v.data(), B.v.data(), da.v.data(), M, N, K, threads);
                    Tensor& d = gin(0);
                    for (size_t i = 0; i < d.v.size(); ++i) d.v[i] += da.v[i];
                }
                if (want(1)) {
                    // dB += A^T * g
                    Tensor& d = gin(1);
                    kernels::matmul_tn_acc(A.v.data(), g.v.data(), d.v.data(), M, K, N);
                }
                break;
            }
            case Op::conv2d: {
                conv2d_backward(n);
                break;
            }
            case Op::relu: {
                if (want(0)) {
                    const Tensor& X = nodes_[n.inputs[0]].value;
                    Tensor& d = gin(0);
                    for (size_t i = 0; i < g.v.size(); ++i) d.v[i] += X.v[i] > 0.0 ? g.v[i] : 0.0;
                }
                break;
            }
            case Op::leaky_relu: {
                if (want(0)) {
                    const Tensor& X = nodes_[n.inputs[0]].value;
                    Tensor& d = gin(0);
                    for (size_t i = 0; i < g.v.size(); ++i)
                        d.v[i] += X.v[i] > 0.0 ? g.v[i] : n.a0 * g.v[i];
                }
                break;
            }
            case Op::sigmoid: {
                if (want(0)) {
                    Tensor& d = gin(0);
                    for (size_t i = 0; i < g.v.size(); ++i) {
                        const double s = n.value.v[i];
                        d.v[i] += g.v[i] * s * (1.0 - s);
                    }
                }
                break;
            }
            case Op::softplus: {
                if (want(0)) {
                    const Tensor& X = nodes_[n.inputs[0]].value;
                    Tensor& d = gin(0);
                    for (size_t i = 0; i < g.v.size(); ++i) d.v[i] += g.v[i] * stable_sigmoid(X.v[i]);
                }
                break;
            }
            case Op::exp: {
                if (want(0)) {
                    Tensor& d = gin(0);
                    for (size_t i = 0; i < g.v.size(); ++i) d.v[i] += g.v[i] * n.value.v[i];
                }
                break;
            }
            case Op::log: {
                if (want(0)) {
                    const Tensor& X = nodes_[n.inputs[0]].value;
                    Tensor& d = gin(0);
                    for (size_t i = 0; i < g.v.size(); ++i) d.v[i] += g.v[i] / X.v[i];
                }
                break;
            }
            case Op::clamp: {
                if (want(0)) {
                    const Tensor& X = nodes_[n.inputs[0]].value;
                    Tensor& d = gin(0);
                    for (size_t i = 0; i < g.v.size(); ++i)
                        if (X.v[i] > n.a0 && X.v[i] < n.a1) d.v[i] += g.v[i];
                }
                break;
            }
            case Op::sum: {
                if (want(0)) {
                    Tensor& d = gin(0);
                    for (auto& x : d.v) x += g.v[0];
                }
                break;
            }
            case Op::mean: {
                if (want(0)) {
                    Tensor& d = gin(0);
                    const double s = g.v[0] / static_cast<double>(d.v.size());
                    for (auto& x : d.v) x += s;
                }
                break;
            }
            case Op::slice_rows: {
                if (want(0)) {
                    Tensor& d = gin(0);
                    const int64_t cols = d.shape[1];
                    for (int64_t r = 0; r < n.value.shape[0]; ++r)
                        for (int64_t c = 0; c < cols; ++c)
                            d.v[(n.i0 + r) * cols + c] += g.v[r * cols + c];
                }
                break;
            }
            case Op::slice_cols: {
                if (want(0)) {
                    Tensor& d = gin(0);
                    const int64_t cols = d.shape[1], out_cols = n.value.shape[1];
                    for (int64_t r = 0; r < n.value.shape[0]; ++r)
                        for (int64_t c = 0; c < out_cols; ++c)
                            d.v[r * cols + n.i0 + c] += g.v[r * out_cols + c];
                }
                break;
            }
            case Op::concat_cols: {
                const Tensor& A = nodes_[n.inputs[0]].value;
                const Tensor& B = nodes_[n.inputs[1]].value;
                const int64_t ca = A.shape[1], cb = B.shape[1];
                if (want(0)) {
                    Tensor& d = gin(0);
                    for (int64_t r = 0; r < A.shape[0]; ++r)
                        for (int64_t c = 0; c < ca; ++c) d.v[r * ca + c] += g.v[r * (ca + cb) + c];
                }
                if (want(1)) {
                    Tensor& d = gin(1);
                    for (int64_t r = 0; r < B.shape[0]; ++r)
                        for (int64_t c = 0; c < cb; ++c)
                            d.v[r * cb + c] += g.v[r * (ca + cb) + ca + c];
                }
                break;
            }
            case Op::broadcast: {
                if (want(0)) {
                    Tensor& d = gin(0);
                    const Tensor& A = nodes_[n.inputs[0]].value;
                    if (A.numel() == 1) {
                        double acc = 0.0;
                        for (double x : g.v) acc += x;
                        d.v[0] += acc;
                    } else if (A.rank() == 2 && A.shape[1] == 1 && n.value.rank() == 2 &&
                               A.shape[0] == n.value.shape[0]) {
                        const int64_t cols = n.value.shape[1];
                        for (int64_t r = 0; r < A.shape[0]; ++r) {
                            double acc = 0.0;
                            for (int64_t c = 0; c < cols; ++c) acc += g.v[r * cols + c];
                            d.v[r] += acc;
                        }
                    } else {
                        const int64_t cols = n.value.shape[1];
                        for (int64_t r = 0; r < n.value.shape[0]; ++r)
                            for (int64_t c = 0; c < cols; ++c) d.v[c] += g.v[r * cols + c];
                    }
                }
                break;
            }
            case Op::reshape: {
                if (want(0)) {
                    Tensor& d = gin(0);
                    for (size_t i = 0; i < g.v.size(); ++i) d.v[i] += g.v[i];
                }
                break;
            }
        }
    }

    void conv2d_backward(Node& n) {
        const Tensor& X = nodes_[n.inputs[0]].value;
        const Tensor& W = nodes_[n.inputs[1]].value;
        const Tensor& g = n.grad;
        const int64_t stride = n.i0, pad = n.i1;
        const int64_t B = X.shape[0], C = X.shape[1], H = X.shape[2], Wd = X.shape[3];
        const int64_t O = W.shape[0], k = W.shape[2];
        const int64_t Ho = n.value.shape[2], Wo = n.value.shape[3];
        const bool wx = nodes_[n.inputs[0]].requires_grad;
        const bool ww = nodes_[n.inputs[1]].requires_grad;
        const bool wb = n.inputs.size() > 2 && nodes_[n.inputs[2]].requires_grad;
        Tensor* dx = nullptr;
        Tensor* dw = nullptr;
        Tensor* db = nullptr;
        if (wx) {
            ensure_grad(n.inputs[0]);
            dx = &nodes_[n.inputs[0]].grad;
        }
        if (ww) {
            ensure_grad(n.inputs[1]);
            dw = &nodes_[n.inputs[1]].grad;
        }
        if (wb) {
            ensure_grad(n.inputs[2]);
            db = &nodes_[n.inputs[2]].grad;
        }
        for (int64_t b = 0; b < B; ++b)
            for (int64_t o = 0; o < O; ++o)
                for (int64_t oy = 0; oy < Ho; ++oy)
                    for (int64_t ox = 0; ox < Wo; ++ox) {
                        const double gv = g.v[((b * O + o) * Ho + oy) * Wo + ox];
                        if (gv == 0.0) continue;
                        if (db) db->v[o] += gv;
                        for (int64_t c = 0; c < C; ++c)
                            for (int64_t ky = 0; ky < k; ++ky) {
                                const int64_t iy = oy * stride - pad + ky;
                                if (iy < 0 || iy >= H) continue;
                                for (int64_t kx = 0; kx < k; ++kx) {
                                    const int64_t ix = ox * stride - pad + kx;
                                    if (ix < 0 || ix >= Wd) continue;
                                    const size_t xi = ((b * C + c) * H + iy) * Wd + ix;
                                    const size_t wi = ((o * C + c) * k + ky) * k + kx;
                                    if (dx) dx->v[xi] += gv * W.v[wi];
                                    if (dw) dw->v[wi] += gv * X.v[xi];
                                }
                            }
                    }
    }
};

}  // namespace mproj::ad
