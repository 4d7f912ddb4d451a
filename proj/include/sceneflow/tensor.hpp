#pragma once

// Minimal reverse-mode autodiff on dense row-major tensors.
//
// Design: a Tape owns every intermediate value of one forward pass. Ops are
// free functions that push a result node plus a closure that scatters the
// output gradient back to the input nodes. backward() walks nodes in reverse
// creation order (creation order is topological by construction), summing
// gradient contributions from all consumers.
//
// The scalar type is a template parameter: float is the working precision,
// double exists for high-accuracy finite-difference checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "sceneflow/error.hpp"
#include "sceneflow/rng.hpp"

namespace sceneflow {

template <typename S>
struct TensorT {
    std::vector<int> shape;
    std::vector<S> data;
    bool requires_grad = false;

    TensorT() = default;
    TensorT(std::vector<int> shp, std::vector<S> d, bool rg = false)
        : shape(std::move(shp)), data(std::move(d)), requires_grad(rg) {
        if (numel_of(shape) != static_cast<int64_t>(data.size()))
            throw DimensionError("Tensor: shape/data length mismatch");
    }

    static int64_t numel_of(const std::vector<int>& shp) {
        int64_t n = 1;
        for (int d : shp) {
            if (d < 0) throw DimensionError("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    static TensorT zeros(std::vector<int> shp) {
        const int64_t n = numel_of(shp);
        return TensorT(std::move(shp), std::vector<S>(static_cast<size_t>(n), S(0)));
    }

    static TensorT full(std::vector<int> shp, S v) {
        const int64_t n = numel_of(shp);
        return TensorT(std::move(shp), std::vector<S>(static_cast<size_t>(n), v));
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    int dim(int i) const {
        if (i < 0 || i >= rank()) throw IndexError("Tensor::dim: axis out of range");
        return shape[static_cast<size_t>(i)];
    }

    // Product of all dimensions except the last; 1 for rank-0.
    int64_t rows() const {
        if (shape.empty()) return 1;
        int64_t r = 1;
        for (size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
        return r;
    }

    int last_dim() const { return shape.empty() ? 1 : shape.back(); }

    bool all_finite() const {
        for (S v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

using Tensor = TensorT<float>;

// Handle to a node on a tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

template <typename S>
class TapeT {
  public:
    struct Node {
        TensorT<S> value;
        std::vector<S> grad;  // allocated lazily during backward
        bool needs_grad = false;
        bool released = false;  // value storage dropped (inference only)
        bool is_leaf = false;   // leaves (params, inputs) are never released
        std::function<void(TapeT&, const Node&)> pull;  // gradient propagation
    };

    TapeT() = default;
    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    // When recording is off no backward closures are kept (inference mode).
    void set_recording(bool on) { recording_ = on; }
    bool recording() const { return recording_; }

    // Scan every op output for NaN/Inf. On by default; forward values are
    // required to stay finite, so a violation is an error, not a warning.
    void set_check_finite(bool on) { check_finite_ = on; }

    Var leaf(TensorT<S> t) {
        Var v = push(std::move(t), /*needs=*/false, nullptr);
        nodes_.back().is_leaf = true;
        return v;
    }

    Var leaf_param(TensorT<S> t) {
        t.requires_grad = true;
        Var v = push(std::move(t), /*needs=*/true, nullptr);
        nodes_.back().is_leaf = true;
        return v;
    }

    Var push(TensorT<S> v, bool needs, std::function<void(TapeT&, const Node&)> pull) {
        if (check_finite_ && !v.all_finite())
            throw NumericError("tape: non-finite value produced by a forward op");
        needs = needs || v.requires_grad;
        Node n;
        n.value = std::move(v);
        n.needs_grad = needs;
        if (recording_ && needs) n.pull = std::move(pull);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    const TensorT<S>& value(Var v) const {
        const Node& n = node(v);
        if (n.released) throw ContractError("tape: value was released after its last use");
        return n.value;
    }

    bool needs_grad(Var v) const { return node(v).needs_grad; }

    // Inference-time memory control: drop stored values of all nodes created
    // at or after `from`, except the listed outputs. No-op while recording
    // (backward needs the values). Callers mark composite-block boundaries
    // whose intermediates are never read again.
    void release_values(size_t from, std::initializer_list<Var> keep) {
        if (recording_) return;
        for (size_t id = from; id < nodes_.size(); ++id) {
            if (nodes_[id].is_leaf) continue;
            bool kept = false;
            for (Var k : keep)
                if (k.valid() && static_cast<size_t>(k.id) == id) kept = true;
            if (kept) continue;
            nodes_[id].value = TensorT<S>{};
            nodes_[id].released = true;
        }
    }

    // Valid after backward(); zeros when the node was not reached.
    const std::vector<S>& grad(Var v) {
        Node& n = mutable_node(v);
        if (n.grad.empty()) n.grad.assign(n.value.data.size(), S(0));
        return n.grad;
    }

    size_t size() const { return nodes_.size(); }

    // Accumulate the scalar loss gradient and run the reverse sweep.
    void backward(Var loss) {
        Node& ln = mutable_node(loss);
        if (ln.value.numel() != 1)
            throw ContractError("backward: loss must be a single scalar");
        if (!recording_)
            throw ContractError("backward: tape was not recording");
        for (Node& n : nodes_) n.grad.clear();
        ln.grad.assign(1, S(1));
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (!n.needs_grad || n.grad.empty() || !n.pull) continue;
            n.pull(*this, n);
        }
    }

    // Gradient buffer of an input node, allocated on first touch.
    std::vector<S>& grad_buf(Var v) {
        Node& n = mutable_node(v);
        if (n.grad.empty()) n.grad.assign(n.value.data.size(), S(0));
        return n.grad;
    }

  private:
    const Node& node(Var v) const {
        if (!v.valid() || v.id >= static_cast<int>(nodes_.size()))
            throw IndexError("tape: invalid node handle");
        return nodes_[static_cast<size_t>(v.id)];
    }
    Node& mutable_node(Var v) {
        return const_cast<Node&>(static_cast<const TapeT*>(this)->node(v));
    }

    std::vector<Node> nodes_;
    bool recording_ = true;
    bool check_finite_ = true;
};

using Tape = TapeT<float>;

namespace detail {

// c[M,N] += a[M,K] * b[K,N]
template <typename S>
void mm_acc_nn(const S* a, const S* b, S* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const S* arow = a + i * k;
        S* crow = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const S av = arow[p];
            const S* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[M,K] += a[M,N] * b[K,N]^T
template <typename S>
void mm_acc_nt(const S* a, const S* b, S* c, int64_t m, int64_t n, int64_t k) {
    for (int64_t i = 0; i < m; ++i) {
        const S* arow = a + i * n;
        S* crow = c + i * k;
        for (int64_t p = 0; p < k; ++p) {
            const S* brow = b + p * n;
            S acc = S(0);
            for (int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

// c[K,N] += a[M,K]^T * b[M,N]
template <typename S>
void mm_acc_tn(const S* a, const S* b, S* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const S* arow = a + i * k;
        const S* brow = b + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const S av = arow[p];
            S* crow = c + p * n;
            for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename S>
void require_rank3(const TensorT<S>& t, const char* op) {
    if (t.rank() != 3)
        throw DimensionError(std::string(op) + ": expected a [rows, neighbors, channels] tensor");
}

}  // namespace detail

// y[..., out] = x[..., in] * W[in, out] + b[out]
template <typename S>
Var linear(TapeT<S>& t, Var x, Var w, Var b) {
    const TensorT<S>& xv = t.value(x);
    const TensorT<S>& wv = t.value(w);
    const TensorT<S>& bv = t.value(b);
    if (wv.rank() != 2) throw DimensionError("linear: weight must be rank 2");
    const int in = wv.dim(0), out = wv.dim(1);
    if (xv.last_dim() != in) throw DimensionError("linear: input width does not match weight rows");
    if (bv.numel() != out) throw DimensionError("linear: bias length does not match weight cols");
    const int64_t rows = xv.rows();

    std::vector<int> oshape = xv.shape;
    if (oshape.empty()) throw DimensionError("linear: input must have at least rank 1");
    oshape.back() = out;
    TensorT<S> y = TensorT<S>::zeros(oshape);
    for (int64_t r = 0; r < rows; ++r)
        std::copy(bv.data.begin(), bv.data.end(), y.data.begin() + r * out);
    detail::mm_acc_nn(xv.data.data(), wv.data.data(), y.data.data(), rows, in, out);

    const bool needs = t.needs_grad(x) || t.needs_grad(w) || t.needs_grad(b);
    return t.push(std::move(y), needs, [x, w, b, rows, in, out](TapeT<S>& tp, const typename TapeT<S>::Node& n) {
        const S* gy = n.grad.data();
        if (tp.needs_grad(x)) {
            detail::mm_acc_nt(gy, tp.value(w).data.data(), tp.grad_buf(x).data(), rows, out, in);
        }
        if (tp.needs_grad(w)) {
            detail::mm_acc_tn(tp.value(x).data.data(), gy, tp.grad_buf(w).data(), rows, in, out);
        }
        if (tp.needs_grad(b)) {
            S* gb = tp.grad_buf(b).data();
            for (int64_t r = 0; r < rows; ++r)
                for (int j = 0; j < out; ++j) gb[j] += gy[r * out + j];
        }
    });
}

template <typename S>
Var leaky_relu(TapeT<S>& t, Var x, S slope = S(0.2)) {
    if (!(slope >= S(0) && slope < S(1)))
        throw ContractError("leaky_relu: slope must lie in [0, 1)");
    const TensorT<S>& xv = t.value(x);
    TensorT<S> y = xv;
    y.requires_grad = false;
    for (S& v : y.data)
        if (v < S(0)) v *= slope;
    return t.push(std::move(y), t.needs_grad(x), [x, slope](TapeT<S>& tp, const typename TapeT<S>::Node& n) {
        if (!tp.needs_grad(x)) return;
        const std::vector<S>& xd = tp.value(x).data;
        std::vector<S>& gx = tp.grad_buf(x);
        for (size_t i = 0; i < xd.size(); ++i)
            gx[i] += xd[i] > S(0) ? n.grad[i] : slope * n.grad[i];
    });
}

namespace detail {
// Softmax over contiguous-with-stride slices: for each of `groups` slices of
// `len` entries spaced `stride` apart starting at base offsets.
template <typename S>
void softmax_slice(const S* x, S* y, int64_t len, int64_t stride) {
    S mx = x[0];
    for (int64_t i = 1; i < len; ++i) mx = std::max(mx, x[i * stride]);
    S sum = S(0);
    for (int64_t i = 0; i < len; ++i) {
        const S e = std::exp(x[i * stride] - mx);
        y[i * stride] = e;
        sum += e;
    }
    const S inv = S(1) / sum;
    for (int64_t i = 0; i < len; ++i) y[i * stride] *= inv;
}

template <typename S>
void softmax_slice_backward(const S* y, const S* gy, S* gx, int64_t len, int64_t stride) {
    S dot = S(0);
    for (int64_t i = 0; i < len; ++i) dot += y[i * stride] * gy[i * stride];
    for (int64_t i = 0; i < len; ++i)
        gx[i * stride] += y[i * stride] * (gy[i * stride] - dot);
}
}  // namespace detail

// Softmax along the last axis; numerically stable under large magnitudes.
template <typename S>
Var softmax_lastdim(TapeT<S>& t, Var x) {
    const TensorT<S>& xv = t.value(x);
    const int c = xv.last_dim();
    if (c == 0) throw DimensionError("softmax_lastdim: empty last axis");
    const int64_t rows = xv.rows();
    TensorT<S> y = TensorT<S>::zeros(xv.shape);
    for (int64_t r = 0; r < rows; ++r)
        detail::softmax_slice(xv.data.data() + r * c, y.data.data() + r * c, c, 1);
    return t.push(std::move(y), t.needs_grad(x), [x, rows, c](TapeT<S>& tp, const typename TapeT<S>::Node& n) {
        if (!tp.needs_grad(x)) return;
        S* gx = tp.grad_buf(x).data();
        for (int64_t r = 0; r < rows; ++r)
            detail::softmax_slice_backward(n.value.data.data() + r * c, n.grad.data() + r * c,
                                           gx + r * c, c, 1);
    });
}

// Softmax along the neighbor axis of a [n, k, c] tensor, independently per
// (row, channel) pair. Used to normalize attention scores over a group.
template <typename S>
Var softmax_over_neighbors(TapeT<S>& t, Var x) {
    const TensorT<S>& xv = t.value(x);
    detail::require_rank3(xv, "softmax_over_neighbors");
    const int64_t n = xv.dim(0), k = xv.dim(1), c = xv.dim(2);
    if (k == 0) throw ContractError("softmax_over_neighbors: empty neighborhood");
    TensorT<S> y = TensorT<S>::zeros(xv.shape);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch)
            detail::softmax_slice(xv.data.data() + i * k * c + ch, y.data.data() + i * k * c + ch, k, c);
    return t.push(std::move(y), t.needs_grad(x), [x, n, k, c](TapeT<S>& tp, const typename TapeT<S>::Node& nd) {
        if (!tp.needs_grad(x)) return;
        S* gx = tp.grad_buf(x).data();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ch = 0; ch < c; ++ch)
                detail::softmax_slice_backward(nd.value.data.data() + i * k * c + ch,
                                               nd.grad.data() + i * k * c + ch, gx + i * k * c + ch, k, c);
    });
}

// Per-channel max over the neighbor axis: [n, k, c] -> [n, c]. The gradient
// flows to the first maximal neighbor (scan order = ascending neighbor slot).
template <typename S>
Var max_over_neighbors(TapeT<S>& t, Var x) {
    const TensorT<S>& xv = t.value(x);
    detail::require_rank3(xv, "max_over_neighbors");
    const int64_t n = xv.dim(0), k = xv.dim(1), c = xv.dim(2);
    if (k == 0) throw ContractError("max_over_neighbors: empty neighborhood");
    TensorT<S> y = TensorT<S>::zeros({static_cast<int>(n), static_cast<int>(c)});
    std::vector<int32_t> arg(static_cast<size_t>(n * c), 0);
    for (int64_t i = 0; i < n; ++i) {
        const S* base = xv.data.data() + i * k * c;
        for (int64_t ch = 0; ch < c; ++ch) {
            S best = base[ch];
            int32_t bj = 0;
            for (int64_t j = 1; j < k; ++j) {
                const S v = base[j * c + ch];
                if (v > best) {
                    best = v;
                    bj = static_cast<int32_t>(j);
                }
            }
            y.data[static_cast<size_t>(i * c + ch)] = best;
            arg[static_cast<size_t>(i * c + ch)] = bj;
        }
    }
    return t.push(std::move(y), t.needs_grad(x),
                  [x, arg = std::move(arg), n, k, c](TapeT<S>& tp, const typename TapeT<S>::Node& nd) {
                      if (!tp.needs_grad(x)) return;
                      S* gx = tp.grad_buf(x).data();
                      for (int64_t i = 0; i < n; ++i)
                          for (int64_t ch = 0; ch < c; ++ch) {
                              const int64_t j = arg[static_cast<size_t>(i * c + ch)];
                              gx[i * k * c + j * c + ch] += nd.grad[static_cast<size_t>(i * c + ch)];
                          }
                  });
}

// Sum over the neighbor axis: [n, k, c] -> [n, c].
template <typename S>
Var sum_over_neighbors(TapeT<S>& t, Var x) {
    const TensorT<S>& xv = t.value(x);
    detail::require_rank3(xv, "sum_over_neighbors");
    const int64_t n = xv.dim(0), k = xv.dim(1), c = xv.dim(2);
    if (k == 0) throw ContractError("sum_over_neighbors: empty neighborhood");
    TensorT<S> y = TensorT<S>::zeros({static_cast<int>(n), static_cast<int>(c)});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < k; ++j)
            for (int64_t ch = 0; ch < c; ++ch)
                y.data[static_cast<size_t>(i * c + ch)] += xv.data[static_cast<size_t>(i * k * c + j * c + ch)];
    return t.push(std::move(y), t.needs_grad(x), [x, n, k, c](TapeT<S>& tp, const typename TapeT<S>::Node& nd) {
        if (!tp.needs_grad(x)) return;
        S* gx = tp.grad_buf(x).data();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < k; ++j)
                for (int64_t ch = 0; ch < c; ++ch)
                    gx[i * k * c + j * c + ch] += nd.grad[static_cast<size_t>(i * c + ch)];
    });
}

// Repeat each row k times along a new middle axis: [n, c] -> [n, k, c].
template <typename S>
Var tile_over_neighbors(TapeT<S>& t, Var x, int k) {
    const TensorT<S>& xv = t.value(x);
    if (xv.rank() != 2) throw DimensionError("tile_over_neighbors: expected a [rows, channels] tensor");
    if (k <= 0) throw ContractError("tile_over_neighbors: neighbor count must be positive");
    const int64_t n = xv.dim(0), c = xv.dim(1);
    TensorT<S> y = TensorT<S>::zeros({static_cast<int>(n), k, static_cast<int>(c)});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < k; ++j)
            std::copy(xv.data.begin() + i * c, xv.data.begin() + (i + 1) * c,
                      y.data.begin() + (i * k + j) * c);
    return t.push(std::move(y), t.needs_grad(x), [x, n, k, c](TapeT<S>& tp, const typename TapeT<S>::Node& nd) {
        if (!tp.needs_grad(x)) return;
        S* gx = tp.grad_buf(x).data();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < k; ++j)
                for (int64_t ch = 0; ch < c; ++ch)
                    gx[i * c + ch] += nd.grad[static_cast<size_t>((i * static_cast<int64_t>(k) + j) * c + ch)];
    });
}

// Gather rows of x[m, c] into [n, k, c]; duplicate indices accumulate their
// gradients additively on the way back.
template <typename S>
Var gather_rows(TapeT<S>& t, Var x, const std::vector<uint32_t>& idx, int n, int k) {
    const TensorT<S>& xv = t.value(x);
    if (xv.rank() != 2) throw DimensionError("gather_rows: expected a [rows, channels] tensor");
    if (n < 0 || k <= 0 || static_cast<size_t>(n) * static_cast<size_t>(k) != idx.size())
        throw DimensionError("gather_rows: index table does not match n*k");
    const int64_t m = xv.dim(0), c = xv.dim(1);
    for (uint32_t id : idx)
        if (id >= static_cast<uint32_t>(m)) throw IndexError("gather_rows: row index out of range");
    TensorT<S> y = TensorT<S>::zeros({n, k, static_cast<int>(c)});
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy(xv.data.begin() + static_cast<int64_t>(idx[r]) * c,
                  xv.data.begin() + (static_cast<int64_t>(idx[r]) + 1) * c,
                  y.data.begin() + static_cast<int64_t>(r) * c);
    return t.push(std::move(y), t.needs_grad(x), [x, idx, c](TapeT<S>& tp, const typename TapeT<S>::Node& nd) {
        if (!tp.needs_grad(x)) return;
        S* gx = tp.grad_buf(x).data();
        for (size_t r = 0; r < idx.size(); ++r) {
            const S* g = nd.grad.data() + static_cast<int64_t>(r) * c;
            S* dst = gx + static_cast<int64_t>(idx[r]) * c;
            for (int64_t ch = 0; ch < c; ++ch) dst[ch] += g[ch];
        }
    });
}

// Concatenate along the last axis; all leading axes must agree.
template <typename S>
Var concat_lastdim(TapeT<S>& t, const std::vector<Var>& xs) {
    if (xs.empty()) throw ContractError("concat_lastdim: nothing to concatenate");
    const TensorT<S>& first = t.value(xs[0]);
    std::vector<int> lead(first.shape.begin(), first.shape.end() - (first.shape.empty() ? 0 : 1));
    int total = 0;
    bool needs = false;
    std::vector<int> widths;
    for (Var x : xs) {
        const TensorT<S>& v = t.value(x);
        if (v.rank() != first.rank()) throw DimensionError("concat_lastdim: rank mismatch");
        for (int i = 0; i + 1 < v.rank(); ++i)
            if (v.shape[static_cast<size_t>(i)] != first.shape[static_cast<size_t>(i)])
                throw DimensionError("concat_lastdim: leading dimension mismatch");
        widths.push_back(v.last_dim());
        total += v.last_dim();
        needs = needs || t.needs_grad(x);
    }
    std::vector<int> oshape = first.shape;
    oshape.back() = total;
    TensorT<S> y = TensorT<S>::zeros(oshape);
    const int64_t rows = first.rows();
    int off = 0;
    for (size_t s = 0; s < xs.size(); ++s) {
        const TensorT<S>& v = t.value(xs[s]);
        const int w = widths[s];
        for (int64_t r = 0; r < rows; ++r)
            std::copy(v.data.begin() + r * w, v.data.begin() + (r + 1) * w,
                      y.data.begin() + r * total + off);
        off += w;
    }
    return t.push(std::move(y), needs,
                  [xs, widths, rows, total](TapeT<S>& tp, const typename TapeT<S>::Node& nd) {
                      int off2 = 0;
                      for (size_t s = 0; s < xs.size(); ++s) {
                          const int w = widths[s];
                          if (tp.needs_grad(xs[s])) {
                              S* gx = tp.grad_buf(xs[s]).data();
                              for (int64_t r = 0; r < rows; ++r)
                                  for (int j = 0; j < w; ++j)
                                      gx[r * w + j] += nd.grad[static_cast<size_t>(r * total + off2 + j)];
                          }
                          off2 += w;
                      }
                  });
}

namespace detail {
template <typename S>
void require_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
    if (a.shape != b.shape) throw DimensionError(std::string(op) + ": shape mismatch");
}
}  // namespace detail

template <typename S>
Var add(TapeT<S>& t, Var a, Var b) {
    const TensorT<S>&av = t.value(a);
    const TensorT<S>& bv = t.value(b);
    detail::require_same_shape(av, bv, "add");
    TensorT<S> y = TensorT<S>::zeros(av.shape);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = av.data[i] + bv.data[i];
    return t.push(std::move(y), t.needs_grad(a) || t.needs_grad(b),
                  [a, b](TapeT<S>& tp, const typename TapeT<S>::Node& nd) {
                      if (tp.needs_grad(a)) {
                          S* g = tp.grad_buf(a).data();
                          for (size_t i = 0; i < nd.grad.size(); ++i) g[i] += nd.grad[i];
                      }
                      if (tp.needs_grad(b)) {
                          S* g = tp.grad_buf(b).data();
                          for (size_t i = 0; i < nd.grad.size(); ++i) g[i] += nd.grad[i];
                      }
                  });
}

template <typename S>
Var sub(TapeT<S>& t, Var a, Var b) {
    const TensorT<S>& av = t.value(a);
    const TensorT<S>& bv = t.value(b);
    detail::require_same_shape(av, bv, "sub");
    TensorT<S> y = TensorT<S>::zeros(av.shape);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = av.data[i] - bv.data[i];
    return t.push(std::move(y), t.needs_grad(a) || t.needs_grad(b),
                  [a, b](TapeT<S>& tp, const typename TapeT<S>::Node& nd) {
                      if (tp.needs_grad(a)) {
                          S* g = tp.grad_buf(a).data();
                          for (size_t i = 0; i < nd.grad.size(); ++i) g[i] += nd.grad[i];
                      }
                      if (tp.needs_grad(b)) {
                          S* g = tp.grad_buf(b).data();
                          for (size_t i = 0; i < nd.grad.size(); ++i) g[i] -= nd.grad[i];
                      }
                  });
}

template <typename S>
Var mul(TapeT<S>& t, Var a, Var b) {
    const TensorT<S>& av = t.value(a);
    const TensorT<S>& bv = t.value(b);
    detail::require_same_shape(av, bv, "mul");
    TensorT<S> y = TensorT<S>::zeros(av.shape);
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] = av.data[i] * bv.data[i];
    return t.push(std::move(y), t.needs_grad(a) || t.needs_grad(b),
                  [a, b](TapeT<S>& tp, const typename TapeT<S>::Node& nd) {
                      if (tp.needs_grad(a)) {
                          S* g = tp.grad_buf(a).data();
                          const std::vector<S>& other = tp.value(b).data;
                          for (size_t i = 0; i < nd.grad.size(); ++i) g[i] += nd.grad[i] * other[i];
                      }
                      if (tp.needs_grad(b)) {
                          S* g = tp.grad_buf(b).data();
                          const std::vector<S>& other = tp.value(a).data;
                          for (size_t i = 0; i < nd.grad.size(); ++i) g[i] += nd.grad[i] * other[i];
                      }
                  });
}

template <typename S>
Var scale(TapeT<S>& t, Var x, S s) {
    const TensorT<S>& xv = t.value(x);
    TensorT<S> y = xv;
    y.requires_grad = false;
    for (S& v : y.data) v *= s;
    return t.push(std::move(y), t.needs_grad(x), [x, s](TapeT<S>& tp, const typename TapeT<S>::Node& nd) {
        if (!tp.needs_grad(x)) return;
        S* g = tp.grad_buf(x).data();
        for (size_t i = 0; i < nd.grad.size(); ++i) g[i] += s * nd.grad[i];
    });
}

// Shape change without data change.
template <typename S>
Var reshape(TapeT<S>& t, Var x, std::vector<int> shape) {
    const TensorT<S>& xv = t.value(x);
    if (TensorT<S>::numel_of(shape) != xv.numel())
        throw DimensionError("reshape: element count mismatch");
    TensorT<S> y(std::move(shape), xv.data);
    return t.push(std::move(y), t.needs_grad(x), [x](TapeT<S>& tp, const typename TapeT<S>::Node& nd) {
        if (!tp.needs_grad(x)) return;
        S* g = tp.grad_buf(x).data();
        for (size_t i = 0; i < nd.grad.size(); ++i) g[i] += nd.grad[i];
    });
}

// Euclidean norm of every row: [n, c] -> [n]. d||x||/dx = x/||x||; rows with
// exactly zero norm get zero gradient (the value itself stays exact).
template <typename S>
Var l2norm_rows(TapeT<S>& t, Var x) {
    const TensorT<S>& xv = t.value(x);
    if (xv.rank() != 2) throw DimensionError("l2norm_rows: expected a [rows, channels] tensor");
    const int64_t n = xv.dim(0), c = xv.dim(1);
    TensorT<S> y = TensorT<S>::zeros({static_cast<int>(n)});
    for (int64_t i = 0; i < n; ++i) {
        S acc = S(0);
        for (int64_t ch = 0; ch < c; ++ch) {
            const S v = xv.data[static_cast<size_t>(i * c + ch)];
            acc += v * v;
        }
        y.data[static_cast<size_t>(i)] = std::sqrt(acc);
    }
    return t.push(std::move(y), t.needs_grad(x), [x, n, c](TapeT<S>& tp, const typename TapeT<S>::Node& nd) {
        if (!tp.needs_grad(x)) return;
        const std::vector<S>& xd = tp.value(x).data;
        S* gx = tp.grad_buf(x).data();
        for (int64_t i = 0; i < n; ++i) {
            const S norm = nd.value.data[static_cast<size_t>(i)];
            if (norm <= S(0)) continue;
            const S g = nd.grad[static_cast<size_t>(i)] / norm;
            for (int64_t ch = 0; ch < c; ++ch) gx[i * c + ch] += g * xd[static_cast<size_t>(i * c + ch)];
        }
    });
}

template <typename S>
Var reduce_sum(TapeT<S>& t, Var x) {
    const TensorT<S>& xv = t.value(x);
    S acc = S(0);
    for (S v : xv.data) acc += v;
    TensorT<S> y({1}, {acc});
    return t.push(std::move(y), t.needs_grad(x), [x](TapeT<S>& tp, const typename TapeT<S>::Node& nd) {
        if (!tp.needs_grad(x)) return;
        S* g = tp.grad_buf(x).data();
        const S gv = nd.grad[0];
        for (size_t i = 0; i < tp.value(x).data.size(); ++i) g[i] += gv;
    });
}

}  // namespace sceneflow
