#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "film/kernels.hpp"
#include "film/tensor.hpp"

namespace film {

namespace k = kernels::parallel;

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {

[[noreturn]] void mismatch(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

std::size_t last_dim(const Shape& s) { return s.empty() ? 1 : s.back(); }

}  // namespace

template <typename T>
Var Graph<T>::push(Tensor<T> value, std::vector<std::uint32_t> inputs,
                   std::function<void(Graph&, std::uint32_t)> rule) {
    Node n;
    n.value = std::move(value);
    if (record_) {
        n.inputs = std::move(inputs);
        n.backward = std::move(rule);
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
const typename Graph<T>::Node& Graph<T>::node(Var v) const {
    if (v.id >= nodes_.size()) throw std::out_of_range("graph: unknown variable");
    return nodes_[v.id];
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
    node(v);
    return val(v.id);
}

template <typename T>
std::span<const T> Graph<T>::grad(Var v) const {
    const Node& n = node(v);
    if (n.param) return n.param->grad;
    return n.grad;
}

template <typename T>
std::span<T> Graph<T>::grad_buffer(std::uint32_t id) {
    Node& n = nodes_[id];
    if (n.param) {
        if (!n.param->has_grad()) n.param->zero_grad();
        return n.param->grad;
    }
    const std::size_t size = val(id).size();
    if (n.grad.size() != size) n.grad.assign(size, T(0));
    return n.grad;
}

template <typename T>
Var Graph<T>::parameter(Tensor<T>& p) {
    Node n;
    n.ref = &p;
    n.param = &p;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::reference(const Tensor<T>& t) {
    Node n;
    n.ref = &t;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Graph<T>::constant(Tensor<T> t) {
    return push(std::move(t), {}, nullptr);
}

template <typename T>
Var Graph<T>::matmul(Var av, Var bv, bool trans_b) {
    const Tensor<T>& a = value(av);
    const Tensor<T>& b = value(bv);
    if (a.rank() < 2 || b.rank() < 2) mismatch("matmul", a.shape, b.shape);

    std::size_t groups = 1, m = 0, kk = 0, n = 0;
    bool batched = false;
    Shape out_shape;
    if (a.rank() == 3 && b.rank() == 3) {
        batched = true;
        groups = a.dim(0);
        m = a.dim(1);
        kk = a.dim(2);
        const std::size_t bk = trans_b ? b.dim(2) : b.dim(1);
        n = trans_b ? b.dim(1) : b.dim(2);
        if (b.dim(0) != groups || bk != kk) mismatch("matmul", a.shape, b.shape);
        out_shape = {groups, m, n};
    } else if (b.rank() == 2) {
        kk = a.shape.back();
        m = a.size() / kk;
        const std::size_t bk = trans_b ? b.dim(1) : b.dim(0);
        n = trans_b ? b.dim(0) : b.dim(1);
        if (bk != kk) mismatch("matmul", a.shape, b.shape);
        out_shape = a.shape;
        out_shape.back() = n;
    } else {
        mismatch("matmul", a.shape, b.shape);
    }

    Tensor<T> out(out_shape);
    const std::size_t a_stride = batched ? m * kk : 0;
    const std::size_t b_stride = batched ? kk * n : 0;
    const std::size_t c_stride = m * n;
    for (std::size_t g = 0; g < groups; ++g) {
        k::gemm<T>({m, n, kk, false, trans_b}, a.data.data() + g * a_stride,
                   b.data.data() + g * b_stride, out.data.data() + g * c_stride, false);
    }

    return push(std::move(out), {av.id, bv.id},
                [=](Graph& gr, std::uint32_t self) {
                    const std::uint32_t ia = gr.nodes_[self].inputs[0];
                    const std::uint32_t ib = gr.nodes_[self].inputs[1];
                    std::span<const T> dc = gr.out_grad(self);
                    std::span<T> da = gr.grad_buffer(ia);
                    std::span<T> db = gr.grad_buffer(ib);
                    const T* A = gr.val(ia).data.data();
                    const T* B = gr.val(ib).data.data();
                    for (std::size_t g = 0; g < groups; ++g) {
                        const T* dcg = dc.data() + g * c_stride;
                        const T* ag = A + g * a_stride;
                        const T* bg = B + g * b_stride;
                        if (!trans_b) {
                            k::gemm<T>({m, kk, n, false, true}, dcg, bg, da.data() + g * a_stride, true);
                            k::gemm<T>({kk, n, m, true, false}, ag, dcg, db.data() + g * b_stride, true);
                        } else {
                            k::gemm<T>({m, kk, n, false, false}, dcg, bg, da.data() + g * a_stride, true);
                            k::gemm<T>({n, kk, m, true, false}, dcg, ag, db.data() + g * b_stride, true);
                        }
                    }
                });
}

template <typename T>
Var Graph<T>::add(Var av, Var bv) {
    const Tensor<T>& a = value(av);
    const Tensor<T>& b = value(bv);
    Tensor<T> out(a.shape);
    if (a.shape == b.shape) {
        for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
        return push(std::move(out), {av.id, bv.id}, [](Graph& gr, std::uint32_t self) {
            std::span<const T> dy = gr.out_grad(self);
            for (std::uint32_t in : gr.nodes_[self].inputs) {
                std::span<T> d = gr.grad_buffer(in);
                for (std::size_t i = 0; i < dy.size(); ++i) d[i] += dy[i];
            }
        });
    }
    const std::size_t cols = last_dim(a.shape);
    if (b.rank() != 1 || b.size() != cols) mismatch("add", a.shape, b.shape);
    const std::size_t rows = a.size() / cols;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < cols; ++j) out.data[r * cols + j] = a.data[r * cols + j] + b.data[j];
    }
    return push(std::move(out), {av.id, bv.id}, [rows, cols](Graph& gr, std::uint32_t self) {
        std::span<const T> dy = gr.out_grad(self);
        std::span<T> da = gr.grad_buffer(gr.nodes_[self].inputs[0]);
        std::span<T> db = gr.grad_buffer(gr.nodes_[self].inputs[1]);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < cols; ++j) {
                da[r * cols + j] += dy[r * cols + j];
                db[j] += dy[r * cols + j];
            }
        }
    });
}

template <typename T>
Var Graph<T>::sub(Var av, Var bv) {
    const Tensor<T>& a = value(av);
    const Tensor<T>& b = value(bv);
    if (a.shape != b.shape) mismatch("sub", a.shape, b.shape);
    Tensor<T> out(a.shape);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] - b.data[i];
    return push(std::move(out), {av.id, bv.id}, [](Graph& gr, std::uint32_t self) {
        std::span<const T> dy = gr.out_grad(self);
        std::span<T> da = gr.grad_buffer(gr.nodes_[self].inputs[0]);
        std::span<T> db = gr.grad_buffer(gr.nodes_[self].inputs[1]);
        for (std::size_t i = 0; i < dy.size(); ++i) {
            da[i] += dy[i];
            db[i] -= dy[i];
        }
    });
}

template <typename T>
Var Graph<T>::mul(Var av, Var bv) {
    const Tensor<T>& a = value(av);
    const Tensor<T>& b = value(bv);
    if (a.shape != b.shape) mismatch("mul", a.shape, b.shape);
    Tensor<T> out(a.shape);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
    return push(std::move(out), {av.id, bv.id}, [](Graph& gr, std::uint32_t self) {
        const std::uint32_t ia = gr.nodes_[self].inputs[0];
        const std::uint32_t ib = gr.nodes_[self].inputs[1];
        std::span<const T> dy = gr.out_grad(self);
        std::span<T> da = gr.grad_buffer(ia);
        std::span<T> db = gr.grad_buffer(ib);
        const auto& A = gr.val(ia).data;
        const auto& B = gr.val(ib).data;
        for (std::size_t i = 0; i < dy.size(); ++i) {
            da[i] += dy[i] * B[i];
            db[i] += dy[i] * A[i];
        }
    });
}

template <typename T>
Var Graph<T>::scale(Var av, T factor) {
    const Tensor<T>& a = value(av);
    Tensor<T> out(a.shape);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * factor;
    return push(std::move(out), {av.id}, [factor](Graph& gr, std::uint32_t self) {
        std::span<const T> dy = gr.out_grad(self);
        std::span<T> da = gr.grad_buffer(gr.nodes_[self].inputs[0]);
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * factor;
    });
}

template <typename T>
Var Graph<T>::sum(Var av) {
    const Tensor<T>& a = value(av);
    T total = 0;
    for (T v : a.data) total += v;
    return push(Tensor<T>({1}, std::vector<T>{total}), {av.id}, [](Graph& gr, std::uint32_t self) {
        const T dy = gr.out_grad(self)[0];
        std::span<T> da = gr.grad_buffer(gr.nodes_[self].inputs[0]);
        for (T& d : da) d += dy;
    });
}

template <typename T>
Var Graph<T>::softmax(Var av, T temperature) {
    if (!(temperature > T(0))) throw std::invalid_argument("softmax: temperature must be positive");
    const Tensor<T>& a = value(av);
    const std::size_t cols = last_dim(a.shape);
    const std::size_t rows = a.size() / cols;
    Tensor<T> out(a.shape);
    const T inv_t = T(1) / temperature;
    k::softmax_rows<T>(a.data.data(), out.data.data(), rows, cols, inv_t);
    return push(std::move(out), {av.id}, [rows, cols, inv_t](Graph& gr, std::uint32_t self) {
        std::span<const T> dy = gr.out_grad(self);
        const auto& y = gr.nodes_[self].value.data;
        std::span<T> dx = gr.grad_buffer(gr.nodes_[self].inputs[0]);
        for (std::size_t r = 0; r < rows; ++r) {
            const std::size_t o = r * cols;
            T dot = 0;
            for (std::size_t j = 0; j < cols; ++j) dot += dy[o + j] * y[o + j];
            for (std::size_t j = 0; j < cols; ++j) dx[o + j] += (dy[o + j] - dot) * y[o + j] * inv_t;
        }
    });
}

template <typename T>
Var Graph<T>::layer_norm(Var xv, Var gv, Var bv, T eps) {
    const Tensor<T>& x = value(xv);
    const Tensor<T>& g = value(gv);
    const Tensor<T>& b = value(bv);
    const std::size_t cols = last_dim(x.shape);
    if (g.rank() != 1 || g.size() != cols) mismatch("layer_norm gain", x.shape, g.shape);
    if (b.rank() != 1 || b.size() != cols) mismatch("layer_norm bias", x.shape, b.shape);
    const std::size_t rows = x.size() / cols;
    Tensor<T> out(x.shape);
    std::vector<T> mean(rows), rstd(rows);
    k::layer_norm_rows<T>(x.data.data(), g.data.data(), b.data.data(), out.data.data(), mean.data(),
                          rstd.data(), rows, cols, eps);
    return push(std::move(out), {xv.id, gv.id, bv.id},
                [rows, cols, mean = std::move(mean), rstd = std::move(rstd)](Graph& gr, std::uint32_t self) {
                    const auto& in = gr.nodes_[self].inputs;
                    std::span<const T> dy = gr.out_grad(self);
                    const auto& X = gr.val(in[0]).data;
                    const auto& G = gr.val(in[1]).data;
                    std::span<T> dx = gr.grad_buffer(in[0]);
                    std::span<T> dg = gr.grad_buffer(in[1]);
                    std::span<T> db = gr.grad_buffer(in[2]);
                    const T inv_n = T(1) / static_cast<T>(cols);
                    for (std::size_t r = 0; r < rows; ++r) {
                        const std::size_t o = r * cols;
                        T mean_dxhat = 0, mean_dxhat_xhat = 0;
                        for (std::size_t j = 0; j < cols; ++j) {
                            const T xhat = (X[o + j] - mean[r]) * rstd[r];
                            const T dxhat = dy[o + j] * G[j];
                            dg[j] += dy[o + j] * xhat;
                            db[j] += dy[o + j];
                            mean_dxhat += dxhat;
                            mean_dxhat_xhat += dxhat * xhat;
                        }
                        mean_dxhat *= inv_n;
                        mean_dxhat_xhat *= inv_n;
                        for (std::size_t j = 0; j < cols; ++j) {
                            const T xhat = (X[o + j] - mean[r]) * rstd[r];
                            const T dxhat = dy[o + j] * G[j];
                            dx[o + j] += rstd[r] * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                        }
                    }
                });
}

template <typename T>
Var Graph<T>::gelu(Var av) {
    const Tensor<T>& a = value(av);
    Tensor<T> out(a.shape);
    k::gelu<T>(a.data.data(), out.data.data(), a.size());
    return push(std::move(out), {av.id}, [](Graph& gr, std::uint32_t self) {
        const std::uint32_t ia = gr.nodes_[self].inputs[0];
        std::span<const T> dy = gr.out_grad(self);
        const auto& X = gr.val(ia).data;
        std::span<T> dx = gr.grad_buffer(ia);
        const T c = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
        for (std::size_t i = 0; i < dy.size(); ++i) {
            const T x = X[i];
            const T t = std::tanh(c * (x + T(0.044715) * x * x * x));
            const T dinner = c * (T(1) + T(3 * 0.044715) * x * x);
            dx[i] += dy[i] * (T(0.5) * (T(1) + t) + T(0.5) * x * (T(1) - t * t) * dinner);
        }
    });
}

template <typename T>
Var Graph<T>::embedding(Var tv, std::span<const TokenId> ids) {
    const Tensor<T>& table = value(tv);
    if (table.rank() != 2) throw ShapeError("embedding: table must be rank 2, got " + to_string(table.shape));
    const std::size_t vocab = table.dim(0), d = table.dim(1);
    Tensor<T> out({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
            throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                                    std::to_string(vocab) + " rows");
        }
        std::copy_n(table.data.begin() + static_cast<std::ptrdiff_t>(ids[i] * d), d,
                    out.data.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    std::vector<TokenId> rows(ids.begin(), ids.end());
    return push(std::move(out), {tv.id}, [d, rows = std::move(rows)](Graph& gr, std::uint32_t self) {
        std::span<const T> dy = gr.out_grad(self);
        std::span<T> dt = gr.grad_buffer(gr.nodes_[self].inputs[0]);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const std::size_t o = static_cast<std::size_t>(rows[i]) * d;
            for (std::size_t j = 0; j < d; ++j) dt[o + j] += dy[i * d + j];
        }
    });
}

template <typename T>
Var Graph<T>::reshape(Var av, Shape shape) {
    const Tensor<T>& a = value(av);
    if (numel(shape) != a.size()) mismatch("reshape", a.shape, shape);
    Tensor<T> out(std::move(shape), a.data);
    return push(std::move(out), {av.id}, [](Graph& gr, std::uint32_t self) {
        std::span<const T> dy = gr.out_grad(self);
        std::span<T> da = gr.grad_buffer(gr.nodes_[self].inputs[0]);
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    });
}

template <typename T>
Var Graph<T>::transpose(Var av) {
    const Tensor<T>& a = value(av);
    if (a.rank() < 2) throw ShapeError("transpose: need rank >= 2, got " + to_string(a.shape));
    const std::size_t r = a.dim(a.rank() - 2), c = a.dim(a.rank() - 1);
    const std::size_t batches = a.size() / (r * c);
    Shape s = a.shape;
    std::swap(s[s.size() - 2], s[s.size() - 1]);
    Tensor<T> out(s);
    for (std::size_t g = 0; g < batches; ++g) {
        const std::size_t o = g * r * c;
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out.data[o + j * r + i] = a.data[o + i * c + j];
    }
    return push(std::move(out), {av.id}, [batches, r, c](Graph& gr, std::uint32_t self) {
        std::span<const T> dy = gr.out_grad(self);
        std::span<T> da = gr.grad_buffer(gr.nodes_[self].inputs[0]);
        for (std::size_t g = 0; g < batches; ++g) {
            const std::size_t o = g * r * c;
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) da[o + i * c + j] += dy[o + j * r + i];
        }
    });
}

template <typename T>
Var Graph<T>::transpose12(Var av) {
    const Tensor<T>& a = value(av);
    if (a.rank() != 4) throw ShapeError("transpose12: need rank 4, got " + to_string(a.shape));
    const std::size_t d0 = a.dim(0), d1 = a.dim(1), d2 = a.dim(2), d3 = a.dim(3);
    Tensor<T> out({d0, d2, d1, d3});
    auto src = [=](std::size_t i, std::size_t j, std::size_t l) { return ((i * d1 + j) * d2 + l) * d3; };
    auto dst = [=](std::size_t i, std::size_t j, std::size_t l) { return ((i * d2 + l) * d1 + j) * d3; };
    for (std::size_t i = 0; i < d0; ++i)
        for (std::size_t j = 0; j < d1; ++j)
            for (std::size_t l = 0; l < d2; ++l)
                std::copy_n(a.data.begin() + static_cast<std::ptrdiff_t>(src(i, j, l)), d3,
                            out.data.begin() + static_cast<std::ptrdiff_t>(dst(i, j, l)));
    return push(std::move(out), {av.id}, [=](Graph& gr, std::uint32_t self) {
        std::span<const T> dy = gr.out_grad(self);
        std::span<T> da = gr.grad_buffer(gr.nodes_[self].inputs[0]);
        for (std::size_t i = 0; i < d0; ++i)
            for (std::size_t j = 0; j < d1; ++j)
                for (std::size_t l = 0; l < d2; ++l)
                    for (std::size_t m = 0; m < d3; ++m) da[src(i, j, l) + m] += dy[dst(i, j, l) + m];
    });
}

template <typename T>
Var Graph<T>::causal_mask(Var av) {
    const Tensor<T>& a = value(av);
    if (a.rank() < 2 || a.dim(a.rank() - 1) != a.dim(a.rank() - 2)) {
        throw ShapeError("causal_mask: need square trailing axes, got " + to_string(a.shape));
    }
    const std::size_t n = a.shape.back();
    const std::size_t batches = a.size() / (n * n);
    Tensor<T> out(a.shape, a.data);
    for (std::size_t g = 0; g < batches; ++g)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) out.data[(g * n + i) * n + j] = -std::numeric_limits<T>::infinity();
    return push(std::move(out), {av.id}, [batches, n](Graph& gr, std::uint32_t self) {
        std::span<const T> dy = gr.out_grad(self);
        std::span<T> da = gr.grad_buffer(gr.nodes_[self].inputs[0]);
        for (std::size_t g = 0; g < batches; ++g)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j <= i; ++j) da[(g * n + i) * n + j] += dy[(g * n + i) * n + j];
    });
}

template <typename T>
Var Graph<T>::dropout(Var av, T p, Rng& rng) {
    if (p < T(0) || p >= T(1)) throw std::invalid_argument("dropout: probability must be in [0,1)");
    if (p == T(0)) return av;
    const Tensor<T>& a = value(av);
    std::bernoulli_distribution keep(1.0 - static_cast<double>(p));
    const T s = T(1) / (T(1) - p);
    std::vector<T> mask(a.size());
    for (T& m : mask) m = keep(rng) ? s : T(0);
    Tensor<T> out(a.shape);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * mask[i];
    return push(std::move(out), {av.id}, [mask = std::move(mask)](Graph& gr, std::uint32_t self) {
        std::span<const T> dy = gr.out_grad(self);
        std::span<T> da = gr.grad_buffer(gr.nodes_[self].inputs[0]);
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * mask[i];
    });
}

template <typename T>
Var Graph<T>::cross_entropy(Var lv, std::span<const std::size_t> rows, std::span<const TokenId> targets) {
    const Tensor<T>& logits = value(lv);
    if (rows.size() != targets.size()) {
        throw std::invalid_argument("cross_entropy: " + std::to_string(rows.size()) + " rows but " +
                                    std::to_string(targets.size()) + " targets");
    }
    if (rows.empty()) throw std::invalid_argument("cross_entropy: no positions selected");
    const std::size_t v = last_dim(logits.shape);
    const std::size_t total_rows = logits.size() / v;
    // Softmax rows are kept for the backward pass.
    std::vector<T> probs(rows.size() * v);
    double loss = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= total_rows) throw std::out_of_range("cross_entropy: row outside logits");
        if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
            throw std::out_of_range("cross_entropy: target id " + std::to_string(targets[i]) + " outside vocab");
        }
        const T* x = logits.data.data() + rows[i] * v;
        T* p = probs.data() + i * v;
        const T mx = *std::max_element(x, x + v);
        T sum = 0;
        for (std::size_t j = 0; j < v; ++j) {
            p[j] = std::exp(x[j] - mx);
            sum += p[j];
        }
        for (std::size_t j = 0; j < v; ++j) p[j] /= sum;
        loss += static_cast<double>(mx + std::log(sum) - x[targets[i]]);
    }
    loss /= static_cast<double>(rows.size());
    std::vector<std::size_t> r(rows.begin(), rows.end());
    std::vector<TokenId> t(targets.begin(), targets.end());
    return push(Tensor<T>({1}, std::vector<T>{static_cast<T>(loss)}), {lv.id},
                [v, r = std::move(r), t = std::move(t), probs = std::move(probs)](Graph& gr, std::uint32_t self) {
                    const T dy = gr.out_grad(self)[0] / static_cast<T>(r.size());
                    std::span<T> dx = gr.grad_buffer(gr.nodes_[self].inputs[0]);
                    for (std::size_t i = 0; i < r.size(); ++i) {
                        T* d = dx.data() + r[i] * v;
                        const T* p = probs.data() + i * v;
                        for (std::size_t j = 0; j < v; ++j) d[j] += dy * p[j];
                        d[t[i]] -= dy;
                    }
                });
}

template <typename T>
Var Graph<T>::custom(std::vector<Var> inputs, Tensor<T> value, BackwardRule rule) {
    std::vector<std::uint32_t> ids;
    ids.reserve(inputs.size());
    for (Var v : inputs) {
        node(v);
        ids.push_back(v.id);
    }
    return push(std::move(value), std::move(ids), [rule = std::move(rule)](Graph& gr, std::uint32_t self) {
        std::vector<std::span<T>> grads;
        for (std::uint32_t in : gr.nodes_[self].inputs) grads.push_back(gr.grad_buffer(in));
        rule(gr.out_grad(self), grads);
    });
}

template <typename T>
void Graph<T>::backward(Var loss) {
    if (!record_) throw std::logic_error("backward: graph was built without recording");
    const Tensor<T>& l = value(loss);
    if (l.size() != 1) throw ShapeError("backward: loss must be scalar, got shape " + to_string(l.shape));
    for (Node& n : nodes_) n.grad.clear();
    grad_buffer(loss.id)[0] += T(1);
    for (std::uint32_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (n.ref || !n.backward || n.grad.empty()) continue;
        n.backward(*this, id);
    }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace film
