#pragma once

// Dense tensors and a tape-based reverse-mode autodiff graph.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "film/common.hpp"

namespace film {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until a backward pass or zero_grad() sizes it

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(numel(shape), fill) {}
    Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != numel(shape)) {
            throw ShapeError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + to_string(shape));
        }
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    bool has_grad() const { return grad.size() == data.size(); }
    void zero_grad() { grad.assign(data.size(), T(0)); }
};

/// Handle to a node in a Graph.
struct Var {
    std::uint32_t id = 0;
};

/// Records primitive applications and replays them backwards.
///
/// Parameter leaves reference caller-owned tensors; gradients flowing into a
/// parameter accumulate in that tensor's `grad` field, so callers zero grads
/// between steps. Values returned by `value()` stay valid until the next node
/// is added.
template <typename T>
class Graph {
public:
    /// Backward rule for `custom`: reads the output gradient, accumulates into
    /// each input gradient (same order as the inputs).
    using BackwardRule =
        std::function<void(std::span<const T> out_grad, std::span<std::span<T>> in_grads)>;

    explicit Graph(bool record = true) : record_(record) {}

    /// Leaf whose gradient accumulates into p.grad.
    Var parameter(Tensor<T>& p);
    /// Read-only leaf over caller-owned storage; gradients stop here.
    Var reference(const Tensor<T>& t);
    Var constant(Tensor<T> t);

    const Tensor<T>& value(Var v) const;
    const Shape& shape(Var v) const { return value(v).shape; }
    /// Gradient of the last backward pass with respect to node v (empty if none).
    std::span<const T> grad(Var v) const;
    std::size_t size() const { return nodes_.size(); }

    // 2-D [M,K]x[K,N], batched 3-D [G,M,K]x[G,K,N], or rank>=2 activations
    // times a 2-D weight. trans_b reads b as its transpose.
    Var matmul(Var a, Var b, bool trans_b = false);
    // Same shapes, or b a vector broadcast along a's last axis.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, T factor);
    Var sum(Var a);
    Var softmax(Var a, T temperature = T(1));
    Var layer_norm(Var x, Var gain, Var bias, T eps = T(1e-5));
    Var gelu(Var a);
    Var embedding(Var table, std::span<const TokenId> ids);
    Var reshape(Var a, Shape shape);
    Var transpose(Var a);    // swaps the last two axes
    Var transpose12(Var a);  // rank 4: [a,b,c,d] -> [a,c,b,d]
    Var causal_mask(Var scores);
    Var dropout(Var a, T p, Rng& rng);
    // Mean negative log-likelihood of targets[i] at logits row rows[i].
    Var cross_entropy(Var logits, std::span<const std::size_t> rows,
                      std::span<const TokenId> targets);
    Var custom(std::vector<Var> inputs, Tensor<T> value, BackwardRule rule);

    void backward(Var loss);

private:
    struct Node {
        Tensor<T> value;
        const Tensor<T>* ref = nullptr;
        Tensor<T>* param = nullptr;
        std::vector<T> grad;
        std::vector<std::uint32_t> inputs;
        std::function<void(Graph&, std::uint32_t)> backward;
    };

    Var push(Tensor<T> value, std::vector<std::uint32_t> inputs,
             std::function<void(Graph&, std::uint32_t)> rule);
    const Node& node(Var v) const;
    std::span<T> grad_buffer(std::uint32_t id);
    std::span<const T> out_grad(std::uint32_t id) const { return nodes_[id].grad; }
    const Tensor<T>& val(std::uint32_t id) const {
        return nodes_[id].ref ? *nodes_[id].ref : nodes_[id].value;
    }

    bool record_;
    std::vector<Node> nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace film
