#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "protopath/core/error.hpp"
#include "protopath/core/ndarray.hpp"

namespace protopath::ad {

class Tape;

/// Handle to a node recorded on a tape. Cheap to copy; only valid while the
/// owning tape is alive.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const NdArray& value() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
};

using BackwardFn = std::function<void(Tape&, const NdArray& out_grad)>;

/// Define-by-run record of primitive operations. Ops append nodes in
/// execution order, so ids are already a topological order and backward()
/// walks them in reverse. A tape is confined to one thread.
class Tape {
public:
    Tape() { nodes_.reserve(256); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(NdArray value, bool requires_grad = true) {
        nodes_.push_back(Node{std::move(value), {}, requires_grad, false, nullptr});
        return Var{this, nodes_.size() - 1};
    }

    Var constant(NdArray value) { return leaf(std::move(value), false); }

    /// Records an op output. The node requires a gradient iff any input does;
    /// otherwise the backward rule is dropped.
    Var record(NdArray value, std::initializer_list<Var> inputs, BackwardFn backward) {
        bool needs = false;
        for (const Var& in : inputs) {
            check_owner(in);
            needs = needs || nodes_[in.id].requires_grad;
        }
        nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(backward) : nullptr});
        return Var{this, nodes_.size() - 1};
    }

    Var record(NdArray value, const std::vector<Var>& inputs, BackwardFn backward) {
        bool needs = false;
        for (const Var& in : inputs) {
            check_owner(in);
            needs = needs || nodes_[in.id].requires_grad;
        }
        nodes_.push_back(Node{std::move(value), {}, needs, false, needs ? std::move(backward) : nullptr});
        return Var{this, nodes_.size() - 1};
    }

    const NdArray& value(std::size_t id) const { return nodes_.at(id).value; }
    bool requires_grad(const Var& v) const { return nodes_.at(v.id).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Adds `contribution` into the gradient of `v` (no-op for constants).
    void accumulate(const Var& v, const NdArray& contribution) {
        Node& node = nodes_[v.id];
        if (!node.requires_grad) return;
        if (!node.has_grad) {
            node.grad = contribution;
            node.has_grad = true;
            return;
        }
        auto dst = node.grad.data();
        auto src = contribution.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }

    void accumulate(const Var& v, NdArray&& contribution) {
        Node& node = nodes_[v.id];
        if (!node.requires_grad) return;
        if (!node.has_grad) {
            node.grad = std::move(contribution);
            node.has_grad = true;
            return;
        }
        auto dst = node.grad.data();
        auto src = contribution.data();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }

    /// Reverse sweep from a scalar loss.
    void backward(const Var& loss) {
        check_owner(loss);
        if (nodes_[loss.id].value.size() != 1)
            throw ContractError("backward: loss must be scalar, got shape " +
                                shape_str(nodes_[loss.id].value.shape()));
        for (Node& n : nodes_) {
            n.has_grad = false;
            n.grad = NdArray();
        }
        if (!nodes_[loss.id].requires_grad) return;
        nodes_[loss.id].grad = NdArray(nodes_[loss.id].value.shape(), 1.0);
        nodes_[loss.id].has_grad = true;
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.has_grad || !n.backward) continue;
            n.backward(*this, n.grad);
        }
    }

    /// Gradient of a node after backward(); zeros if it received none.
    NdArray grad(const Var& v) const {
        const Node& n = nodes_.at(v.id);
        if (n.has_grad) return n.grad;
        return NdArray(n.value.shape(), 0.0);
    }

private:
    struct Node {
        NdArray value;
        NdArray grad;
        bool requires_grad = false;
        bool has_grad = false;
        BackwardFn backward;
    };

    void check_owner(const Var& v) const {
        if (v.tape != this || v.id >= nodes_.size()) throw ContractError("Var does not belong to this tape");
    }

    std::vector<Node> nodes_;
};

inline const NdArray& Var::value() const { return tape->value(id); }

} // namespace protopath::ad
