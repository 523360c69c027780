#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "mlconvgec/numcore/array.hpp"

namespace mlconvgec::nc {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; only valid while the
/// owning tape is alive.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Array& value() const;
    const Shape& shape() const { return value().shape(); }
};

/// Define-by-run reverse-mode tape. Nodes are appended in evaluation order,
/// which is a topological order, so backward() is a single reverse sweep.
///
/// A tape created with record=false keeps values only; ops skip building
/// backward closures. Used for inference.
class Tape {
  public:
    using Backward = std::function<void(Tape&, const Array& out_grad)>;

    explicit Tape(bool record = true) : record_(record) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const noexcept { return record_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    Var constant(Array value) { return push_node(std::move(value), nullptr, false); }

    Var variable(Array value) { return push_node(std::move(value), nullptr, record_); }

    /// Binds an externally owned array without copying it. The array must
    /// outlive the tape.
    Var parameter(const Array& ref) { return push_node(Array{}, &ref, record_); }

    /// Same as parameter() but never receives gradient.
    Var frozen(const Array& ref) { return push_node(Array{}, &ref, false); }

    const Array& value(Var v) const {
        const Node& n = nodes_[v.id];
        return n.ref ? *n.ref : n.value;
    }

    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

    /// Gradient accumulated by backward(); nullptr if the node received none.
    const Array* grad(Var v) const {
        const Node& n = nodes_[v.id];
        return n.grad.empty() ? nullptr : &n.grad;
    }

    /// Gradient buffer for an input during backward, or nullptr when the input
    /// does not need gradient.
    Array* grad_target(Var v) {
        Node& n = nodes_[v.id];
        if (!n.requires_grad) return nullptr;
        if (n.grad.empty()) n.grad = Array(value(v).shape());
        return &n.grad;
    }

    /// Records the result of an op. The closure runs during backward() only if
    /// some input requires gradient.
    Var record(Array value, std::initializer_list<Var> inputs, Backward backward) {
        bool needs = false;
        if (record_) {
            for (Var in : inputs) needs = needs || nodes_[in.id].requires_grad;
        }
        Var out = push_node(std::move(value), nullptr, needs);
        if (needs) nodes_[out.id].backward = std::move(backward);
        return out;
    }

    /// Seeds d(out)/d(out) = 1 for a single-element output and sweeps back.
    void backward(Var out) {
        if (value(out).size() != 1) {
            fail(ErrorCategory::dimension, "backward() needs a scalar output, got shape " +
                                               shape_str(value(out).shape()));
        }
        if (!nodes_[out.id].requires_grad) return;
        Array* seed = grad_target(out);
        (*seed)[0] += 1.0;
        for (std::size_t i = out.id + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.backward || n.grad.empty()) continue;
            // Inputs always precede their consumer, so the closure never
            // touches this node's own gradient.
            Array g = std::move(n.grad);
            n.backward(*this, g);
            nodes_[i].grad = std::move(g);
        }
    }

  private:
    struct Node {
        Array value;
        const Array* ref = nullptr;
        Array grad;
        bool requires_grad = false;
        Backward backward;
    };

    Var push_node(Array value, const Array* ref, bool requires_grad) {
        nodes_.push_back(Node{std::move(value), ref, Array{}, requires_grad, {}});
        return Var{this, nodes_.size() - 1};
    }

    bool record_;
    std::vector<Node> nodes_;
};

inline const Array& Var::value() const { return tape->value(*this); }

}  // namespace mlconvgec::nc
