#pragma once

#include "chanae/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace chanae {

/// Trainable array with its accumulated gradient.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    bool has_grad = false;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() {
        grad = Tensor(value.shape());
        has_grad = false;
    }
};

class Tape;

/// Handle to a node recorded on a Tape.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

/// Linear record of a forward pass. Node creation order is a topological order,
/// so backward is a single reverse sweep. One tape per forward pass.
class Tape {
  public:
    using Backprop = std::function<void(Tape&, std::size_t self)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that receives no gradient.
    Var constant(Tensor value);
    /// Leaf bound to a parameter; backward accumulates into p.grad.
    Var param(Parameter& p);
    /// Interior node. `backprop` reads grad(self) and accumulates into its inputs.
    Var record(Tensor value, Backprop backprop);

    const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
    /// Gradient buffer of a node, allocated as zeros on first access.
    std::span<double> grad(std::size_t id);
    bool has_grad(std::size_t id) const { return !nodes_.at(id).grad.empty(); }

    /// Reverse-mode sweep from a scalar root. Valid once per tape.
    void backward(Var root);

    std::size_t size() const { return nodes_.size(); }

    /// Piecewise ops report how far their operands sit from a breakpoint and
    /// which linear region each operand falls in. Gradient checking uses both
    /// to reject probes that straddle a kink.
    void note_kink_distance(double d) {
        if (d < kink_margin_) kink_margin_ = d;
    }
    void note_region(std::uint64_t region) {
        region_hash_ = (region_hash_ ^ region) * 0x100000001B3ull;
    }
    double kink_margin() const { return kink_margin_; }
    std::uint64_t region_hash() const { return region_hash_; }

  private:
    struct Node {
        Tensor value;
        AlignedVector grad;
        Backprop backprop;
        Parameter* param = nullptr;
    };

    std::vector<Node> nodes_;
    bool consumed_ = false;
    double kink_margin_ = std::numeric_limits<double>::infinity();
    std::uint64_t region_hash_ = 0xCBF29CE484222325ull;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace debug {

/// Deliberately breaks one backward rule (by op name, e.g. "tanh") so the
/// gradient checker's negative control can be exercised. Empty string clears.
void corrupt_backward(const std::string& op);
bool backward_corrupted(const std::string& op);

} // namespace debug

} // namespace chanae
