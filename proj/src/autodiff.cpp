#include "chanae/autodiff.hpp"

#include "chanae/errors.hpp"

#include <algorithm>
#include <mutex>

namespace chanae {

Var Tape::constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr});
    return Var{this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
    nodes_.push_back(Node{p.value, {}, {}, &p});
    return Var{this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, Backprop backprop) {
    nodes_.push_back(Node{std::move(value), {}, std::move(backprop), nullptr});
    return Var{this, nodes_.size() - 1};
}

std::span<double> Tape::grad(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
}

void Tape::backward(Var root) {
    if (root.tape != this || root.id >= nodes_.size())
        throw StateError("backward: root was not recorded on this tape (run a forward pass first)");
    if (consumed_) throw StateError("backward: tape already consumed; record a new forward pass");
    if (nodes_[root.id].value.size() != 1)
        throw DimensionError("backward: root must be a scalar, got " +
                             shape_string(nodes_[root.id].value.shape()));
    consumed_ = true;

    grad(root.id)[0] = 1.0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.empty()) continue;
        if (n.backprop) n.backprop(*this, i);
        if (n.param) {
            Parameter& p = *n.param;
            if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
            auto dst = p.grad.values();
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
            p.has_grad = true;
        }
    }
}

namespace debug {
namespace {
std::mutex g_mutex;
std::string g_corrupted;
} // namespace

void corrupt_backward(const std::string& op) {
    std::lock_guard lock(g_mutex);
    g_corrupted = op;
}

bool backward_corrupted(const std::string& op) {
    std::lock_guard lock(g_mutex);
    return !g_corrupted.empty() && g_corrupted == op;
}
} // namespace debug

} // namespace chanae
