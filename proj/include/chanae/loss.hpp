#pragma once

#include "chanae/autodiff.hpp"

#include <string>
#include <string_view>

namespace chanae {

enum class LossKind { mse, clmse, clmee, clmle };

struct LossSpec {
    LossKind kind = LossKind::mse;
    /// Slicing threshold for hard decisions; also recorded with the model.
    double gamma = 0.5;
    /// Use the printed CLMEE/CLMLE branches, whose slopes reward the wrong side
    /// of the threshold. Off by default; kept for side-by-side comparison.
    bool paper_literal = false;

    void validate() const;
};

LossKind parse_loss_kind(std::string_view name);
std::string_view loss_kind_name(LossKind k);

/// Per-element loss for a binary target t and prediction p.
double loss_element(const LossSpec& spec, double t, double p);
/// d loss_element / dp, with subgradient 0 at clip boundaries.
double loss_element_grad(const LossSpec& spec, double t, double p);

/// Mean over all elements. Targets must be 0 or 1.
Var loss_forward(const LossSpec& spec, const Tensor& targets, Var predictions);
double loss_value(const LossSpec& spec, const Tensor& targets, const Tensor& predictions);

} // namespace chanae
