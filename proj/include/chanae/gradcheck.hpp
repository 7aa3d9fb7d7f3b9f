#pragma once

#include "chanae/autodiff.hpp"
#include "chanae/rng.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace chanae {

inline constexpr double kGradCheckTolerance = 1e-5;

struct GradCheckOptions {
    double eps = 1e-5;
    int probes = 10;
    /// Random unit directions per parameter, in addition to the gradient direction.
    int random_directions = 2;
    std::uint64_t seed = 1;
    /// Attempts to find a probe point away from every kink before giving up.
    int max_attempts = 200;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    int probes = 0;
    int rejected = 0;
};

/// Central-difference check of reverse-mode gradients.
///
/// For each probe `setup` re-randomizes the point (inputs are passed as
/// Parameters so they are checked too) and `build` records a scalar objective.
/// Each parameter array is probed along its gradient direction and along random
/// unit directions; the relative error of a directional derivative is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-12). Points closer than
/// 10 eps to a breakpoint, or whose perturbed evaluations change linear region,
/// are rejected and redrawn.
GradCheckResult grad_check(std::span<Parameter* const> params, const std::function<void(Rng&)>& setup,
                           const std::function<Var(Tape&)>& build, const GradCheckOptions& options = {});

struct GradCheckEntry {
    std::string name;
    std::string category; // layer, loss, channel, rtn, model
    std::string kind;     // layer kind for category "layer"
    GradCheckResult result;
    bool passed() const { return result.max_rel_error < kGradCheckTolerance && result.probes > 0; }
};

/// Every layer kind, loss, channel transform (fixed draw), synchronization
/// transform and assembled encoder-channel-decoder graph.
std::vector<GradCheckEntry> run_gradcheck_suite(const GradCheckOptions& options = {});

} // namespace chanae
