#pragma once

#include "chanae/autodiff.hpp"
#include "chanae/rng.hpp"
#include "chanae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace chanae::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : t.values()) v = u(rng);
    return t;
}

/// Largest relative error between the analytic gradient of `target` and
/// elementwise central differences of `objective`. Elements smaller than
/// `floor` are compared against `floor` instead of their own magnitude.
inline double max_fd_rel_error(Parameter& target, const std::function<double()>& objective,
                               const std::function<void()>& analytic, double eps = 1e-5, double floor = 1e-12) {
    target.zero_grad();
    analytic();
    double worst = 0.0;
    auto w = target.value.values();
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double saved = w[i];
        w[i] = saved + eps;
        const double fp = objective();
        w[i] = saved - eps;
        const double fm = objective();
        w[i] = saved;
        const double num = (fp - fm) / (2 * eps);
        const double ana = target.grad[i];
        worst = std::max(worst, std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), floor}));
    }
    return worst;
}

/// Same, for a scalar graph built fresh on every evaluation.
inline double max_fd_rel_error(Parameter& target, const std::function<Var(Tape&)>& build, double eps = 1e-5,
                               double floor = 1e-12) {
    return max_fd_rel_error(
        target,
        [&] {
            Tape t;
            return build(t).value()[0];
        },
        [&] {
            Tape t;
            t.backward(build(t));
        },
        eps, floor);
}

} // namespace chanae::testing
