#include "chanae/optimizer.hpp"

#include "chanae/errors.hpp"

#include <cmath>

namespace chanae {

OptimizerKind parse_optimizer_kind(std::string_view name) {
    if (name == "adam") return OptimizerKind::adam;
    if (name == "rmsprop") return OptimizerKind::rmsprop;
    throw ConfigError("unknown optimizer '" + std::string(name) + "'");
}

std::string_view optimizer_kind_name(OptimizerKind k) {
    return k == OptimizerKind::adam ? "adam" : "rmsprop";
}

// A zero learning rate is accepted so a run can be frozen; a zero epsilon is
// accepted for closed-form checks (the update is then skipped where v == 0).
void OptimizerConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw ConfigError("learning_rate must be finite and >= 0");
    if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in (0, 1)");
    if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("rho must lie in (0, 1)");
}

Optimizer::Optimizer(OptimizerConfig config) : config_(config) { config_.validate(); }

void Optimizer::step(std::span<Parameter* const> params) {
    for (const Parameter* p : params)
        if (!p->has_grad) throw StateError("optimizer step: parameter '" + p->name + "' has no gradient");

    if (first_.empty()) {
        for (const Parameter* p : params) {
            first_.emplace_back(p->value.shape());
            second_.emplace_back(p->value.shape());
        }
    }
    if (first_.size() != params.size()) throw StateError("optimizer step: parameter set changed");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (first_[i].shape() != params[i]->value.shape())
            throw DimensionError("optimizer step: moment shape mismatch for '" + params[i]->name + "'");

    ++steps_;
    const double lr = config_.learning_rate;
    const double eps = config_.epsilon;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));

    for (std::size_t i = 0; i < params.size(); ++i) {
        auto w = params[i]->value.values();
        const auto g = params[i]->grad.values();
        auto m = first_[i].values();
        auto v = second_[i].values();
        for (std::size_t k = 0; k < w.size(); ++k) {
            double denom = 0.0;
            double numer = 0.0;
            if (config_.kind == OptimizerKind::adam) {
                m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * g[k];
                v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * g[k] * g[k];
                numer = m[k] / bc1;
                denom = std::sqrt(v[k] / bc2) + eps;
            } else {
                v[k] = config_.rho * v[k] + (1.0 - config_.rho) * g[k] * g[k];
                numer = g[k];
                denom = std::sqrt(v[k]) + eps;
            }
            if (denom > 0.0) w[k] -= lr * numer / denom;
        }
    }
}

} // namespace chanae
