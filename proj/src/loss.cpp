#include "chanae/loss.hpp"

#include "chanae/errors.hpp"

#include <cmath>

namespace chanae {

void LossSpec::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw ConfigError("gamma must lie in (0, 1), got " + std::to_string(gamma));
}

LossKind parse_loss_kind(std::string_view name) {
    if (name == "mse") return LossKind::mse;
    if (name == "clmse") return LossKind::clmse;
    if (name == "clmee") return LossKind::clmee;
    if (name == "clmle") return LossKind::clmle;
    throw ConfigError("unknown loss '" + std::string(name) + "'");
}

std::string_view loss_kind_name(LossKind k) {
    switch (k) {
    case LossKind::mse: return "mse";
    case LossKind::clmse: return "clmse";
    case LossKind::clmee: return "clmee";
    case LossKind::clmle: return "clmle";
    }
    return "?";
}

// Clipped losses are zero once the prediction is past the target's side of
// the [0, 1] interval: p <= 0 for t = 0, p >= 1 for t = 1.
double loss_element(const LossSpec& spec, double t, double p) {
    const bool one = t == 1.0;
    switch (spec.kind) {
    case LossKind::mse: return (t - p) * (t - p);
    case LossKind::clmse:
        if (one) return p < 1.0 ? (1.0 - p) * (1.0 - p) : 0.0;
        return p > 0.0 ? p * p : 0.0;
    case LossKind::clmle:
        if (spec.paper_literal) {
            if (one) return p < 1.0 ? p - 1.0 : 0.0;
            return p > 0.0 ? -p : 0.0;
        }
        if (one) return p < 1.0 ? 1.0 - p : 0.0;
        return p > 0.0 ? p : 0.0;
    case LossKind::clmee:
        if (spec.paper_literal) return one ? std::exp(p - t) : std::exp(t - p);
        return one ? std::exp(t - p) : std::exp(p - t);
    }
    return 0.0;
}

double loss_element_grad(const LossSpec& spec, double t, double p) {
    const bool one = t == 1.0;
    switch (spec.kind) {
    case LossKind::mse: return 2.0 * (p - t);
    case LossKind::clmse:
        if (one) return p < 1.0 ? -2.0 * (1.0 - p) : 0.0;
        return p > 0.0 ? 2.0 * p : 0.0;
    case LossKind::clmle: {
        const double s = spec.paper_literal ? -1.0 : 1.0;
        if (one) return p < 1.0 ? -s : 0.0;
        return p > 0.0 ? s : 0.0;
    }
    case LossKind::clmee:
        if (spec.paper_literal) return one ? std::exp(p - t) : -std::exp(t - p);
        return one ? -std::exp(t - p) : std::exp(p - t);
    }
    return 0.0;
}

namespace {
void check_targets(const Tensor& targets, const Tensor& predictions) {
    if (targets.shape() != predictions.shape())
        throw DimensionError("loss: targets " + shape_string(targets.shape()) + " vs predictions " +
                             shape_string(predictions.shape()));
    if (targets.empty()) throw InputError("loss: empty batch");
    for (double t : targets.values())
        if (t != 0.0 && t != 1.0) throw InputError("loss: targets must be 0 or 1, got " + std::to_string(t));
}
} // namespace

double loss_value(const LossSpec& spec, const Tensor& targets, const Tensor& predictions) {
    check_targets(targets, predictions);
    double acc = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) acc += loss_element(spec, targets[i], predictions[i]);
    return acc / static_cast<double>(targets.size());
}

Var loss_forward(const LossSpec& spec, const Tensor& targets, Var predictions) {
    const Tensor& p = predictions.value();
    const double mean = loss_value(spec, targets, p);
    Tape& tape = *predictions.tape;
    if (spec.kind == LossKind::clmse || spec.kind == LossKind::clmle) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double edge = targets[i] == 1.0 ? 1.0 : 0.0;
            tape.note_kink_distance(std::abs(p[i] - edge));
            tape.note_region(p[i] > edge ? 1 : 0);
        }
    }
    const std::size_t pi = predictions.id;
    return tape.record(Tensor::scalar(mean), [spec, targets, pi](Tape& t, std::size_t self) {
        const double corrupt = debug::backward_corrupted(std::string(loss_kind_name(spec.kind))) ? 1.01 : 1.0;
        const double g = t.grad(self)[0] / static_cast<double>(targets.size());
        const Tensor& pv = t.value(pi);
        auto gp = t.grad(pi);
        for (std::size_t i = 0; i < gp.size(); ++i)
            gp[i] += corrupt * g * loss_element_grad(spec, targets[i], pv[i]);
    });
}

} // namespace chanae
