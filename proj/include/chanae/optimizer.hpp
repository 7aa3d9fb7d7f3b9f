#pragma once

#include "chanae/autodiff.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace chanae {

enum class OptimizerKind { adam, rmsprop };

OptimizerKind parse_optimizer_kind(std::string_view name);
std::string_view optimizer_kind_name(OptimizerKind k);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double learning_rate = 1e-3;
    double beta1 = 0.9;   // adam
    double beta2 = 0.999; // adam
    double rho = 0.9;     // rmsprop
    double epsilon = 1e-8;

    void validate() const;
};

/// Adam with bias-corrected moments, or RMSprop with a decaying mean square.
/// Moment buffers are bound to parameters by position on the first step.
class Optimizer {
  public:
    explicit Optimizer(OptimizerConfig config);

    void step(std::span<Parameter* const> params);

    const OptimizerConfig& config() const { return config_; }
    std::int64_t steps() const { return steps_; }

  private:
    OptimizerConfig config_;
    std::int64_t steps_ = 0;
    std::vector<Tensor> first_;
    std::vector<Tensor> second_;
};

} // namespace chanae
