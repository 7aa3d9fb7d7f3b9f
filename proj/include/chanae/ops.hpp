#pragma once

#include "chanae/autodiff.hpp"
#include "chanae/rng.hpp"

#include <string>
#include <string_view>

namespace chanae {

enum class Activation { linear, relu, tanh, hard_sigmoid };

Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation a);

/// max(0, min(1, 0.2 x + 0.5))
inline double hard_sigmoid(double x) {
    const double y = 0.2 * x + 0.5;
    return y < 0.0 ? 0.0 : (y > 1.0 ? 1.0 : y);
}

/// y[i,j] = sum_k x[i,k] w[k,j] + b[j]
Var dense(Var x, Var w, Var b);

/// "Same" cross-correlation. x [batch, in_ch, len], k [filters, in_ch, klen],
/// b [filters]. Output tap t reads x[t + j - (klen-1)/2] for j in [0, klen);
/// samples outside the frame read as zero.
Var conv1d_same(Var x, Var k, Var b);

Var activate(Var x, Activation kind);

/// Inverted dropout: training zeroes each element with probability `rate` and
/// scales survivors by 1/(1-rate). Evaluation is the identity.
Var dropout(Var x, double rate, bool training, Rng& rng);

Var reshape(Var x, Shape shape);

/// Scales each frame of x [batch, 2, n] (or a single [2, n]) to unit average
/// complex power: divides by sqrt(sum(I^2 + Q^2) / n).
Var normalize_power(Var x);

Var add(Var a, Var b);
/// Sum of all elements, as a [1] tensor.
Var sum(Var x);
/// Elementwise product with a constant tensor of the same shape.
Var mul_constant(Var x, const Tensor& c);

} // namespace chanae
