#include "chanae/ops.hpp"

#include "chanae/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <memory>

namespace chanae {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;
using Eigen::Index;

Index idx(std::size_t n) { return static_cast<Index>(n); }

void accumulate(std::span<double> dst, std::span<const double> src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Column matrix [in_ch * klen, batch * len] for "same" correlation.
RowMat im2col(const Tensor& x, std::size_t klen) {
    const std::size_t batch = x.dim(0), ch = x.dim(1), len = x.dim(2);
    const std::ptrdiff_t left = static_cast<std::ptrdiff_t>((klen - 1) / 2);
    RowMat cols = RowMat::Zero(idx(ch * klen), idx(batch * len));
    for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t j = 0; j < klen; ++j) {
            double* row = cols.row(idx(c * klen + j)).data();
            const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - left;
            for (std::size_t b = 0; b < batch; ++b) {
                const double* src = x.data() + (b * ch + c) * len;
                double* dst = row + b * len;
                for (std::size_t t = 0; t < len; ++t) {
                    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) + shift;
                    if (s >= 0 && s < static_cast<std::ptrdiff_t>(len)) dst[t] = src[s];
                }
            }
        }
    return cols;
}

void col2im(const RowMat& cols, std::span<double> gx, std::size_t batch, std::size_t ch,
            std::size_t len, std::size_t klen) {
    const std::ptrdiff_t left = static_cast<std::ptrdiff_t>((klen - 1) / 2);
    for (std::size_t c = 0; c < ch; ++c)
        for (std::size_t j = 0; j < klen; ++j) {
            const double* row = cols.row(idx(c * klen + j)).data();
            const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(j) - left;
            for (std::size_t b = 0; b < batch; ++b) {
                double* dst = gx.data() + (b * ch + c) * len;
                const double* src = row + b * len;
                for (std::size_t t = 0; t < len; ++t) {
                    const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t) + shift;
                    if (s >= 0 && s < static_cast<std::ptrdiff_t>(len)) dst[s] += src[t];
                }
            }
        }
}

} // namespace

Activation parse_activation(std::string_view name) {
    if (name == "linear") return Activation::linear;
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "hard_sigmoid") return Activation::hard_sigmoid;
    throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view activation_name(Activation a) {
    switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::hard_sigmoid: return "hard_sigmoid";
    }
    return "?";
}

Var dense(Var x, Var w, Var b) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const Tensor& bv = b.value();
    if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || xv.dim(1) != wv.dim(0) ||
        bv.dim(0) != wv.dim(1))
        throw DimensionError("dense: x " + shape_string(xv.shape()) + ", w " + shape_string(wv.shape()) +
                             ", b " + shape_string(bv.shape()) + " do not conform");
    const std::size_t batch = xv.dim(0), in = wv.dim(0), out = wv.dim(1);

    Tensor y({batch, out});
    MapMat ym(y.data(), idx(batch), idx(out));
    ym.noalias() = CMapMat(xv.data(), idx(batch), idx(in)) * CMapMat(wv.data(), idx(in), idx(out));
    ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data(), idx(out));

    const std::size_t xi = x.id, wi = w.id, bi = b.id;
    return x.tape->record(std::move(y), [=](Tape& t, std::size_t self) {
        const double corrupt = debug::backward_corrupted("dense") ? 1.01 : 1.0;
        const auto gy = t.grad(self);
        CMapMat gym(gy.data(), idx(batch), idx(out));
        const Tensor& xval = t.value(xi);
        const Tensor& wval = t.value(wi);
        MapMat(t.grad(xi).data(), idx(batch), idx(in)).noalias() +=
            corrupt * gym * CMapMat(wval.data(), idx(in), idx(out)).transpose();
        MapMat(t.grad(wi).data(), idx(in), idx(out)).noalias() +=
            CMapMat(xval.data(), idx(batch), idx(in)).transpose() * gym;
        Eigen::Map<Eigen::RowVectorXd>(t.grad(bi).data(), idx(out)) += gym.colwise().sum();
    });
}

Var conv1d_same(Var x, Var k, Var b) {
    const Tensor& xv = x.value();
    const Tensor& kv = k.value();
    const Tensor& bv = b.value();
    if (xv.rank() != 3 || kv.rank() != 3 || bv.rank() != 1 || kv.dim(1) != xv.dim(1) ||
        bv.dim(0) != kv.dim(0))
        throw DimensionError("conv1d: x " + shape_string(xv.shape()) + ", k " + shape_string(kv.shape()) +
                             ", b " + shape_string(bv.shape()) + " do not conform");
    const std::size_t batch = xv.dim(0), ch = xv.dim(1), len = xv.dim(2);
    const std::size_t filters = kv.dim(0), klen = kv.dim(2);
    if (klen > len)
        throw DimensionError("conv1d: kernel length " + std::to_string(klen) + " exceeds input length " +
                             std::to_string(len));

    auto cols = std::make_shared<RowMat>(im2col(xv, klen));
    const RowMat prod = CMapMat(kv.data(), idx(filters), idx(ch * klen)) * (*cols);
    Tensor y({batch, filters, len});
    for (std::size_t bb = 0; bb < batch; ++bb)
        for (std::size_t f = 0; f < filters; ++f) {
            const double* src = prod.row(idx(f)).data() + bb * len;
            double* dst = y.data() + (bb * filters + f) * len;
            for (std::size_t t = 0; t < len; ++t) dst[t] = src[t] + bv[f];
        }

    const std::size_t xi = x.id, ki = k.id, bi = b.id;
    return x.tape->record(std::move(y), [=](Tape& t, std::size_t self) {
        const double corrupt = debug::backward_corrupted("conv1d") ? 1.01 : 1.0;
        const auto gy = t.grad(self);
        RowMat gmat(idx(filters), idx(batch * len));
        for (std::size_t bb = 0; bb < batch; ++bb)
            for (std::size_t f = 0; f < filters; ++f) {
                const double* src = gy.data() + (bb * filters + f) * len;
                double* dst = gmat.row(idx(f)).data() + bb * len;
                std::copy(src, src + len, dst);
            }
        const Tensor& kval = t.value(ki);
        MapMat(t.grad(ki).data(), idx(filters), idx(ch * klen)).noalias() += corrupt * gmat * cols->transpose();
        auto gb = t.grad(bi);
        for (std::size_t f = 0; f < filters; ++f) gb[f] += gmat.row(idx(f)).sum();
        const RowMat gcols = CMapMat(kval.data(), idx(filters), idx(ch * klen)).transpose() * gmat;
        col2im(gcols, t.grad(xi), batch, ch, len, klen);
    });
}

Var activate(Var x, Activation kind) {
    const Tensor& xv = x.value();
    Tensor y(xv.shape());
    Tape& tape = *x.tape;
    switch (kind) {
    case Activation::linear:
        y = xv;
        break;
    case Activation::relu:
        for (std::size_t i = 0; i < xv.size(); ++i) {
            y[i] = xv[i] > 0.0 ? xv[i] : 0.0;
            tape.note_kink_distance(std::abs(xv[i]));
            tape.note_region(xv[i] > 0.0 ? 1 : 0);
        }
        break;
    case Activation::tanh:
        for (std::size_t i = 0; i < xv.size(); ++i) y[i] = std::tanh(xv[i]);
        break;
    case Activation::hard_sigmoid:
        for (std::size_t i = 0; i < xv.size(); ++i) {
            y[i] = hard_sigmoid(xv[i]);
            tape.note_kink_distance(std::min(std::abs(xv[i] - 2.5), std::abs(xv[i] + 2.5)));
            tape.note_region(xv[i] <= -2.5 ? 0 : (xv[i] >= 2.5 ? 2 : 1));
        }
        break;
    }
    const std::size_t xi = x.id;
    return tape.record(std::move(y), [=](Tape& t, std::size_t self) {
        const double corrupt = debug::backward_corrupted(std::string(activation_name(kind))) ? 1.01 : 1.0;
        const auto gy = t.grad(self);
        const Tensor& in = t.value(xi);
        const Tensor& out = t.value(self);
        auto gx = t.grad(xi);
        for (std::size_t i = 0; i < gx.size(); ++i) {
            double d = 1.0;
            switch (kind) {
            case Activation::linear: break;
            case Activation::relu: d = in[i] > 0.0 ? 1.0 : 0.0; break;
            case Activation::tanh: d = 1.0 - out[i] * out[i]; break;
            // Subgradient 0 at the breakpoints.
            case Activation::hard_sigmoid: d = (in[i] > -2.5 && in[i] < 2.5) ? 0.2 : 0.0; break;
            }
            gx[i] += corrupt * d * gy[i];
        }
    });
}

Var dropout(Var x, double rate, bool training, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    const Tensor& xv = x.value();
    Tensor mask(xv.shape());
    Tensor y(xv.shape());
    const double keep_scale = 1.0 / (1.0 - rate);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t i = 0; i < xv.size(); ++i) {
        mask[i] = u(rng) < rate ? 0.0 : keep_scale;
        y[i] = xv[i] * mask[i];
    }
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), [xi, mask = std::move(mask)](Tape& t, std::size_t self) {
        const double corrupt = debug::backward_corrupted("dropout") ? 1.01 : 1.0;
        const auto gy = t.grad(self);
        auto gx = t.grad(xi);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += corrupt * mask[i] * gy[i];
    });
}

Var reshape(Var x, Shape shape) {
    Tensor y = x.value().reshaped(std::move(shape));
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), [xi](Tape& t, std::size_t self) {
        const double corrupt = debug::backward_corrupted("reshape") ? 1.01 : 1.0;
        const auto gy = t.grad(self);
        auto gx = t.grad(xi);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += corrupt * gy[i];
    });
}

Var normalize_power(Var x) {
    const Tensor& xv = x.value();
    if (!((xv.rank() == 3 && xv.dim(1) == 2) || (xv.rank() == 2 && xv.dim(0) == 2)))
        throw DimensionError("normalize_power expects [batch,2,n] or [2,n], got " + shape_string(xv.shape()));
    const std::size_t n = xv.shape().back();
    const std::size_t frame = 2 * n;
    const std::size_t frames = xv.size() / frame;
    std::vector<double> scale(frames);
    Tensor y(xv.shape());
    for (std::size_t f = 0; f < frames; ++f) {
        const double* v = xv.data() + f * frame;
        double energy = 0.0;
        for (std::size_t i = 0; i < frame; ++i) energy += v[i] * v[i];
        if (!(energy > 0.0)) throw DegenerateInputError("normalize_power: frame has zero power");
        scale[f] = 1.0 / std::sqrt(energy / static_cast<double>(n));
        for (std::size_t i = 0; i < frame; ++i) y[f * frame + i] = v[i] * scale[f];
    }
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), [=, scale = std::move(scale)](Tape& t, std::size_t self) {
        const double corrupt = debug::backward_corrupted("normalize_power") ? 1.01 : 1.0;
        const auto gy = t.grad(self);
        const Tensor& in = t.value(xi);
        auto gx = t.grad(xi);
        for (std::size_t f = 0; f < frames; ++f) {
            const double s = scale[f];
            const double* v = in.data() + f * frame;
            const double* g = gy.data() + f * frame;
            double dot = 0.0;
            for (std::size_t i = 0; i < frame; ++i) dot += g[i] * v[i];
            const double c = s * s * s * dot / static_cast<double>(n);
            for (std::size_t i = 0; i < frame; ++i) gx[f * frame + i] += corrupt * (s * g[i] - c * v[i]);
        }
    });
}

Var add(Var a, Var b) {
    if (a.shape() != b.shape())
        throw DimensionError("add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    Tensor y = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
    const std::size_t ai = a.id, bi = b.id;
    return a.tape->record(std::move(y), [ai, bi](Tape& t, std::size_t self) {
        const auto gy = t.grad(self);
        accumulate(t.grad(ai), gy);
        accumulate(t.grad(bi), gy);
    });
}

Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    const std::size_t xi = x.id;
    return x.tape->record(Tensor::scalar(s), [xi](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        for (double& v : t.grad(xi)) v += g;
    });
}

Var mul_constant(Var x, const Tensor& c) {
    if (x.shape() != c.shape())
        throw DimensionError("mul_constant: " + shape_string(x.shape()) + " vs " + shape_string(c.shape()));
    Tensor y = x.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= c[i];
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), [xi, c](Tape& t, std::size_t self) {
        const auto gy = t.grad(self);
        auto gx = t.grad(xi);
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += c[i] * gy[i];
    });
}

} // namespace chanae
