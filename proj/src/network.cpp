#include "chanae/network.hpp"

#include "chanae/errors.hpp"

#include <cmath>

namespace chanae {

std::string_view layer_kind_name(LayerKind k) {
    switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::activation: return "activation";
    case LayerKind::dropout: return "dropout";
    case LayerKind::reshape: return "reshape";
    case LayerKind::normalize_power: return "normalize_power";
    }
    return "?";
}

const std::vector<LayerKind>& layer_registry() {
    static const std::vector<LayerKind> kinds = {LayerKind::dense,   LayerKind::conv1d,
                                                 LayerKind::activation, LayerKind::dropout,
                                                 LayerKind::reshape, LayerKind::normalize_power};
    return kinds;
}

Layer Layer::dense(std::size_t in, std::size_t out) {
    if (in == 0 || out == 0) throw ConfigError("dense layer needs non-zero widths");
    Layer l(LayerKind::dense);
    l.hyper_.units = out;
    l.params_.emplace_back("w", Tensor({in, out}));
    l.params_.emplace_back("b", Tensor({out}));
    return l;
}

Layer Layer::conv1d(std::size_t in_channels, std::size_t filters, std::size_t kernel_len) {
    if (in_channels == 0 || filters == 0 || kernel_len == 0)
        throw ConfigError("conv1d layer needs non-zero channels, filters and kernel length");
    Layer l(LayerKind::conv1d);
    l.hyper_.filters = filters;
    l.hyper_.kernel_len = kernel_len;
    l.params_.emplace_back("k", Tensor({filters, in_channels, kernel_len}));
    l.params_.emplace_back("b", Tensor({filters}));
    return l;
}

Layer Layer::activation(Activation a) {
    Layer l(LayerKind::activation);
    l.hyper_.activation = a;
    return l;
}

Layer Layer::dropout(double rate) {
    if (!(rate >= 0.0 && rate < 1.0))
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    Layer l(LayerKind::dropout);
    l.hyper_.rate = rate;
    return l;
}

Layer Layer::reshape(Shape per_example) {
    Layer l(LayerKind::reshape);
    l.hyper_.shape = std::move(per_example);
    return l;
}

Layer Layer::normalize_power() { return Layer(LayerKind::normalize_power); }

Parameter* Layer::find_param(std::string_view local_name) {
    for (auto& p : params_) {
        const auto dot = p.name.rfind('.');
        const std::string_view tail = dot == std::string::npos ? std::string_view(p.name)
                                                                : std::string_view(p.name).substr(dot + 1);
        if (tail == local_name) return &p;
    }
    return nullptr;
}

void Layer::initialize(Rng& rng) {
    if (kind_ != LayerKind::dense && kind_ != LayerKind::conv1d) return;
    Tensor& kernel = params_[0].value;
    double fan_in = 0.0, fan_out = 0.0;
    if (kind_ == LayerKind::dense) {
        fan_in = static_cast<double>(kernel.dim(0));
        fan_out = static_cast<double>(kernel.dim(1));
    } else {
        const double klen = static_cast<double>(kernel.dim(2));
        fan_in = static_cast<double>(kernel.dim(1)) * klen;
        fan_out = static_cast<double>(kernel.dim(0)) * klen;
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (double& v : kernel.values()) v = u(rng);
    params_[1].value.fill(0.0);
    for (auto& p : params_) p.zero_grad();
}

Var Layer::forward(Tape& tape, Var x, const ForwardContext& ctx) {
    switch (kind_) {
    case LayerKind::dense: {
        if (x.value().rank() != 2) x = chanae::reshape(x, {x.shape()[0], element_count(x.shape()) / x.shape()[0]});
        return chanae::dense(x, tape.param(params_[0]), tape.param(params_[1]));
    }
    case LayerKind::conv1d: return conv1d_same(x, tape.param(params_[0]), tape.param(params_[1]));
    case LayerKind::activation: return activate(x, hyper_.activation);
    case LayerKind::dropout:
        if (ctx.training && hyper_.rate > 0.0 && ctx.rng == nullptr)
            throw StateError("dropout in training mode needs a random stream");
        if (!ctx.training || hyper_.rate == 0.0) return x;
        return chanae::dropout(x, hyper_.rate, ctx.training, *ctx.rng);
    case LayerKind::reshape: {
        Shape s{x.shape()[0]};
        s.insert(s.end(), hyper_.shape.begin(), hyper_.shape.end());
        return chanae::reshape(x, std::move(s));
    }
    case LayerKind::normalize_power: return chanae::normalize_power(x);
    }
    throw StateError("unknown layer kind");
}

Network& Network::add(Layer layer) {
    layers_.push_back(std::move(layer));
    rename_params();
    return *this;
}

void Network::rename_params() {
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (auto& p : layers_[i].params()) {
            const auto dot = p.name.rfind('.');
            const std::string local = dot == std::string::npos ? p.name : p.name.substr(dot + 1);
            p.name = name_ + "." + std::to_string(i) + "." + local;
        }
}

void Network::initialize(Rng& rng) {
    for (auto& l : layers_) l.initialize(rng);
}

Var Network::forward(Tape& tape, Var x, const ForwardContext& ctx) {
    for (auto& l : layers_) x = l.forward(tape, x, ctx);
    return x;
}

std::vector<Parameter*> Network::parameters() {
    std::vector<Parameter*> out;
    for (auto& l : layers_)
        for (auto& p : l.params()) out.push_back(&p);
    return out;
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_)
        for (const auto& p : l.params()) n += p.value.size();
    return n;
}

void Network::set_dropout(double rate) {
    for (auto& l : layers_)
        if (l.kind() == LayerKind::dropout) {
            if (!(rate >= 0.0 && rate < 1.0))
                throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
            l.hyper().rate = rate;
        }
}

} // namespace chanae
