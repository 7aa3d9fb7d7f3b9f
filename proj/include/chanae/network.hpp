#pragma once

#include "chanae/autodiff.hpp"
#include "chanae/ops.hpp"
#include "chanae/rng.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace chanae {

enum class LayerKind { dense, conv1d, activation, dropout, reshape, normalize_power };

std::string_view layer_kind_name(LayerKind k);
/// Every layer kind a Network can contain.
const std::vector<LayerKind>& layer_registry();

struct LayerHyper {
    std::size_t units = 0;       // dense: output width
    std::size_t filters = 0;     // conv1d
    std::size_t kernel_len = 0;  // conv1d
    Activation activation = Activation::linear;
    double rate = 0.0;           // dropout
    Shape shape;                 // reshape target, excluding batch
};

struct ForwardContext {
    bool training = false;
    Rng* rng = nullptr; // required when training with dropout
};

class Layer {
  public:
    static Layer dense(std::size_t in, std::size_t out);
    static Layer conv1d(std::size_t in_channels, std::size_t filters, std::size_t kernel_len);
    static Layer activation(Activation a);
    static Layer dropout(double rate);
    static Layer reshape(Shape per_example);
    static Layer normalize_power();

    LayerKind kind() const { return kind_; }
    const LayerHyper& hyper() const { return hyper_; }
    LayerHyper& hyper() { return hyper_; }
    std::vector<Parameter>& params() { return params_; }
    const std::vector<Parameter>& params() const { return params_; }
    Parameter* find_param(std::string_view local_name);

    /// Glorot-uniform kernels in +-sqrt(6/(fan_in+fan_out)), zero biases.
    void initialize(Rng& rng);

    Var forward(Tape& tape, Var x, const ForwardContext& ctx);

  private:
    explicit Layer(LayerKind kind) : kind_(kind) {}

    LayerKind kind_;
    LayerHyper hyper_;
    std::vector<Parameter> params_;
};

/// Ordered stack of layers with qualified parameter names ("<name>.<index>.w").
class Network {
  public:
    Network() = default;
    explicit Network(std::string name) : name_(std::move(name)) {}

    Network& add(Layer layer);
    void initialize(Rng& rng);

    Var forward(Tape& tape, Var x, const ForwardContext& ctx);

    const std::string& name() const { return name_; }
    std::vector<Layer>& layers() { return layers_; }
    const std::vector<Layer>& layers() const { return layers_; }

    std::vector<Parameter*> parameters();
    std::size_t parameter_count() const;
    void set_dropout(double rate);

  private:
    void rename_params();

    std::string name_;
    std::vector<Layer> layers_;
};

} // namespace chanae
