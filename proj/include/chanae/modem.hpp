#pragma once

#include "chanae/autodiff.hpp"
#include "chanae/channel.hpp"
#include "chanae/loss.hpp"
#include "chanae/network.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chanae {

using BitFrame = std::vector<std::uint8_t>;

enum class ModemKind { dnn, cnn };
enum class DecodeMode { soft, hard };
/// Receiver synchronization stage ahead of the decoder.
enum class RtnMode { none, oracle, learned };

ModemKind parse_modem_kind(std::string_view s);
std::string_view modem_kind_name(ModemKind k);
DecodeMode parse_decode_mode(std::string_view s);
std::string_view decode_mode_name(DecodeMode m);
RtnMode parse_rtn_mode(std::string_view s);
std::string_view rtn_mode_name(RtnMode m);

struct ModemArch {
    ModemKind kind = ModemKind::cnn;
    int n_bits = 128;
    int samples_per_frame = 128;
    int hidden = 512;
    int conv_filters = 16;
    int kernel_len = 8;
    std::string activation = "tanh";
    double dropout = 0.0;

    void validate() const;
};

/// Synchronization parameters for one frame.
struct RtnParams {
    double phase = 0.0;      // radians
    double freq = 0.0;       // radians per sample
    double time_shift = 0.0; // samples
    std::vector<double> taps{1.0};
};

/// Which estimator heads are live. The packed parameter row is always
/// [phase, freq, time_shift, taps...] with `eq_taps` taps.
struct RtnLayout {
    bool phase = false;
    bool freq = false;
    bool time = false;
    bool equalizer = false;
    std::size_t eq_taps = 1;

    static RtnLayout for_channel(const ChannelConfig& cfg, int eq_taps = 0);
    std::size_t packed_size() const { return 3 + eq_taps; }
    /// Raw estimator outputs: 2 for phase (a rotation vector), 1 each for
    /// frequency and time, eq_taps for the equalizer.
    std::size_t raw_size() const;
};

/// Exact inverse transforms, in reverse channel order: derotation by
/// -(phase + freq k), shift by -time_shift, then FIR equalization.
SignalFrame rtn_transform(const SignalFrame& frame, const RtnParams& params);
/// Graph form over frames [batch,2,N] and packed params [batch, 3+eq_taps];
/// differentiable with respect to both.
Var rtn_transform(Var frames, Var params, const RtnLayout& layout);
/// Raw estimator outputs [batch, raw_size] to packed params. At raw == 0 the
/// transform is the identity.
Var rtn_heads(Var raw, const RtnLayout& layout);
Tensor pack_rtn_params(std::span<const RtnParams> params, const RtnLayout& layout);
RtnParams unpack_rtn_params(std::span<const double> row, const RtnLayout& layout);
/// Parameters that exactly undo a draw's rotation and integer/fractional shift.
RtnParams oracle_rtn_params(const ChannelDraw& draw, std::size_t eq_taps);

/// b = 0 if l < gamma, else 1.
BitFrame slice_bits(std::span<const double> soft, double gamma);

Tensor bits_to_tensor(std::span<const BitFrame> frames);

struct AutoencoderSpec {
    ModemArch arch;
    ChannelConfig channel;
    LossSpec loss;
    DecodeMode decode = DecodeMode::soft;
    RtnMode rtn = RtnMode::none;
    int eq_taps = 0; // 0 follows channel.n_taps

    void validate() const;
};

struct AutoencoderPass {
    Var soft;
    Var tx;
    Var rx;
    std::vector<ChannelDraw> draws;
};

/// Encoder, channel impairments, optional synchronization stage, decoder.
class ChannelAutoencoder {
  public:
    static ChannelAutoencoder build(const AutoencoderSpec& spec, std::uint64_t init_seed);

    const AutoencoderSpec& spec() const { return spec_; }
    std::size_t n_bits() const { return static_cast<std::size_t>(spec_.arch.n_bits); }
    std::size_t samples() const { return static_cast<std::size_t>(spec_.arch.samples_per_frame); }
    RtnLayout rtn_layout() const { return rtn_layout_; }

    /// Full pipeline on bits [batch, n_bits]. Fresh draws come from
    /// `channel_rng` unless `replay` supplies one draw per frame.
    AutoencoderPass forward(Tape& tape, const Tensor& bits, const ChannelConfig& channel, Rng& channel_rng,
                            const ForwardContext& ctx, std::span<const ChannelDraw> replay = {});

    Var encode(Tape& tape, Var bits, const ForwardContext& ctx);
    /// Receiver half: synchronization stage (if any), then decoder. Oracle mode
    /// needs the draws that produced `frames`.
    Var decode(Tape& tape, Var frames, const ForwardContext& ctx, std::span<const ChannelDraw> draws = {});

    /// Evaluation-mode conveniences on plain tensors.
    Tensor encode(const Tensor& bits);
    Tensor decode(const Tensor& frames, std::span<const ChannelDraw> draws = {});
    RtnParams rtn_estimate(const SignalFrame& frame);

    Network& encoder() { return encoder_; }
    Network& decoder() { return decoder_; }
    Network& estimator() { return estimator_; }
    const Network& encoder() const { return encoder_; }
    const Network& decoder() const { return decoder_; }
    const Network& estimator() const { return estimator_; }

    std::vector<Parameter*> parameters();
    std::size_t parameter_count() const;
    void set_dropout(double rate);
    /// Switches the synchronization stage, e.g. to oracle parameters for an
    /// evaluation channel. Learned mode needs an estimator built with the model.
    void set_rtn_mode(RtnMode mode);

  private:
    AutoencoderSpec spec_;
    RtnLayout rtn_layout_;
    Network encoder_{"encoder"};
    Network decoder_{"decoder"};
    Network estimator_{"estimator"};
};

} // namespace chanae
