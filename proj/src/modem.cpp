#include "chanae/modem.hpp"

#include "chanae/errors.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace chanae {

ModemKind parse_modem_kind(std::string_view s) {
    if (s == "dnn") return ModemKind::dnn;
    if (s == "cnn") return ModemKind::cnn;
    throw ConfigError("unknown arch kind '" + std::string(s) + "'");
}
std::string_view modem_kind_name(ModemKind k) { return k == ModemKind::dnn ? "dnn" : "cnn"; }

DecodeMode parse_decode_mode(std::string_view s) {
    if (s == "soft") return DecodeMode::soft;
    if (s == "hard") return DecodeMode::hard;
    throw ConfigError("unknown decode mode '" + std::string(s) + "'");
}
std::string_view decode_mode_name(DecodeMode m) { return m == DecodeMode::soft ? "soft" : "hard"; }

RtnMode parse_rtn_mode(std::string_view s) {
    if (s == "none") return RtnMode::none;
    if (s == "oracle") return RtnMode::oracle;
    if (s == "learned") return RtnMode::learned;
    throw ConfigError("unknown rtn mode '" + std::string(s) + "'");
}
std::string_view rtn_mode_name(RtnMode m) {
    switch (m) {
    case RtnMode::none: return "none";
    case RtnMode::oracle: return "oracle";
    case RtnMode::learned: return "learned";
    }
    return "?";
}

void ModemArch::validate() const {
    if (n_bits < 1) throw ConfigError("n_bits must be >= 1");
    if (samples_per_frame < 1) throw ConfigError("samples_per_frame must be >= 1");
    if (hidden < 1) throw ConfigError("hidden must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    parse_activation(activation);
    if (kind == ModemKind::cnn) {
        if (conv_filters < 1) throw ConfigError("conv_filters must be >= 1");
        if (kernel_len < 1 || kernel_len > samples_per_frame)
            throw ConfigError("kernel_len must lie in [1, samples_per_frame]");
        if (hidden % samples_per_frame != 0)
            throw ConfigError("hidden must be a multiple of samples_per_frame for the cnn arch");
    }
}

RtnLayout RtnLayout::for_channel(const ChannelConfig& cfg, int eq_taps) {
    RtnLayout l;
    l.phase = cfg.phase_offset;
    l.freq = cfg.phase_offset && cfg.sigma_f > 0.0;
    l.time = cfg.time_offset;
    l.equalizer = cfg.delay_spread;
    l.eq_taps = l.equalizer ? static_cast<std::size_t>(eq_taps > 0 ? eq_taps : cfg.n_taps) : 1;
    return l;
}

std::size_t RtnLayout::raw_size() const {
    return (phase ? 2 : 0) + (freq ? 1 : 0) + (time ? 1 : 0) + (equalizer ? eq_taps : 0);
}

namespace {

constexpr double kFreqScale = 0.01;

struct RtnWork {
    std::vector<double> derotated; // 2N
    std::vector<double> shifted;   // 2N
};

// Forward for one frame; fills work buffers for backward.
void rtn_frame(std::span<const double> in, std::span<double> out, std::size_t n, double phase, double freq,
               double shift, std::span<const double> taps, RtnWork& w) {
    w.derotated.assign(2 * n, 0.0);
    w.shifted.assign(2 * n, 0.0);
    kernels::rotate(in.subspan(0, n), in.subspan(n, n), std::span(w.derotated).subspan(0, n),
                    std::span(w.derotated).subspan(n, n), -phase, -freq);
    for (std::size_t r = 0; r < 2; ++r)
        kernels::resample(std::span<const double>(w.derotated).subspan(r * n, n),
                          std::span(w.shifted).subspan(r * n, n), -shift, 1.0);
    for (std::size_t r = 0; r < 2; ++r)
        kernels::fir(std::span<const double>(w.shifted).subspan(r * n, n), out.subspan(r * n, n), taps);
}

} // namespace

SignalFrame rtn_transform(const SignalFrame& frame, const RtnParams& params) {
    if (!std::isfinite(params.phase) || !std::isfinite(params.freq) || !std::isfinite(params.time_shift))
        throw InputError("rtn_transform: non-finite parameters");
    if (params.taps.empty()) throw InputError("rtn_transform: equalizer needs at least one tap");
    const std::size_t n = frame.samples();
    SignalFrame out = SignalFrame::zeros(n);
    RtnWork w;
    rtn_frame(frame.tensor().values(), out.tensor().values(), n, params.phase, params.freq, params.time_shift,
              params.taps, w);
    return out;
}

Var rtn_transform(Var frames, Var params, const RtnLayout& layout) {
    const Tensor& xv = frames.value();
    const Tensor& pv = params.value();
    if (xv.rank() != 3 || xv.dim(1) != 2)
        throw DimensionError("rtn_transform expects frames [batch,2,N], got " + shape_string(xv.shape()));
    const std::size_t batch = xv.dim(0), n = xv.dim(2), p = layout.packed_size();
    if (pv.rank() != 2 || pv.dim(0) != batch || pv.dim(1) != p)
        throw DimensionError("rtn_transform expects params [" + std::to_string(batch) + "," + std::to_string(p) +
                             "], got " + shape_string(pv.shape()));
    Tape& tape = *frames.tape;
    Tensor y(xv.shape());
    auto work = std::make_shared<std::vector<RtnWork>>(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const double* row = pv.data() + b * p;
        if (layout.time) {
            for (std::size_t k = 0; k < n; ++k) {
                const double pos = static_cast<double>(k) + row[2];
                tape.note_kink_distance(std::abs(pos - std::round(pos)));
                tape.note_region(static_cast<std::uint64_t>(static_cast<std::int64_t>(std::floor(pos))));
            }
        }
        rtn_frame(xv.values().subspan(b * 2 * n, 2 * n), y.values().subspan(b * 2 * n, 2 * n), n, row[0], row[1],
                  row[2], std::span<const double>(row + 3, layout.eq_taps), (*work)[b]);
    }
    const std::size_t xi = frames.id, pi = params.id;
    const std::size_t eq = layout.eq_taps;
    return tape.record(std::move(y), [=](Tape& t, std::size_t self) {
        const double corrupt = debug::backward_corrupted("rtn_transform") ? 1.01 : 1.0;
        const auto gy = t.grad(self);
        const Tensor& pval = t.value(pi);
        auto gx = t.grad(xi);
        auto gp = t.grad(pi);
        std::vector<double> g2(2 * n), g1(2 * n), g0(2 * n);
        for (std::size_t b = 0; b < batch; ++b) {
            const RtnWork& w = (*work)[b];
            const double* row = pval.data() + b * p;
            const std::span<const double> taps(row + 3, eq);
            const auto g3 = gy.subspan(b * 2 * n, 2 * n);
            double* gprow = gp.data() + b * p;

            // Equalizer.
            std::fill(g2.begin(), g2.end(), 0.0);
            for (std::size_t r = 0; r < 2; ++r) {
                const auto g3r = g3.subspan(r * n, n);
                const double* z2 = w.shifted.data() + r * n;
                for (std::size_t j = 0; j < eq; ++j) {
                    double acc = 0.0;
                    for (std::size_t k = j; k < n; ++k) acc += g3r[k] * z2[k - j];
                    gprow[3 + j] += corrupt * acc;
                }
                kernels::fir_adjoint(g3r, std::span(g2).subspan(r * n, n), taps);
            }

            // Fractional shift: position k + s reads z1 by linear interpolation.
            std::fill(g1.begin(), g1.end(), 0.0);
            double gs = 0.0;
            for (std::size_t r = 0; r < 2; ++r) {
                const std::span<const double> z1(w.derotated.data() + r * n, n);
                for (std::size_t k = 0; k < n; ++k) {
                    const double pos = static_cast<double>(k) + row[2];
                    const double fl = std::floor(pos);
                    gs += g2[r * n + k] * (kernels::interpolate(z1, fl + 1.0) - kernels::interpolate(z1, fl));
                }
                kernels::resample_adjoint(std::span<const double>(g2).subspan(r * n, n),
                                          std::span(g1).subspan(r * n, n), -row[2], 1.0);
            }
            gprow[2] += corrupt * gs;

            // Derotation by -(phase + freq k).
            double gphase = 0.0, gfreq = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double term = g1[k] * w.derotated[n + k] - g1[n + k] * w.derotated[k];
                gphase += term;
                gfreq += static_cast<double>(k) * term;
            }
            gprow[0] += corrupt * gphase;
            gprow[1] += corrupt * gfreq;
            kernels::rotate(std::span<const double>(g1).subspan(0, n), std::span<const double>(g1).subspan(n, n),
                            std::span(g0).subspan(0, n), std::span(g0).subspan(n, n), row[0], row[1]);
            for (std::size_t k = 0; k < 2 * n; ++k) gx[b * 2 * n + k] += corrupt * g0[k];
        }
    });
}

Var rtn_heads(Var raw, const RtnLayout& layout) {
    const Tensor& rv = raw.value();
    const std::size_t r = layout.raw_size(), p = layout.packed_size();
    if (rv.rank() != 2 || rv.dim(1) != r)
        throw DimensionError("rtn_heads expects [batch," + std::to_string(r) + "], got " + shape_string(rv.shape()));
    const std::size_t batch = rv.dim(0);
    Tape& tape = *raw.tape;
    Tensor out({batch, p});
    for (std::size_t b = 0; b < batch; ++b) {
        const double* in = rv.data() + b * r;
        double* o = out.data() + b * p;
        std::size_t c = 0;
        if (layout.phase) {
            const double u = 1.0 + in[c], v = in[c + 1];
            o[0] = std::atan2(v, u);
            tape.note_kink_distance(std::hypot(u, v));
            c += 2;
        }
        if (layout.freq) o[1] = kFreqScale * in[c++];
        if (layout.time) o[2] = in[c++];
        o[3] = 1.0;
        if (layout.equalizer)
            for (std::size_t j = 0; j < layout.eq_taps; ++j) o[3 + j] += in[c++];
    }
    const std::size_t ri = raw.id;
    return tape.record(std::move(out), [=](Tape& t, std::size_t self) {
        const auto g = t.grad(self);
        const Tensor& rval = t.value(ri);
        auto gr = t.grad(ri);
        for (std::size_t b = 0; b < batch; ++b) {
            const double* in = rval.data() + b * r;
            const double* go = g.data() + b * p;
            double* gi = gr.data() + b * r;
            std::size_t c = 0;
            if (layout.phase) {
                const double u = 1.0 + in[c], v = in[c + 1];
                const double d = u * u + v * v;
                gi[c] += go[0] * (-v / d);
                gi[c + 1] += go[0] * (u / d);
                c += 2;
            }
            if (layout.freq) gi[c++] += kFreqScale * go[1];
            if (layout.time) gi[c++] += go[2];
            if (layout.equalizer)
                for (std::size_t j = 0; j < layout.eq_taps; ++j) gi[c++] += go[3 + j];
        }
    });
}

Tensor pack_rtn_params(std::span<const RtnParams> params, const RtnLayout& layout) {
    const std::size_t p = layout.packed_size();
    Tensor out({params.size(), p});
    for (std::size_t b = 0; b < params.size(); ++b) {
        double* o = out.data() + b * p;
        o[0] = params[b].phase;
        o[1] = params[b].freq;
        o[2] = params[b].time_shift;
        if (params[b].taps.size() > layout.eq_taps)
            throw DimensionError("rtn params carry more taps than the layout holds");
        for (std::size_t j = 0; j < params[b].taps.size(); ++j) o[3 + j] = params[b].taps[j];
    }
    return out;
}

RtnParams unpack_rtn_params(std::span<const double> row, const RtnLayout& layout) {
    if (row.size() != layout.packed_size()) throw DimensionError("rtn params row has the wrong length");
    RtnParams out;
    out.phase = row[0];
    out.freq = row[1];
    out.time_shift = row[2];
    out.taps.assign(row.begin() + 3, row.end());
    return out;
}

RtnParams oracle_rtn_params(const ChannelDraw& draw, std::size_t eq_taps) {
    RtnParams p;
    if (draw.phase_offset) {
        p.phase = draw.theta_f;
        p.freq = draw.theta_f_rate;
    }
    if (draw.time_offset) p.time_shift = draw.theta_t;
    p.taps.assign(std::max<std::size_t>(eq_taps, 1), 0.0);
    p.taps[0] = 1.0;
    return p;
}

BitFrame slice_bits(std::span<const double> soft, double gamma) {
    BitFrame out(soft.size());
    for (std::size_t i = 0; i < soft.size(); ++i) out[i] = soft[i] < gamma ? 0 : 1;
    return out;
}

Tensor bits_to_tensor(std::span<const BitFrame> frames) {
    if (frames.empty()) throw InputError("empty bit batch");
    const std::size_t n = frames.front().size();
    Tensor t({frames.size(), n});
    for (std::size_t b = 0; b < frames.size(); ++b) {
        if (frames[b].size() != n) throw InputError("bit frames differ in length");
        for (std::size_t i = 0; i < n; ++i) t[b * n + i] = frames[b][i];
    }
    return t;
}

void AutoencoderSpec::validate() const {
    arch.validate();
    channel.validate();
    loss.validate();
    if (channel.delay_spread && channel.n_taps > arch.samples_per_frame)
        throw ConfigError("n_taps exceeds samples_per_frame");
    if (rtn == RtnMode::learned) {
        const RtnLayout l = RtnLayout::for_channel(channel, eq_taps);
        if (l.raw_size() == 0)
            throw ConfigError("learned rtn needs at least one enabled phase, timing or delay-spread impairment");
    }
}

ChannelAutoencoder ChannelAutoencoder::build(const AutoencoderSpec& spec, std::uint64_t init_seed) {
    spec.validate();
    ChannelAutoencoder ae;
    ae.spec_ = spec;
    ae.rtn_layout_ = RtnLayout::for_channel(spec.channel, spec.eq_taps);

    const ModemArch& a = spec.arch;
    const auto bits = static_cast<std::size_t>(a.n_bits);
    const auto n = static_cast<std::size_t>(a.samples_per_frame);
    const auto hidden = static_cast<std::size_t>(a.hidden);
    const Activation act = parse_activation(a.activation);
    const Activation out_act = spec.decode == DecodeMode::hard ? Activation::hard_sigmoid : Activation::linear;

    if (a.kind == ModemKind::dnn) {
        ae.encoder_.add(Layer::dense(bits, hidden))
            .add(Layer::activation(act))
            .add(Layer::dropout(a.dropout))
            .add(Layer::dense(hidden, 2 * n))
            .add(Layer::reshape({2, n}))
            .add(Layer::normalize_power());
        ae.decoder_.add(Layer::dense(2 * n, hidden))
            .add(Layer::activation(act))
            .add(Layer::dropout(a.dropout))
            .add(Layer::dense(hidden, bits))
            .add(Layer::activation(out_act));
    } else {
        // Dense hidden units folded into hidden/N channels of length N feed a
        // convolutional stack; the decoder mirrors it back to the same width.
        const std::size_t channels = hidden / n;
        const auto filters = static_cast<std::size_t>(a.conv_filters);
        const auto klen = static_cast<std::size_t>(a.kernel_len);
        ae.encoder_.add(Layer::dense(bits, hidden))
            .add(Layer::activation(act))
            .add(Layer::dropout(a.dropout))
            .add(Layer::reshape({channels, n}))
            .add(Layer::conv1d(channels, filters, klen))
            .add(Layer::activation(act))
            .add(Layer::conv1d(filters, 2, klen))
            .add(Layer::normalize_power());
        ae.decoder_.add(Layer::conv1d(2, filters, klen))
            .add(Layer::activation(act))
            .add(Layer::conv1d(filters, channels, klen))
            .add(Layer::activation(act))
            .add(Layer::dropout(a.dropout))
            .add(Layer::dense(hidden, bits))
            .add(Layer::activation(out_act));
    }
    if (spec.rtn == RtnMode::learned) {
        const std::size_t est_filters = 16, est_klen = std::min<std::size_t>(8, n), est_hidden = 64;
        ae.estimator_.add(Layer::conv1d(2, est_filters, est_klen))
            .add(Layer::activation(Activation::tanh))
            .add(Layer::dense(est_filters * n, est_hidden))
            .add(Layer::activation(Activation::tanh))
            .add(Layer::dense(est_hidden, ae.rtn_layout_.raw_size()));
    }

    Rng rng(init_seed);
    ae.encoder_.initialize(rng);
    ae.decoder_.initialize(rng);
    ae.estimator_.initialize(rng);
    return ae;
}

Var ChannelAutoencoder::encode(Tape& tape, Var bits, const ForwardContext& ctx) {
    const Tensor& b = bits.value();
    if (b.rank() != 2 || b.dim(1) != n_bits())
        throw InputError("encode: expected bits [batch," + std::to_string(n_bits()) + "], got " +
                         shape_string(b.shape()));
    // Antipodal input, so the all-zero frame does not encode to silence.
    Tensor x = b;
    for (double& v : x.values()) v = 2.0 * v - 1.0;
    return encoder_.forward(tape, tape.constant(std::move(x)), ctx);
}

Var ChannelAutoencoder::decode(Tape& tape, Var frames, const ForwardContext& ctx,
                               std::span<const ChannelDraw> draws) {
    const Tensor& f = frames.value();
    if (f.rank() != 3 || f.dim(1) != 2 || f.dim(2) != samples())
        throw InputError("decode: expected frames [batch,2," + std::to_string(samples()) + "], got " +
                         shape_string(f.shape()));
    Var x = frames;
    if (spec_.rtn == RtnMode::oracle) {
        if (draws.size() != f.dim(0)) throw StateError("oracle synchronization needs one channel draw per frame");
        std::vector<RtnParams> p;
        p.reserve(draws.size());
        for (const auto& d : draws) p.push_back(oracle_rtn_params(d, rtn_layout_.eq_taps));
        x = rtn_transform(x, tape.constant(pack_rtn_params(p, rtn_layout_)), rtn_layout_);
    } else if (spec_.rtn == RtnMode::learned) {
        Var raw = estimator_.forward(tape, x, ctx);
        x = rtn_transform(x, rtn_heads(raw, rtn_layout_), rtn_layout_);
    }
    return decoder_.forward(tape, x, ctx);
}

AutoencoderPass ChannelAutoencoder::forward(Tape& tape, const Tensor& bits, const ChannelConfig& channel,
                                            Rng& channel_rng, const ForwardContext& ctx,
                                            std::span<const ChannelDraw> replay) {
    AutoencoderPass pass;
    pass.tx = encode(tape, tape.constant(bits), ctx);
    const std::size_t batch = bits.dim(0);
    if (!replay.empty()) {
        if (replay.size() != batch) throw DimensionError("replay needs one draw per frame");
        pass.draws.assign(replay.begin(), replay.end());
    } else {
        pass.draws.reserve(batch);
        for (std::size_t b = 0; b < batch; ++b) pass.draws.push_back(sample_draw(channel, samples(), channel_rng));
    }
    pass.rx = channel_forward(pass.tx, pass.draws);
    pass.soft = decode(tape, pass.rx, ctx, pass.draws);
    return pass;
}

Tensor ChannelAutoencoder::encode(const Tensor& bits) {
    Tape tape;
    return encode(tape, tape.constant(bits), ForwardContext{}).value();
}

Tensor ChannelAutoencoder::decode(const Tensor& frames, std::span<const ChannelDraw> draws) {
    Tape tape;
    return decode(tape, tape.constant(frames), ForwardContext{}, draws).value();
}

RtnParams ChannelAutoencoder::rtn_estimate(const SignalFrame& frame) {
    if (spec_.rtn != RtnMode::learned) throw ConfigError("rtn_estimate: model has no learned estimator");
    if (frame.samples() != samples()) throw InputError("rtn_estimate: frame length mismatch");
    Tape tape;
    Var x = tape.constant(frame.tensor().reshaped({1, 2, samples()}));
    Var p = rtn_heads(estimator_.forward(tape, x, ForwardContext{}), rtn_layout_);
    return unpack_rtn_params(p.value().values(), rtn_layout_);
}

void ChannelAutoencoder::set_rtn_mode(RtnMode mode) {
    if (mode == RtnMode::learned && estimator_.layers().empty())
        throw ConfigError("model was built without a learned estimator");
    spec_.rtn = mode;
}

std::vector<Parameter*> ChannelAutoencoder::parameters() {
    std::vector<Parameter*> out = encoder_.parameters();
    for (Parameter* p : estimator_.parameters()) out.push_back(p);
    for (Parameter* p : decoder_.parameters()) out.push_back(p);
    return out;
}

std::size_t ChannelAutoencoder::parameter_count() const {
    return encoder_.parameter_count() + estimator_.parameter_count() + decoder_.parameter_count();
}

void ChannelAutoencoder::set_dropout(double rate) {
    encoder_.set_dropout(rate);
    decoder_.set_dropout(rate);
    spec_.arch.dropout = rate;
}

} // namespace chanae
