#include "chanae/channel.hpp"

#include "chanae/errors.hpp"

#include <cmath>
#include <string>

namespace chanae {

SignalFrame::SignalFrame(Tensor data) : data_(std::move(data)) {
    if (data_.rank() != 2 || data_.dim(0) != 2 || data_.dim(1) == 0)
        throw DimensionError("signal frame must be [2, N>=1], got " + shape_string(data_.shape()));
    for (double v : data_.values())
        if (!std::isfinite(v)) throw InputError("signal frame contains a non-finite value");
}

SignalFrame SignalFrame::from_iq(std::span<const double> i, std::span<const double> q) {
    if (i.size() != q.size()) throw DimensionError("I and Q rows differ in length");
    std::vector<double> v(i.begin(), i.end());
    v.insert(v.end(), q.begin(), q.end());
    return SignalFrame(Tensor({2, i.size()}, std::move(v)));
}

double SignalFrame::average_power() const {
    double e = 0.0;
    for (double v : data_.values()) e += v * v;
    return e / static_cast<double>(samples());
}

NoiseConvention parse_noise_convention(std::string_view name) {
    if (name == "split_variance") return NoiseConvention::split_variance;
    if (name == "literal_stddev") return NoiseConvention::literal_stddev;
    throw ConfigError("unknown noise_convention '" + std::string(name) + "'");
}

std::string_view noise_convention_name(NoiseConvention c) {
    return c == NoiseConvention::split_variance ? "split_variance" : "literal_stddev";
}

void ChannelConfig::validate() const {
    if (std::isnan(snr_db)) throw ConfigError("snr_db must be a number");
    if (!(sigma_t >= 0.0)) throw ConfigError("sigma_t must be >= 0");
    if (!(sigma_t_rate >= 0.0)) throw ConfigError("sigma_t_rate must be >= 0");
    if (!(sigma_f >= 0.0)) throw ConfigError("sigma_f must be >= 0");
    if (!(phase_max >= 0.0 && phase_max <= 2.0 * std::numbers::pi + 1e-12))
        throw ConfigError("phase_max must lie in [0, 2*pi]");
    if (n_taps < 1) throw ConfigError("n_taps must be >= 1");
}

double noise_stddev(double snr_db, NoiseConvention convention) {
    const double noise_power = std::pow(10.0, -snr_db / 10.0);
    if (convention == NoiseConvention::literal_stddev) return noise_power / std::sqrt(2.0);
    return std::sqrt(noise_power / 2.0);
}

namespace kernels {

double interpolate(std::span<const double> row, double position) {
    const double fl = std::floor(position);
    const double frac = position - fl;
    const auto at = [&](double j) {
        if (j < 0.0 || j > static_cast<double>(row.size() - 1)) return 0.0;
        return row[static_cast<std::size_t>(j)];
    };
    return (1.0 - frac) * at(fl) + (frac == 0.0 ? 0.0 : frac * at(fl + 1.0));
}

void fir(std::span<const double> in, std::span<double> out, std::span<const double> taps) {
    const std::size_t n = in.size();
    for (std::size_t k = 0; k < n; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < taps.size() && j <= k; ++j) acc += taps[j] * in[k - j];
        out[k] = acc;
    }
}

void fir_adjoint(std::span<const double> gout, std::span<double> gin, std::span<const double> taps) {
    const std::size_t n = gout.size();
    for (std::size_t m = 0; m < n; ++m) {
        double acc = 0.0;
        for (std::size_t j = 0; j < taps.size() && m + j < n; ++j) acc += taps[j] * gout[m + j];
        gin[m] += acc;
    }
}

void resample(std::span<const double> in, std::span<double> out, double shift, double rate) {
    for (std::size_t k = 0; k < out.size(); ++k)
        out[k] = interpolate(in, (static_cast<double>(k) - shift) / rate);
}

void resample_adjoint(std::span<const double> gout, std::span<double> gin, double shift, double rate) {
    const double last = static_cast<double>(gin.size() - 1);
    for (std::size_t k = 0; k < gout.size(); ++k) {
        const double p = (static_cast<double>(k) - shift) / rate;
        const double fl = std::floor(p);
        const double frac = p - fl;
        if (fl >= 0.0 && fl <= last) gin[static_cast<std::size_t>(fl)] += (1.0 - frac) * gout[k];
        if (frac != 0.0 && fl + 1.0 >= 0.0 && fl + 1.0 <= last)
            gin[static_cast<std::size_t>(fl + 1.0)] += frac * gout[k];
    }
}

void rotate(std::span<const double> i_in, std::span<const double> q_in, std::span<double> i_out,
            std::span<double> q_out, double phase, double rate) {
    for (std::size_t k = 0; k < i_in.size(); ++k) {
        const double phi = phase + rate * static_cast<double>(k);
        const double c = std::cos(phi), s = std::sin(phi);
        const double ii = i_in[k], qq = q_in[k];
        i_out[k] = ii * c - qq * s;
        q_out[k] = ii * s + qq * c;
    }
}

} // namespace kernels

SignalFrame normalize_power(const SignalFrame& frame) {
    const double p = frame.average_power();
    if (!(p > 0.0)) throw DegenerateInputError("normalize_power: frame has zero power");
    SignalFrame out = frame;
    const double s = 1.0 / std::sqrt(p);
    for (double& v : out.tensor().values()) v *= s;
    return out;
}

SignalFrame add_noise(const SignalFrame& frame, const Tensor& noise) {
    if (noise.shape() != frame.tensor().shape())
        throw DimensionError("noise shape " + shape_string(noise.shape()) + " does not match frame");
    SignalFrame out = frame;
    auto v = out.tensor().values();
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += noise[k];
    return out;
}

SignalFrame apply_time_offset(const SignalFrame& frame, double shift, double rate) {
    if (!(rate > 0.0)) throw InputError("time dilation rate must be positive");
    SignalFrame out = SignalFrame::zeros(frame.samples());
    kernels::resample(frame.i(), out.i(), shift, rate);
    kernels::resample(frame.q(), out.q(), shift, rate);
    return out;
}

SignalFrame rotate(const SignalFrame& frame, double phase, double rate) {
    SignalFrame out = SignalFrame::zeros(frame.samples());
    kernels::rotate(frame.i(), frame.q(), out.i(), out.q(), phase, rate);
    return out;
}

SignalFrame apply_fir(const SignalFrame& frame, std::span<const double> taps) {
    if (taps.empty()) throw ConfigError("FIR needs at least one tap");
    if (taps.size() > frame.samples())
        throw ConfigError("n_taps (" + std::to_string(taps.size()) + ") exceeds frame length (" +
                          std::to_string(frame.samples()) + ")");
    SignalFrame out = SignalFrame::zeros(frame.samples());
    kernels::fir(frame.i(), out.i(), taps);
    kernels::fir(frame.q(), out.q(), taps);
    return out;
}

namespace {

Tensor draw_noise(std::size_t n, double snr_db, NoiseConvention convention, Rng& rng) {
    Tensor noise({2, n});
    const double sd = noise_stddev(snr_db, convention);
    if (sd == 0.0) return noise;
    std::normal_distribution<double> g(0.0, sd);
    for (double& v : noise.values()) v = g(rng);
    return noise;
}

double draw_rate(double sigma_t_rate, Rng& rng) {
    if (sigma_t_rate == 0.0) return 1.0;
    std::normal_distribution<double> g(1.0, sigma_t_rate);
    double r = g(rng);
    while (r <= 0.1) r = g(rng);
    return r;
}

std::vector<double> draw_taps(int n_taps, Rng& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> h(static_cast<std::size_t>(n_taps));
    for (double& v : h) v = u(rng);
    return h;
}

double draw_phase(double phase_max, Rng& rng) {
    return phase_max > 0.0 ? std::uniform_real_distribution<double>(0.0, phase_max)(rng) : 0.0;
}

double draw_spread(double sigma, Rng& rng) {
    return sigma > 0.0 ? std::normal_distribution<double>(0.0, sigma)(rng) : 0.0;
}

} // namespace

std::pair<SignalFrame, ChannelDraw> awgn(const SignalFrame& frame, double snr_db, Rng& rng,
                                         NoiseConvention convention) {
    ChannelDraw d;
    d.awgn = true;
    d.noise = draw_noise(frame.samples(), snr_db, convention, rng);
    return {add_noise(frame, d.noise), std::move(d)};
}

std::pair<SignalFrame, ChannelDraw> time_offset(const SignalFrame& frame, double sigma_t, double sigma_t_rate,
                                                Rng& rng) {
    ChannelDraw d;
    d.time_offset = true;
    d.theta_t = draw_spread(sigma_t, rng);
    d.theta_t_rate = draw_rate(sigma_t_rate, rng);
    return {apply_time_offset(frame, d.theta_t, d.theta_t_rate), std::move(d)};
}

std::pair<SignalFrame, ChannelDraw> phase_freq_offset(const SignalFrame& frame, double phase_max, double sigma_f,
                                                      Rng& rng) {
    ChannelDraw d;
    d.phase_offset = true;
    d.theta_f = draw_phase(phase_max, rng);
    d.theta_f_rate = draw_spread(sigma_f, rng);
    return {rotate(frame, d.theta_f, d.theta_f_rate), std::move(d)};
}

std::pair<SignalFrame, ChannelDraw> delay_spread(const SignalFrame& frame, int n_taps, Rng& rng) {
    if (n_taps < 1 || static_cast<std::size_t>(n_taps) > frame.samples())
        throw ConfigError("n_taps must lie in [1, N]");
    ChannelDraw d;
    d.delay_spread = true;
    d.taps = draw_taps(n_taps, rng);
    return {apply_fir(frame, d.taps), std::move(d)};
}

ChannelDraw sample_draw(const ChannelConfig& cfg, std::size_t n, Rng& rng) {
    ChannelDraw d;
    if (cfg.delay_spread) {
        if (static_cast<std::size_t>(cfg.n_taps) > n)
            throw ConfigError("n_taps (" + std::to_string(cfg.n_taps) + ") exceeds frame length (" +
                              std::to_string(n) + ")");
        d.delay_spread = true;
        d.taps = draw_taps(cfg.n_taps, rng);
    }
    if (cfg.time_offset) {
        d.time_offset = true;
        d.theta_t = draw_spread(cfg.sigma_t, rng);
        d.theta_t_rate = draw_rate(cfg.sigma_t_rate, rng);
    }
    if (cfg.phase_offset) {
        d.phase_offset = true;
        d.theta_f = draw_phase(cfg.phase_max, rng);
        d.theta_f_rate = draw_spread(cfg.sigma_f, rng);
    }
    if (cfg.awgn) {
        d.awgn = true;
        d.noise = draw_noise(n, cfg.snr_db, cfg.noise_convention, rng);
    }
    return d;
}

SignalFrame replay(const SignalFrame& frame, const ChannelDraw& draw) {
    SignalFrame x = frame;
    if (draw.delay_spread) x = apply_fir(x, draw.taps);
    if (draw.time_offset) x = apply_time_offset(x, draw.theta_t, draw.theta_t_rate);
    if (draw.phase_offset) x = rotate(x, draw.theta_f, draw.theta_f_rate);
    if (draw.awgn) x = add_noise(x, draw.noise);
    return x;
}

std::pair<SignalFrame, ChannelDraw> apply_channel(const SignalFrame& frame, const ChannelConfig& cfg, Rng& rng) {
    cfg.validate();
    const SignalFrame normalized = normalize_power(frame);
    ChannelDraw d = sample_draw(cfg, frame.samples(), rng);
    SignalFrame out = replay(normalized, d);
    return {std::move(out), std::move(d)};
}

Var channel_forward(Var frames, std::span<const ChannelDraw> draws) {
    const Tensor& xv = frames.value();
    if (xv.rank() != 3 || xv.dim(1) != 2)
        throw DimensionError("channel expects frames [batch,2,N], got " + shape_string(xv.shape()));
    const std::size_t batch = xv.dim(0), n = xv.dim(2);
    if (draws.size() != batch)
        throw DimensionError("channel: " + std::to_string(draws.size()) + " draws for " + std::to_string(batch) +
                             " frames");
    Tensor y(xv.shape());
    for (std::size_t b = 0; b < batch; ++b) {
        const auto src = xv.values().subspan(b * 2 * n, 2 * n);
        SignalFrame f(Tensor({2, n}, std::vector<double>(src.begin(), src.end())));
        f = replay(f, draws[b]);
        std::copy(f.tensor().values().begin(), f.tensor().values().end(), y.data() + b * 2 * n);
    }
    const std::size_t xi = frames.id;
    std::vector<ChannelDraw> kept(draws.begin(), draws.end());
    return frames.tape->record(std::move(y), [xi, batch, n, kept = std::move(kept)](Tape& t, std::size_t self) {
        const double corrupt = debug::backward_corrupted("channel") ? 1.01 : 1.0;
        const auto gy = t.grad(self);
        auto gx = t.grad(xi);
        std::vector<double> a(2 * n), b2(2 * n);
        for (std::size_t b = 0; b < batch; ++b) {
            const ChannelDraw& d = kept[b];
            std::copy(gy.begin() + static_cast<std::ptrdiff_t>(b * 2 * n),
                      gy.begin() + static_cast<std::ptrdiff_t>((b + 1) * 2 * n), a.begin());
            std::span<double> ai(a.data(), n), aq(a.data() + n, n);
            std::span<double> bi(b2.data(), n), bq(b2.data() + n, n);
            // Adjoints in reverse channel order; noise contributes identity.
            if (d.phase_offset) {
                kernels::rotate(ai, aq, bi, bq, -d.theta_f, -d.theta_f_rate);
                a.swap(b2);
                ai = {a.data(), n}, aq = {a.data() + n, n};
                bi = {b2.data(), n}, bq = {b2.data() + n, n};
            }
            if (d.time_offset) {
                std::fill(b2.begin(), b2.end(), 0.0);
                kernels::resample_adjoint(ai, bi, d.theta_t, d.theta_t_rate);
                kernels::resample_adjoint(aq, bq, d.theta_t, d.theta_t_rate);
                a.swap(b2);
                ai = {a.data(), n}, aq = {a.data() + n, n};
                bi = {b2.data(), n}, bq = {b2.data() + n, n};
            }
            if (d.delay_spread) {
                std::fill(b2.begin(), b2.end(), 0.0);
                kernels::fir_adjoint(ai, bi, d.taps);
                kernels::fir_adjoint(aq, bq, d.taps);
                a.swap(b2);
            }
            for (std::size_t k = 0; k < 2 * n; ++k) gx[b * 2 * n + k] += corrupt * a[k];
        }
    });
}

} // namespace chanae
