#pragma once

#include "chanae/autodiff.hpp"
#include "chanae/rng.hpp"
#include "chanae/tensor.hpp"

#include <numbers>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace chanae {

/// One complex baseband frame: row 0 in-phase, row 1 quadrature.
class SignalFrame {
  public:
    SignalFrame() = default;
    explicit SignalFrame(Tensor data);
    static SignalFrame from_iq(std::span<const double> i, std::span<const double> q);
    static SignalFrame zeros(std::size_t n) { return SignalFrame(Tensor({2, n})); }

    std::size_t samples() const { return data_.dim(1); }
    std::span<double> i() { return data_.values().subspan(0, samples()); }
    std::span<double> q() { return data_.values().subspan(samples(), samples()); }
    std::span<const double> i() const { return data_.values().subspan(0, samples()); }
    std::span<const double> q() const { return data_.values().subspan(samples(), samples()); }
    const Tensor& tensor() const { return data_; }
    Tensor& tensor() { return data_; }

    /// (1/N) sum(I^2 + Q^2)
    double average_power() const;

    bool operator==(const SignalFrame&) const = default;

  private:
    Tensor data_;
};

/// How snr_db maps to the per-component noise deviation.
enum class NoiseConvention {
    /// Per-component variance 10^(-snr/10)/2, total noise power 10^(-snr/10).
    split_variance,
    /// Per-component deviation 10^(-snr/10)/sqrt(2), the printed expression read
    /// as a standard deviation.
    literal_stddev,
};

NoiseConvention parse_noise_convention(std::string_view name);
std::string_view noise_convention_name(NoiseConvention c);

struct ChannelConfig {
    double snr_db = 5.0;
    bool awgn = true;
    NoiseConvention noise_convention = NoiseConvention::split_variance;

    bool time_offset = false;
    double sigma_t = 0.0;      // samples
    double sigma_t_rate = 0.0; // dilation spread around 1

    bool phase_offset = false;
    double phase_max = 2.0 * std::numbers::pi; // radians
    double sigma_f = 0.0;                      // radians per sample

    bool delay_spread = false;
    int n_taps = 1;

    void validate() const;
};

/// Realized random values applied to one frame; replaying it reproduces the
/// channel output exactly.
struct ChannelDraw {
    bool delay_spread = false;
    std::vector<double> taps;

    bool time_offset = false;
    double theta_t = 0.0;
    double theta_t_rate = 1.0;

    bool phase_offset = false;
    double theta_f = 0.0;
    double theta_f_rate = 0.0;

    bool awgn = false;
    Tensor noise; // [2, N]
};

/// Per-component noise standard deviation for a unit-power signal.
double noise_stddev(double snr_db, NoiseConvention convention = NoiseConvention::split_variance);

SignalFrame normalize_power(const SignalFrame& frame);

// Stochastic layers: draw, apply, and return the draw.
std::pair<SignalFrame, ChannelDraw> awgn(const SignalFrame& frame, double snr_db, Rng& rng,
                                         NoiseConvention convention = NoiseConvention::split_variance);
std::pair<SignalFrame, ChannelDraw> time_offset(const SignalFrame& frame, double sigma_t, double sigma_t_rate,
                                                Rng& rng);
std::pair<SignalFrame, ChannelDraw> phase_freq_offset(const SignalFrame& frame, double phase_max, double sigma_f,
                                                      Rng& rng);
std::pair<SignalFrame, ChannelDraw> delay_spread(const SignalFrame& frame, int n_taps, Rng& rng);

// Deterministic transforms with forced parameters.
SignalFrame add_noise(const SignalFrame& frame, const Tensor& noise);
/// Resamples each row at (k - shift) / rate by linear interpolation, zero outside [0, N-1].
SignalFrame apply_time_offset(const SignalFrame& frame, double shift, double rate);
/// Rotates sample k by phase + rate * k.
SignalFrame rotate(const SignalFrame& frame, double phase, double rate);
/// Causal FIR with real taps on both rows: y[k] = sum_j h[j] x[k-j].
SignalFrame apply_fir(const SignalFrame& frame, std::span<const double> taps);

/// Draws every enabled impairment for one frame of n samples.
ChannelDraw sample_draw(const ChannelConfig& cfg, std::size_t n, Rng& rng);
/// Applies a draw in channel order: delay spread, timing, phase/frequency, noise.
SignalFrame replay(const SignalFrame& frame, const ChannelDraw& draw);
/// normalize_power, then a fresh draw of every enabled impairment.
std::pair<SignalFrame, ChannelDraw> apply_channel(const SignalFrame& frame, const ChannelConfig& cfg, Rng& rng);

/// Graph op over frames [batch, 2, N] with one fixed draw per frame. Linear in
/// the input apart from the additive noise.
Var channel_forward(Var frames, std::span<const ChannelDraw> draws);

namespace kernels {

/// Row value at fractional position, zero outside [0, n-1].
double interpolate(std::span<const double> row, double position);

void fir(std::span<const double> in, std::span<double> out, std::span<const double> taps);
void fir_adjoint(std::span<const double> gout, std::span<double> gin, std::span<const double> taps);
void resample(std::span<const double> in, std::span<double> out, double shift, double rate);
void resample_adjoint(std::span<const double> gout, std::span<double> gin, double shift, double rate);
/// Rotates (i, q) pairs by phase + rate * k.
void rotate(std::span<const double> i_in, std::span<const double> q_in, std::span<double> i_out,
            std::span<double> q_out, double phase, double rate);

} // namespace kernels

} // namespace chanae
