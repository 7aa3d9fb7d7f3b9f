#pragma once

#include "chanae/rng.hpp"

#include <cstdint>
#include <vector>

namespace chanae {

struct BaselinePoint {
    double ebn0_db = 0.0;
    double pb = 0.0;
};

/// Complementary error function (libm-backed).
double erfc(double x);

/// 1/2 erfc(sqrt(Eb/N0))
double qpsk_ber(double ebn0_db);
/// 3/8 erfc(sqrt(4 Eb / (10 N0)))
double qam16_ber(double ebn0_db);

std::vector<BaselinePoint> qpsk_curve(const std::vector<double>& ebn0_db);
std::vector<BaselinePoint> qam16_curve(const std::vector<double>& ebn0_db);

struct MonteCarloBer {
    std::uint64_t bits_tested = 0;
    std::uint64_t bit_errors = 0;
    double ber() const {
        return bits_tested ? static_cast<double>(bit_errors) / static_cast<double>(bits_tested) : 0.0;
    }
};

/// Gray-mapped unit-energy QPSK over AWGN. The run is split into fixed chunks
/// with derived seeds so the result does not depend on `threads`.
MonteCarloBer qpsk_monte_carlo(double ebn0_db, std::uint64_t n_bits, std::uint64_t seed, unsigned threads = 1);

/// Per-sample SNR for a code carrying `bits_per_sample` bits per complex sample.
double snr_from_ebn0(double ebn0_db, double bits_per_sample);
double ebn0_from_snr(double snr_db, double bits_per_sample);

/// One binomial standard deviation of a BER estimate.
double binomial_sigma(double p, std::uint64_t n);

} // namespace chanae
