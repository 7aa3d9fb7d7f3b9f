#include "chanae/baselines.hpp"

#include "chanae/errors.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

namespace chanae {

double erfc(double x) { return std::erfc(x); }

double qpsk_ber(double ebn0_db) {
    const double ebn0 = std::pow(10.0, ebn0_db / 10.0);
    return 0.5 * erfc(std::sqrt(ebn0));
}

double qam16_ber(double ebn0_db) {
    const double ebn0 = std::pow(10.0, ebn0_db / 10.0);
    return 0.375 * erfc(std::sqrt(0.4 * ebn0));
}

std::vector<BaselinePoint> qpsk_curve(const std::vector<double>& ebn0_db) {
    std::vector<BaselinePoint> out;
    for (double e : ebn0_db) out.push_back({e, qpsk_ber(e)});
    return out;
}

std::vector<BaselinePoint> qam16_curve(const std::vector<double>& ebn0_db) {
    std::vector<BaselinePoint> out;
    for (double e : ebn0_db) out.push_back({e, qam16_ber(e)});
    return out;
}

double snr_from_ebn0(double ebn0_db, double bits_per_sample) {
    return ebn0_db + 10.0 * std::log10(bits_per_sample);
}

double ebn0_from_snr(double snr_db, double bits_per_sample) {
    return snr_db - 10.0 * std::log10(bits_per_sample);
}

double binomial_sigma(double p, std::uint64_t n) {
    return n ? std::sqrt(p * (1.0 - p) / static_cast<double>(n)) : 0.0;
}

namespace {

constexpr std::uint64_t kChunkBits = 1u << 16;

std::uint64_t count_errors(double noise_sd, std::uint64_t bits, std::uint64_t seed) {
    Rng rng(seed);
    std::bernoulli_distribution coin(0.5);
    std::normal_distribution<double> noise(0.0, noise_sd > 0.0 ? noise_sd : 1.0);
    const double a = 1.0 / std::sqrt(2.0);
    std::uint64_t errors = 0;
    for (std::uint64_t k = 0; k < bits; k += 2) {
        // Gray mapping per axis: bit 0 -> +a, bit 1 -> -a.
        const bool b0 = coin(rng), b1 = coin(rng);
        double i = b0 ? -a : a;
        double q = b1 ? -a : a;
        if (noise_sd > 0.0) {
            i += noise(rng);
            q += noise(rng);
        }
        errors += static_cast<std::uint64_t>((i < 0.0) != b0) + static_cast<std::uint64_t>((q < 0.0) != b1);
    }
    return errors;
}

} // namespace

MonteCarloBer qpsk_monte_carlo(double ebn0_db, std::uint64_t n_bits, std::uint64_t seed, unsigned threads) {
    if (n_bits % 2 != 0) throw InputError("qpsk_monte_carlo: n_bits must be even");
    if (n_bits == 0) throw InputError("qpsk_monte_carlo: n_bits must be positive");
    // Unit symbol energy carries two bits: Eb = 1/2, per-component variance N0/2.
    double noise_sd = 0.0;
    if (!(std::isinf(ebn0_db) && ebn0_db > 0.0)) {
        const double n0 = 0.5 / std::pow(10.0, ebn0_db / 10.0);
        noise_sd = std::sqrt(n0 / 2.0);
    }
    const std::uint64_t chunks = (n_bits + kChunkBits - 1) / kChunkBits;
    std::vector<std::uint64_t> errors(chunks, 0);
    const auto run_chunk = [&](std::uint64_t c) {
        const std::uint64_t bits = std::min(kChunkBits, n_bits - c * kChunkBits);
        errors[c] = count_errors(noise_sd, bits, derive_seed(seed, c));
    };
    threads = std::max(1u, threads);
    if (threads == 1 || chunks == 1) {
        for (std::uint64_t c = 0; c < chunks; ++c) run_chunk(c);
    } else {
        std::vector<std::jthread> pool;
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back([&, w] {
                for (std::uint64_t c = w; c < chunks; c += threads) run_chunk(c);
            });
    }
    MonteCarloBer out;
    out.bits_tested = n_bits;
    for (auto e : errors) out.bit_errors += e;
    return out;
}

} // namespace chanae
