#pragma once

#include "chanae/modem.hpp"
#include "chanae/optimizer.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace chanae {

struct Dataset {
    std::vector<BitFrame> train;
    std::vector<BitFrame> test;
    std::uint64_t seed = 0;
    int n_bits = 0;
};

/// Fair i.i.d. bits; the first 80% (rounded down) of frames in generation
/// order form the training split.
Dataset generate_dataset(std::size_t n_examples, int n_bits, std::uint64_t seed);

struct TrainConfig {
    std::size_t examples = 10000;
    int epochs = 20;
    int batch_size = 64;
    LossSpec loss;
    OptimizerConfig optimizer;
    double dropout = 0.0;
    double train_snr_db = 5.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainHistory {
    double initial_val_loss = 0.0;
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;

    double final_val_loss() const { return epochs.empty() ? initial_val_loss : epochs.back().val_loss; }
    double best_val_loss() const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch training on `data.train` with fresh channel draws every epoch
/// (the model's channel at cfg.train_snr_db). The validation loss uses a fixed
/// channel stream so epochs are comparable. Leaves the model at the epoch with
/// the lowest validation loss.
TrainHistory train(ChannelAutoencoder& model, const Dataset& data, const TrainConfig& cfg,
                   const EpochCallback& on_epoch = {});

/// Mean loss over `frames` in evaluation mode with channel draws from `seed`.
double evaluate_loss(ChannelAutoencoder& model, std::span<const BitFrame> frames, const ChannelConfig& channel,
                     const LossSpec& loss, std::uint64_t seed);

struct SweepConfig {
    std::vector<double> snr_db{-10, -5, 0, 5, 10, 15, 20};
    std::uint64_t min_errors = 100;
    std::uint64_t max_bits = 1000000;
    std::uint64_t seed = 0;
    std::size_t batch_frames = 128;
    double gamma = 0.5;

    void validate() const;
};

struct BerPoint {
    double snr_db = 0.0;
    std::uint64_t bits_tested = 0;
    std::uint64_t bit_errors = 0;
    /// Hit max_bits without a single error.
    bool zero_errors = false;
    /// Set on analytic baseline rows, which carry no counts.
    std::optional<double> analytic;

    double ber() const {
        return analytic ? *analytic : static_cast<double>(bit_errors) / static_cast<double>(bits_tested);
    }
    /// Binomial variance of the estimate at its own rate.
    double variance() const;
};

struct BerCurve {
    std::string label;
    std::string config_hash;
    std::vector<BerPoint> points;
};

/// Streams fresh random frames through encoder, channel (at each SNR),
/// synchronization and decoder until min_errors errors or max_bits bits.
/// Points run concurrently on independent seeds; see evaluation_threads().
BerCurve ber_sweep(ChannelAutoencoder& model, const ChannelConfig& channel, const SweepConfig& cfg,
                   std::string label = "model");

/// CHANAE_THREADS if set, else the hardware concurrency.
unsigned evaluation_threads();

/// ber[i+1] <= ber[i] + k * sqrt(var[i] + var[i+1]) for every consecutive pair.
bool non_increasing_within(const BerCurve& curve, double k = 3.0);

/// One training + sweep recipe. The three seeds fix every emitted number.
struct Experiment {
    AutoencoderSpec spec;
    TrainConfig train;
    SweepConfig sweep;
    std::uint64_t dataset_seed = 0;

    std::uint64_t init_seed() const;
};

struct ExperimentResult {
    ChannelAutoencoder model;
    TrainHistory history;
    BerCurve curve;
};

/// Builds, trains on a fresh dataset and sweeps over the spec's channel.
ExperimentResult run_experiment(const Experiment& e, const EpochCallback& on_epoch = {});
ChannelAutoencoder train_model(const Experiment& e, TrainHistory* history = nullptr,
                               const EpochCallback& on_epoch = {});

enum class StudyKind { training_snr, dropout, delay_spread, random_phase };

StudyKind parse_study_kind(std::string_view s);
std::string_view study_kind_name(StudyKind k);

/// The experiment for one grid value of a study.
Experiment study_variant(const Experiment& base, StudyKind kind, double value);

struct StudyEntry {
    double value = 0.0;
    TrainHistory history;
    BerCurve curve;
};

/// One trained model per grid value, all sharing the dataset and seeds.
std::vector<StudyEntry> run_study(const Experiment& base, StudyKind kind, std::span<const double> grid,
                                  const EpochCallback& on_epoch = {});

/// Baseline rows for a learned-code sweep: the SNR column is the sweep SNR
/// and the probability is evaluated at the matching Eb/N0 for a code with
/// n_bits / samples bits per complex sample. Counts are zero.
BerCurve baseline_curve(std::string_view kind, std::span<const double> snr_db, double bits_per_sample);

// CSV artifacts. Floats carry 17 significant digits.
std::string format_double(double v);
void write_ber_csv(const std::filesystem::path& path, std::span<const BerCurve> curves);
void write_history_csv(const std::filesystem::path& path, const TrainHistory& history);

struct BasisRow {
    std::string layer;
    std::size_t filter = 0;
    std::size_t channel = 0;
    std::vector<double> taps;
};

/// Kernels of the encoder's final convolution, the one that emits I/Q.
std::vector<BasisRow> encoder_basis(const ChannelAutoencoder& model);
void write_basis_csv(const std::filesystem::path& path, std::span<const BasisRow> rows);
std::vector<BasisRow> read_basis_csv(const std::filesystem::path& path);

struct SignalTrace {
    SignalFrame tx;
    SignalFrame rx;
};

/// Encodes one frame and passes it through one channel draw from `seed`.
SignalTrace trace_signals(ChannelAutoencoder& model, const BitFrame& bits, const ChannelConfig& channel,
                          std::uint64_t seed);
void write_signals_csv(const std::filesystem::path& path, const SignalTrace& trace);

} // namespace chanae
