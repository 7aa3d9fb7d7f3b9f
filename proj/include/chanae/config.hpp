#pragma once

#include "chanae/experiment.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace chanae {

/// Everything one CLI invocation needs. Seeds: dataset, train (also fixes
/// the initial weights) and sweep.
struct RunConfig {
    Experiment experiment;
    std::filesystem::path out_dir = "out";
    std::vector<double> study_grid;
    /// Non-fatal notes from parsing, e.g. defaulted seeds.
    std::vector<std::string> warnings;

    void validate() const;
    /// Sets every seed to `seed`.
    void override_seed(std::uint64_t seed);
};

/// Parses a JSON document. Unknown keys and wrong types raise ConfigError
/// naming the dotted key path; the result is fully validated.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical JSON with every field spelled out.
std::string run_config_json(const RunConfig& cfg);
/// 16 hex digits of FNV-1a over the canonical JSON, leaving out out_dir.
std::string config_hash(const RunConfig& cfg);

/// Parameters plus the spec and seed needed to rebuild the model.
void save_checkpoint(const std::filesystem::path& path, const ChannelAutoencoder& model, std::uint64_t seed);
std::string checkpoint_json(const ChannelAutoencoder& model, std::uint64_t seed);

struct LoadedCheckpoint {
    ChannelAutoencoder model;
    std::uint64_t seed = 0;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Throws ConfigError naming the first architecture field that differs.
void require_same_arch(const AutoencoderSpec& expected, const AutoencoderSpec& actual);

} // namespace chanae
