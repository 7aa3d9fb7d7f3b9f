#include "chanae/config.hpp"
#include "chanae/errors.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace chanae;
namespace fs = std::filesystem;

namespace {

constexpr const char* kSeeds = R"("seeds": {"dataset": 1, "train": 2, "sweep": 3})";

std::string with_seeds(const std::string& body) {
    return "{" + body + (body.empty() ? "" : ", ") + kSeeds + "}";
}

std::string error_of(const std::string& text) {
    try {
        parse_run_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

AutoencoderSpec small_spec(ModemKind kind) {
    AutoencoderSpec s;
    s.arch.kind = kind;
    s.arch.n_bits = 8;
    s.arch.samples_per_frame = 8;
    s.arch.hidden = 16;
    s.arch.conv_filters = 3;
    s.arch.kernel_len = 3;
    return s;
}

std::vector<double> flat_params(ChannelAutoencoder& m) {
    std::vector<double> v;
    for (Parameter* p : m.parameters()) v.insert(v.end(), p->value.values().begin(), p->value.values().end());
    return v;
}

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("chanae_config_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

} // namespace

TEST(RunConfig, EmptyDocumentGivesDefaultsAndSeedWarnings) {
    const RunConfig c = parse_run_config("{}");
    EXPECT_EQ(c.experiment.spec.arch.kind, ModemKind::cnn);
    EXPECT_EQ(c.experiment.spec.arch.n_bits, 128);
    EXPECT_EQ(c.experiment.train.examples, 10000u);
    EXPECT_EQ(c.experiment.train.epochs, 20);
    EXPECT_EQ(c.experiment.train.train_snr_db, 5.0);
    EXPECT_EQ(c.out_dir, fs::path("out"));
    ASSERT_EQ(c.warnings.size(), 3u);
    EXPECT_EQ(c.warnings[0], "seeds.dataset not set; using 0");
}

TEST(RunConfig, ReadsEverySection) {
    const RunConfig c = parse_run_config(R"({
        "arch": {"kind": "dnn", "n_bits": 16, "samples_per_frame": 8, "hidden": 64, "activation": "relu"},
        "channel": {"snr_db": 3, "phase_offset": true, "phase_max": 1.5, "sigma_f": 0.01,
                    "delay_spread": true, "n_taps": 2, "time_offset": true, "sigma_t": 0.5},
        "model": {"decode": "hard", "rtn": "oracle", "eq_taps": 2},
        "train": {"examples": 500, "epochs": 3, "batch_size": 16, "loss": "clmse", "gamma": 0.4,
                  "optimizer": "rmsprop", "lr": 0.002, "rho": 0.8, "dropout": 0.1, "train_snr_db": 8},
        "sweep": {"snr_db": [0, 10], "min_errors": 50, "max_bits": 20000, "batch_frames": 32},
        "study": {"grid": [1, 2]},
        "seeds": {"dataset": 11, "train": 12, "sweep": 13},
        "out_dir": "results"
    })");
    const Experiment& e = c.experiment;
    EXPECT_EQ(e.spec.arch.kind, ModemKind::dnn);
    EXPECT_EQ(e.spec.arch.n_bits, 16);
    EXPECT_EQ(e.spec.arch.activation, "relu");
    EXPECT_EQ(e.spec.channel.n_taps, 2);
    EXPECT_EQ(e.spec.channel.phase_max, 1.5);
    EXPECT_EQ(e.spec.decode, DecodeMode::hard);
    EXPECT_EQ(e.spec.rtn, RtnMode::oracle);
    EXPECT_EQ(e.train.optimizer.kind, OptimizerKind::rmsprop);
    EXPECT_EQ(e.train.optimizer.learning_rate, 0.002);
    EXPECT_EQ(e.train.loss.kind, LossKind::clmse);
    EXPECT_EQ(e.spec.loss.kind, LossKind::clmse);
    EXPECT_EQ(e.sweep.gamma, 0.4);
    EXPECT_EQ(e.sweep.snr_db, (std::vector<double>{0, 10}));
    EXPECT_EQ(c.study_grid, (std::vector<double>{1, 2}));
    EXPECT_EQ(e.dataset_seed, 11u);
    EXPECT_EQ(e.train.seed, 12u);
    EXPECT_EQ(e.sweep.seed, 13u);
    EXPECT_EQ(c.out_dir, fs::path("results"));
    EXPECT_TRUE(c.warnings.empty());
}

TEST(RunConfig, UnknownKeysAreRejectedWithTheirPath) {
    EXPECT_EQ(error_of(with_seeds(R"("trian": {})")), "unknown key 'trian'");
    EXPECT_EQ(error_of(with_seeds(R"("train": {"epoch": 3})")), "unknown key 'train.epoch'");
    EXPECT_EQ(error_of(R"({"seeds": {"sweep": 1, "shuffle": 2}})"), "unknown key 'seeds.shuffle'");
}

TEST(RunConfig, RangeErrorsNameTheField) {
    const std::string msg = error_of(with_seeds(R"("train": {"epochs": -3})"));
    EXPECT_NE(msg.find("epochs"), std::string::npos) << msg;
    EXPECT_NE(msg.find("-3"), std::string::npos) << msg;
    EXPECT_NE(error_of(with_seeds(R"("train": {"epochs": 2.5})")).find("train.epochs"), std::string::npos);
    EXPECT_NE(error_of(with_seeds(R"("channel": {"snr_db": "high"})")).find("channel.snr_db"), std::string::npos);
    EXPECT_NE(error_of(with_seeds(R"("channel": {"n_taps": 0})")).find("channel.n_taps"), std::string::npos);
    EXPECT_NE(error_of(with_seeds(R"("sweep": {"min_errors": 5})")).find("sweep.min_errors"), std::string::npos);
    EXPECT_NE(error_of(with_seeds(R"("arch": {"kind": "rnn"})")).find("arch"), std::string::npos);
    EXPECT_NE(error_of(with_seeds(R"("train": {"loss": "hinge"})")).find("train"), std::string::npos);
    EXPECT_NE(error_of(R"({"seeds": {"train": -1}})").find("seeds.train"), std::string::npos);
}

TEST(RunConfig, CrossFieldValidation) {
    // More taps than samples cannot be convolved into one frame.
    EXPECT_FALSE(error_of(with_seeds(R"("arch": {"n_bits": 4, "samples_per_frame": 4, "hidden": 8},
                                        "channel": {"delay_spread": true, "n_taps": 5})"))
                     .empty());
    EXPECT_FALSE(error_of(with_seeds(R"("out_dir": "")")).empty());
}

TEST(RunConfig, MalformedJsonIsConfigError) {
    EXPECT_THROW(parse_run_config("{\"train\": "), ConfigError);
    EXPECT_THROW(parse_run_config("[]"), ConfigError);
    EXPECT_THROW(load_run_config("/nonexistent/config.json"), InputError);
}

TEST(RunConfig, OverrideSeedClearsSeedWarnings) {
    RunConfig c = parse_run_config("{}");
    c.override_seed(99);
    EXPECT_TRUE(c.warnings.empty());
    EXPECT_EQ(c.experiment.dataset_seed, 99u);
    EXPECT_EQ(c.experiment.train.seed, 99u);
    EXPECT_EQ(c.experiment.sweep.seed, 99u);
}

TEST(RunConfig, CanonicalJsonRoundTrips) {
    const RunConfig a = parse_run_config(with_seeds(R"("train": {"epochs": 3, "loss": "clmle"}, "study": {"grid": [0.5]})"));
    const std::string text = run_config_json(a);
    const RunConfig b = parse_run_config(text);
    EXPECT_EQ(run_config_json(b), text);
    EXPECT_EQ(config_hash(a), config_hash(b));
    EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(RunConfig, HashTracksExperimentButNotOutputDirectory) {
    const RunConfig base = parse_run_config(with_seeds(""));
    EXPECT_EQ(config_hash(base), config_hash(parse_run_config(with_seeds(R"("out_dir": "elsewhere")"))));
    EXPECT_NE(config_hash(base), config_hash(parse_run_config(with_seeds(R"("train": {"epochs": 19})"))));
    RunConfig seeded = base;
    seeded.override_seed(4);
    EXPECT_NE(config_hash(base), config_hash(seeded));
}

TEST(Checkpoint, RoundTripRestoresEveryParameterExactly) {
    const fs::path dir = temp_dir("roundtrip");
    for (ModemKind kind : {ModemKind::dnn, ModemKind::cnn}) {
        AutoencoderSpec s = small_spec(kind);
        s.channel.phase_offset = true;
        s.rtn = RtnMode::learned;
        s.decode = DecodeMode::hard;
        ChannelAutoencoder m = ChannelAutoencoder::build(s, 17);
        save_checkpoint(dir / "ck.json", m, 17);
        LoadedCheckpoint back = load_checkpoint(dir / "ck.json");
        EXPECT_EQ(back.seed, 17u);
        EXPECT_EQ(flat_params(back.model), flat_params(m));
        EXPECT_EQ(back.model.spec().rtn, RtnMode::learned);
        EXPECT_EQ(back.model.spec().decode, DecodeMode::hard);
        EXPECT_NO_THROW(require_same_arch(s, back.model.spec()));
        // Saving the reloaded model reproduces the file byte for byte.
        save_checkpoint(dir / "again.json", back.model, back.seed);
        EXPECT_EQ(slurp(dir / "ck.json"), slurp(dir / "again.json"));
    }
}

TEST(Checkpoint, RejectsDamagedFiles) {
    const fs::path dir = temp_dir("damaged");
    ChannelAutoencoder m = ChannelAutoencoder::build(small_spec(ModemKind::dnn), 1);
    const std::string good = checkpoint_json(m, 1);
    auto write = [&](const std::string& text) {
        std::ofstream(dir / "ck.json", std::ios::binary) << text;
        return dir / "ck.json";
    };
    auto replace = [&](std::string text, const std::string& from, const std::string& to) {
        const auto at = text.find(from);
        EXPECT_NE(at, std::string::npos) << from;
        return text.replace(at, from.size(), to);
    };
    EXPECT_THROW(load_checkpoint(write(replace(good, "chanae-checkpoint", "other"))), ConfigError);
    EXPECT_THROW(load_checkpoint(write(replace(good, "\"encoder.0.w\"", "\"encoder.9.w\""))), ConfigError);
    EXPECT_THROW(load_checkpoint(write(replace(good, "\"hidden\":16", "\"hidden\":24"))), DimensionError);
    EXPECT_THROW(load_checkpoint(write(good.substr(0, good.size() / 2))), ConfigError);
    EXPECT_THROW(load_checkpoint(dir / "missing.json"), InputError);
}

TEST(Checkpoint, ArchitectureComparison) {
    const AutoencoderSpec a = small_spec(ModemKind::cnn);
    AutoencoderSpec b = a;
    b.arch.dropout = 0.3;
    b.channel.snr_db = 20;
    EXPECT_NO_THROW(require_same_arch(a, b));
    b.arch.kernel_len = 5;
    try {
        require_same_arch(a, b);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("kernel_len"), std::string::npos);
    }
    b = a;
    b.rtn = RtnMode::learned;
    EXPECT_THROW(require_same_arch(a, b), ConfigError);
}
