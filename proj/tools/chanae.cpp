#include "chanae/baselines.hpp"
#include "chanae/config.hpp"
#include "chanae/errors.hpp"
#include "chanae/experiment.hpp"
#include "chanae/gradcheck.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>

namespace fs = std::filesystem;
using namespace chanae;

namespace {

struct Options {
    std::string config;
    std::string checkpoint;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::string kind;
    std::string what = "basis";
    std::string rtn;
    std::string corrupt;
    double signal_snr_db = 0.0;
    std::uint64_t mc_bits = 0;
    bool quiet = false;
};

/// Output files go under one directory; names are fixed by the command.
class OutDir {
  public:
    explicit OutDir(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

    fs::path file(const std::string& name) {
        written_.push_back(name);
        return root_ / name;
    }

    void write_manifest(const std::string& command, const std::string& hash, const nlohmann::ordered_json& extra) {
        nlohmann::ordered_json j;
        j["command"] = command;
        if (!hash.empty()) j["config_hash"] = hash;
        for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
        j["files"] = written_;
        std::ofstream out(root_ / "manifest.json", std::ios::binary);
        out << j.dump(2) << '\n';
        if (!out) throw InputError("failed writing manifest");
    }

  private:
    fs::path root_;
    std::vector<std::string> written_;
};

RunConfig load_config(const Options& o) {
    RunConfig cfg = o.config.empty() ? parse_run_config("{}") : load_run_config(o.config);
    if (o.seed) cfg.override_seed(*o.seed);
    if (!o.out.empty()) cfg.out_dir = o.out;
    for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << '\n';
    return cfg;
}

EpochCallback progress(const Options& o) {
    if (o.quiet) return {};
    return [](const EpochRecord& r) {
        std::cerr << "epoch " << r.epoch << " train_loss " << format_double(r.train_loss) << " val_loss "
                  << format_double(r.val_loss) << '\n';
    };
}

std::vector<BerCurve> with_baselines(BerCurve model, const AutoencoderSpec& spec, const SweepConfig& sweep) {
    const double bps = static_cast<double>(spec.arch.n_bits) / spec.arch.samples_per_frame;
    std::vector<BerCurve> curves{std::move(model)};
    curves.push_back(baseline_curve("qpsk", sweep.snr_db, bps));
    curves.push_back(baseline_curve("qam16", sweep.snr_db, bps));
    return curves;
}

int cmd_train(const Options& o) {
    const RunConfig cfg = load_config(o);
    OutDir out(cfg.out_dir);
    TrainHistory h;
    const ChannelAutoencoder model = train_model(cfg.experiment, &h, progress(o));
    save_checkpoint(out.file("checkpoint.json"), model, cfg.experiment.train.seed);
    write_history_csv(out.file("history.csv"), h);
    std::cout << "final validation loss " << format_double(h.final_val_loss()) << " (best "
              << format_double(h.best_val_loss()) << " at epoch " << h.best_epoch << ")\n";
    return 0;
}

int cmd_sweep(const Options& o) {
    const RunConfig cfg = load_config(o);
    LoadedCheckpoint ck = load_checkpoint(o.checkpoint);
    require_same_arch(cfg.experiment.spec, ck.model.spec());
    if (!o.rtn.empty()) ck.model.set_rtn_mode(parse_rtn_mode(o.rtn));
    OutDir out(cfg.out_dir);
    BerCurve curve = ber_sweep(ck.model, cfg.experiment.spec.channel, cfg.experiment.sweep);
    curve.config_hash = config_hash(cfg);
    const auto curves = with_baselines(std::move(curve), cfg.experiment.spec, cfg.experiment.sweep);
    write_ber_csv(out.file("ber.csv"), curves);
    out.write_manifest("sweep", curves.front().config_hash, {});
    for (const BerPoint& p : curves.front().points)
        std::cout << "snr_db " << format_double(p.snr_db) << " ber " << format_double(p.ber())
                  << (p.zero_errors ? " (no errors)" : "") << '\n';
    return 0;
}

int cmd_study(const Options& o) {
    const RunConfig cfg = load_config(o);
    const StudyKind kind = parse_study_kind(o.kind);
    if (cfg.study_grid.empty()) throw ConfigError("study.grid must not be empty");
    OutDir out(cfg.out_dir);
    const auto entries = run_study(cfg.experiment, kind, cfg.study_grid, progress(o));
    nlohmann::ordered_json values = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const std::string stem = std::string(study_kind_name(kind)) + "_" + std::to_string(i);
        const Experiment e = study_variant(cfg.experiment, kind, entries[i].value);
        write_ber_csv(out.file(stem + "_ber.csv"), with_baselines(entries[i].curve, e.spec, e.sweep));
        write_history_csv(out.file(stem + "_history.csv"), entries[i].history);
        values.push_back(entries[i].value);
        std::cout << study_kind_name(kind) << " = " << format_double(entries[i].value) << ": best val loss "
                  << format_double(entries[i].history.best_val_loss()) << '\n';
    }
    out.write_manifest("study", config_hash(cfg), {{"kind", study_kind_name(kind)}, {"grid", values}});
    return 0;
}

int cmd_gradcheck(const Options& o) {
    if (!o.corrupt.empty()) debug::corrupt_backward(o.corrupt);
    const auto entries = run_gradcheck_suite();
    int failures = 0;
    for (const auto& e : entries) {
        std::printf("%-4s %-10s %-26s max_rel_err %.3e probes %d rejected %d%s%s\n", e.passed() ? "ok" : "FAIL",
                    e.category.c_str(), e.name.c_str(), e.result.max_rel_error, e.result.probes, e.result.rejected,
                    e.passed() ? "" : " worst ", e.passed() ? "" : e.result.worst_param.c_str());
        failures += e.passed() ? 0 : 1;
    }
    std::set<std::string> kinds;
    for (const auto& e : entries)
        if (e.category == "layer") kinds.insert(e.kind);
    std::printf("%zu checks, %zu layer kinds of %zu registered, %d failed (tolerance %.0e)\n", entries.size(),
                kinds.size(), layer_registry().size(), failures, kGradCheckTolerance);
    return failures == 0 ? 0 : 1;
}

int cmd_baseline(const Options& o) {
    const RunConfig cfg = load_config(o);
    OutDir out(cfg.out_dir);
    const auto& sweep = cfg.experiment.sweep;
    const double bps = static_cast<double>(cfg.experiment.spec.arch.n_bits) / cfg.experiment.spec.arch.samples_per_frame;
    std::vector<BerCurve> curves{baseline_curve("qpsk", sweep.snr_db, bps), baseline_curve("qam16", sweep.snr_db, bps)};
    if (o.mc_bits > 0) {
        BerCurve mc;
        mc.label = "qpsk_mc";
        for (std::size_t i = 0; i < sweep.snr_db.size(); ++i) {
            const double s = sweep.snr_db[i];
            const auto r = qpsk_monte_carlo(ebn0_from_snr(s, bps), o.mc_bits, derive_seed(sweep.seed, i),
                                            evaluation_threads());
            BerPoint p;
            p.snr_db = s;
            p.bits_tested = r.bits_tested;
            p.bit_errors = r.bit_errors;
            p.zero_errors = r.bit_errors == 0;
            mc.points.push_back(p);
        }
        curves.push_back(std::move(mc));
    }
    write_ber_csv(out.file("baseline.csv"), curves);
    out.write_manifest("baseline", config_hash(cfg), {});
    return 0;
}

int cmd_export(const Options& o) {
    const RunConfig cfg = load_config(o);
    LoadedCheckpoint ck = load_checkpoint(o.checkpoint);
    if (o.what == "basis") {
        const auto rows = encoder_basis(ck.model);
        OutDir out(cfg.out_dir);
        write_basis_csv(out.file("basis.csv"), rows);
        out.write_manifest("export", "", {{"what", "basis"}});
    } else if (o.what == "signals") {
        ChannelConfig ch = ck.model.spec().channel;
        ch.snr_db = o.signal_snr_db;
        Rng rng(derive_seed(cfg.experiment.sweep.seed, 7));
        BitFrame bits(ck.model.n_bits());
        std::bernoulli_distribution coin(0.5);
        for (auto& b : bits) b = coin(rng) ? 1 : 0;
        const SignalTrace trace = trace_signals(ck.model, bits, ch, derive_seed(cfg.experiment.sweep.seed, 8));
        OutDir out(cfg.out_dir);
        write_signals_csv(out.file("signals.csv"), trace);
        out.write_manifest("export", "", {{"what", "signals"}, {"snr_db", o.signal_snr_db}});
    } else {
        throw ConfigError("--what must be basis or signals");
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Channel autoencoder toolkit: training, BER sweeps, studies and exports"};
    app.require_subcommand(1);
    Options o;

    const auto common = [&](CLI::App* sub, bool checkpoint) {
        sub->add_option("--config", o.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--out", o.out, "Output directory (overrides out_dir)");
        sub->add_option("--seed", o.seed, "Use this value for every seed");
        sub->add_flag("--quiet", o.quiet, "No per-epoch progress");
        if (checkpoint)
            sub->add_option("--checkpoint", o.checkpoint, "Model checkpoint (JSON)")
                ->required()
                ->check(CLI::ExistingFile);
    };

    auto* train = app.add_subcommand("train", "Train a model; writes checkpoint.json and history.csv");
    common(train, false);
    auto* sweep = app.add_subcommand("sweep", "BER versus SNR for a checkpoint plus analytic baselines");
    common(sweep, true);
    sweep->add_option("--rtn", o.rtn, "Override the synchronization stage (none, oracle, learned)");
    auto* study = app.add_subcommand("study", "Train and sweep one model per study.grid value");
    common(study, false);
    study->add_option("--kind", o.kind, "training_snr, dropout, delay_spread or random_phase")->required();
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every layer, loss and channel op");
    grad->add_option("--corrupt", o.corrupt)->group("");
    auto* base = app.add_subcommand("baseline", "Analytic QPSK/QAM16 curves on the sweep grid");
    common(base, false);
    base->add_option("--mc-bits", o.mc_bits, "Also run a QPSK Monte Carlo with this many bits per point");
    auto* exp = app.add_subcommand("export", "Export encoder basis kernels or example signals");
    common(exp, true);
    exp->add_option("--what", o.what, "basis or signals")->check(CLI::IsMember({"basis", "signals"}));
    exp->add_option("--snr", o.signal_snr_db, "SNR for the signals export (dB)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(o);
        if (*sweep) return cmd_sweep(o);
        if (*study) return cmd_study(o);
        if (*grad) return cmd_gradcheck(o);
        if (*base) return cmd_baseline(o);
        if (*exp) return cmd_export(o);
    } catch (const UnsupportedError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: invalid configuration: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
