#include "chanae/experiment.hpp"

#include "chanae/baselines.hpp"
#include "chanae/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

namespace chanae {
namespace {

// Stream identifiers for derive_seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kShuffleStream = 2;
constexpr std::uint64_t kChannelStream = 3;
constexpr std::uint64_t kDropoutStream = 4;
constexpr std::uint64_t kValidationStream = 5;
constexpr std::uint64_t kSweepStream = 6;

BitFrame random_frame(std::size_t n_bits, Rng& rng) {
    BitFrame f(n_bits);
    std::uint64_t word = 0;
    for (std::size_t i = 0; i < n_bits; ++i) {
        if (i % 64 == 0) word = rng();
        f[i] = static_cast<std::uint8_t>(word & 1u);
        word >>= 1;
    }
    return f;
}

Tensor gather_bits(std::span<const BitFrame> frames, std::span<const std::size_t> order, std::size_t begin,
                   std::size_t end) {
    const std::size_t n = frames[order[begin]].size();
    Tensor t({end - begin, n});
    for (std::size_t b = begin; b < end; ++b) {
        const BitFrame& f = frames[order[b]];
        for (std::size_t i = 0; i < n; ++i) t[(b - begin) * n + i] = f[i];
    }
    return t;
}

std::vector<std::vector<double>> snapshot(ChannelAutoencoder& model) {
    std::vector<std::vector<double>> out;
    for (Parameter* p : model.parameters()) out.emplace_back(p->value.values().begin(), p->value.values().end());
    return out;
}

void restore(ChannelAutoencoder& model, const std::vector<std::vector<double>>& values) {
    const auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i)
        std::copy(values[i].begin(), values[i].end(), params[i]->value.values().begin());
}

std::ofstream open_for_write(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    return out;
}

BerPoint measure_point(ChannelAutoencoder& model, const ChannelConfig& channel, const SweepConfig& cfg,
                       double snr_db, std::uint64_t seed) {
    ChannelConfig ch = channel;
    ch.snr_db = snr_db;
    const std::size_t n_bits = model.n_bits();
    Rng bit_rng(derive_seed(seed, 0));
    Rng channel_rng(derive_seed(seed, 1));
    BerPoint pt;
    pt.snr_db = snr_db;
    while (pt.bit_errors < cfg.min_errors) {
        const std::uint64_t room = (cfg.max_bits - pt.bits_tested) / n_bits;
        const std::size_t frames = static_cast<std::size_t>(std::min<std::uint64_t>(cfg.batch_frames, room));
        if (frames == 0) break;
        Tensor bits({frames, n_bits});
        for (std::size_t b = 0; b < frames; ++b) {
            const BitFrame f = random_frame(n_bits, bit_rng);
            std::copy(f.begin(), f.end(), bits.values().begin() + static_cast<std::ptrdiff_t>(b * n_bits));
        }
        Tape tape;
        const Tensor soft = model.forward(tape, bits, ch, channel_rng, ForwardContext{}).soft.value();
        const BitFrame hat = slice_bits(soft.values(), cfg.gamma);
        for (std::size_t i = 0; i < hat.size(); ++i)
            pt.bit_errors += hat[i] != static_cast<std::uint8_t>(bits[i]) ? 1u : 0u;
        pt.bits_tested += frames * n_bits;
    }
    pt.zero_errors = pt.bit_errors == 0;
    return pt;
}

} // namespace

Dataset generate_dataset(std::size_t n_examples, int n_bits, std::uint64_t seed) {
    if (n_examples < 10) throw ConfigError("examples must be >= 10");
    if (n_bits < 1) throw ConfigError("n_bits must be >= 1");
    Dataset d;
    d.seed = seed;
    d.n_bits = n_bits;
    Rng rng(seed);
    const std::size_t n_train = n_examples * 8 / 10;
    d.train.reserve(n_train);
    d.test.reserve(n_examples - n_train);
    for (std::size_t i = 0; i < n_examples; ++i) {
        BitFrame f = random_frame(static_cast<std::size_t>(n_bits), rng);
        (i < n_train ? d.train : d.test).push_back(std::move(f));
    }
    return d;
}

void TrainConfig::validate() const {
    if (examples < 10) throw ConfigError("examples must be >= 10");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
    if (!std::isfinite(train_snr_db)) throw ConfigError("train_snr_db must be finite");
    loss.validate();
    optimizer.validate();
}

double TrainHistory::best_val_loss() const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : epochs) best = std::min(best, e.val_loss);
    return best;
}

double evaluate_loss(ChannelAutoencoder& model, std::span<const BitFrame> frames, const ChannelConfig& channel,
                     const LossSpec& loss, std::uint64_t seed) {
    if (frames.empty()) throw InputError("validation split is empty");
    std::vector<std::size_t> order(frames.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    constexpr std::size_t kChunk = 256;
    double total = 0.0;
    for (std::size_t begin = 0; begin < frames.size(); begin += kChunk) {
        const std::size_t end = std::min(frames.size(), begin + kChunk);
        const Tensor bits = gather_bits(frames, order, begin, end);
        Tape tape;
        const Tensor soft = model.forward(tape, bits, channel, rng, ForwardContext{}).soft.value();
        total += loss_value(loss, bits, soft) * static_cast<double>(end - begin);
    }
    return total / static_cast<double>(frames.size());
}

TrainHistory train(ChannelAutoencoder& model, const Dataset& data, const TrainConfig& cfg,
                   const EpochCallback& on_epoch) {
    cfg.validate();
    if (static_cast<std::size_t>(data.n_bits) != model.n_bits())
        throw InputError("dataset carries " + std::to_string(data.n_bits) + "-bit frames, model expects " +
                         std::to_string(model.n_bits()));
    if (data.train.empty()) throw InputError("training split is empty");
    model.set_dropout(cfg.dropout);
    ChannelConfig channel = model.spec().channel;
    channel.snr_db = cfg.train_snr_db;
    const std::uint64_t val_seed = derive_seed(cfg.seed, kValidationStream);

    Optimizer opt(cfg.optimizer);
    TrainHistory hist;
    hist.initial_val_loss = evaluate_loss(model, data.test, channel, cfg.loss, val_seed);
    if (!std::isfinite(hist.initial_val_loss)) throw DivergenceError("initial validation loss is not finite");

    double best = std::numeric_limits<double>::infinity();
    auto best_params = snapshot(model);
    std::vector<std::size_t> order(data.train.size());
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto e = static_cast<std::uint64_t>(epoch);
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(derive_seed(cfg.seed, kShuffleStream), e));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        Rng channel_rng(derive_seed(derive_seed(cfg.seed, kChannelStream), e));
        Rng dropout_rng(derive_seed(derive_seed(cfg.seed, kDropoutStream), e));
        const ForwardContext ctx{true, &dropout_rng};

        double total = 0.0;
        for (std::size_t begin = 0; begin < order.size(); begin += bs) {
            const std::size_t end = std::min(order.size(), begin + bs);
            const Tensor bits = gather_bits(data.train, order, begin, end);
            for (Parameter* p : model.parameters()) p->zero_grad();
            Tape tape;
            const AutoencoderPass pass = model.forward(tape, bits, channel, channel_rng, ctx);
            const Var loss = loss_forward(cfg.loss, bits, pass.soft);
            const double lv = loss.value()[0];
            if (!std::isfinite(lv))
                throw DivergenceError("training loss became non-finite in epoch " + std::to_string(epoch) +
                                      " at example " + std::to_string(begin));
            tape.backward(loss);
            opt.step(model.parameters());
            total += lv * static_cast<double>(end - begin);
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = total / static_cast<double>(order.size());
        rec.val_loss = evaluate_loss(model, data.test, channel, cfg.loss, val_seed);
        if (!std::isfinite(rec.val_loss))
            throw DivergenceError("validation loss became non-finite in epoch " + std::to_string(epoch));
        hist.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (rec.val_loss < best) {
            best = rec.val_loss;
            hist.best_epoch = epoch;
            best_params = snapshot(model);
        }
    }
    restore(model, best_params);
    return hist;
}

void SweepConfig::validate() const {
    if (snr_db.empty()) throw ConfigError("snr_db grid must not be empty");
    for (double s : snr_db)
        if (std::isnan(s)) throw ConfigError("snr_db grid contains NaN");
    if (min_errors < 10) throw ConfigError("min_errors must be >= 10");
    if (max_bits < 1) throw ConfigError("max_bits must be >= 1");
    if (batch_frames < 1) throw ConfigError("batch_frames must be >= 1");
    if (!std::isfinite(gamma)) throw ConfigError("gamma must be finite");
}

double BerPoint::variance() const {
    const double p = ber();
    return p * (1.0 - p) / static_cast<double>(bits_tested);
}

unsigned evaluation_threads() {
    unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("CHANAE_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && *end == '\0' && v >= 1) return static_cast<unsigned>(v);
    }
    return hw;
}

BerCurve ber_sweep(ChannelAutoencoder& model, const ChannelConfig& channel, const SweepConfig& cfg,
                   std::string label) {
    cfg.validate();
    channel.validate();
    if (cfg.max_bits < model.n_bits()) throw ConfigError("max_bits is smaller than one frame");
    BerCurve curve;
    curve.label = std::move(label);
    curve.points.resize(cfg.snr_db.size());
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < cfg.snr_db.size(); i = next++)
            curve.points[i] = measure_point(model, channel, cfg, cfg.snr_db[i], derive_seed(derive_seed(cfg.seed, kSweepStream), i));
    };
    const unsigned threads = std::min<unsigned>(evaluation_threads(), static_cast<unsigned>(cfg.snr_db.size()));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    return curve;
}

bool non_increasing_within(const BerCurve& curve, double k) {
    for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
        const BerPoint& a = curve.points[i];
        const BerPoint& b = curve.points[i + 1];
        if (b.ber() > a.ber() + k * std::sqrt(a.variance() + b.variance())) return false;
    }
    return true;
}

std::uint64_t Experiment::init_seed() const { return derive_seed(train.seed, kInitStream); }

ChannelAutoencoder train_model(const Experiment& e, TrainHistory* history, const EpochCallback& on_epoch) {
    ChannelAutoencoder model = ChannelAutoencoder::build(e.spec, e.init_seed());
    const Dataset data = generate_dataset(e.train.examples, e.spec.arch.n_bits, e.dataset_seed);
    TrainHistory h = train(model, data, e.train, on_epoch);
    if (history) *history = std::move(h);
    return model;
}

ExperimentResult run_experiment(const Experiment& e, const EpochCallback& on_epoch) {
    TrainHistory h;
    ChannelAutoencoder model = train_model(e, &h, on_epoch);
    BerCurve curve = ber_sweep(model, e.spec.channel, e.sweep);
    return {std::move(model), std::move(h), std::move(curve)};
}

StudyKind parse_study_kind(std::string_view s) {
    if (s == "training_snr") return StudyKind::training_snr;
    if (s == "dropout") return StudyKind::dropout;
    if (s == "delay_spread") return StudyKind::delay_spread;
    if (s == "random_phase") return StudyKind::random_phase;
    throw ConfigError("unknown study kind '" + std::string(s) + "'");
}

std::string_view study_kind_name(StudyKind k) {
    switch (k) {
    case StudyKind::training_snr:
        return "training_snr";
    case StudyKind::dropout:
        return "dropout";
    case StudyKind::delay_spread:
        return "delay_spread";
    case StudyKind::random_phase:
        return "random_phase";
    }
    return "?";
}

Experiment study_variant(const Experiment& base, StudyKind kind, double value) {
    Experiment e = base;
    switch (kind) {
    case StudyKind::training_snr:
        e.train.train_snr_db = value;
        break;
    case StudyKind::dropout:
        e.train.dropout = value;
        break;
    case StudyKind::delay_spread:
        if (!(value >= 1.0) || value != std::floor(value))
            throw ConfigError("delay_spread grid values must be integers >= 1");
        e.spec.channel.delay_spread = true;
        e.spec.channel.n_taps = static_cast<int>(value);
        break;
    case StudyKind::random_phase:
        e.spec.channel.phase_offset = value > 0.0;
        e.spec.channel.phase_max = value;
        break;
    }
    e.spec.validate();
    e.train.validate();
    return e;
}

std::vector<StudyEntry> run_study(const Experiment& base, StudyKind kind, std::span<const double> grid,
                                  const EpochCallback& on_epoch) {
    if (grid.empty()) throw ConfigError("study grid must not be empty");
    std::vector<Experiment> variants;
    for (double v : grid) variants.push_back(study_variant(base, kind, v));
    std::vector<StudyEntry> out;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        ExperimentResult r = run_experiment(variants[i], on_epoch);
        out.push_back({grid[i], std::move(r.history), std::move(r.curve)});
    }
    return out;
}

BerCurve baseline_curve(std::string_view kind, std::span<const double> snr_db, double bits_per_sample) {
    double (*pb)(double) = nullptr;
    if (kind == "qpsk") {
        pb = qpsk_ber;
    } else if (kind == "qam16") {
        pb = qam16_ber;
    } else {
        throw ConfigError("unknown baseline '" + std::string(kind) + "'");
    }
    BerCurve c;
    c.label = std::string(kind);
    for (double s : snr_db) {
        BerPoint p;
        p.snr_db = s;
        p.analytic = pb(ebn0_from_snr(s, bits_per_sample));
        c.points.push_back(p);
    }
    return c;
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_ber_csv(const std::filesystem::path& path, std::span<const BerCurve> curves) {
    std::ofstream out = open_for_write(path);
    out << "snr_db,bits_tested,bit_errors,ber,label\n";
    for (const BerCurve& c : curves)
        for (const BerPoint& p : c.points)
            out << format_double(p.snr_db) << ',' << p.bits_tested << ',' << p.bit_errors << ','
                << format_double(p.ber()) << ',' << c.label << '\n';
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

void write_history_csv(const std::filesystem::path& path, const TrainHistory& history) {
    std::ofstream out = open_for_write(path);
    out << "epoch,train_loss,val_loss\n";
    for (const EpochRecord& e : history.epochs)
        out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << '\n';
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

std::vector<BasisRow> encoder_basis(const ChannelAutoencoder& model) {
    const auto& layers = model.encoder().layers();
    std::size_t last = layers.size();
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].kind() == LayerKind::conv1d) last = i;
    if (last == layers.size()) throw UnsupportedError("basis export is unsupported: encoder has no convolution");
    const Parameter& k = layers[last].params()[0];
    const std::size_t filters = k.value.dim(0), channels = k.value.dim(1), klen = k.value.dim(2);
    std::vector<BasisRow> rows;
    for (std::size_t f = 0; f < filters; ++f)
        for (std::size_t c = 0; c < channels; ++c) {
            const auto src = k.value.values().subspan((f * channels + c) * klen, klen);
            rows.push_back({k.name, f, c, std::vector<double>(src.begin(), src.end())});
        }
    return rows;
}

void write_basis_csv(const std::filesystem::path& path, std::span<const BasisRow> rows) {
    const std::size_t klen = rows.empty() ? 0 : rows.front().taps.size();
    std::ofstream out = open_for_write(path);
    out << "layer,filter,channel";
    for (std::size_t j = 0; j < klen; ++j) out << ",tap" << j;
    out << '\n';
    for (const BasisRow& r : rows) {
        out << r.layer << ',' << r.filter << ',' << r.channel;
        for (double v : r.taps) out << ',' << format_double(v);
        out << '\n';
    }
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

std::vector<BasisRow> read_basis_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line.rfind("layer,filter,channel", 0) != 0)
        throw InputError("'" + path.string() + "' is not a basis CSV");
    std::vector<BasisRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        BasisRow r;
        std::getline(ls, r.layer, ',');
        std::getline(ls, cell, ',');
        r.filter = std::stoull(cell);
        std::getline(ls, cell, ',');
        r.channel = std::stoull(cell);
        while (std::getline(ls, cell, ',')) r.taps.push_back(std::stod(cell));
        rows.push_back(std::move(r));
    }
    return rows;
}

SignalTrace trace_signals(ChannelAutoencoder& model, const BitFrame& bits, const ChannelConfig& channel,
                          std::uint64_t seed) {
    if (bits.size() != model.n_bits())
        throw InputError("expected " + std::to_string(model.n_bits()) + " bits, got " + std::to_string(bits.size()));
    const BitFrame frames[] = {bits};
    const Tensor tx = model.encode(bits_to_tensor(frames));
    const std::size_t n = model.samples();
    SignalTrace t;
    t.tx = SignalFrame(tx.reshaped({2, n}));
    Rng rng(seed);
    t.rx = replay(t.tx, sample_draw(channel, n, rng));
    return t;
}

void write_signals_csv(const std::filesystem::path& path, const SignalTrace& trace) {
    std::ofstream out = open_for_write(path);
    out << "sample,tx_i,tx_q,rx_i,rx_q\n";
    for (std::size_t k = 0; k < trace.tx.samples(); ++k)
        out << k << ',' << format_double(trace.tx.i()[k]) << ',' << format_double(trace.tx.q()[k]) << ','
            << format_double(trace.rx.i()[k]) << ',' << format_double(trace.rx.q()[k]) << '\n';
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

} // namespace chanae
