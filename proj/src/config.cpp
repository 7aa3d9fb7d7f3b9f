#include "chanae/config.hpp"

#include "chanae/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace chanae {
namespace {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

std::string join(const std::string& path, std::string_view key) {
    return path.empty() ? std::string(key) : path + "." + std::string(key);
}

/// Reads one JSON object, tracking which keys were consumed.
class Section {
  public:
    Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError("'" + (path_.empty() ? "<root>" : path_) + "' must be an object");
    }

    bool has(std::string_view key) const { return j_.contains(std::string(key)); }

    const Json* find(std::string_view key) {
        const std::string k(key);
        if (!j_.contains(k)) return nullptr;
        seen_.insert(k);
        return &j_.at(k);
    }

    Section sub(std::string_view key) {
        static const Json empty = Json::object();
        const Json* v = find(key);
        return Section(v ? *v : empty, join(path_, key));
    }

    void read(std::string_view key, double& out) {
        if (const Json* v = find(key)) {
            if (!v->is_number()) fail(key, "must be a number");
            out = v->get<double>();
            if (std::isnan(out)) fail(key, "must not be NaN");
        }
    }

    void read(std::string_view key, bool& out) {
        if (const Json* v = find(key)) {
            if (!v->is_boolean()) fail(key, "must be true or false");
            out = v->get<bool>();
        }
    }

    void read(std::string_view key, std::string& out) {
        if (const Json* v = find(key)) {
            if (!v->is_string()) fail(key, "must be a string");
            out = v->get<std::string>();
        }
    }

    void read(std::string_view key, std::vector<double>& out) {
        if (const Json* v = find(key)) {
            if (!v->is_array()) fail(key, "must be an array of numbers");
            out.clear();
            for (const Json& e : *v) {
                if (!e.is_number()) fail(key, "must be an array of numbers");
                out.push_back(e.get<double>());
            }
        }
    }

    /// Integer in [lo, hi]; absent keys keep `out`.
    template <class Int>
    void read_int(std::string_view key, Int& out, long long lo, long long hi) {
        if (const Json* v = find(key)) {
            long long x = 0;
            if (v->is_number_integer()) {
                if (v->is_number_unsigned() && v->get<unsigned long long>() > static_cast<unsigned long long>(hi))
                    fail(key, "must be <= " + std::to_string(hi));
                x = v->get<long long>();
            } else if (v->is_number_float() && std::trunc(v->get<double>()) == v->get<double>() &&
                       std::abs(v->get<double>()) < 9e15) {
                x = static_cast<long long>(v->get<double>());
            } else {
                fail(key, "must be an integer");
            }
            if (x < lo) fail(key, "must be >= " + std::to_string(lo) + ", got " + std::to_string(x));
            if (x > hi) fail(key, "must be <= " + std::to_string(hi) + ", got " + std::to_string(x));
            out = static_cast<Int>(x);
        }
    }

    void read_seed(std::string_view key, std::uint64_t& out, std::vector<std::string>& warnings) {
        if (const Json* v = find(key)) {
            if (!v->is_number_unsigned()) fail(key, "must be a non-negative integer");
            out = v->get<std::uint64_t>();
        } else {
            warnings.push_back(join(path_, key) + " not set; using 0");
            out = 0;
        }
    }

    /// Any key not consumed is a typo.
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw ConfigError("unknown key '" + join(path_, it.key()) + "'");
    }

    [[noreturn]] void fail(std::string_view key, const std::string& what) const {
        throw ConfigError("'" + join(path_, key) + "' " + what);
    }

    const std::string& path() const { return path_; }

  private:
    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

/// Runs a validate() and prefixes the section path to its message.
template <class F>
void validated(const std::string& path, F&& f) {
    try {
        f();
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

constexpr long long kIntMax = std::numeric_limits<int>::max();
constexpr long long kBig = 1'000'000'000'000'000LL;

void read_arch(Section s, ModemArch& a) {
    std::string kind(modem_kind_name(a.kind));
    s.read("kind", kind);
    validated(s.path(), [&] { a.kind = parse_modem_kind(kind); });
    s.read_int("n_bits", a.n_bits, 1, kIntMax);
    s.read_int("samples_per_frame", a.samples_per_frame, 1, kIntMax);
    s.read_int("hidden", a.hidden, 1, kIntMax);
    s.read_int("conv_filters", a.conv_filters, 1, kIntMax);
    s.read_int("kernel_len", a.kernel_len, 1, kIntMax);
    s.read("activation", a.activation);
    s.read("dropout", a.dropout);
    s.finish();
    validated(s.path(), [&] {
        parse_activation(a.activation);
        a.validate();
    });
}

void read_channel(Section s, ChannelConfig& c) {
    s.read("snr_db", c.snr_db);
    s.read("awgn", c.awgn);
    std::string conv(noise_convention_name(c.noise_convention));
    s.read("noise_convention", conv);
    validated(s.path(), [&] { c.noise_convention = parse_noise_convention(conv); });
    s.read("time_offset", c.time_offset);
    s.read("sigma_t", c.sigma_t);
    s.read("sigma_t_rate", c.sigma_t_rate);
    s.read("phase_offset", c.phase_offset);
    s.read("phase_max", c.phase_max);
    s.read("sigma_f", c.sigma_f);
    s.read("delay_spread", c.delay_spread);
    s.read_int("n_taps", c.n_taps, 1, kIntMax);
    s.finish();
    validated(s.path(), [&] { c.validate(); });
}

void read_model(Section s, AutoencoderSpec& spec) {
    std::string decode(decode_mode_name(spec.decode)), rtn(rtn_mode_name(spec.rtn));
    s.read("decode", decode);
    s.read("rtn", rtn);
    s.read_int("eq_taps", spec.eq_taps, 0, kIntMax);
    s.finish();
    validated(s.path(), [&] {
        spec.decode = parse_decode_mode(decode);
        spec.rtn = parse_rtn_mode(rtn);
    });
}

void read_loss(Section& s, LossSpec& l) {
    std::string kind(loss_kind_name(l.kind));
    s.read("loss", kind);
    s.read("gamma", l.gamma);
    s.read("paper_literal", l.paper_literal);
    validated(s.path(), [&] {
        l.kind = parse_loss_kind(kind);
        l.validate();
    });
}

void read_train(Section s, TrainConfig& t) {
    s.read_int("examples", t.examples, 10, kBig);
    s.read_int("epochs", t.epochs, 1, kIntMax);
    s.read_int("batch_size", t.batch_size, 1, kIntMax);
    read_loss(s, t.loss);
    std::string opt(optimizer_kind_name(t.optimizer.kind));
    s.read("optimizer", opt);
    validated(s.path(), [&] { t.optimizer.kind = parse_optimizer_kind(opt); });
    s.read("lr", t.optimizer.learning_rate);
    s.read("beta1", t.optimizer.beta1);
    s.read("beta2", t.optimizer.beta2);
    s.read("rho", t.optimizer.rho);
    s.read("epsilon", t.optimizer.epsilon);
    s.read("dropout", t.dropout);
    s.read("train_snr_db", t.train_snr_db);
    s.finish();
    validated(s.path(), [&] { t.validate(); });
}

void read_sweep(Section s, SweepConfig& w) {
    s.read("snr_db", w.snr_db);
    s.read_int("min_errors", w.min_errors, 10, kBig);
    s.read_int("max_bits", w.max_bits, 1, kBig);
    s.read_int("batch_frames", w.batch_frames, 1, kIntMax);
    s.finish();
    validated(s.path(), [&] { w.validate(); });
}

OrderedJson arch_json(const ModemArch& a) {
    OrderedJson j;
    j["kind"] = modem_kind_name(a.kind);
    j["n_bits"] = a.n_bits;
    j["samples_per_frame"] = a.samples_per_frame;
    j["hidden"] = a.hidden;
    j["conv_filters"] = a.conv_filters;
    j["kernel_len"] = a.kernel_len;
    j["activation"] = a.activation;
    j["dropout"] = a.dropout;
    return j;
}

OrderedJson channel_json(const ChannelConfig& c) {
    OrderedJson j;
    j["snr_db"] = c.snr_db;
    j["awgn"] = c.awgn;
    j["noise_convention"] = noise_convention_name(c.noise_convention);
    j["time_offset"] = c.time_offset;
    j["sigma_t"] = c.sigma_t;
    j["sigma_t_rate"] = c.sigma_t_rate;
    j["phase_offset"] = c.phase_offset;
    j["phase_max"] = c.phase_max;
    j["sigma_f"] = c.sigma_f;
    j["delay_spread"] = c.delay_spread;
    j["n_taps"] = c.n_taps;
    return j;
}

OrderedJson model_json(const AutoencoderSpec& s) {
    OrderedJson j;
    j["decode"] = decode_mode_name(s.decode);
    j["rtn"] = rtn_mode_name(s.rtn);
    j["eq_taps"] = s.eq_taps;
    return j;
}

OrderedJson loss_json(const LossSpec& l) {
    OrderedJson j;
    j["loss"] = loss_kind_name(l.kind);
    j["gamma"] = l.gamma;
    j["paper_literal"] = l.paper_literal;
    return j;
}

std::string fnv1a_hex(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

Json parse_text(std::string_view text, const std::string& what) {
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ConfigError(what + " is not valid JSON: " + e.what());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

void RunConfig::validate() const {
    experiment.spec.validate();
    experiment.train.validate();
    experiment.sweep.validate();
    if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

void RunConfig::override_seed(std::uint64_t seed) {
    experiment.dataset_seed = seed;
    experiment.train.seed = seed;
    experiment.sweep.seed = seed;
    std::erase_if(warnings, [](const std::string& w) { return w.rfind("seeds.", 0) == 0; });
}

RunConfig parse_run_config(std::string_view json_text) {
    const Json root = parse_text(json_text, "config");
    RunConfig cfg;
    Experiment& e = cfg.experiment;
    Section s(root, "");
    read_arch(s.sub("arch"), e.spec.arch);
    read_channel(s.sub("channel"), e.spec.channel);
    read_model(s.sub("model"), e.spec);
    read_train(s.sub("train"), e.train);
    read_sweep(s.sub("sweep"), e.sweep);
    {
        Section st = s.sub("study");
        st.read("grid", cfg.study_grid);
        st.finish();
    }
    {
        Section seeds = s.sub("seeds");
        seeds.read_seed("dataset", e.dataset_seed, cfg.warnings);
        seeds.read_seed("train", e.train.seed, cfg.warnings);
        seeds.read_seed("sweep", e.sweep.seed, cfg.warnings);
        seeds.finish();
    }
    std::string out = cfg.out_dir.string();
    s.read("out_dir", out);
    cfg.out_dir = out;
    s.finish();

    e.spec.loss = e.train.loss;
    e.sweep.gamma = e.train.loss.gamma;
    validated("config", [&] { cfg.validate(); });
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_file(path)); }

static OrderedJson experiment_json(const RunConfig& cfg) {
    const Experiment& e = cfg.experiment;
    OrderedJson j;
    j["arch"] = arch_json(e.spec.arch);
    j["channel"] = channel_json(e.spec.channel);
    j["model"] = model_json(e.spec);
    OrderedJson t;
    t["examples"] = e.train.examples;
    t["epochs"] = e.train.epochs;
    t["batch_size"] = e.train.batch_size;
    const OrderedJson loss = loss_json(e.train.loss);
    for (const auto& [k, v] : loss.items()) t[k] = v;
    t["optimizer"] = optimizer_kind_name(e.train.optimizer.kind);
    t["lr"] = e.train.optimizer.learning_rate;
    t["beta1"] = e.train.optimizer.beta1;
    t["beta2"] = e.train.optimizer.beta2;
    t["rho"] = e.train.optimizer.rho;
    t["epsilon"] = e.train.optimizer.epsilon;
    t["dropout"] = e.train.dropout;
    t["train_snr_db"] = e.train.train_snr_db;
    j["train"] = t;
    OrderedJson w;
    w["snr_db"] = e.sweep.snr_db;
    w["min_errors"] = e.sweep.min_errors;
    w["max_bits"] = e.sweep.max_bits;
    w["batch_frames"] = e.sweep.batch_frames;
    j["sweep"] = w;
    j["study"] = OrderedJson{{"grid", cfg.study_grid}};
    j["seeds"] = OrderedJson{{"dataset", e.dataset_seed}, {"train", e.train.seed}, {"sweep", e.sweep.seed}};
    return j;
}

std::string run_config_json(const RunConfig& cfg) {
    OrderedJson j = experiment_json(cfg);
    j["out_dir"] = cfg.out_dir.string();
    return j.dump(2) + "\n";
}

std::string config_hash(const RunConfig& cfg) { return fnv1a_hex(experiment_json(cfg).dump()); }

std::string checkpoint_json(const ChannelAutoencoder& model, std::uint64_t seed) {
    const AutoencoderSpec& s = model.spec();
    OrderedJson meta;
    meta["arch"] = arch_json(s.arch);
    meta["channel"] = channel_json(s.channel);
    meta["model"] = model_json(s);
    meta["loss"] = loss_json(s.loss);
    meta["seed"] = seed;
    OrderedJson params = OrderedJson::object();
    auto add = [&](const Network& net) {
        for (const Layer& l : net.layers())
            for (const Parameter& p : l.params()) {
                OrderedJson e;
                e["shape"] = p.value.shape();
                e["values"] = std::vector<double>(p.value.values().begin(), p.value.values().end());
                params[p.name] = std::move(e);
            }
    };
    add(model.encoder());
    add(model.estimator());
    add(model.decoder());
    OrderedJson j;
    j["format"] = "chanae-checkpoint";
    j["version"] = 1;
    j["metadata"] = meta;
    j["parameters"] = params;
    return j.dump() + "\n";
}

void save_checkpoint(const std::filesystem::path& path, const ChannelAutoencoder& model, std::uint64_t seed) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    out << checkpoint_json(model, seed);
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    const Json root = parse_text(read_file(path), "checkpoint '" + path.string() + "'");
    Section s(root, "");
    std::string format;
    s.read("format", format);
    if (format != "chanae-checkpoint") throw ConfigError("'" + path.string() + "' is not a checkpoint");
    int version = 0;
    s.read_int("version", version, 1, 1);

    AutoencoderSpec spec;
    std::uint64_t seed = 0;
    {
        Section m = s.sub("metadata");
        read_arch(m.sub("arch"), spec.arch);
        read_channel(m.sub("channel"), spec.channel);
        read_model(m.sub("model"), spec);
        Section l = m.sub("loss");
        read_loss(l, spec.loss);
        l.finish();
        std::vector<std::string> ignored;
        m.read_seed("seed", seed, ignored);
        m.finish();
    }
    ChannelAutoencoder model = ChannelAutoencoder::build(spec, 0);

    const Json* params = s.find("parameters");
    if (!params || !params->is_object()) throw ConfigError("checkpoint has no 'parameters' object");
    s.finish();
    std::set<std::string> expected;
    for (Parameter* p : model.parameters()) {
        expected.insert(p->name);
        if (!params->contains(p->name)) throw ConfigError("checkpoint is missing parameter '" + p->name + "'");
        const Json& e = params->at(p->name);
        Section ps(e, "parameters." + p->name);
        const Json* shape = ps.find("shape");
        const Json* values = ps.find("values");
        ps.finish();
        if (!shape || !values || !values->is_array())
            throw ConfigError("parameter '" + p->name + "' needs shape and values");
        if (shape->get<Shape>() != p->value.shape())
            throw DimensionError("parameter '" + p->name + "' has shape " + shape_string(shape->get<Shape>()) +
                                 ", architecture expects " + shape_string(p->value.shape()));
        if (values->size() != p->value.size())
            throw DimensionError("parameter '" + p->name + "' holds the wrong number of values");
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const Json& v = (*values)[i];
            if (!v.is_number()) throw ConfigError("parameter '" + p->name + "' has a non-numeric value");
            p->value[i] = v.get<double>();
        }
    }
    for (auto it = params->begin(); it != params->end(); ++it)
        if (!expected.count(it.key())) throw ConfigError("checkpoint has unexpected parameter '" + it.key() + "'");
    return {std::move(model), seed};
}

void require_same_arch(const AutoencoderSpec& expected, const AutoencoderSpec& actual) {
    const OrderedJson a = arch_json(expected.arch), b = arch_json(actual.arch);
    for (auto it = a.begin(); it != a.end(); ++it) {
        if (it.key() == "dropout") continue;
        if (b.at(it.key()) != it.value())
            throw ConfigError("architecture mismatch on arch." + it.key() + ": config has " + it.value().dump() +
                              ", checkpoint has " + b.at(it.key()).dump());
    }
    if (expected.decode != actual.decode) throw ConfigError("architecture mismatch on model.decode");
    if ((expected.rtn == RtnMode::learned) != (actual.rtn == RtnMode::learned))
        throw ConfigError("architecture mismatch on model.rtn");
}

} // namespace chanae
