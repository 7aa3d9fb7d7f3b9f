#include "chanae/gradcheck.hpp"

#include "chanae/channel.hpp"
#include "chanae/loss.hpp"
#include "chanae/modem.hpp"
#include "chanae/network.hpp"
#include "chanae/ops.hpp"

#include <memory>

namespace chanae {
namespace {

void randomize(Parameter& p, Rng& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    for (double& v : p.value.values()) v = u(rng);
}

Tensor random_tensor(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : t.values()) v = u(rng);
    return t;
}

Tensor random_bits(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    std::bernoulli_distribution coin(0.5);
    for (double& v : t.values()) v = coin(rng) ? 1.0 : 0.0;
    return t;
}

/// Random linear functional of an output, so every output element carries an
/// O(1) weight in the objective.
Var project(Var y, const Tensor& weights) { return sum(mul_constant(y, weights)); }

struct SuiteBuilder {
    GradCheckOptions options;
    std::vector<GradCheckEntry> entries;

    void add(std::string name, std::string category, std::string kind, std::vector<Parameter*> params,
             const std::function<void(Rng&)>& setup, const std::function<Var(Tape&)>& build) {
        GradCheckEntry e{std::move(name), std::move(category), std::move(kind), {}};
        e.result = grad_check(params, setup, build, options);
        entries.push_back(std::move(e));
    }

    void layer(const std::string& label, Layer layer, Shape in_shape, Shape out_shape, double lo = -1.0,
               double hi = 1.0, bool training = false) {
        auto l = std::make_shared<Layer>(std::move(layer));
        auto x = std::make_shared<Parameter>("input", Tensor(in_shape));
        auto proj = std::make_shared<Tensor>(out_shape);
        std::vector<Parameter*> params{x.get()};
        for (auto& p : l->params()) params.push_back(&p);
        const std::string kind(layer_kind_name(l->kind()));
        add("layer:" + label, "layer", kind, params,
            [=](Rng& rng) {
                randomize(*x, rng, lo, hi);
                for (auto& p : l->params()) randomize(p, rng);
                *proj = random_tensor(out_shape, rng);
            },
            [=](Tape& t) {
                Rng mask_rng(7);
                ForwardContext ctx{training, &mask_rng};
                return project(l->forward(t, t.param(*x), ctx), *proj);
            });
    }

    void loss(const std::string& label, LossSpec spec) {
        const Shape shape{4, 6};
        auto p = std::make_shared<Parameter>("predictions", Tensor(shape));
        auto targets = std::make_shared<Tensor>(shape);
        add("loss:" + label, "loss", label, {p.get()},
            [=](Rng& rng) {
                randomize(*p, rng, -0.5, 1.5);
                *targets = random_bits(shape, rng);
            },
            [=](Tape& t) { return loss_forward(spec, *targets, t.param(*p)); });
    }

    void channel(const std::string& label, ChannelConfig cfg) {
        const std::size_t batch = 3, n = 12;
        auto x = std::make_shared<Parameter>("frames", Tensor({batch, 2, n}));
        auto draws = std::make_shared<std::vector<ChannelDraw>>();
        auto proj = std::make_shared<Tensor>(Shape{batch, 2, n});
        add("channel:" + label, "channel", label, {x.get()},
            [=](Rng& rng) {
                randomize(*x, rng);
                draws->clear();
                for (std::size_t b = 0; b < batch; ++b) draws->push_back(sample_draw(cfg, n, rng));
                *proj = random_tensor({batch, 2, n}, rng);
            },
            [=](Tape& t) { return project(channel_forward(t.param(*x), *draws), *proj); });
    }

    void model(const std::string& label, AutoencoderSpec spec) {
        auto ae = std::make_shared<ChannelAutoencoder>(ChannelAutoencoder::build(spec, 3));
        const std::size_t batch = 3;
        auto bits = std::make_shared<Tensor>();
        auto draws = std::make_shared<std::vector<ChannelDraw>>();
        add("model:" + label, "model", label, ae->parameters(),
            [=](Rng& rng) {
                ae->encoder().initialize(rng);
                ae->decoder().initialize(rng);
                ae->estimator().initialize(rng);
                for (Parameter* p : ae->parameters())
                    if (p->name.ends_with(".b")) randomize(*p, rng, -0.1, 0.1);
                *bits = random_bits({batch, ae->n_bits()}, rng);
                draws->clear();
                for (std::size_t b = 0; b < batch; ++b)
                    draws->push_back(sample_draw(ae->spec().channel, ae->samples(), rng));
            },
            [=](Tape& t) {
                Rng unused(0);
                const auto pass = ae->forward(t, *bits, ae->spec().channel, unused, ForwardContext{}, *draws);
                return loss_forward(ae->spec().loss, *bits, pass.soft);
            });
    }
};

} // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(const GradCheckOptions& options) {
    SuiteBuilder s{options, {}};

    s.layer("dense", Layer::dense(4, 5), {3, 4}, {3, 5});
    s.layer("conv1d", Layer::conv1d(2, 3, 4), {2, 2, 10}, {2, 3, 10});
    for (Activation a : {Activation::linear, Activation::relu, Activation::tanh, Activation::hard_sigmoid})
        s.layer("activation:" + std::string(activation_name(a)), Layer::activation(a), {4, 6}, {4, 6}, -4.0, 4.0);
    s.layer("dropout", Layer::dropout(0.3), {4, 6}, {4, 6}, -1.0, 1.0, true);
    s.layer("reshape", Layer::reshape({2, 3}), {4, 6}, {4, 2, 3});
    s.layer("normalize_power", Layer::normalize_power(), {3, 2, 5}, {3, 2, 5});

    for (LossKind k : {LossKind::mse, LossKind::clmse, LossKind::clmee, LossKind::clmle})
        s.loss(std::string(loss_kind_name(k)), LossSpec{k, 0.5, false});
    s.loss("clmee_literal", LossSpec{LossKind::clmee, 0.5, true});
    s.loss("clmle_literal", LossSpec{LossKind::clmle, 0.5, true});

    {
        ChannelConfig awgn;
        awgn.snr_db = 3.0;
        s.channel("awgn", awgn);

        ChannelConfig timing;
        timing.awgn = false;
        timing.time_offset = true;
        timing.sigma_t = 2.0;
        timing.sigma_t_rate = 0.1;
        s.channel("time_offset", timing);

        ChannelConfig phase;
        phase.awgn = false;
        phase.phase_offset = true;
        phase.sigma_f = 0.05;
        s.channel("phase_freq_offset", phase);

        ChannelConfig taps;
        taps.awgn = false;
        taps.delay_spread = true;
        taps.n_taps = 3;
        s.channel("delay_spread", taps);

        ChannelConfig all = timing;
        all.awgn = true;
        all.phase_offset = true;
        all.sigma_f = 0.05;
        all.delay_spread = true;
        all.n_taps = 3;
        s.channel("composite", all);
    }

    {
        RtnLayout layout{true, true, true, true, 3};
        const std::size_t batch = 2, n = 12;
        auto frames = std::make_shared<Parameter>("frames", Tensor({batch, 2, n}));
        auto params = std::make_shared<Parameter>("params", Tensor({batch, layout.packed_size()}));
        auto proj = std::make_shared<Tensor>(Shape{batch, 2, n});
        s.add("rtn:transform", "rtn", "transform", {frames.get(), params.get()},
              [=](Rng& rng) {
                  randomize(*frames, rng);
                  randomize(*params, rng);
                  for (std::size_t b = 0; b < batch; ++b) {
                      params->value[b * layout.packed_size() + 1] *= 0.1;
                      params->value[b * layout.packed_size() + 2] *= 3.0;
                  }
                  *proj = random_tensor({batch, 2, n}, rng);
              },
              [=](Tape& t) { return project(rtn_transform(t.param(*frames), t.param(*params), layout), *proj); });

        auto raw = std::make_shared<Parameter>("raw", Tensor({batch, layout.raw_size()}));
        auto proj2 = std::make_shared<Tensor>(Shape{batch, layout.packed_size()});
        s.add("rtn:heads", "rtn", "heads", {raw.get()},
              [=](Rng& rng) {
                  randomize(*raw, rng, -0.5, 0.5);
                  *proj2 = random_tensor({batch, layout.packed_size()}, rng);
              },
              [=](Tape& t) { return project(rtn_heads(t.param(*raw), layout), *proj2); });
    }

    {
        AutoencoderSpec dnn;
        dnn.arch = ModemArch{ModemKind::dnn, 8, 8, 16, 4, 3, "tanh", 0.0};
        dnn.channel.snr_db = 5.0;
        s.model("dnn_awgn", dnn);

        AutoencoderSpec cnn = dnn;
        cnn.arch = ModemArch{ModemKind::cnn, 8, 8, 32, 4, 3, "tanh", 0.0};
        s.model("cnn_awgn", cnn);

        AutoencoderSpec hard = cnn;
        hard.decode = DecodeMode::hard;
        hard.loss.kind = LossKind::clmse;
        s.model("cnn_hard_clmse", hard);

        AutoencoderSpec rtn = cnn;
        rtn.rtn = RtnMode::learned;
        rtn.channel.phase_offset = true;
        rtn.channel.sigma_f = 0.02;
        rtn.channel.time_offset = true;
        rtn.channel.sigma_t = 1.0;
        rtn.channel.delay_spread = true;
        rtn.channel.n_taps = 2;
        s.model("cnn_learned_rtn", rtn);
    }
    return s.entries;
}

} // namespace chanae
