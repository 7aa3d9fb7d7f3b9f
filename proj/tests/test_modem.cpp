#include "chanae/errors.hpp"
#include "chanae/gradcheck.hpp"
#include "chanae/modem.hpp"
#include "chanae/ops.hpp"
#include "chanae/optimizer.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace chanae;
using chanae::testing::max_fd_rel_error;
using chanae::testing::random_tensor;

namespace {

AutoencoderSpec small_spec(ModemKind kind, int n = 8) {
    AutoencoderSpec s;
    s.arch.kind = kind;
    s.arch.n_bits = n;
    s.arch.samples_per_frame = n;
    s.arch.hidden = 4 * n;
    s.arch.conv_filters = 4;
    s.arch.kernel_len = 3;
    return s;
}

Tensor random_bits(std::size_t batch, std::size_t n, Rng& rng) {
    Tensor t({batch, n});
    std::bernoulli_distribution coin(0.5);
    for (double& v : t.values()) v = coin(rng) ? 1.0 : 0.0;
    return t;
}

double frame_power(const Tensor& frames, std::size_t b) {
    const std::size_t n = frames.dim(2);
    double p = 0.0;
    for (std::size_t k = 0; k < 2 * n; ++k) p += frames[b * 2 * n + k] * frames[b * 2 * n + k];
    return p / static_cast<double>(n);
}

SignalFrame frame_at(const Tensor& frames, std::size_t b) {
    const std::size_t n = frames.dim(2);
    const auto src = frames.values().subspan(b * 2 * n, 2 * n);
    return SignalFrame(Tensor({2, n}, std::vector<double>(src.begin(), src.end())));
}

} // namespace

TEST(BuildAutoencoder, DefaultDnnShapes) {
    AutoencoderSpec s;
    s.arch.kind = ModemKind::dnn;
    ChannelAutoencoder ae = ChannelAutoencoder::build(s, 1);
    Rng rng(1);
    const Tensor bits = random_bits(4, 128, rng);
    EXPECT_EQ(ae.encode(bits).shape(), (Shape{4, 2, 128}));
    Tape t;
    Rng ch(2);
    const auto pass = ae.forward(t, bits, s.channel, ch, {});
    EXPECT_EQ(pass.soft.shape(), (Shape{4, 128}));
}

TEST(BuildAutoencoder, DefaultCnnShapes) {
    AutoencoderSpec s;
    ChannelAutoencoder ae = ChannelAutoencoder::build(s, 1);
    Rng rng(1);
    const Tensor bits = random_bits(4, 128, rng);
    EXPECT_EQ(ae.encode(bits).shape(), (Shape{4, 2, 128}));
    Tape t;
    Rng ch(2);
    EXPECT_EQ(ae.forward(t, bits, s.channel, ch, {}).soft.shape(), (Shape{4, 128}));
}

TEST(BuildAutoencoder, DnnHasMoreParametersThanCnn) {
    AutoencoderSpec dnn, cnn;
    dnn.arch.kind = ModemKind::dnn;
    cnn.arch.kind = ModemKind::cnn;
    const auto nd = ChannelAutoencoder::build(dnn, 1).parameter_count();
    const auto nc = ChannelAutoencoder::build(cnn, 1).parameter_count();
    EXPECT_GT(nd, nc);
}

TEST(BuildAutoencoder, InvalidArchIsConfigError) {
    AutoencoderSpec s;
    s.arch.n_bits = 0;
    EXPECT_THROW(ChannelAutoencoder::build(s, 1), ConfigError);
    s = {};
    s.arch.hidden = 100; // not a multiple of N for the cnn
    EXPECT_THROW(ChannelAutoencoder::build(s, 1), ConfigError);
    s = {};
    s.arch.activation = "gelu";
    EXPECT_THROW(ChannelAutoencoder::build(s, 1), ConfigError);
    s = {};
    s.rtn = RtnMode::learned; // awgn-only channel: nothing to estimate
    EXPECT_THROW(ChannelAutoencoder::build(s, 1), ConfigError);
    EXPECT_THROW(parse_modem_kind("rnn"), ConfigError);
}

TEST(Encode, DeterministicUnitPowerAndInformative) {
    for (ModemKind kind : {ModemKind::dnn, ModemKind::cnn}) {
        AutoencoderSpec s;
        s.arch.kind = kind;
        ChannelAutoencoder ae = ChannelAutoencoder::build(s, 3);
        Rng rng(5);
        const Tensor bits = random_bits(6, 128, rng);
        const Tensor a = ae.encode(bits), b = ae.encode(bits);
        EXPECT_EQ(a, b);
        for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(frame_power(a, i), 1.0, 1e-9);
        for (std::size_t i = 1; i < 6; ++i) EXPECT_FALSE(frame_at(a, 0) == frame_at(a, i));
    }
}

TEST(Encode, LengthMismatchIsInputError) {
    ChannelAutoencoder ae = ChannelAutoencoder::build(small_spec(ModemKind::dnn), 1);
    EXPECT_THROW(ae.encode(Tensor({2, 7})), InputError);
    EXPECT_THROW(ae.decode(Tensor({2, 2, 9})), InputError);
    EXPECT_THROW(ae.decode(Tensor({2, 3, 8})), InputError);
}

TEST(Decode, HardModeOutputsInUnitInterval) {
    AutoencoderSpec s = small_spec(ModemKind::cnn);
    s.decode = DecodeMode::hard;
    ChannelAutoencoder ae = ChannelAutoencoder::build(s, 1);
    Rng rng(8);
    for (double scale : {1.0, 100.0, 1e6}) {
        const Tensor out = ae.decode(random_tensor({16, 2, 8}, rng, -scale, scale));
        for (double v : out.values()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
}

TEST(Decode, BatchEqualsPerExample) {
    for (ModemKind kind : {ModemKind::dnn, ModemKind::cnn}) {
        ChannelAutoencoder ae = ChannelAutoencoder::build(small_spec(kind), 2);
        Rng rng(9);
        const Tensor frames = random_tensor({5, 2, 8}, rng);
        const Tensor all = ae.decode(frames);
        for (std::size_t b = 0; b < 5; ++b) {
            const Tensor one = ae.decode(frame_at(frames, b).tensor().reshaped({1, 2, 8}));
            for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(all[b * 8 + k], one[k], 1e-12);
        }
    }
}

TEST(Decode, ConstructedIdentityPassesBitsThrough) {
    // 2 bits, 2 samples, hidden 2, linear everywhere. The encoder sees 2b-1
    // and copies it onto I (unit power already); the decoder maps it back to b.
    AutoencoderSpec s;
    s.arch.kind = ModemKind::dnn;
    s.arch.n_bits = 2;
    s.arch.samples_per_frame = 2;
    s.arch.hidden = 2;
    s.arch.activation = "linear";
    ChannelAutoencoder ae = ChannelAutoencoder::build(s, 1);
    auto enc = ae.encoder().parameters();
    auto dec = ae.decoder().parameters();
    ASSERT_EQ(enc.size(), 4u);
    ASSERT_EQ(dec.size(), 4u);
    enc[0]->value = Tensor::matrix({{1, 0}, {0, 1}});
    enc[1]->value = Tensor({2}, {0, 0});
    enc[2]->value = Tensor::matrix({{1, 0, 0, 0}, {0, 1, 0, 0}});
    enc[3]->value = Tensor({4}, {0, 0, 0, 0});
    dec[0]->value = Tensor::matrix({{0.5, 0}, {0, 0.5}, {0, 0}, {0, 0}});
    dec[1]->value = Tensor({2}, {0.5, 0.5});
    dec[2]->value = Tensor::matrix({{1, 0}, {0, 1}});
    dec[3]->value = Tensor({2}, {0, 0});
    const Tensor bits = Tensor::matrix({{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    const Tensor soft = ae.decode(ae.encode(bits));
    for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(soft[k], bits[k], 1e-15);
}

TEST(SliceBits, Examples) {
    const double a[] = {0.7, 0.2};
    EXPECT_EQ(slice_bits(a, 0.5), (BitFrame{1, 0}));
    const double edge[] = {0.5};
    EXPECT_EQ(slice_bits(edge, 0.5), (BitFrame{1}));
    const double bin[] = {0, 1, 1, 0};
    EXPECT_EQ(slice_bits(bin, 0.5), (BitFrame{0, 1, 1, 0}));
}

TEST(SliceBits, IdempotentForGammaInUnitInterval) {
    Rng rng(10);
    std::uniform_real_distribution<double> u(-2, 3), g(0.01, 0.99);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> soft(16);
        for (double& v : soft) v = u(rng);
        const double gamma = g(rng);
        const BitFrame once = slice_bits(soft, gamma);
        const std::vector<double> as_real(once.begin(), once.end());
        EXPECT_EQ(slice_bits(as_real, gamma), once);
    }
}

TEST(RtnTransform, IdentityParameters) {
    Rng rng(11);
    const SignalFrame f(random_tensor({2, 12}, rng));
    EXPECT_EQ(rtn_transform(f, RtnParams{}), f);
}

TEST(RtnTransform, ExactInverseOfRotation) {
    Rng rng(12);
    const SignalFrame f(random_tensor({2, 32}, rng));
    RtnParams p;
    p.phase = 1.234;
    const SignalFrame back = rtn_transform(rotate(f, 1.234, 0.0), p);
    for (std::size_t k = 0; k < 64; ++k) EXPECT_NEAR(back.tensor()[k], f.tensor()[k], 1e-9);
    for (int trial = 0; trial < 20; ++trial) {
        std::uniform_real_distribution<double> th(0, 2 * std::numbers::pi), fr(-0.1, 0.1);
        RtnParams q;
        q.phase = th(rng);
        q.freq = fr(rng);
        const SignalFrame r = rtn_transform(rotate(f, q.phase, q.freq), q);
        for (std::size_t k = 0; k < 64; ++k) EXPECT_NEAR(r.tensor()[k], f.tensor()[k], 1e-9);
    }
}

TEST(RtnTransform, OracleUndoesIntegerShiftAndRotation) {
    Rng rng(13);
    SignalFrame f(random_tensor({2, 16}, rng));
    // Zero the tail so the shifted-out samples carry nothing.
    for (std::size_t k = 13; k < 16; ++k) f.i()[k] = f.q()[k] = 0.0;
    ChannelDraw d;
    d.time_offset = true;
    d.theta_t = 3.0;
    d.phase_offset = true;
    d.theta_f = 0.8;
    d.theta_f_rate = 0.02;
    const SignalFrame back = rtn_transform(replay(f, d), oracle_rtn_params(d, 1));
    for (std::size_t k = 0; k < 32; ++k) EXPECT_NEAR(back.tensor()[k], f.tensor()[k], 1e-12);
}

TEST(RtnTransform, PackUnpackRoundTrip) {
    ChannelConfig c;
    c.phase_offset = c.time_offset = c.delay_spread = true;
    c.n_taps = 3;
    const RtnLayout layout = RtnLayout::for_channel(c);
    EXPECT_EQ(layout.packed_size(), 6u);
    RtnParams p;
    p.phase = 0.3;
    p.freq = -0.01;
    p.time_shift = 1.5;
    p.taps = {1.0, -0.2, 0.1};
    const Tensor packed = pack_rtn_params(std::span<const RtnParams>(&p, 1), layout);
    const RtnParams q = unpack_rtn_params(packed.values(), layout);
    EXPECT_EQ(q.phase, p.phase);
    EXPECT_EQ(q.freq, p.freq);
    EXPECT_EQ(q.time_shift, p.time_shift);
    EXPECT_EQ(q.taps, p.taps);
}

TEST(RtnEstimate, ZeroFrameGivesFiniteParameters) {
    AutoencoderSpec s = small_spec(ModemKind::cnn);
    s.channel.phase_offset = true;
    s.channel.sigma_f = 0.01;
    s.rtn = RtnMode::learned;
    ChannelAutoencoder ae = ChannelAutoencoder::build(s, 4);
    const RtnParams p = ae.rtn_estimate(SignalFrame::zeros(8));
    EXPECT_TRUE(std::isfinite(p.phase));
    EXPECT_TRUE(std::isfinite(p.freq));
    EXPECT_TRUE(std::isfinite(p.time_shift));
    for (double t : p.taps) EXPECT_TRUE(std::isfinite(t));
    AutoencoderSpec plain = small_spec(ModemKind::cnn);
    ChannelAutoencoder none = ChannelAutoencoder::build(plain, 4);
    EXPECT_THROW(none.rtn_estimate(SignalFrame::zeros(8)), ConfigError);
}

TEST(RtnEstimate, EstimatorGradientMatchesFiniteDifferences) {
    AutoencoderSpec s = small_spec(ModemKind::cnn);
    s.channel.phase_offset = true;
    s.channel.sigma_f = 0.02;
    s.rtn = RtnMode::learned;
    ChannelAutoencoder ae = ChannelAutoencoder::build(s, 6);
    Rng rng(21);
    const Tensor bits = random_bits(3, 8, rng);
    std::vector<ChannelDraw> draws;
    for (int b = 0; b < 3; ++b) draws.push_back(sample_draw(s.channel, 8, rng));
    // Some heads feed the loss only weakly (gradients near 1e-8), where
    // central differences carry ~1e-11 of rounding noise.
    for (Parameter* p : ae.estimator().parameters()) {
        const double err = max_fd_rel_error(
            *p,
            [&](Tape& t) {
                Rng unused(0);
                return loss_forward(s.loss, bits, ae.forward(t, bits, s.channel, unused, {}, draws).soft);
            },
            1e-5, 1e-5);
        EXPECT_LT(err, 1e-5) << p->name;
    }
}

TEST(RtnEstimate, TimingHeadGradientPassesKinkAwareCheck) {
    // Linear interpolation is piecewise linear in the shift, so probes that
    // straddle an integer sample position are rejected rather than compared.
    AutoencoderSpec s = small_spec(ModemKind::cnn);
    s.channel.phase_offset = true;
    s.channel.sigma_f = 0.02;
    s.channel.time_offset = true;
    s.channel.sigma_t = 0.5;
    s.rtn = RtnMode::learned;
    ChannelAutoencoder ae = ChannelAutoencoder::build(s, 6);
    Rng rng(21);
    const Tensor bits = random_bits(3, 8, rng);
    std::vector<ChannelDraw> draws;
    for (int b = 0; b < 3; ++b) draws.push_back(sample_draw(s.channel, 8, rng));
    const auto params = ae.estimator().parameters();
    const auto res = grad_check(
        params,
        [&](Rng& r) {
            for (Parameter* p : params)
                for (double& v : p->value.values()) v += std::normal_distribution<double>(0.0, 0.05)(r);
        },
        [&](Tape& t) {
            Rng unused(0);
            return loss_forward(s.loss, bits, ae.forward(t, bits, s.channel, unused, {}, draws).soft);
        });
    EXPECT_EQ(res.probes, 10);
    EXPECT_LT(res.max_rel_error, kGradCheckTolerance) << res.worst_param;
}

TEST(Autoencoder, OneStepMovesEncoderFirstLayer) {
    AutoencoderSpec s = small_spec(ModemKind::cnn, 16);
    s.channel.phase_offset = true;
    s.channel.delay_spread = true;
    s.channel.n_taps = 2;
    ChannelAutoencoder ae = ChannelAutoencoder::build(s, 7);
    Rng rng(3);
    const Tensor bits = random_bits(8, 16, rng);
    const Tensor before = ae.encoder().parameters()[0]->value;
    Tape t;
    t.backward(loss_forward(s.loss, bits, ae.forward(t, bits, s.channel, rng, {}).soft));
    Optimizer opt({});
    opt.step(ae.parameters());
    const Tensor& after = ae.encoder().parameters()[0]->value;
    double norm = 0.0;
    for (std::size_t k = 0; k < after.size(); ++k) norm += (after[k] - before[k]) * (after[k] - before[k]);
    EXPECT_GT(norm, 0.0);
}

TEST(Autoencoder, UntrainedModelIsAtChance) {
    AutoencoderSpec s;
    ChannelAutoencoder ae = ChannelAutoencoder::build(s, 2024);
    Rng rng(31);
    std::uint64_t errors = 0, total = 0;
    while (total < 100000) {
        const Tensor bits = random_bits(64, 128, rng);
        Tape t;
        const Tensor soft = ae.forward(t, bits, s.channel, rng, {}).soft.value();
        const BitFrame hat = slice_bits(soft.values(), 0.5);
        for (std::size_t k = 0; k < hat.size(); ++k) errors += hat[k] != static_cast<std::uint8_t>(bits[k]);
        total += hat.size();
    }
    EXPECT_NEAR(static_cast<double>(errors) / static_cast<double>(total), 0.5, 0.01);
}
