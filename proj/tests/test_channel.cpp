#include "chanae/channel.hpp"
#include "chanae/errors.hpp"
#include "chanae/ops.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

using namespace chanae;
using chanae::testing::max_fd_rel_error;
using chanae::testing::random_tensor;

namespace {

SignalFrame frame_of(std::vector<double> i, std::vector<double> q) { return SignalFrame::from_iq(i, q); }

SignalFrame random_frame(std::size_t n, Rng& rng) { return SignalFrame(random_tensor({2, n}, rng)); }

void expect_frames_near(const SignalFrame& a, const SignalFrame& b, double tol) {
    ASSERT_EQ(a.samples(), b.samples());
    for (std::size_t k = 0; k < a.tensor().size(); ++k) EXPECT_NEAR(a.tensor()[k], b.tensor()[k], tol) << k;
}

double noise_power_db(double snr_db, std::size_t samples, std::uint64_t seed) {
    Rng rng(seed);
    double acc = 0.0;
    const SignalFrame zero = SignalFrame::zeros(samples);
    auto [out, draw] = awgn(zero, snr_db, rng);
    for (double v : out.tensor().values()) acc += v * v;
    return 10.0 * std::log10(acc / static_cast<double>(samples));
}

} // namespace

TEST(SignalFrame, RejectsMalformedData) {
    EXPECT_THROW(SignalFrame(Tensor({3, 4})), DimensionError);
    EXPECT_THROW(SignalFrame(Tensor({2, 0})), DimensionError);
    EXPECT_THROW(frame_of({1.0, std::numeric_limits<double>::quiet_NaN()}, {0.0, 0.0}), InputError);
}

TEST(NormalizePower, Examples) {
    const SignalFrame a = normalize_power(frame_of({1, 1}, {1, 1}));
    for (double v : a.tensor().values()) EXPECT_NEAR(v, 1.0 / std::sqrt(2.0), 1e-15);
    EXPECT_EQ(normalize_power(frame_of({2}, {0})), frame_of({1}, {0}));
    EXPECT_THROW(normalize_power(SignalFrame::zeros(4)), DegenerateInputError);
}

TEST(NormalizePower, UnitPowerForRandomFrames) {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const SignalFrame f = random_frame(1 + static_cast<std::size_t>(trial), rng);
        EXPECT_NEAR(normalize_power(f).average_power(), 1.0, 1e-12);
    }
}

TEST(Awgn, NoiseDeviationConventions) {
    EXPECT_NEAR(noise_stddev(0.0), 0.70710678118654752, 1e-15);
    EXPECT_NEAR(noise_stddev(0.0, NoiseConvention::literal_stddev), 0.70710678118654752, 1e-15);
    EXPECT_NEAR(noise_stddev(10.0), std::sqrt(0.05), 1e-15);
    EXPECT_NEAR(noise_stddev(10.0, NoiseConvention::literal_stddev), 0.1 / std::sqrt(2.0), 1e-15);
    EXPECT_EQ(noise_stddev(std::numeric_limits<double>::infinity()), 0.0);
}

TEST(Awgn, InfiniteSnrIsIdentity) {
    Rng rng(1);
    const SignalFrame f = normalize_power(random_frame(32, rng));
    EXPECT_EQ(awgn(f, std::numeric_limits<double>::infinity(), rng).first, f);
}

TEST(Awgn, MeasuredSnrAtFiveDb) {
    // Unit-power signal over 10^6 samples; SNR = signal power / measured noise power.
    Rng rng(99);
    const std::size_t n = 1000000;
    SignalFrame f = SignalFrame::zeros(n);
    for (std::size_t k = 0; k < n; ++k) f.i()[k] = (k % 2) ? 1.0 : -1.0;
    auto [out, draw] = awgn(f, 5.0, rng);
    double noise = 0.0;
    for (std::size_t k = 0; k < 2 * n; ++k) {
        const double d = out.tensor()[k] - f.tensor()[k];
        noise += d * d;
    }
    const double snr = 10.0 * std::log10(f.average_power() / (noise / static_cast<double>(n)));
    EXPECT_NEAR(snr, 5.0, 0.2);
}

TEST(Awgn, NoisePowerTracksSnrOnGrid) {
    for (double snr : {-5.0, 0.0, 5.0, 10.0}) EXPECT_NEAR(noise_power_db(snr, 1000000, 3), -snr, 0.2) << snr;
}

TEST(Awgn, AdditiveForFixedDraw) {
    Rng rng(4);
    const SignalFrame x = random_frame(16, rng), y = random_frame(16, rng);
    auto [out, draw] = awgn(x, 3.0, rng);
    const SignalFrame again = replay(y, draw);
    for (std::size_t k = 0; k < 32; ++k)
        EXPECT_NEAR(out.tensor()[k] - x.tensor()[k], again.tensor()[k] - y.tensor()[k], 1e-15);
}

TEST(TimeOffset, ZeroSpreadIsIdentity) {
    Rng rng(2);
    const SignalFrame f = random_frame(20, rng);
    auto [out, draw] = time_offset(f, 0.0, 0.0, rng);
    EXPECT_EQ(out, f);
    EXPECT_EQ(draw.theta_t, 0.0);
    EXPECT_EQ(draw.theta_t_rate, 1.0);
}

TEST(TimeOffset, IntegerShiftWithZeroFill) {
    const SignalFrame out = apply_time_offset(frame_of({1, 2, 3, 4}, {0, 0, 0, 0}), 2.0, 1.0);
    EXPECT_EQ(out, frame_of({0, 0, 1, 2}, {0, 0, 0, 0}));
}

TEST(TimeOffset, HalfSampleShiftKeepsConstantInterior) {
    const SignalFrame out = apply_time_offset(frame_of({1, 1, 1, 1, 1, 1}, {0, 0, 0, 0, 0, 0}), 0.5, 1.0);
    for (std::size_t k = 1; k < 6; ++k) EXPECT_DOUBLE_EQ(out.i()[k], 1.0);
    EXPECT_DOUBLE_EQ(out.i()[0], 0.5);
}

TEST(TimeOffset, DilationRateIsAlwaysAboveGuard) {
    Rng rng(12);
    for (int i = 0; i < 2000; ++i) {
        auto [out, draw] = time_offset(SignalFrame::zeros(4), 1.0, 2.0, rng);
        EXPECT_GT(draw.theta_t_rate, 0.1);
    }
}

TEST(PhaseFreqOffset, Examples) {
    Rng rng(3);
    const SignalFrame f = random_frame(10, rng);
    EXPECT_EQ(rotate(f, 0.0, 0.0), f);
    expect_frames_near(rotate(frame_of({1}, {0}), std::numbers::pi / 2, 0.0), frame_of({0}, {1}), 1e-15);
    expect_frames_near(rotate(rotate(f, 0.7, 0.03), -0.7, -0.03), f, 1e-12);
}

TEST(PhaseFreqOffset, PreservesMagnitude) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const SignalFrame f = random_frame(24, rng);
        auto [out, draw] = phase_freq_offset(f, 2 * std::numbers::pi, 0.1, rng);
        for (std::size_t k = 0; k < 24; ++k)
            EXPECT_NEAR(out.i()[k] * out.i()[k] + out.q()[k] * out.q()[k],
                        f.i()[k] * f.i()[k] + f.q()[k] * f.q()[k], 1e-12);
        EXPECT_GE(draw.theta_f, 0.0);
        EXPECT_LT(draw.theta_f, 2 * std::numbers::pi);
    }
}

TEST(DelaySpread, Examples) {
    Rng rng(6);
    const SignalFrame f = random_frame(9, rng);
    const double unit[] = {1.0};
    EXPECT_EQ(apply_fir(f, unit), f);
    const double delay[] = {0.0, 1.0};
    EXPECT_EQ(apply_fir(frame_of({1, 2, 3}, {0, 0, 0}), delay), frame_of({0, 1, 2}, {0, 0, 0}));
    EXPECT_THROW(delay_spread(frame_of({1, 2}, {0, 0}), 3, rng), ConfigError);
}

TEST(DelaySpread, TapsAreUniformAndShared) {
    Rng rng(7);
    const SignalFrame f = frame_of({1, 0, 0, 0, 0}, {1, 0, 0, 0, 0});
    auto [out, draw] = delay_spread(f, 4, rng);
    ASSERT_EQ(draw.taps.size(), 4u);
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_GE(draw.taps[j], -1.0);
        EXPECT_LT(draw.taps[j], 1.0);
        EXPECT_EQ(out.i()[j], draw.taps[j]);
        EXPECT_EQ(out.q()[j], draw.taps[j]);
    }
}

TEST(ChannelLayers, HomogeneousOfDegreeOneForFixedDraw) {
    Rng rng(10);
    ChannelConfig cfg;
    cfg.awgn = false;
    cfg.delay_spread = true;
    cfg.n_taps = 3;
    cfg.time_offset = true;
    cfg.sigma_t = 1.5;
    cfg.sigma_t_rate = 0.05;
    cfg.phase_offset = true;
    cfg.sigma_f = 0.02;
    for (int trial = 0; trial < 20; ++trial) {
        const SignalFrame x = random_frame(16, rng);
        const ChannelDraw d = sample_draw(cfg, 16, rng);
        const double alpha = 0.25 + trial;
        SignalFrame ax = x;
        for (double& v : ax.tensor().values()) v *= alpha;
        SignalFrame expect = replay(x, d);
        for (double& v : expect.tensor().values()) v *= alpha;
        expect_frames_near(replay(ax, d), expect, 1e-12 * alpha);
    }
}

TEST(ApplyChannel, AllDisabledIsNormalization) {
    Rng rng(11);
    ChannelConfig cfg;
    cfg.awgn = false;
    const SignalFrame f = random_frame(12, rng);
    EXPECT_EQ(apply_channel(f, cfg, rng).first, normalize_power(f));
}

TEST(ApplyChannel, AwgnOutputPowerAtFiveDb) {
    Rng rng(13);
    ChannelConfig cfg;
    cfg.snr_db = 5.0;
    const std::size_t frames = 100000, n = 16;
    double acc = 0.0;
    for (std::size_t b = 0; b < frames; ++b) {
        const SignalFrame f = random_frame(n, rng);
        acc += apply_channel(f, cfg, rng).first.average_power();
    }
    const double expected = 1.0 + std::pow(10.0, -0.5);
    EXPECT_NEAR(acc / static_cast<double>(frames), expected, 0.02 * expected);
}

TEST(ApplyChannel, ReplayIsBitIdentical) {
    Rng rng(14);
    ChannelConfig cfg;
    cfg.delay_spread = true;
    cfg.n_taps = 2;
    cfg.time_offset = true;
    cfg.sigma_t = 0.7;
    cfg.sigma_t_rate = 0.01;
    cfg.phase_offset = true;
    cfg.sigma_f = 0.01;
    const SignalFrame f = random_frame(32, rng);
    auto [out, draw] = apply_channel(f, cfg, rng);
    EXPECT_EQ(replay(normalize_power(f), draw), out);
}

TEST(ChannelConfig, Validation) {
    ChannelConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.n_taps = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.sigma_t = -1;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = {};
    cfg.phase_max = 7.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    EXPECT_THROW(parse_noise_convention("db"), ConfigError);
}

TEST(ChannelGraph, ForwardMatchesReplayPerFrame) {
    Rng rng(15);
    ChannelConfig cfg;
    cfg.delay_spread = true;
    cfg.n_taps = 3;
    cfg.time_offset = true;
    cfg.sigma_t = 1.0;
    cfg.sigma_t_rate = 0.05;
    cfg.phase_offset = true;
    cfg.sigma_f = 0.05;
    const std::size_t batch = 3, n = 10;
    const Tensor x = random_tensor({batch, 2, n}, rng);
    std::vector<ChannelDraw> draws;
    for (std::size_t b = 0; b < batch; ++b) draws.push_back(sample_draw(cfg, n, rng));
    Tape t;
    const Tensor y = channel_forward(t.constant(x), draws).value();
    for (std::size_t b = 0; b < batch; ++b) {
        const auto src = x.values().subspan(b * 2 * n, 2 * n);
        const SignalFrame expect = replay(SignalFrame(Tensor({2, n}, std::vector<double>(src.begin(), src.end()))),
                                          draws[b]);
        for (std::size_t k = 0; k < 2 * n; ++k) EXPECT_NEAR(y[b * 2 * n + k], expect.tensor()[k], 1e-14);
    }
}

TEST(ChannelGraph, GradientsMatchFiniteDifferencesPerImpairment) {
    struct Case {
        const char* name;
        ChannelConfig cfg;
    };
    std::vector<Case> cases;
    ChannelConfig base;
    base.awgn = false;
    {
        ChannelConfig c = base;
        c.awgn = true;
        cases.push_back({"awgn", c});
    }
    {
        ChannelConfig c = base;
        c.time_offset = true;
        c.sigma_t = 1.3;
        c.sigma_t_rate = 0.1;
        cases.push_back({"time_offset", c});
    }
    {
        ChannelConfig c = base;
        c.phase_offset = true;
        c.sigma_f = 0.1;
        cases.push_back({"phase_freq_offset", c});
    }
    {
        ChannelConfig c = base;
        c.delay_spread = true;
        c.n_taps = 4;
        cases.push_back({"delay_spread", c});
    }
    Rng rng(16);
    for (const Case& c : cases) {
        const std::size_t batch = 2, n = 12;
        Parameter x("x", random_tensor({batch, 2, n}, rng));
        const Tensor proj = random_tensor({batch, 2, n}, rng);
        std::vector<ChannelDraw> draws;
        for (std::size_t b = 0; b < batch; ++b) draws.push_back(sample_draw(c.cfg, n, rng));
        const double err = max_fd_rel_error(
            x, [&](Tape& t) { return sum(mul_constant(channel_forward(t.param(x), draws), proj)); });
        EXPECT_LT(err, 1e-6) << c.name;
    }
}
