#include "chanae/gradcheck.hpp"

#include "chanae/errors.hpp"

#include <algorithm>
#include <cmath>

namespace chanae {
namespace {

struct Eval {
    double value = 0.0;
    double margin = 0.0;
    std::uint64_t region = 0;
};

Eval evaluate(const std::function<Var(Tape&)>& build) {
    Tape tape;
    Var out = build(tape);
    if (out.value().size() != 1) throw DimensionError("grad_check: objective must be a scalar");
    return {out.value()[0], tape.kink_margin(), tape.region_hash()};
}

std::vector<double> random_unit(std::size_t n, Rng& rng) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> d(n);
    double norm = 0.0;
    for (double& v : d) {
        v = g(rng);
        norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : d) v /= norm;
    return d;
}

} // namespace

GradCheckResult grad_check(std::span<Parameter* const> params, const std::function<void(Rng&)>& setup,
                           const std::function<Var(Tape&)>& build, const GradCheckOptions& options) {
    GradCheckResult result;
    Rng rng(options.seed);
    const double eps = options.eps;
    const double min_margin = 10.0 * eps;

    for (int probe = 0; probe < options.probes; ++probe) {
        bool accepted = false;
        for (int attempt = 0; attempt < options.max_attempts && !accepted; ++attempt) {
            setup(rng);
            for (Parameter* p : params) p->zero_grad();

            double base_margin = 0.0;
            std::uint64_t base_region = 0;
            {
                Tape tape;
                Var out = build(tape);
                base_margin = tape.kink_margin();
                base_region = tape.region_hash();
                if (base_margin < min_margin) {
                    ++result.rejected;
                    continue;
                }
                tape.backward(out);
            }

            struct Check {
                Parameter* p;
                std::vector<double> dir;
            };
            std::vector<Check> checks;
            for (Parameter* p : params) {
                const auto g = p->grad.values();
                double gn = 0.0;
                for (double v : g) gn += v * v;
                gn = std::sqrt(gn);
                if (gn > 0.0) {
                    std::vector<double> d(g.begin(), g.end());
                    for (double& v : d) v /= gn;
                    checks.push_back({p, std::move(d)});
                }
                for (int k = 0; k < options.random_directions; ++k)
                    checks.push_back({p, random_unit(p->value.size(), rng)});
            }

            double worst = 0.0;
            std::string worst_name;
            bool straddles = false;
            for (const Check& c : checks) {
                auto w = c.p->value.values();
                const std::vector<double> saved(w.begin(), w.end());
                double analytic = 0.0;
                const auto g = c.p->grad.values();
                for (std::size_t i = 0; i < w.size(); ++i) analytic += g[i] * c.dir[i];

                for (std::size_t i = 0; i < w.size(); ++i) w[i] = saved[i] + eps * c.dir[i];
                const Eval plus = evaluate(build);
                for (std::size_t i = 0; i < w.size(); ++i) w[i] = saved[i] - eps * c.dir[i];
                const Eval minus = evaluate(build);
                std::copy(saved.begin(), saved.end(), w.begin());

                if (plus.region != base_region || minus.region != base_region) {
                    straddles = true;
                    break;
                }
                const double numeric = (plus.value - minus.value) / (2.0 * eps);
                const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
                const double rel = std::abs(analytic - numeric) / denom;
                if (!(rel <= worst)) {
                    worst = std::isnan(rel) ? INFINITY : rel;
                    worst_name = c.p->name;
                }
            }
            if (straddles) {
                ++result.rejected;
                continue;
            }
            accepted = true;
            ++result.probes;
            if (worst >= result.max_rel_error) {
                result.max_rel_error = worst;
                result.worst_param = worst_name;
            }
        }
        if (!accepted) break;
    }
    for (Parameter* p : params) p->zero_grad();
    return result;
}

} // namespace chanae
