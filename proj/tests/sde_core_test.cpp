#include "eprlab/models.hpp"
#include "eprlab/noise.hpp"
#include "eprlab/sde.hpp"

#include "property.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

namespace eprlab {
namespace {

using testing::Gen;
using testing::kCases;

// Known-answer vectors published with the Random123 reference implementation.
TEST(Philox, KnownAnswerZero) {
    const auto out = philox4x32({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out[0], 0x6627e8d5u);
    EXPECT_EQ(out[1], 0xe169c58du);
    EXPECT_EQ(out[2], 0xbc57ac4cu);
    EXPECT_EQ(out[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerOnes) {
    const auto out = philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(out[0], 0x408f276du);
    EXPECT_EQ(out[1], 0x41c83b0eu);
    EXPECT_EQ(out[2], 0xa20bc7c6u);
    EXPECT_EQ(out[3], 0x6d5451fdu);
}

TEST(Philox, KnownAnswerPi) {
    const auto out = philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(out[0], 0xd16cfe09u);
    EXPECT_EQ(out[1], 0x94fdccebu);
    EXPECT_EQ(out[2], 0x5001e420u);
    EXPECT_EQ(out[3], 0x24126ea1u);
}

TEST(NoiseStream, ReplaysFromKey) {
    NoiseStream a(42, 7), b(42, 7);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.normal(), b.normal());
}

TEST(NoiseStream, ResumesFromCounter) {
    NoiseStream a(5, 3);
    for (int i = 0; i < 8; ++i) a();  // two full blocks
    NoiseStream b(5, 3, 2);
    for (int i = 0; i < 100; ++i) ASSERT_EQ(a(), b());
}

TEST(NoiseStream, DistinctStreamsDiffer) {
    std::set<std::uint32_t> firsts;
    for (std::uint64_t s = 0; s < 256; ++s) firsts.insert(NoiseStream(1, s)());
    EXPECT_EQ(firsts.size(), 256u);
}

TEST(NoiseStream, UniformInUnitInterval) {
    NoiseStream s(9, 0);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = s.uniform();
        ASSERT_GE(u, 0.0);
        ASSERT_LT(u, 1.0);
        sum += u;
    }
    EXPECT_NEAR(sum / n, 0.5, 5.0 * std::sqrt(1.0 / 12.0 / n));
}

TEST(NoiseStream, NormalMoments) {
    NoiseStream s(11, 4);
    const int n = 400000;
    double m1 = 0, m2 = 0, m4 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = s.normal();
        m1 += z;
        m2 += z * z;
        m4 += z * z * z * z;
    }
    m1 /= n;
    m2 /= n;
    m4 /= n;
    EXPECT_NEAR(m1, 0.0, 5.0 / std::sqrt(n));
    EXPECT_NEAR(m2, 1.0, 5.0 * std::sqrt(2.0 / n));
    EXPECT_NEAR(m4, 3.0, 5.0 * std::sqrt(96.0 / n));
}

WienerIncrement increment(std::initializer_list<double> dw, double h) {
    return {to_vec(dw), h};
}

TEST(EmStep, ZeroDriftIdentityDiffusion) {
    const ModelSpec bm = make_brownian(2);
    const Vec next = em_step(to_vec({0.0, 0.0}), bm, increment({0.3, -0.1}, 0.01));
    EXPECT_DOUBLE_EQ(next[0], 0.3);
    EXPECT_DOUBLE_EQ(next[1], -0.1);
}

TEST(EmStep, ScalarDecay) {
    const ModelSpec ou = make_scalar_ou(1.0, 1.0);
    const Vec next = em_step(to_vec({1.0}), ou, increment({0.0}, 0.1));
    EXPECT_DOUBLE_EQ(next[0], 0.9);
}

TEST(EmStep, RotatedOuDrift) {
    const ModelSpec m = make_rotated_ou(1.0, 1.0);
    const Vec b = m.drift(to_vec({1.0, 0.0}));
    EXPECT_DOUBLE_EQ(b[0], -1.0);
    EXPECT_DOUBLE_EQ(b[1], -1.0);
    const Vec next = em_step(to_vec({1.0, 0.0}), m, increment({0.0, 0.0}, 0.1));
    EXPECT_NEAR(next[0], 0.9, 1e-15);
    EXPECT_NEAR(next[1], -0.1, 1e-15);
}

TEST(EmStep, MatchesUpdateRuleProperty) {
    for (std::size_t c = 0; c < kCases; ++c) {
        Gen g(c);
        const int d = g.integer(1, 4);
        const Mat m = -Mat::Identity(d, d) + g.antisymmetric(d, 0.5);
        const Mat s = g.invertible(d);
        const ModelSpec model = make_linear_ou(m, s);
        const Vec x = g.vec(d, 2.0);
        const double h = g.uniform(1e-4, 0.1);
        const WienerIncrement inc{g.vec(d, std::sqrt(h)), h};
        const Vec expected = x + m * x * h + s * inc.dw;
        const Vec got = em_step(x, model, inc);
        EXPECT_LT((got - expected).norm(), 1e-12 * (1.0 + expected.norm())) << "case " << c;
    }
}

TEST(EmStep, RejectsDimensionMismatch) {
    const ModelSpec bm = make_brownian(2);
    EXPECT_THROW(em_step(to_vec({1.0}), bm, increment({0.0, 0.0}, 0.1)), ConfigError);
}

ModelSpec explosive_model() {
    ModelParts parts;
    parts.family = "explosive";
    parts.dim = 1;
    parts.drift = [](const Vec& x) -> Vec { return x.array().cube().matrix() * 1e3; };
    parts.constant_sigma = Mat::Identity(1, 1);
    return ModelSpec(std::move(parts));
}

TEST(SimulatePath, NumericErrorCarriesStepAndState) {
    const ModelSpec m = explosive_model();
    PathConfig cfg;
    cfg.h = 0.1;
    cfg.t_end = 100.0;
    try {
        simulate_path(m, to_vec({10.0}), cfg);
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_GE(e.step(), 1u);
        ASSERT_EQ(e.last_finite_state().size(), 1);
        EXPECT_TRUE(std::isfinite(e.last_finite_state()[0]));
    }
}

TEST(SimulatePath, SingleStep) {
    struct Count {
        int calls = 0;
        void on_step(double, const Vec&, const WienerIncrement&) { ++calls; }
    } obs;
    PathConfig cfg;
    cfg.h = 0.01;
    cfg.t_end = 0.01;
    const PathSummary s = simulate_path(make_brownian(2), to_vec({0.0, 0.0}), cfg, obs);
    EXPECT_EQ(s.steps, 1u);
    EXPECT_EQ(obs.calls, 1);
    EXPECT_DOUBLE_EQ(s.realized_horizon, 0.01);
}

TEST(SimulatePath, RejectsHorizonBelowOneStep) {
    PathConfig cfg;
    cfg.h = 0.1;
    cfg.t_end = 0.01;
    EXPECT_THROW(simulate_path(make_brownian(1), to_vec({0.0}), cfg), ConfigError);
}

TEST(SimulatePath, Deterministic) {
    PathConfig cfg;
    cfg.h = 1e-3;
    cfg.t_end = 1.0;
    cfg.seed = 77;
    cfg.stream_id = 3;
    const ModelSpec bm = make_brownian(2);
    const PathSummary a = simulate_path(bm, to_vec({0.0, 0.0}), cfg);
    const PathSummary b = simulate_path(bm, to_vec({0.0, 0.0}), cfg);
    EXPECT_EQ(a.final_state[0], b.final_state[0]);
    EXPECT_EQ(a.final_state[1], b.final_state[1]);
}

TEST(SimulatePath, ObserverSeesLeftPointAndTime) {
    struct Check {
        Vec expected;
        double h;
        const ModelSpec* m;
        int k = 0;
        double max_err = 0;
        void on_step(double t, const Vec& x, const WienerIncrement& inc) {
            max_err = std::max(max_err, std::abs(t - k * h));
            max_err = std::max(max_err, (x - expected).norm());
            expected = em_step(x, *m, inc);
            ++k;
        }
    };
    const ModelSpec m = make_rotated_ou(1.0, 1.0);
    Check obs{to_vec({1.0, 2.0}), 0.01, &m};
    PathConfig cfg;
    cfg.h = 0.01;
    cfg.t_end = 5.0;
    simulate_path(m, to_vec({1.0, 2.0}), cfg, obs);
    EXPECT_EQ(obs.k, 500);
    EXPECT_LT(obs.max_err, 1e-12);
}

TEST(SimulatePath, StationarySecondMoment) {
    // Time average of |x|^2 against mu(|x|^2) = d / (2 beta) = 1.
    const ModelSpec m = make_rotated_ou(1.0, 1.0);
    struct Avg {
        double sum = 0;
        double sum_sq_batches = 0;
        double batch = 0;
        int in_batch = 0;
        std::vector<double> batches;
        void on_step(double, const Vec& x, const WienerIncrement&) {
            batch += x.squaredNorm();
            if (++in_batch == 1000) {
                batches.push_back(batch / 1000);
                batch = 0;
                in_batch = 0;
            }
        }
    } obs;
    PathConfig cfg;
    cfg.h = 1e-3;
    cfg.t_end = 100.0;
    cfg.burn_in = 10.0;
    cfg.seed = 3;
    // Several independent paths make the standard error honest.
    std::vector<double> means;
    for (std::uint64_t s = 0; s < 20; ++s) {
        obs.batches.clear();
        cfg.stream_id = s;
        simulate_path(m, to_vec({0.0, 0.0}), cfg, obs);
        double mean = 0;
        for (double b : obs.batches) mean += b;
        means.push_back(mean / obs.batches.size());
    }
    double mu = 0, var = 0;
    for (double x : means) mu += x;
    mu /= means.size();
    for (double x : means) var += (x - mu) * (x - mu);
    const double se = std::sqrt(var / (means.size() - 1) / means.size());
    // Euler-Maruyama bias of the stationary variance is O(h).
    EXPECT_NEAR(mu, 1.0, 3.0 * se + 2e-3);
}

TEST(ReversedDrift, ReversibleModelGivesDrift) {
    RotatedGaussianParams p;
    p.beta = 1.5;
    p.A = Mat::Zero(2, 2);
    p.sigma = DiffusionField::constant_matrix(Mat::Identity(2, 2));
    const ModelSpec m = make_rotated_gaussian(p);
    for (std::size_t c = 0; c < kCases; ++c) {
        Gen g(c);
        const Vec x = g.vec(2, 3.0);
        EXPECT_LT((reversed_drift(m, x) - m.drift(x)).norm(), 1e-12);
    }
}

TEST(ReversedDrift, RotatedOu) {
    const ModelSpec m = make_rotated_ou(1.0, 1.0);
    const Vec r = reversed_drift(m, to_vec({1.0, 0.0}));
    EXPECT_NEAR(r[0], -1.0, 1e-15);
    EXPECT_NEAR(r[1], 1.0, 1e-15);
    EXPECT_LT(reversed_drift(m, Vec::Zero(2)).norm(), 1e-15);
    // Cross-check against -(A + beta I) x.
    for (std::size_t c = 0; c < kCases; ++c) {
        Gen g(c);
        const Vec x = g.vec(2, 2.0);
        const Vec expected = -(rotation_generator(1.0) + Mat::Identity(2, 2)) * x;
        EXPECT_LT((reversed_drift(m, x) - expected).norm(), 1e-12);
    }
}

TEST(Dissipativity, LinearContraction) {
    NoiseStream rng(1, 0);
    const ModelSpec m = make_scalar_ou(1.0, 1.0);
    const DissipativityReport r = check_dissipativity(m, 500, 5.0, rng);
    EXPECT_FALSE(r.violated);
    EXPECT_EQ(r.kappa, 0.0);
    EXPECT_GE(r.K, 1.0 - 1e-12);
}

TEST(Dissipativity, RotatedOuFitsBeta) {
    NoiseStream rng(2, 0);
    const ModelSpec m = make_rotated_ou(1.0, 1.0);
    const DissipativityReport r = check_dissipativity(m, 1000, 5.0, rng);
    EXPECT_EQ(r.kappa, 0.0);
    EXPECT_NEAR(r.K, 1.0, 1e-12);
}

TEST(Dissipativity, NonlinearNeedsKappa) {
    NoiseStream rng(3, 0);
    const ModelSpec m = make_nonlinear_dissipative(2, 1.0, 2.0);
    const DissipativityReport r = check_dissipativity(m, 2000, 5.0, rng);
    EXPECT_GT(r.K, 0.0);
    EXPECT_GE(r.kappa, 0.0);
}

TEST(Dissipativity, MultiplicativeConditionFitted) {
    RotatedGaussianParams p;
    p.beta = 1.0;
    p.A = Mat::Zero(2, 2);
    p.sigma = DiffusionField::scalar_modulated(2, 0.3, 1.0);
    const ModelSpec m = make_rotated_gaussian(p);
    NoiseStream rng(4, 0);
    const DissipativityReport r = check_dissipativity(m, 500, 3.0, rng);
    EXPECT_TRUE(r.K_multiplicative.has_value());
}

TEST(Dissipativity, BurnInDefault) {
    EXPECT_DOUBLE_EQ(default_burn_in(make_rotated_ou(1.0, 2.0)), 5.0);
    EXPECT_THROW(default_burn_in(make_brownian(2)), ConfigError);
}

}  // namespace
}  // namespace eprlab
