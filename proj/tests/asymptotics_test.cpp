#include "eprlab/asymptotics.hpp"
#include "eprlab/models.hpp"

#include "property.hpp"

#include <boost/math/distributions/normal.hpp>
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

namespace eprlab {
namespace {

using testing::Gen;
using testing::kCases;

EnsembleStats stats_from(const std::vector<double>& S, double t, double R = 0.0) {
    EnsembleStats st;
    st.t = t;
    for (std::size_t i = 0; i < S.size(); ++i) {
        FunctionalSample s;
        s.t = t;
        s.S_t = S[i];
        s.R_t = R + S[i] / t;
        st.samples.push_back(s);
        st.stream_ids.push_back(i);
    }
    return st;
}

TEST(EnsembleStats, Validation) {
    EnsembleStats st = stats_from({1.0, 2.0, 3.0}, 1.0);
    EXPECT_NO_THROW(st.validate());
    st.samples[1].t = 2.0;
    EXPECT_THROW(st.validate(), ConfigError);
    st = stats_from({1.0, 2.0}, 1.0);
    st.stream_ids[1] = st.stream_ids[0];
    EXPECT_THROW(st.validate(), ConfigError);
}

TEST(EstimateEpr, ConstantSamples) {
    EnsembleStats st = stats_from(std::vector<double>(10, 0.0), 5.0, 2.0);
    const Estimate e = estimate_epr(st);
    EXPECT_DOUBLE_EQ(e.value, 2.0);
    EXPECT_DOUBLE_EQ(e.se, 0.0);
}

TEST(EstimateDelta, IdenticalSamplesGiveZero) {
    const DeltaEstimate d = estimate_delta_ensemble(std::vector<double>(50, 3.7), 4.0);
    EXPECT_DOUBLE_EQ(d.delta_hat, 0.0);
}

TEST(EstimateDelta, UnbiasedDivisor) {
    std::vector<double> s;
    for (int i = 0; i < 30; ++i) s.push_back(i % 2 ? 1.0 : -1.0);
    EXPECT_NEAR(estimate_delta_ensemble(s, 1.0).delta_hat, 30.0 / 29.0, 1e-14);
    EXPECT_NEAR(estimate_delta_ensemble(s, 2.0).delta_hat, 15.0 / 29.0, 1e-14);
}

TEST(EstimateDelta, TooFewReplicas) {
    EXPECT_THROW(estimate_delta_ensemble(std::vector<double>{-1.0, 1.0}, 1.0), InsufficientSampleError);
}

TEST(EstimateDelta, ShiftInvariantProperty) {
    for (std::size_t c = 0; c < kCases; ++c) {
        Gen g(c);
        std::vector<double> s(static_cast<std::size_t>(g.integer(30, 300)));
        for (double& x : s) x = g.normal() * 3.0;
        const double t = g.uniform(0.5, 50.0);
        const double shift = g.uniform(-100.0, 100.0);
        std::vector<double> shifted = s;
        for (double& x : shifted) x += shift;
        const double a = estimate_delta_ensemble(s, t).delta_hat;
        const double b = estimate_delta_ensemble(shifted, t).delta_hat;
        EXPECT_NEAR(a, b, 1e-9 * a);
    }
}

TEST(EstimateDelta, GaussianSamplesRecoverVariance) {
    NoiseStream rng(8, 0);
    std::vector<double> s(4000);
    const double t = 10.0, delta = 3.0;
    for (double& x : s) x = std::sqrt(t * delta) * rng.normal();
    const DeltaEstimate d = estimate_delta_ensemble(s, t);
    // se of the sample variance for Gaussian data is delta * sqrt(2 / n).
    EXPECT_NEAR(d.se, delta * std::sqrt(2.0 / 4000.0), 0.2 * d.se);
    EXPECT_NEAR(d.delta_hat, delta, 3.0 * d.se);
}

TEST(BatchMeans, ZeroIncrements) {
    EXPECT_DOUBLE_EQ(estimate_delta_batch_means(std::vector<double>(100, 0.0), 1.0).delta_hat, 0.0);
}

TEST(BatchMeans, TooFewBatches) {
    EXPECT_THROW(estimate_delta_batch_means(std::vector<double>(29, 0.0), 1.0), InsufficientSampleError);
}

TEST(BatchMeans, WhiteNoise) {
    // Increment over a batch of length L of a unit-variance white noise integral is N(0, L).
    NoiseStream rng(12, 0);
    const double L = 10.0;
    std::vector<double> inc(1000);
    for (double& x : inc) x = std::sqrt(L) * rng.normal();
    const DeltaEstimate d = estimate_delta_batch_means(inc, L);
    EXPECT_NEAR(d.delta_hat, 1.0, 0.15);
    EXPECT_EQ(d.n, 1000u);
}

TEST(BatchMeans, FromRecordUsesSuccessiveDifferences) {
    NoiseStream rng(13, 0);
    TrajectoryRecord rec;
    double S = 0.0;
    for (int k = 1; k <= 500; ++k) {
        S += 2.0 * rng.normal();
        rec.t.push_back(4.0 * k);
        rec.S.push_back(S);
    }
    std::vector<double> inc;
    double prev = 0.0;
    for (double s : rec.S) {
        inc.push_back(s - prev);
        prev = s;
    }
    EXPECT_DOUBLE_EQ(estimate_delta_batch_means(rec, 4.0).delta_hat,
                     estimate_delta_batch_means(inc, 4.0).delta_hat);
    rec.t[3] += 0.5;
    EXPECT_THROW(estimate_delta_batch_means(rec, 4.0), ConfigError);
}

TEST(Normalize, SharedScaling) {
    EXPECT_DOUBLE_EQ(normalize_functional(6.0, 4.0, 1.0, 9.0), 1.0);
    EXPECT_DOUBLE_EQ(normalize_functional(6.0, 4.0, 3.0, 1.0), 1.0);
}

TEST(Ks, QuantileSamples) {
    const boost::math::normal_distribution<double> nd;
    for (int n : {1, 10, 500}) {
        std::vector<double> v;
        for (int i = 1; i <= n; ++i) v.push_back(boost::math::quantile(nd, (i - 0.5) / n));
        EXPECT_NEAR(ks_statistic_normal(v), 0.5 / n, 1e-12);
    }
}

TEST(Ks, SingleSampleAtZero) { EXPECT_DOUBLE_EQ(ks_statistic_normal({0.0}), 0.5); }

TEST(Ks, OrderInvariantProperty) {
    for (std::size_t c = 0; c < kCases; ++c) {
        Gen g(c);
        std::vector<double> v(static_cast<std::size_t>(g.integer(1, 100)));
        for (double& x : v) x = g.normal();
        std::vector<double> r(v.rbegin(), v.rend());
        const double d = ks_statistic_normal(v);
        EXPECT_EQ(d, ks_statistic_normal(r));
        EXPECT_GE(d, 0.5 / v.size() - 1e-15);
        EXPECT_LE(d, 1.0);
    }
}

TEST(KolmogorovPvalue, KnownValues) {
    EXPECT_NEAR(kolmogorov_pvalue(1.0), 0.26999967, 1e-7);
    EXPECT_NEAR(kolmogorov_pvalue(1.36), 0.0494, 5e-4);
    EXPECT_NEAR(kolmogorov_pvalue(1.63), 0.0098, 2e-4);
    EXPECT_DOUBLE_EQ(kolmogorov_pvalue(0.0), 1.0);
    EXPECT_LT(kolmogorov_pvalue(5.0), 1e-20);
}

TEST(KolmogorovPvalue, MonotoneProperty) {
    double prev = 1.0;
    for (double l = 0.05; l < 4.0; l += 0.01) {
        const double p = kolmogorov_pvalue(l);
        EXPECT_LE(p, prev + 1e-15);
        EXPECT_GE(p, 0.0);
        prev = p;
    }
}

TEST(Clt, GaussianSamplesPass) {
    NoiseStream rng(21, 0);
    std::vector<double> s(2000);
    for (double& x : s) x = std::sqrt(100.0 * 8.0) * rng.normal();
    const CltReport r = clt_test(stats_from(s, 100.0), 8.0);
    EXPECT_GT(r.p_value, 0.01);
    EXPECT_EQ(r.n, 2000u);
}

TEST(Clt, WrongScaleFails) {
    NoiseStream rng(22, 0);
    std::vector<double> s(2000);
    for (double& x : s) x = 2.0 * rng.normal();
    EXPECT_LT(clt_test(stats_from(s, 1.0), 1.0).p_value, 1e-6);
}

TEST(Clt, Preconditions) {
    std::vector<double> s(300, 0.0);
    EXPECT_THROW(clt_test(stats_from(s, 1.0), 0.0), DegenerateLimitError);
    EXPECT_THROW(clt_test(stats_from(std::vector<double>(100, 0.0), 1.0), 1.0), InsufficientSampleError);
}

TEST(Mdp, RateFunction) {
    EXPECT_DOUBLE_EQ(mdp_rate(1.0, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(mdp_rate(0.0, 1.0), 0.0);
    EXPECT_DOUBLE_EQ(mdp_rate(-1.0, 2.0), 0.0);
    EXPECT_THROW(mdp_rate(1.0, 0.0), DegenerateLimitError);
}

TEST(Mdp, RowsRequireEnoughHits) {
    NoiseStream rng(31, 0);
    std::vector<double> s(1000);
    const double t = 100.0;
    for (double& x : s) x = std::sqrt(t) * rng.normal();
    const MdpReport rep = mdp_curve({stats_from(s, t)}, 0.15, {0.5, 1.0, 2.0, 5.0, 20.0}, 1.0);
    ASSERT_FALSE(rep.empty);
    for (const MdpRow& r : rep.rows) EXPECT_GE(r.hits, kMinMdpHits);
    ASSERT_EQ(rep.deepest.size(), 1u);
    EXPECT_EQ(rep.deepest[0].u, rep.rows.back().u);
    EXPECT_LT(rep.rows.back().u, 20.0);
}

TEST(Mdp, EmptyIsFlaggedNotThrown) {
    std::vector<double> s(100, -1.0);
    const MdpReport rep = mdp_curve({stats_from(s, 10.0)}, 0.2, {1.0}, 1.0);
    EXPECT_TRUE(rep.empty);
    EXPECT_TRUE(rep.rows.empty());
    EXPECT_THROW(mdp_curve({stats_from(s, 10.0)}, 0.5, {1.0}, 1.0), ConfigError);
}

TEST(Lil, NormalizerAndGrid) {
    EXPECT_THROW(lil_normalizer(5.0), HorizonError);
    EXPECT_NEAR(lil_normalizer(100.0), std::sqrt(200.0 * std::log(std::log(100.0))), 1e-12);
    const std::vector<double> g = lil_grid(1e5, 0.9);
    EXPECT_GE(g.front(), std::exp(2.0));
    EXPECT_DOUBLE_EQ(g.back(), 1e5);
    EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
    EXPECT_THROW(lil_grid(5.0), HorizonError);
}

TEST(Lil, ZeroPath) {
    TrajectoryRecord rec;
    for (double t : lil_grid(1e3)) {
        rec.t.push_back(t);
        rec.S.push_back(0.0);
    }
    const LilReport r = lil_scan({rec}, 1.0);
    EXPECT_EQ(r.sup[0], 0.0);
    EXPECT_EQ(r.inf[0], 0.0);
}

TEST(Lil, LinearPathPeaksAtHorizon) {
    TrajectoryRecord rec;
    const double T = 1e4;
    for (double t : lil_grid(T)) {
        rec.t.push_back(t);
        rec.S.push_back(t);
    }
    const LilReport r = lil_scan({rec}, 1.0);
    EXPECT_NEAR(r.sup[0], T / lil_normalizer(T), 1e-12);
}

TEST(Lil, ShortRecordRejected) {
    TrajectoryRecord rec{{1.0, 2.0}, {0.0, 0.0}};
    EXPECT_THROW(lil_scan({rec}, 1.0), HorizonError);
}

TEST(Lil, BrownianOracle) {
    // S_t = W_t sampled exactly on the checkpoint grid; delta = 1.
    const std::vector<double> grid = lil_grid(1e6);
    std::vector<TrajectoryRecord> recs;
    for (std::uint64_t i = 0; i < 100; ++i) {
        NoiseStream rng(41, i);
        TrajectoryRecord rec;
        double w = 0.0, prev = 0.0;
        for (double t : grid) {
            w += std::sqrt(t - prev) * rng.normal();
            prev = t;
            rec.t.push_back(t);
            rec.S.push_back(w);
        }
        recs.push_back(rec);
    }
    const LilReport r = lil_scan(recs, 1.0);
    std::vector<double> sups = r.sup;
    std::sort(sups.begin(), sups.end());
    const double median = sups[sups.size() / 2];
    EXPECT_GT(median, 0.5);
    EXPECT_LT(median, 1.15);
    EXPECT_EQ(r.sup.size(), 100u);
    for (std::size_t i = 0; i < r.sup.size(); ++i) EXPECT_GE(r.sup[i], r.inf[i]);
}

TEST(PointStart, ReversibleIsExactlyZero) {
    RotatedGaussianParams p;
    p.beta = 1.0;
    p.A = Mat::Zero(2, 2);
    p.sigma = DiffusionField::constant_matrix(Mat::Identity(2, 2));
    const ModelSpec m = make_rotated_gaussian(p);
    const PointStartReport r =
        point_start_suite(m, InitialLaw::dirac(to_vec({3.0, -1.0})), {2.0}, 200, 1e-2, 1, 1, 1.0);
    EXPECT_EQ(r.epr.value, 0.0);
    EXPECT_EQ(r.epr.se, 0.0);
}

}  // namespace
}  // namespace eprlab
