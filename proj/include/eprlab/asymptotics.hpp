#pragma once

#include "eprlab/ensemble.hpp"
#include "eprlab/epr.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace eprlab {

/// FunctionalSamples of independent replicas at one common time t.
struct EnsembleStats {
    double t = 0.0;
    std::vector<FunctionalSample> samples;
    std::vector<std::uint64_t> stream_ids;

    /// Throws ConfigError on mixed t, fewer than two samples or repeated stream ids.
    void validate() const;
    std::vector<double> S() const;
};

/// Ensemble k of a run, with stream ids taken from the replica table.
EnsembleStats stats_at(const Ensemble& ens, std::size_t horizon_index);

struct Estimate {
    double value = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

Estimate estimate_epr(const EnsembleStats& ens);

struct DeltaEstimate {
    double delta_hat = 0.0;
    double se = 0.0;
    std::string method;
    double t = 0.0;
    double batch_len = 0.0;
    std::size_t n = 0;

    nlohmann::json to_json() const;
};

/// (1/t) times the unbiased sample variance of S_t; se by the fourth-moment delta method.
DeltaEstimate estimate_delta_ensemble(const EnsembleStats& ens);
DeltaEstimate estimate_delta_ensemble(const std::vector<double>& S, double t);

/*
 * Long-run variance from consecutive increments of S over batches of length
 * batch_len: batch_len * Var(increment / batch_len). Needs at least 30 batches.
 */
DeltaEstimate estimate_delta_batch_means(const std::vector<double>& increments, double batch_len);
/// Increments are the successive differences of an equally spaced record starting at batch_len.
DeltaEstimate estimate_delta_batch_means(const TrajectoryRecord& record, double batch_len);

/// S / (lambda sqrt(t delta)). Shared by the CLT (lambda = 1) and MDP (delta = 1) paths.
double normalize_functional(double S, double t, double lambda, double delta);

double standard_normal_cdf(double x);
/// One-sample Kolmogorov-Smirnov distance to N(0, 1).
double ks_statistic_normal(std::vector<double> values);
/// Asymptotic Kolmogorov tail P(K > lambda), series truncated at k = 100.
double kolmogorov_pvalue(double lambda);

struct CltReport {
    double ks_statistic = 0.0;
    double p_value = 0.0;
    std::size_t n = 0;
    double delta_used = 0.0;
    double t = 0.0;

    nlohmann::json to_json() const;
};

/// KS test of {S_t / sqrt(t delta)} against N(0, 1). Needs n >= 200 and delta > 0.
CltReport clt_test(const EnsembleStats& ens, double delta);

struct MdpRow {
    double t = 0.0;
    double lambda_t = 0.0;
    double u = 0.0;
    std::size_t hits = 0;
    std::size_t n = 0;
    double probability = 0.0;
    /// -log P / lambda^2.
    double empirical = 0.0;
    /// u^2 / (2 delta).
    double theory = 0.0;
};

struct MdpReport {
    double exponent = 0.0;
    double delta = 0.0;
    std::vector<MdpRow> rows;
    /// Per t, the row at the largest u with enough hits; absent when none qualifies.
    std::vector<MdpRow> deepest;
    bool empty = true;

    nlohmann::json to_json() const;
};

/// Rate function inf_{y in [u, inf)} y^2 / (2 delta).
double mdp_rate(double u, double delta);

inline constexpr std::size_t kMinMdpHits = 50;

/*
 * For A = [u, inf): -(1/lambda(t)^2) log P(S_t / (lambda(t) sqrt t) >= u) with
 * lambda(t) = t^exponent, next to u^2 / (2 delta). Rows need >= 50 exceedances.
 */
MdpReport mdp_curve(const std::vector<EnsembleStats>& ensembles, double exponent,
                    const std::vector<double>& u_grid, double delta);

/// sqrt(2 t log log t); HorizonError below e^2.
double lil_normalizer(double t);
/// t_n = exp(n^theta) within [e^2, T], with T itself appended.
std::vector<double> lil_grid(double T, double theta = 0.9);

struct LilReport {
    std::vector<double> sup;
    std::vector<double> inf;
    double sqrt_delta = 0.0;
    double margin = 0.25;
    double fraction_within = 0.0;
    double max_sup = 0.0;
    /// Largest sup in units of sqrt(delta).
    double max_sup_ratio = 0.0;
    std::size_t grid_points = 0;

    nlohmann::json to_json() const;
};

/// Running sup and inf of S_t / sqrt(2 t log log t) over each record's checkpoints with t >= e^2.
LilReport lil_scan(const std::vector<TrajectoryRecord>& records, double delta, double margin = 0.25);

struct PointStartReport {
    InitialLaw initial;
    /// Estimates at the largest horizon.
    Estimate epr;
    DeltaEstimate delta;
    /// One per horizon, ascending.
    std::vector<CltReport> clt;

    nlohmann::json to_json() const;
};

/*
 * Estimators of a stationary-start run repeated from another initial law
 * (Dirac or Gaussian), with zero burn-in. The CLT is normalized by `delta`.
 */
PointStartReport point_start_suite(const ModelSpec& model, const InitialLaw& initial,
                                   std::vector<double> horizons, std::size_t replicas, double h,
                                   std::uint64_t seed, unsigned workers, double delta);

}  // namespace eprlab
