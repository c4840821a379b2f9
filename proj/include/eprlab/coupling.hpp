#pragma once

#include "eprlab/epr.hpp"
#include "eprlab/model.hpp"
#include "eprlab/noise.hpp"
#include "eprlab/report.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace eprlab {

/// Gap below which two coupled paths are declared equal.
inline constexpr double kCouplingEpsilon = 1e-8;

struct CoupledPair {
    Vec x;
    Vec y;
    bool coupled = false;
    /// Coupling time; equals T when the paths never met.
    double tau = 0.0;
    std::size_t steps = 0;
    /// max_k (|X_k - Y_k| - bound(t_k)) over the run.
    double max_bound_excess = 0.0;
};

/// Continuous-time envelope of |X_t - Y_t| before coupling, for t in [0, T].
double coupling_gap_bound(double kappa, double K, double T, double initial_gap, double t);

/*
 * X solves the SDE from x; Y starts at y with the extra drift
 * xi_t (X - Y)/|X - Y|, xi_t = kappa e^{-K(T-t)} + 2K e^{Kt}|x-y|/(e^{2KT}-1),
 * driven by the same increments. The drift is integrated exactly over each
 * step. Coupling is declared when the gap drops below kCouplingEpsilon or the
 * step overshoots (the new difference points against the old one); Y is then
 * set to X for the rest of the run. Needs constant sigma and K > 0.
 */
CoupledPair simulate_coupled(const ModelSpec& model, double kappa, double K, const Vec& x,
                             const Vec& y, double T, double h, NoiseStream& noise);

/// A registered test function with its gradient and the properties the checks rely on.
struct TestFunction {
    std::string name;
    std::function<double(const Vec&)> value;
    std::function<Vec(const Vec&)> gradient;
    bool positive = false;
    bool bounded = false;
};

/// constant, gaussian, logistic, tanh, sin, linear (u = e_1).
TestFunction test_function(const std::string& name);
std::vector<std::string> test_function_names();

struct HarnackConfig {
    std::size_t n = 100000;
    double h = 1e-3;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    /// Dissipativity constants; fitted with check_dissipativity when absent.
    std::optional<std::pair<double, double>> constants;
};

/// Exponent of the Harnack factor for the given constants.
double harnack_exponent(double kappa, double K, double sigma_inv_norm, double p, double T,
                        double distance);

/*
 * (P_T f(x))^p <= P_T f^p(y) exp[...], both sides by Monte Carlo over n paths
 * from x and from y sharing replica streams.
 */
VerificationReport harnack_check(const ModelSpec& model, const TestFunction& f, double p,
                                 const Vec& x, const Vec& y, double T, const HarnackConfig& cfg);

struct HarnackCase {
    std::string f;
    double p = 2.0;
    Vec x;
    Vec y;
    double T = 1.0;
};

/// Runs every case, simulating each distinct (x, T) and (y, T) ensemble once.
std::vector<VerificationReport> harnack_grid(const ModelSpec& model,
                                             const std::vector<HarnackCase>& cases,
                                             const HarnackConfig& cfg);

/// (1/T) sum_k <sigma^{-1}(v - t_k grad B(x_k) v), dw_k>: the integration by parts weight.
class BismutWeight {
public:
    BismutWeight(const ModelSpec& model, Vec v, double T);
    void on_step(double t, const Vec& x, const WienerIncrement& inc);
    double value() const;

private:
    const ModelSpec* model_;
    Vec v_;
    double T_;
    KahanSum sum_;
};

struct IbpConfig {
    std::size_t n = 1000000;
    double h = 1e-2;
    std::uint64_t seed = 0;
    unsigned workers = 1;
};

/// E[grad_v f(X_T)] against E[f(X_T) * BismutWeight] on the same paths.
VerificationReport ibp_check(const ModelSpec& model, const TestFunction& f, const Vec& v,
                             const Vec& x, double T, const IbpConfig& cfg);

/// Reports for several functions computed on one set of paths.
std::vector<VerificationReport> ibp_check_many(const ModelSpec& model,
                                               const std::vector<TestFunction>& fs,
                                               const Vec& v, const Vec& x, double T,
                                               const IbpConfig& cfg);

struct CouplingRunConfig {
    std::size_t n = 10000;
    double h = 1e-3;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    std::optional<std::pair<double, double>> constants;
};

/// Fraction of pairs coupled by T and the worst excess over the gap envelope.
VerificationReport coupling_check(const ModelSpec& model, const Vec& x, const Vec& y, double T,
                                  const CouplingRunConfig& cfg);

/// Largest epsilon with E exp(epsilon |X|^2) finite under the (Gaussian) invariant law.
double gaussian_exp_threshold(const ModelSpec& model);

struct ExpMomentConfig {
    std::vector<Vec> starts;
    std::vector<double> horizons;
    std::size_t n = 2000;
    double h = 1e-3;
    std::uint64_t seed = 0;
    unsigned workers = 1;
};

/*
 * E int_0^t exp(epsilon |X_s|^2) ds over a grid of starts and horizons; c is
 * fitted per cell as estimate / (t + exp(epsilon |x|^2)). Passes when every
 * estimate is finite and max c / min c < 10.
 */
VerificationReport exp_moment_check(const ModelSpec& model, double epsilon,
                                    const ExpMomentConfig& cfg);

/// mu(exp[epsilon(|B|^2 + |grad log rho|^2)]) by exact stationary sampling.
VerificationReport psi_exp_moment_check(const ModelSpec& model, double epsilon, std::size_t n,
                                        std::uint64_t seed);

}  // namespace eprlab
