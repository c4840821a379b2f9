#pragma once

#include "eprlab/model.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>

namespace eprlab {

/// Central-difference step used wherever an analytic derivative is absent.
inline constexpr double kFiniteDifferenceStep = 1e-5;

bool is_hurwitz(const Mat& m);

/*
 * Stationary covariance of dX = M X dt + sigma dW: the symmetric positive
 * definite solution of M S + S M^* + sigma sigma^* = 0, by a dense solve of
 * the Kronecker-vectorized system. Throws ConfigError unless M is Hurwitz.
 */
Mat lyapunov_stationary(const Mat& m, const Mat& sigma);

ModelSpec make_linear_ou(const Mat& m, const Mat& sigma);
/// dX = -theta X dt + s dW on R.
ModelSpec make_scalar_ou(double theta, double s);

/// The standard rotation generator [[0, a], [-a, 0]].
Mat rotation_generator(double a);

/// State-dependent or constant diffusion coefficient with optional derivative.
struct DiffusionField {
    std::optional<Mat> constant;
    MatField field;
    /// d sigma / d x_k for each k; central differences when empty.
    MatFieldJacobian jacobian;
    bool allow_finite_differences = true;
    nlohmann::json description = nlohmann::json::object();

    Mat at(const Vec& x) const { return constant ? *constant : field(x); }
    bool analytic_derivative() const { return constant.has_value() || static_cast<bool>(jacobian); }

    static DiffusionField constant_matrix(const Mat& sigma);
    /// sigma(x) = (1 + amplitude sin(frequency x_1)) I.
    static DiffusionField scalar_modulated(int dim, double amplitude, double frequency);
};

/// sum_j d_j (sigma sigma^*)_{ij}, the divergence term of the potential family.
Vec diffusion_divergence(const DiffusionField& sigma, const Vec& x);

struct Potential {
    std::function<double(const Vec&)> value;
    VecField gradient;
};

/// B = b + 1/2 sum_ij d_j(sigma sigma^*)_ij e_i + 1/2 (sigma sigma^*) grad V.
VecField build_drift_from_potential(Potential potential, VecField b, DiffusionField sigma);

/*
 * Family with prescribed invariant measure e^V dx, V(x) = alpha - beta |x|^2,
 * rotational part b(x) = A x with A antisymmetric, and diffusion sigma.
 */
struct RotatedGaussianParams {
    int dim = 2;
    double beta = 1.0;
    Mat A;
    DiffusionField sigma;
    /// Ignored with a warning: alpha is always recomputed for normalization.
    std::optional<double> alpha;
};

/// alpha such that exp(alpha - beta |x|^2) integrates to one on R^d.
double normalizing_alpha(double beta, int dim);

ModelSpec make_rotated_gaussian(const RotatedGaussianParams& params);
/// d = 2, sigma = I, A = rotation_generator(a).
ModelSpec make_rotated_ou(double a, double beta);
/// B = 0, sigma = scale * I. No invariant probability measure.
ModelSpec make_brownian(int dim, double scale = 1.0);
/// B(x) = -K x + c (sin x_2, sin x_3, ..., sin x_1): contracting plus a bounded perturbation.
ModelSpec make_nonlinear_dissipative(int dim, double K, double c);

/// psi via the general expression sigma^{-1}(2B) - sigma^* grad log rho.
Vec psi_of(const ModelSpec& model, const Vec& x);
/// psi via 2 sigma^{-1} b + sigma^{-1} div(sigma sigma^*), valid for the potential family.
Vec psi_potential_family(const RotatedGaussianParams& params, const Vec& x);

double closed_form_epr(const ModelSpec& model);
/// Asymptotic variance of t(R_t - R) for the planar rotated OU process.
double closed_form_delta_rotated_ou(double a, double beta);

struct RotationConditionCheck {
    /// The decay rate beta standing in for the undefined lambda.
    double lhs = 0.0;
    double rhs = 0.0;
    bool holds = false;
    double c2 = 0.0;
    double grad_sigma_sup = 0.0;
    double a_norm = 0.0;
    double divergence_term = 0.0;
    std::string reading;
};

RotationConditionCheck check_rotation_condition(const RotatedGaussianParams& params, double radius = 4.0,
                                          int points_per_axis = 9);

/// Builds a model from {"family": ..., "parameters": {...}}; errors name the offending field.
ModelSpec model_from_manifest(const nlohmann::json& manifest);

}  // namespace eprlab
