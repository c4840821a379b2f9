#pragma once

#include "eprlab/errors.hpp"
#include "eprlab/linalg.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace eprlab {

using VecField = std::function<Vec(const Vec&)>;
using MatField = std::function<Mat(const Vec&)>;
/// Partial derivatives of a matrix field: element k is d/dx_k of the matrix.
using MatFieldJacobian = std::function<std::vector<Mat>(const Vec&)>;

/// Mean entropy production rate and asymptotic variance, where known exactly.
struct ClosedForms {
    std::optional<double> epr;
    std::optional<double> delta;
};

/// Analytic data about the invariant measure mu(dx) = rho(x) dx.
struct StationaryData {
    VecField grad_log_rho;
    /// psi = 2 sigma^{-1} B - sigma^* grad log rho, in the family's own closed form.
    VecField psi;
    /// Set when mu is Gaussian N(mean, cov); enables exact stationary sampling.
    std::optional<Vec> gaussian_mean;
    std::optional<Mat> gaussian_covariance;
};

struct ModelParts {
    std::string family;
    int dim = 0;
    VecField drift;
    /// Either a constant diffusion matrix or a field; exactly one must be set.
    std::optional<Mat> constant_sigma;
    MatField sigma_field;
    /// Optional analytic Jacobian of the drift; central differences otherwise.
    MatField drift_jacobian;
    std::optional<StationaryData> stationary;
    ClosedForms closed_forms;
    /// Known dissipativity constants (kappa, K) of the family, if any.
    std::optional<std::pair<double, double>> dissipativity;
    nlohmann::json manifest = nlohmann::json::object();
};

/*
 * One diffusion dX = B(X) dt + sigma(X) dW under study.
 *
 * Immutable after construction and safe to share across threads. All
 * callables are evaluated pointwise; nothing is cached between calls.
 */
class ModelSpec {
public:
    explicit ModelSpec(ModelParts parts);

    const std::string& family() const noexcept { return parts_.family; }
    int dim() const noexcept { return parts_.dim; }

    Vec drift(const Vec& x) const { return parts_.drift(x); }
    Mat diffusion(const Vec& x) const {
        return parts_.constant_sigma ? *parts_.constant_sigma : parts_.sigma_field(x);
    }
    /// Non-null when sigma does not depend on the state.
    const Mat* constant_diffusion() const noexcept {
        return parts_.constant_sigma ? &*parts_.constant_sigma : nullptr;
    }
    const Mat& constant_diffusion_inverse() const;

    Mat drift_jacobian(const Vec& x) const;
    bool has_analytic_jacobian() const noexcept { return static_cast<bool>(parts_.drift_jacobian); }

    bool has_stationary() const noexcept { return parts_.stationary.has_value(); }
    const StationaryData& stationary() const;
    Vec psi(const Vec& x) const { return stationary().psi(x); }
    Vec grad_log_rho(const Vec& x) const { return stationary().grad_log_rho(x); }
    bool has_gaussian_stationary_law() const noexcept {
        return parts_.stationary && parts_.stationary->gaussian_covariance.has_value();
    }

    const ClosedForms& closed_forms() const noexcept { return parts_.closed_forms; }
    const std::optional<std::pair<double, double>>& known_dissipativity() const noexcept {
        return parts_.dissipativity;
    }

    /// Family tag, parameters and derived quantities, for serialization.
    const nlohmann::json& manifest() const noexcept { return parts_.manifest; }

private:
    ModelParts parts_;
    std::optional<Mat> sigma_inverse_;
};

inline void require_dim(const ModelSpec& model, const Vec& x, const char* what) {
    if (x.size() != model.dim()) {
        throw ConfigError(std::string(what) + ": dimension " + std::to_string(x.size()) +
                          " does not match model dimension " + std::to_string(model.dim()));
    }
}

}  // namespace eprlab
