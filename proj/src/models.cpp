#include "eprlab/models.hpp"
#include "eprlab/noise.hpp"

#include <Eigen/LU>

#include <cmath>
#include <numbers>
#include <sstream>

namespace eprlab {

using nlohmann::json;

// ---------------------------------------------------------------------------
// ModelSpec

ModelSpec::ModelSpec(ModelParts parts) : parts_(std::move(parts)) {
    if (parts_.dim < 1 || parts_.dim > kMaxDim) {
        throw ConfigError("model dimension must be in [1, " + std::to_string(kMaxDim) + "]");
    }
    if (!parts_.drift) throw ConfigError("model '" + parts_.family + "' has no drift");
    if (parts_.constant_sigma.has_value() == static_cast<bool>(parts_.sigma_field)) {
        throw ConfigError("model '" + parts_.family +
                          "' needs exactly one of a constant sigma or a sigma field");
    }
    if (parts_.constant_sigma) {
        const Mat& s = *parts_.constant_sigma;
        if (s.rows() != parts_.dim || s.cols() != parts_.dim) {
            throw ConfigError("model '" + parts_.family + "': sigma must be d x d");
        }
        Eigen::FullPivLU<Mat> lu(s);
        if (!lu.isInvertible()) throw ConfigError("model '" + parts_.family + "': sigma is singular");
        sigma_inverse_ = lu.inverse();
    }
    if (parts_.stationary && (!parts_.stationary->psi || !parts_.stationary->grad_log_rho)) {
        throw ConfigError("model '" + parts_.family + "': stationary data needs psi and grad log rho");
    }
}

const Mat& ModelSpec::constant_diffusion_inverse() const {
    if (!sigma_inverse_) {
        throw UnsupportedModelError("model '" + parts_.family + "' has state-dependent diffusion");
    }
    return *sigma_inverse_;
}

const StationaryData& ModelSpec::stationary() const {
    if (!parts_.stationary) {
        throw UnsupportedModelError("model '" + parts_.family +
                                    "' carries no analytic stationary measure");
    }
    return *parts_.stationary;
}

Mat ModelSpec::drift_jacobian(const Vec& x) const {
    if (parts_.drift_jacobian) return parts_.drift_jacobian(x);
    const int d = parts_.dim;
    Mat jac(d, d);
    Vec probe = x;
    for (int j = 0; j < d; ++j) {
        probe[j] = x[j] + kFiniteDifferenceStep;
        const Vec up = parts_.drift(probe);
        probe[j] = x[j] - kFiniteDifferenceStep;
        const Vec down = parts_.drift(probe);
        probe[j] = x[j];
        jac.col(j) = (up - down) / (2.0 * kFiniteDifferenceStep);
    }
    return jac;
}

// ---------------------------------------------------------------------------
// helpers

namespace {

json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (int i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return rows;
}

Mat identity(int d) { return Mat::Identity(d, d); }

const json& field(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) throw ConfigError(path + "." + key + ": missing");
    return obj.at(key);
}

double number(const json& obj, const std::string& key, const std::string& path) {
    const json& v = field(obj, key, path);
    if (!v.is_number()) throw ConfigError(path + "." + key + ": expected a number");
    return v.get<double>();
}

double number_or(const json& obj, const std::string& key, double fallback, const std::string& path) {
    return obj.contains(key) ? number(obj, key, path) : fallback;
}

int integer_or(const json& obj, const std::string& key, int fallback, const std::string& path) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) throw ConfigError(path + "." + key + ": expected an integer");
    return v.get<int>();
}

Mat matrix(const json& v, const std::string& path) {
    if (!v.is_array() || v.empty()) throw ConfigError(path + ": expected a non-empty matrix");
    const auto rows = static_cast<int>(v.size());
    if (rows > kMaxDim) throw ConfigError(path + ": dimension above " + std::to_string(kMaxDim));
    Mat m(rows, rows);
    for (int i = 0; i < rows; ++i) {
        const json& row = v[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<int>(row.size()) != rows) {
            throw ConfigError(path + "[" + std::to_string(i) + "]: expected a square matrix row");
        }
        for (int j = 0; j < rows; ++j) {
            if (!row[static_cast<std::size_t>(j)].is_number()) {
                throw ConfigError(path + "[" + std::to_string(i) + "][" + std::to_string(j) +
                                  "]: expected a number");
            }
            m(i, j) = row[static_cast<std::size_t>(j)].get<double>();
        }
    }
    return m;
}

Mat sym_times_transpose(const Mat& s) { return s * s.transpose(); }

}  // namespace

// ---------------------------------------------------------------------------
// linear Ornstein-Uhlenbeck

bool is_hurwitz(const Mat& m) {
    Eigen::EigenSolver<Mat> solver(m, false);
    return (solver.eigenvalues().real().array() < 0.0).all();
}

Mat lyapunov_stationary(const Mat& m, const Mat& sigma) {
    const int d = static_cast<int>(m.rows());
    if (m.cols() != d || sigma.rows() != d || sigma.cols() != d) {
        throw ConfigError("lyapunov_stationary: M and sigma must be square of equal size");
    }
    if (!is_hurwitz(m)) throw ConfigError("lyapunov_stationary: M is not Hurwitz");

    const int n = d * d;
    Eigen::MatrixXd kron = Eigen::MatrixXd::Zero(n, n);
    // vec(M S) = (I kron M) vec(S), vec(S M^*) = (M kron I) vec(S), column-major vec.
    for (int a = 0; a < d; ++a) {
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < d; ++j) {
                kron(a * d + i, a * d + j) += m(i, j);
            }
        }
    }
    for (int b = 0; b < d; ++b) {
        for (int c = 0; c < d; ++c) {
            for (int i = 0; i < d; ++i) kron(b * d + i, c * d + i) += m(b, c);
        }
    }
    const Mat q = sym_times_transpose(sigma);
    Eigen::VectorXd rhs(n);
    for (int c = 0; c < d; ++c)
        for (int i = 0; i < d; ++i) rhs(c * d + i) = -q(i, c);

    const Eigen::VectorXd solution = kron.partialPivLu().solve(rhs);
    Mat cov(d, d);
    for (int c = 0; c < d; ++c)
        for (int i = 0; i < d; ++i) cov(i, c) = solution(c * d + i);
    cov = 0.5 * (cov + cov.transpose()).eval();

    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw ConfigError("lyapunov_stationary: solution is not positive definite");
    }
    const double residual = (m * cov + cov * m.transpose() + q).norm();
    if (!(residual < 1e-10 * std::max(1.0, q.norm()))) {
        std::ostringstream msg;
        msg << "lyapunov_stationary: residual " << residual << " too large";
        throw ConfigError(msg.str());
    }
    return cov;
}

ModelSpec make_linear_ou(const Mat& m, const Mat& sigma) {
    const int d = static_cast<int>(m.rows());
    const Mat cov = lyapunov_stationary(m, sigma);
    const Mat precision = cov.inverse();
    const Mat sigma_inv = sigma.inverse();
    const Mat psi_matrix = 2.0 * sigma_inv * m + sigma.transpose() * precision;

    ModelParts parts;
    parts.family = "linear_ou";
    parts.dim = d;
    parts.drift = [m](const Vec& x) -> Vec { return m * x; };
    parts.drift_jacobian = [m](const Vec&) -> Mat { return m; };
    parts.constant_sigma = sigma;

    StationaryData stat;
    stat.grad_log_rho = [precision](const Vec& x) -> Vec { return -(precision * x); };
    stat.psi = [psi_matrix](const Vec& x) -> Vec { return psi_matrix * x; };
    stat.gaussian_mean = Vec::Zero(d);
    stat.gaussian_covariance = cov;
    parts.stationary = stat;

    // mu(|G x|^2) = tr(G^* G Sigma).
    const double epr = 0.5 * (psi_matrix.transpose() * psi_matrix * cov).trace();
    parts.closed_forms.epr = epr;

    const double top = max_symmetric_eigenvalue(m);
    if (top < 0.0) parts.dissipativity = std::make_pair(0.0, -top);

    parts.manifest = {{"family", "linear_ou"},
                      {"parameters", {{"M", mat_to_json(m)}, {"sigma", mat_to_json(sigma)}}},
                      {"derived",
                       {{"Sigma", mat_to_json(cov)},
                        {"R_exact", epr},
                        {"delta_exact", nullptr},
                        {"derivatives", "analytic"}}}};
    return ModelSpec(std::move(parts));
}

ModelSpec make_scalar_ou(double theta, double s) {
    if (!(theta > 0.0)) throw ConfigError("scalar_ou: theta must be positive");
    if (!(s > 0.0)) throw ConfigError("scalar_ou: sigma must be positive");
    Mat m(1, 1);
    m(0, 0) = -theta;
    Mat sigma(1, 1);
    sigma(0, 0) = s;
    ModelSpec model = make_linear_ou(m, sigma);
    return model;
}

Mat rotation_generator(double a) {
    Mat A(2, 2);
    A << 0.0, a, -a, 0.0;
    return A;
}

// ---------------------------------------------------------------------------
// potential family

DiffusionField DiffusionField::constant_matrix(const Mat& sigma) {
    DiffusionField f;
    f.constant = sigma;
    f.description = {{"kind", "constant"}, {"matrix", mat_to_json(sigma)}};
    return f;
}

DiffusionField DiffusionField::scalar_modulated(int dim, double amplitude, double frequency) {
    if (!(std::abs(amplitude) < 1.0)) {
        throw ConfigError("scalar_modulated diffusion: |amplitude| must be below 1");
    }
    DiffusionField f;
    f.field = [dim, amplitude, frequency](const Vec& x) -> Mat {
        return (1.0 + amplitude * std::sin(frequency * x[0])) * Mat::Identity(dim, dim);
    };
    f.jacobian = [dim, amplitude, frequency](const Vec& x) {
        std::vector<Mat> parts(static_cast<std::size_t>(dim), Mat::Zero(dim, dim));
        parts[0] = amplitude * frequency * std::cos(frequency * x[0]) * Mat::Identity(dim, dim);
        return parts;
    };
    f.description = {{"kind", "scalar_modulated"}, {"amplitude", amplitude}, {"frequency", frequency}};
    return f;
}

Vec diffusion_divergence(const DiffusionField& sigma, const Vec& x) {
    const auto d = static_cast<int>(x.size());
    Vec div = Vec::Zero(d);
    if (sigma.constant) return div;

    if (sigma.jacobian) {
        const Mat s = sigma.field(x);
        const std::vector<Mat> ds = sigma.jacobian(x);
        for (int j = 0; j < d; ++j) {
            const Mat& dj = ds[static_cast<std::size_t>(j)];
            const Mat dq = dj * s.transpose() + s * dj.transpose();
            div += dq.col(j);
        }
        return div;
    }
    if (!sigma.allow_finite_differences) {
        throw ConfigError("diffusion derivative missing and finite differences are disabled");
    }
    Vec probe = x;
    for (int j = 0; j < d; ++j) {
        probe[j] = x[j] + kFiniteDifferenceStep;
        const Mat up = sym_times_transpose(sigma.field(probe));
        probe[j] = x[j] - kFiniteDifferenceStep;
        const Mat down = sym_times_transpose(sigma.field(probe));
        probe[j] = x[j];
        div += (up - down).col(j) / (2.0 * kFiniteDifferenceStep);
    }
    return div;
}

VecField build_drift_from_potential(Potential potential, VecField b, DiffusionField sigma) {
    if (!sigma.constant && !sigma.field) throw ConfigError("build_drift_from_potential: no sigma");
    if (!sigma.analytic_derivative() && !sigma.allow_finite_differences) {
        throw ConfigError(
            "build_drift_from_potential: sigma derivative missing and finite differences disabled");
    }
    if (!potential.gradient) {
        if (!potential.value) throw ConfigError("build_drift_from_potential: no potential");
        auto value = potential.value;
        potential.gradient = [value](const Vec& x) -> Vec {
            Vec g(x.size());
            Vec probe = x;
            for (Eigen::Index j = 0; j < x.size(); ++j) {
                probe[j] = x[j] + kFiniteDifferenceStep;
                const double up = value(probe);
                probe[j] = x[j] - kFiniteDifferenceStep;
                const double down = value(probe);
                probe[j] = x[j];
                g[j] = (up - down) / (2.0 * kFiniteDifferenceStep);
            }
            return g;
        };
    }
    return [grad = potential.gradient, b = std::move(b), sigma = std::move(sigma)](const Vec& x) -> Vec {
        const Mat s = sigma.at(x);
        Vec out = b(x);
        out += 0.5 * diffusion_divergence(sigma, x);
        out += 0.5 * (s * (s.transpose() * grad(x)));
        return out;
    };
}

double normalizing_alpha(double beta, int dim) {
    if (!(beta > 0.0)) throw ConfigError("normalizing_alpha: beta must be positive");
    return 0.5 * dim * std::log(beta / std::numbers::pi);
}

Vec psi_potential_family(const RotatedGaussianParams& params, const Vec& x) {
    const Mat s = params.sigma.at(x);
    Eigen::FullPivLU<Mat> lu(s);
    if (!lu.isInvertible()) throw NumericError("psi: singular diffusion matrix", 0, x);
    const Vec rhs = 2.0 * (params.A * x) + diffusion_divergence(params.sigma, x);
    return lu.solve(rhs);
}

ModelSpec make_rotated_gaussian(const RotatedGaussianParams& params) {
    const int d = params.dim;
    if (d < 1 || d > kMaxDim) throw ConfigError("rotated_gaussian: dimension out of range");
    if (!(params.beta > 0.0)) throw ConfigError("rotated_gaussian: beta must be positive");
    if (params.A.rows() != d || params.A.cols() != d) {
        throw ConfigError("rotated_gaussian: A must be d x d");
    }
    if ((params.A + params.A.transpose()).norm() > 1e-12) {
        throw ConfigError("rotated_gaussian: A must be antisymmetric");
    }
    if (!params.sigma.constant && !params.sigma.field) {
        throw ConfigError("rotated_gaussian: diffusion missing");
    }

    const double beta = params.beta;
    const double alpha = normalizing_alpha(beta, d);
    json warnings = json::array();
    if (params.alpha && *params.alpha != alpha) {
        std::ostringstream msg;
        msg << "supplied alpha=" << *params.alpha << " ignored; recomputed as " << alpha
            << " so that e^V dx is a probability measure";
        warnings.push_back(msg.str());
    }

    const Mat A = params.A;
    Potential potential;
    potential.value = [alpha, beta](const Vec& x) { return alpha - beta * x.squaredNorm(); };
    potential.gradient = [beta](const Vec& x) -> Vec { return -2.0 * beta * x; };

    ModelParts parts;
    parts.family = "rotated_gaussian";
    parts.dim = d;
    parts.drift = build_drift_from_potential(potential, [A](const Vec& x) -> Vec { return A * x; },
                                             params.sigma);
    if (params.sigma.constant) {
        parts.constant_sigma = *params.sigma.constant;
        const Mat jac = A - beta * sym_times_transpose(*params.sigma.constant);
        parts.drift_jacobian = [jac](const Vec&) -> Mat { return jac; };
    } else {
        parts.sigma_field = params.sigma.field;
    }

    const Mat cov = Mat::Identity(d, d) / (2.0 * beta);
    StationaryData stat;
    stat.grad_log_rho = potential.gradient;
    stat.psi = [params](const Vec& x) -> Vec { return psi_potential_family(params, x); };
    stat.gaussian_mean = Vec::Zero(d);
    stat.gaussian_covariance = cov;

    json derived = {{"Sigma", mat_to_json(cov)},
                    {"alpha", alpha},
                    {"derivatives", params.sigma.analytic_derivative() ? "analytic"
                                                                        : "central_difference"},
                    {"finite_difference_step", kFiniteDifferenceStep},
                    {"R_exact", nullptr},
                    {"delta_exact", nullptr}};

    if (params.sigma.constant) {
        const Mat& s = *params.sigma.constant;
        const Mat psi_matrix = 2.0 * s.inverse() * A;
        stat.psi = [psi_matrix](const Vec& x) -> Vec { return psi_matrix * x; };
        const double epr = 0.5 * (psi_matrix.transpose() * psi_matrix * cov).trace();
        parts.closed_forms.epr = epr;
        derived["R_exact"] = epr;

        const bool planar_identity = d == 2 && s.isApprox(identity(2), 0.0) &&
                                     A(0, 0) == 0.0 && A(1, 1) == 0.0 && A(0, 1) == -A(1, 0);
        if (planar_identity) {
            const double delta = closed_form_delta_rotated_ou(A(0, 1), beta);
            parts.closed_forms.delta = delta;
            derived["delta_exact"] = delta;
        }
        Eigen::SelfAdjointEigenSolver<Mat> eig(sym_times_transpose(s), Eigen::EigenvaluesOnly);
        parts.dissipativity = std::make_pair(0.0, beta * eig.eigenvalues().minCoeff());
    } else if (A.isZero(0.0)) {
        warnings.push_back(
            "b = 0 with state-dependent sigma: psi reduces to sigma^{-1} div(sigma sigma^*), "
            "which is not identically zero");
    }
    parts.stationary = stat;

    json parameters = {{"d", d},
                       {"beta", beta},
                       {"A", mat_to_json(A)},
                       {"sigma", params.sigma.description}};
    parts.manifest = {{"family", "rotated_gaussian"},
                      {"parameters", parameters},
                      {"derived", derived},
                      {"warnings", warnings}};
    return ModelSpec(std::move(parts));
}

ModelSpec make_rotated_ou(double a, double beta) {
    RotatedGaussianParams params;
    params.dim = 2;
    params.beta = beta;
    params.A = rotation_generator(a);
    params.sigma = DiffusionField::constant_matrix(identity(2));
    return make_rotated_gaussian(params);
}

ModelSpec make_brownian(int dim, double scale) {
    if (!(scale > 0.0)) throw ConfigError("brownian: scale must be positive");
    ModelParts parts;
    parts.family = "brownian";
    parts.dim = dim;
    parts.drift = [dim](const Vec&) -> Vec { return Vec::Zero(dim); };
    parts.drift_jacobian = [dim](const Vec&) -> Mat { return Mat::Zero(dim, dim); };
    parts.constant_sigma = scale * identity(dim);
    parts.manifest = {{"family", "brownian"}, {"parameters", {{"d", dim}, {"scale", scale}}}};
    return ModelSpec(std::move(parts));
}

ModelSpec make_nonlinear_dissipative(int dim, double K, double c) {
    if (!(K > 0.0)) throw ConfigError("nonlinear_dissipative: K must be positive");
    ModelParts parts;
    parts.family = "nonlinear_dissipative";
    parts.dim = dim;
    parts.drift = [dim, K, c](const Vec& x) -> Vec {
        Vec out(dim);
        for (int i = 0; i < dim; ++i) out[i] = -K * x[i] + c * std::sin(x[(i + 1) % dim]);
        return out;
    };
    parts.drift_jacobian = [dim, K, c](const Vec& x) -> Mat {
        Mat jac = -K * Mat::Identity(dim, dim);
        for (int i = 0; i < dim; ++i) jac(i, (i + 1) % dim) += c * std::cos(x[(i + 1) % dim]);
        return jac;
    };
    parts.constant_sigma = identity(dim);
    // The perturbation is bounded by |c| per coordinate, so kappa = 2|c| sqrt(d) works.
    parts.dissipativity = std::make_pair(2.0 * std::abs(c) * std::sqrt(static_cast<double>(dim)), K);
    parts.manifest = {{"family", "nonlinear_dissipative"},
                      {"parameters", {{"d", dim}, {"K", K}, {"c", c}}},
                      {"derived", {{"derivatives", "analytic"}}}};
    return ModelSpec(std::move(parts));
}

// ---------------------------------------------------------------------------
// psi and closed forms

Vec psi_of(const ModelSpec& model, const Vec& x) {
    require_dim(model, x, "psi_of state");
    const StationaryData& data = model.stationary();
    const Mat s = model.diffusion(x);
    Eigen::FullPivLU<Mat> lu(s);
    if (!lu.isInvertible()) throw NumericError("psi_of: singular diffusion matrix", 0, x);
    const Vec twice_b = 2.0 * model.drift(x);
    return Vec(lu.solve(twice_b)) - s.transpose() * data.grad_log_rho(x);
}

double closed_form_epr(const ModelSpec& model) {
    if (!model.closed_forms().epr) {
        throw AvailabilityError("no closed-form entropy production rate for model '" +
                                model.family() + "'");
    }
    return *model.closed_forms().epr;
}

double closed_form_delta_rotated_ou(double a, double beta) {
    if (!(beta > 0.0) || !std::isfinite(a)) {
        throw AvailabilityError("closed_form_delta_rotated_ou: needs finite a and beta > 0");
    }
    const double a2 = a * a;
    return 4.0 * a2 / beta + 4.0 * a2 * a2 / (beta * beta * beta);
}

RotationConditionCheck check_rotation_condition(const RotatedGaussianParams& params, double radius,
                                          int points_per_axis) {
    const int d = params.dim;
    RotationConditionCheck out;
    out.lhs = params.beta;
    out.a_norm = operator_norm(params.A);

    // Sup norms over a lattice in [-radius, radius]^d (random points beyond d = 3).
    std::vector<Vec> points;
    if (d <= 3) {
        const int n = std::max(points_per_axis, 2);
        int total = 1;
        for (int i = 0; i < d; ++i) total *= n;
        for (int idx = 0; idx < total; ++idx) {
            Vec p(d);
            int rem = idx;
            for (int i = 0; i < d; ++i) {
                p[i] = -radius + 2.0 * radius * (rem % n) / (n - 1);
                rem /= n;
            }
            points.push_back(p);
        }
    } else {
        NoiseStream rng(41, 0);
        for (int k = 0; k < 4096; ++k) {
            Vec p(d);
            for (int i = 0; i < d; ++i) p[i] = radius * (2.0 * rng.uniform() - 1.0);
            points.push_back(p);
        }
    }

    std::vector<double> div_sup(static_cast<std::size_t>(d * d), 0.0);
    for (const Vec& p : points) {
        const Mat s = params.sigma.at(p);
        Eigen::SelfAdjointEigenSolver<Mat> eig(sym_times_transpose(s), Eigen::EigenvaluesOnly);
        out.c2 = std::max(out.c2, eig.eigenvalues().maxCoeff());
        if (params.sigma.constant) continue;

        std::vector<Mat> ds;
        if (params.sigma.jacobian) {
            ds = params.sigma.jacobian(p);
        } else {
            Vec probe = p;
            for (int k = 0; k < d; ++k) {
                probe[k] = p[k] + kFiniteDifferenceStep;
                const Mat up = params.sigma.field(probe);
                probe[k] = p[k] - kFiniteDifferenceStep;
                const Mat down = params.sigma.field(probe);
                probe[k] = p[k];
                ds.push_back((up - down) / (2.0 * kFiniteDifferenceStep));
            }
        }
        double grad_sq = 0.0;
        for (const Mat& dk : ds) grad_sq += dk.squaredNorm();
        out.grad_sigma_sup = std::max(out.grad_sigma_sup, std::sqrt(grad_sq));
        for (int j = 0; j < d; ++j) {
            const Mat& dj = ds[static_cast<std::size_t>(j)];
            const Mat dq = dj * s.transpose() + s * dj.transpose();
            for (int i = 0; i < d; ++i) {
                auto& slot = div_sup[static_cast<std::size_t>(i * d + j)];
                slot = std::max(slot, std::abs(dq(i, j)));
            }
        }
    }
    double div_sq = 0.0;
    for (int i = 0; i < d; ++i) {
        double row = 0.0;
        for (int j = 0; j < d; ++j) row += div_sup[static_cast<std::size_t>(i * d + j)];
        div_sq += row * row;
    }
    out.divergence_term = std::sqrt(div_sq);
    out.rhs = (d * out.grad_sigma_sup * out.grad_sigma_sup + 2.0 * out.a_norm + out.divergence_term) /
              (2.0 * out.c2);
    out.holds = out.lhs > out.rhs;
    out.reading =
        "lambda read as the potential decay rate beta; holds when beta exceeds the bound";
    return out;
}

// ---------------------------------------------------------------------------
// manifests

ModelSpec model_from_manifest(const json& manifest) {
    const std::string root = "model";
    if (!manifest.is_object()) throw ConfigError(root + ": expected an object");
    const json& fam = field(manifest, "family", root);
    if (!fam.is_string()) throw ConfigError(root + ".family: expected a string");
    const std::string family = fam.get<std::string>();
    const std::string path = root + ".parameters";
    const json params = manifest.contains("parameters") ? manifest.at("parameters") : json::object();
    if (!params.is_object()) throw ConfigError(path + ": expected an object");

    if (family == "rotated_ou") {
        const double beta = number(params, "beta", path);
        if (!(beta > 0.0)) throw ConfigError(path + ".beta: must be positive");
        return make_rotated_ou(number(params, "a", path), beta);
    }
    if (family == "rotated_gaussian") {
        RotatedGaussianParams p;
        p.beta = number(params, "beta", path);
        if (!(p.beta > 0.0)) throw ConfigError(path + ".beta: must be positive");
        if (params.contains("A")) {
            p.A = matrix(params.at("A"), path + ".A");
            p.dim = static_cast<int>(p.A.rows());
        } else {
            p.dim = integer_or(params, "d", 2, path);
            if (p.dim != 2) throw ConfigError(path + ".A: required unless d = 2");
            p.A = rotation_generator(number_or(params, "a", 1.0, path));
        }
        if (params.contains("alpha")) p.alpha = number(params, "alpha", path);
        const json sigma = params.contains("sigma") ? params.at("sigma")
                                                    : json{{"kind", "constant"}};
        const std::string spath = path + ".sigma";
        const std::string kind = sigma.value("kind", "constant");
        if (kind == "constant") {
            p.sigma = DiffusionField::constant_matrix(
                sigma.contains("matrix") ? matrix(sigma.at("matrix"), spath + ".matrix")
                                         : Mat(Mat::Identity(p.dim, p.dim)));
        } else if (kind == "scalar_modulated") {
            p.sigma = DiffusionField::scalar_modulated(p.dim, number(sigma, "amplitude", spath),
                                                       number(sigma, "frequency", spath));
        } else {
            throw ConfigError(spath + ".kind: unknown diffusion kind '" + kind + "'");
        }
        return make_rotated_gaussian(p);
    }
    if (family == "linear_ou") {
        const Mat m = matrix(field(params, "M", path), path + ".M");
        const Mat s = params.contains("sigma") ? matrix(params.at("sigma"), path + ".sigma")
                                               : Mat(Mat::Identity(m.rows(), m.rows()));
        if (s.rows() != m.rows()) throw ConfigError(path + ".sigma: size differs from M");
        return make_linear_ou(m, s);
    }
    if (family == "scalar_ou") {
        return make_scalar_ou(number(params, "theta", path), number_or(params, "sigma", 1.0, path));
    }
    if (family == "brownian") {
        return make_brownian(integer_or(params, "d", 2, path), number_or(params, "scale", 1.0, path));
    }
    if (family == "nonlinear_dissipative") {
        return make_nonlinear_dissipative(integer_or(params, "d", 2, path),
                                          number(params, "K", path), number(params, "c", path));
    }
    throw ConfigError(root + ".family: unknown model family '" + family + "'");
}

}  // namespace eprlab
