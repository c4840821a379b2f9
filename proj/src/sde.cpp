#include "eprlab/sde.hpp"

#include <algorithm>
#include <limits>
#include <vector>

namespace eprlab {

std::size_t PathConfig::steps() const {
    return static_cast<std::size_t>(std::llround(t_end / h));
}

std::size_t PathConfig::burn_in_steps() const {
    return static_cast<std::size_t>(std::llround(burn_in / h));
}

void PathConfig::validate() const {
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("path config: h must be positive");
    if (!std::isfinite(t_end) || steps() < 1) {
        throw ConfigError("path config: t_end must be at least one step h");
    }
    if (!(burn_in >= 0.0) || !std::isfinite(burn_in)) {
        throw ConfigError("path config: burn_in must be non-negative");
    }
}

Vec em_step(const Vec& x, const ModelSpec& model, const WienerIncrement& inc,
            std::size_t step_index) {
    require_dim(model, x, "em_step state");
    require_dim(model, inc.dw, "em_step increment");
    if (!(inc.h > 0.0)) throw ConfigError("em_step: step length h must be positive");
    Vec next(model.dim());
    detail::em_step_into(x, model, inc, next);
    if (!all_finite(next)) throw NumericError("Euler-Maruyama state overflow", step_index, x);
    return next;
}

Vec reversed_drift(const ModelSpec& model, const Vec& x) {
    require_dim(model, x, "reversed_drift state");
    const StationaryData& data = model.stationary();
    const Mat sigma = model.diffusion(x);
    return sigma * (sigma.transpose() * data.grad_log_rho(x)) - model.drift(x);
}

Vec sample_in_ball(NoiseStream& rng, int dim, double radius) {
    Vec z(dim);
    double norm = 0.0;
    do {
        for (int i = 0; i < dim; ++i) z[i] = rng.normal();
        norm = z.norm();
    } while (norm == 0.0);
    const double r = radius * std::pow(rng.uniform(), 1.0 / dim);
    return z * (r / norm);
}

DissipativityReport check_dissipativity(const ModelSpec& model, std::size_t n_pairs, double radius,
                                        NoiseStream& rng) {
    if (n_pairs < 1) throw ConfigError("check_dissipativity: n_pairs must be >= 1");
    if (!(radius > 0.0)) throw ConfigError("check_dissipativity: radius must be positive");

    const int dim = model.dim();
    const bool multiplicative = model.constant_diffusion() == nullptr;

    DissipativityReport report;
    report.n_pairs = n_pairs;
    report.radius = radius;
    report.max_jacobian_eigenvalue = -std::numeric_limits<double>::infinity();

    struct PairTerm {
        double q;  // <B(x)-B(y), x-y>
        double r;  // |x-y|
        double hs; // ||sigma(x)-sigma(y)||_HS^2
    };
    std::vector<PairTerm> terms;
    terms.reserve(n_pairs);

    for (std::size_t i = 0; i < n_pairs; ++i) {
        const Vec x = sample_in_ball(rng, dim, radius);
        const Vec y = sample_in_ball(rng, dim, radius);
        for (const Vec* p : {&x, &y}) {
            report.max_jacobian_eigenvalue = std::max(
                report.max_jacobian_eigenvalue, max_symmetric_eigenvalue(model.drift_jacobian(*p)));
        }
        const Vec diff = x - y;
        const double r = diff.norm();
        if (r == 0.0) {
            ++report.vacuous_pairs;
            continue;
        }
        const double q = (model.drift(x) - model.drift(y)).dot(diff);
        const double hs = multiplicative ? (model.diffusion(x) - model.diffusion(y)).squaredNorm() : 0.0;
        terms.push_back({q, r, hs});
    }
    if (terms.empty()) {
        // Every pair was vacuous; only the Jacobian bound is informative.
        report.K = -report.max_jacobian_eigenvalue;
        report.violated = !(report.K > 0.0);
        return report;
    }

    double k_pairs = std::numeric_limits<double>::infinity();
    for (const auto& t : terms) k_pairs = std::min(k_pairs, -t.q / (t.r * t.r));
    const double k_jacobian = -report.max_jacobian_eigenvalue;

    if (k_pairs > 0.0) {
        report.kappa = 0.0;
        report.K = k_jacobian > 0.0 ? std::min(k_pairs, k_jacobian) : k_pairs;
    } else {
        // Contraction only at large separation: take K from the widest 10% of
        // pairs and absorb the rest into kappa.
        std::vector<PairTerm> by_distance = terms;
        std::sort(by_distance.begin(), by_distance.end(),
                  [](const PairTerm& a, const PairTerm& b) { return a.r > b.r; });
        const std::size_t far = std::max<std::size_t>(1, by_distance.size() / 10);
        double k_far = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < far; ++i) {
            k_far = std::min(k_far, -by_distance[i].q / (by_distance[i].r * by_distance[i].r));
        }
        report.K = k_far;
        double kappa = 0.0;
        for (const auto& t : terms) kappa = std::max(kappa, (t.q + k_far * t.r * t.r) / t.r);
        report.kappa = kappa;
    }
    report.violated = !(report.K > 0.0);

    if (multiplicative) {
        double k_mult = std::numeric_limits<double>::infinity();
        for (const auto& t : terms) k_mult = std::min(k_mult, -(t.hs + 2.0 * t.q) / (t.r * t.r));
        report.K_multiplicative = k_mult;
        if (!(k_mult > 0.0)) report.violated = true;
    }
    return report;
}

double default_burn_in(const ModelSpec& model) {
    double K = 0.0;
    if (const auto& known = model.known_dissipativity()) {
        K = known->second;
    } else {
        NoiseStream rng(0, std::numeric_limits<std::uint64_t>::max());
        const DissipativityReport report = check_dissipativity(model, 2000, 5.0, rng);
        if (report.violated) {
            throw ConfigError("default burn-in needs a dissipative model (no K > 0 fits)");
        }
        K = report.K;
    }
    if (!(K > 0.0)) throw ConfigError("default burn-in needs K > 0");
    return 10.0 / K;
}

}  // namespace eprlab
