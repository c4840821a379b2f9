#pragma once

#include "eprlab/errors.hpp"
#include "eprlab/model.hpp"
#include "eprlab/noise.hpp"

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>

namespace eprlab {

/// Brownian increment over one step of length h.
struct WienerIncrement {
    Vec dw;
    double h = 0.0;
};

struct PathConfig {
    double h = 1e-3;
    double t_end = 1.0;
    double burn_in = 0.0;
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;

    /// round(t_end / h); the realized horizon is steps() * h.
    std::size_t steps() const;
    std::size_t burn_in_steps() const;
    void validate() const;
};

struct PathSummary {
    Vec final_state;
    /// Observed steps, i.e. after burn-in.
    std::size_t steps = 0;
    std::size_t burn_in_steps = 0;
    double realized_horizon = 0.0;
    /// Largest Euclidean norm over every visited state, burn-in included.
    double max_abs = 0.0;
};

/// Receives (t_k, x_k, dw_k) for every observed step, where x_k is the left
/// endpoint of the step driven by dw_k and t_k is measured from the end of burn-in.
template <typename O>
concept PathObserver = requires(O& o, double t, const Vec& x, const WienerIncrement& inc) {
    o.on_step(t, x, inc);
};

struct NullObserver {
    void on_step(double, const Vec&, const WienerIncrement&) {}
};

/// Fills inc.dw with independent N(0, h) coordinates.
inline void draw_increment(NoiseStream& noise, int dim, double h, WienerIncrement& inc) {
    const double scale = std::sqrt(h);
    inc.h = h;
    inc.dw.resize(dim);
    for (int i = 0; i < dim; ++i) inc.dw[i] = scale * noise.normal();
}

/// x + B(x) h + sigma(x) dw with left-point evaluation (Ito).
Vec em_step(const Vec& x, const ModelSpec& model, const WienerIncrement& inc,
            std::size_t step_index = 0);

namespace detail {

inline void em_step_into(const Vec& x, const ModelSpec& model, const WienerIncrement& inc,
                         Vec& next) {
    next = x + model.drift(x) * inc.h;
    if (const Mat* sigma = model.constant_diffusion()) {
        next.noalias() += *sigma * inc.dw;
    } else {
        next.noalias() += model.diffusion(x) * inc.dw;
    }
}

}  // namespace detail

/*
 * Euler-Maruyama path of the forward SDE from `init`, driven by `noise`.
 *
 * Runs burn_in_steps() unobserved steps, then steps() observed ones. Throws
 * NumericError with the step index and the last finite state as soon as a
 * coordinate becomes non-finite.
 */
template <PathObserver O>
PathSummary simulate_path(const ModelSpec& model, const Vec& init, const PathConfig& cfg,
                          NoiseStream& noise, O& observer) {
    cfg.validate();
    require_dim(model, init, "simulate_path initial state");
    if (!all_finite(init)) throw NumericError("non-finite initial state", 0);

    const int dim = model.dim();
    const std::size_t burn = cfg.burn_in_steps();
    const std::size_t steps = cfg.steps();

    PathSummary summary;
    summary.burn_in_steps = burn;
    summary.steps = steps;
    summary.realized_horizon = static_cast<double>(steps) * cfg.h;

    Vec x = init;
    Vec next(dim);
    WienerIncrement inc;
    inc.dw.resize(dim);
    double max_sq = x.squaredNorm();

    const std::size_t total = burn + steps;
    for (std::size_t k = 0; k < total; ++k) {
        draw_increment(noise, dim, cfg.h, inc);
        if (k >= burn) {
            observer.on_step(static_cast<double>(k - burn) * cfg.h, x, inc);
        }
        detail::em_step_into(x, model, inc, next);
        const double sq = next.squaredNorm();
        if (!std::isfinite(sq)) {
            throw NumericError("Euler-Maruyama state overflow", k + 1, x);
        }
        if (sq > max_sq) max_sq = sq;
        x.swap(next);
    }
    summary.final_state = x;
    summary.max_abs = std::sqrt(max_sq);
    return summary;
}

template <PathObserver O>
PathSummary simulate_path(const ModelSpec& model, const Vec& init, const PathConfig& cfg,
                          O& observer) {
    NoiseStream noise(cfg.seed, cfg.stream_id);
    return simulate_path(model, init, cfg, noise, observer);
}

inline PathSummary simulate_path(const ModelSpec& model, const Vec& init, const PathConfig& cfg) {
    NullObserver none;
    return simulate_path(model, init, cfg, none);
}

/// Drift of the time-reversed process: sigma sigma^* grad log rho - B.
Vec reversed_drift(const ModelSpec& model, const Vec& x);

/*
 * Sampled fit of <B(x)-B(y), x-y> <= kappa |x-y| - K |x-y|^2.
 *
 * When the diffusion is state dependent the multiplicative form
 * ||sigma(x)-sigma(y)||_HS^2 + 2<B(x)-B(y), x-y> <= -K_mult |x-y|^2 is fitted
 * as well.
 */
struct DissipativityReport {
    double kappa = 0.0;
    double K = 0.0;
    /// Tightest K_mult of the multiplicative condition; set only for state-dependent sigma.
    std::optional<double> K_multiplicative;
    bool violated = false;
    std::size_t n_pairs = 0;
    /// Pairs with x == y, which constrain nothing.
    std::size_t vacuous_pairs = 0;
    double radius = 0.0;
    /// Largest over sampled points of the top eigenvalue of sym(grad B).
    double max_jacobian_eigenvalue = 0.0;
};

DissipativityReport check_dissipativity(const ModelSpec& model, std::size_t n_pairs, double radius,
                                        NoiseStream& rng);

/// Uniform point in the Euclidean ball of the given radius.
Vec sample_in_ball(NoiseStream& rng, int dim, double radius);

/// Burn-in default 10 / K.
double default_burn_in(const ModelSpec& model);

}  // namespace eprlab
