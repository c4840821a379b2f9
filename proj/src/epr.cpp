#include "eprlab/epr.hpp"

#include "eprlab/ensemble.hpp"

#include <algorithm>
#include <cmath>

namespace eprlab {

void EprAccumulator::merge(const EprAccumulator& later) {
    ito_.merge(later.ito_);
    quad_.merge(later.quad_);
    time_.merge(later.time_);
    steps_ += later.steps_;
}

void accumulate(EprAccumulator& acc, const ModelSpec& model, const Vec& x,
                const WienerIncrement& inc) {
    const Vec psi = model.psi(x);
    if (!all_finite(psi)) throw NumericError("non-finite psi", acc.steps(), x);
    acc.add(psi, inc);
}

FunctionalSample finalize(const EprAccumulator& acc, double R) {
    const double t = acc.t_accum();
    if (!(t > 0.0)) throw EmptyPathError("finalize: no time accumulated");
    FunctionalSample s;
    s.t = t;
    s.ito_sum = acc.ito_sum();
    s.quad_sum = acc.quad_sum();
    const double log_ratio = s.ito_sum + 0.5 * s.quad_sum;
    s.R_t = log_ratio / t;
    s.log_M_t = 0.0 - log_ratio;  // +0 rather than -0 on force-free paths
    const double centered_quad = s.quad_sum - t * (2.0 * R);
    s.S_t = s.ito_sum + 0.5 * centered_quad;
    s.S_t_unhalved = s.ito_sum + centered_quad;
    if (!std::isfinite(s.R_t)) throw NumericError("non-finite R_t", acc.steps());
    return s;
}

FunctionalSample finalize(const EprAccumulator& acc, const ModelSpec& model,
                          std::optional<double> R) {
    if (!R) R = model.closed_forms().epr;
    if (!R) {
        throw ConfigError("finalize: model '" + model.family() +
                          "' has no closed-form R and none was supplied");
    }
    return finalize(acc, *R);
}

EprObserver::EprObserver(const ModelSpec& model, std::vector<double> checkpoints)
    : model_(&model), checkpoints_(std::move(checkpoints)) {
    std::sort(checkpoints_.begin(), checkpoints_.end());
    snaps_.reserve(checkpoints_.size());
    model.stationary();  // fail early without psi
}

void EprObserver::on_step(double, const Vec& x, const WienerIncrement& inc) {
    psi_ = model_->psi(x);
    if (!all_finite(psi_)) throw NumericError("non-finite psi", acc_.steps(), x);
    acc_.add(psi_, inc);
    const double half = 0.5 * inc.h;
    while (snaps_.size() < checkpoints_.size() &&
           acc_.t_accum() >= checkpoints_[snaps_.size()] - half) {
        snaps_.push_back(acc_);
    }
}

VerificationReport martingale_mean(const ModelSpec& model, const MartingaleConfig& cfg) {
    if (cfg.n < 100) throw InsufficientSampleError("martingale_mean: needs n >= 100");
    if (!(cfg.t >= 0.0)) throw ConfigError("martingale_mean: t must be non-negative");

    std::vector<double> weights;
    double burn_in = 0.0;
    if (cfg.t == 0.0) {
        weights.assign(cfg.n, 1.0);
    } else {
        EnsembleConfig ec;
        ec.initial = InitialLaw::stationary();
        ec.horizons = {cfg.t};
        ec.replicas = cfg.n;
        ec.h = cfg.h;
        ec.seed = cfg.seed;
        ec.burn_in = cfg.burn_in;
        ec.workers = cfg.workers;
        ec.R = 0.0;  // log M_t does not depend on the centering
        const Ensemble ens = run_ensemble(model, ec);
        burn_in = ens.burn_in;
        weights.reserve(cfg.n);
        for (const auto& s : ens.samples.front()) weights.push_back(std::exp(s.log_M_t));
    }

    KahanSum sum, sum_sq;
    for (double w : weights) {
        sum.add(w);
        sum_sq.add(w * w);
    }
    const auto n = static_cast<double>(cfg.n);
    const double mean = sum.value() / n;
    double var = 0.0;
    for (double w : weights) var += (w - mean) * (w - mean);
    var /= (n - 1.0);
    const double se = std::sqrt(var / n);

    VerificationReport r = VerificationReport::identity(mean, se, 1.0, 0.0, cfg.n);
    const double ess = sum_sq.value() > 0.0 ? sum.value() * sum.value() / sum_sq.value() : 0.0;
    r.details = {{"check", "martingale"},
                 {"t", cfg.t},
                 {"h", cfg.h},
                 {"seed", cfg.seed},
                 {"burn_in", burn_in},
                 {"effective_sample_size", ess},
                 {"max_weight", *std::max_element(weights.begin(), weights.end())}};
    return r;
}

}  // namespace eprlab
