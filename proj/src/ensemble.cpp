#include "eprlab/ensemble.hpp"

#include "eprlab/sde.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace eprlab {

ReplicaPlan replica_scheduler(std::size_t n, unsigned worker_budget) {
    ReplicaPlan plan;
    if (n == 0) return plan;
    unsigned workers = worker_budget == 0 ? std::max(1u, std::thread::hardware_concurrency())
                                          : worker_budget;
    workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
    const std::size_t base = n / workers;
    const std::size_t extra = n % workers;
    std::size_t begin = 0;
    for (unsigned w = 0; w < workers; ++w) {
        const std::size_t len = base + (w < extra ? 1 : 0);
        plan.ranges.emplace_back(begin, begin + len);
        begin += len;
    }
    return plan;
}

InitialLaw InitialLaw::dirac(Vec x0) {
    InitialLaw law;
    law.kind = Kind::Dirac;
    law.point = std::move(x0);
    return law;
}

InitialLaw InitialLaw::gaussian(Vec mean, Mat covariance) {
    InitialLaw law;
    law.kind = Kind::Gaussian;
    law.mean = std::move(mean);
    law.covariance = std::move(covariance);
    return law;
}

nlohmann::json InitialLaw::to_json() const {
    switch (kind) {
        case Kind::Stationary:
            return {{"kind", "stationary"}};
        case Kind::Dirac:
            return {{"kind", "dirac"}, {"x0", to_std(point)}};
        case Kind::Gaussian: {
            nlohmann::json cov = nlohmann::json::array();
            for (int i = 0; i < covariance.rows(); ++i) {
                cov.push_back(to_std(covariance.row(i).transpose()));
            }
            return {{"kind", "gaussian"}, {"mean", to_std(mean)}, {"covariance", cov}};
        }
    }
    return {};
}

namespace {

Vec gaussian_draw(const Vec& mean, const Mat& cov, NoiseStream& noise) {
    Eigen::LLT<Mat> llt(cov);
    if (llt.info() != Eigen::Success) throw ConfigError("initial law: covariance not positive definite");
    Vec z(mean.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = noise.normal();
    return mean + llt.matrixL() * z;
}

}  // namespace

Vec sample_initial(const ModelSpec& model, const InitialLaw& law, NoiseStream& noise) {
    switch (law.kind) {
        case InitialLaw::Kind::Stationary:
            if (model.has_gaussian_stationary_law()) {
                const StationaryData& st = model.stationary();
                return gaussian_draw(*st.gaussian_mean, *st.gaussian_covariance, noise);
            }
            return Vec::Zero(model.dim());
        case InitialLaw::Kind::Dirac:
            require_dim(model, law.point, "initial point");
            return law.point;
        case InitialLaw::Kind::Gaussian:
            require_dim(model, law.mean, "initial mean");
            if (law.covariance.rows() != model.dim() || law.covariance.cols() != model.dim()) {
                throw ConfigError("initial covariance: must be d x d");
            }
            return gaussian_draw(law.mean, law.covariance, noise);
    }
    return Vec::Zero(model.dim());
}

void EnsembleConfig::validate() const {
    if (replicas < 1) throw ConfigError("ensemble: replicas must be >= 1");
    if (horizons.empty()) throw ConfigError("ensemble: at least one horizon is required");
    for (double t : horizons) {
        if (!(t >= h) || !std::isfinite(t)) throw ConfigError("ensemble: horizons must be >= h");
    }
    for (double t : trace_times) {
        if (!(t > 0.0) || !std::isfinite(t)) throw ConfigError("ensemble: trace times must be positive");
    }
    if (!(h > 0.0)) throw ConfigError("ensemble: h must be positive");
}

double effective_burn_in(const ModelSpec& model, const EnsembleConfig& cfg) {
    if (cfg.burn_in >= 0.0) return cfg.burn_in;
    return cfg.initial.kind == InitialLaw::Kind::Stationary ? default_burn_in(model) : 0.0;
}

Ensemble run_ensemble(const ModelSpec& model, const EnsembleConfig& cfg) {
    cfg.validate();
    const std::optional<double> known = cfg.R ? cfg.R : model.closed_forms().epr;
    if (!known) {
        throw ConfigError("ensemble: model '" + model.family() +
                          "' has no closed-form R; supply one to center S_t");
    }
    const double R = *known;

    Ensemble ens;
    ens.horizons = cfg.horizons;
    std::sort(ens.horizons.begin(), ens.horizons.end());
    ens.burn_in = effective_burn_in(model, cfg);
    ens.R = R;
    ens.seed = cfg.seed;

    std::vector<double> traces = cfg.trace_times;
    std::sort(traces.begin(), traces.end());
    const double t_max = std::max(ens.horizons.back(), traces.empty() ? 0.0 : traces.back());

    PathConfig pc;
    pc.h = cfg.h;
    pc.t_end = t_max;
    pc.burn_in = ens.burn_in;
    pc.seed = cfg.seed;

    struct ReplicaOut {
        std::vector<FunctionalSample> samples;
        TrajectoryRecord trace;
        ReplicaInfo info;
    };

    auto one = [&](std::size_t i) {
        const std::uint64_t stream = cfg.first_stream + i;
        NoiseStream noise(cfg.seed, stream);
        const Vec x0 = sample_initial(model, cfg.initial, noise);

        std::vector<double> cps = ens.horizons;
        cps.insert(cps.end(), traces.begin(), traces.end());
        EprObserver obs(model, cps);
        PathConfig local = pc;
        local.stream_id = stream;
        PathSummary summary;
        try {
            summary = simulate_path(model, x0, local, noise, obs);
        } catch (const NumericError& e) {
            throw NumericError("replica " + std::to_string(i) + ": " + e.what(), e.step(),
                               e.last_finite_state());
        }

        // Snapshots are ordered by time; pick out horizons and trace points.
        std::vector<std::pair<double, const EprAccumulator*>> by_time;
        std::vector<double> sorted = cps;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t k = 0; k < obs.snapshots().size(); ++k) {
            by_time.emplace_back(sorted[k], &obs.snapshots()[k]);
        }
        auto find = [&](double t) -> const EprAccumulator& {
            for (const auto& [tt, acc] : by_time) {
                if (tt == t) return *acc;
            }
            throw NumericError("replica " + std::to_string(i) + ": checkpoint not reached", 0);
        };

        ReplicaOut out;
        for (double t : ens.horizons) out.samples.push_back(finalize(find(t), R));
        for (double t : traces) {
            const FunctionalSample s = finalize(find(t), R);
            out.trace.t.push_back(t);
            out.trace.S.push_back(s.S_t);
        }
        out.info = {stream, summary.burn_in_steps, summary.steps, summary.realized_horizon,
                    summary.max_abs};
        return out;
    };

    std::vector<ReplicaOut> results = run_replicas(cfg.replicas, cfg.workers, one);

    ens.samples.assign(ens.horizons.size(), {});
    for (auto& row : ens.samples) row.reserve(cfg.replicas);
    for (auto& r : results) {
        for (std::size_t k = 0; k < ens.horizons.size(); ++k) ens.samples[k].push_back(r.samples[k]);
        if (!traces.empty()) ens.traces.push_back(std::move(r.trace));
        ens.replicas.push_back(r.info);
    }
    return ens;
}

}  // namespace eprlab
