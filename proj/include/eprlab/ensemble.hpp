#pragma once

#include "eprlab/epr.hpp"
#include "eprlab/model.hpp"
#include "eprlab/noise.hpp"

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <exception>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

namespace eprlab {

/// Contiguous replica ranges [begin, end), one per worker.
struct ReplicaPlan {
    std::vector<std::pair<std::size_t, std::size_t>> ranges;
    unsigned workers() const { return static_cast<unsigned>(ranges.size()); }
};

/// Splits n replicas over at most `worker_budget` workers (0 means hardware concurrency).
ReplicaPlan replica_scheduler(std::size_t n, unsigned worker_budget);

/*
 * Evaluates fn(i) for every replica index i and returns the results in index
 * order. Worker count only affects wall-clock time. If any replica throws,
 * the exception of the lowest failing index is rethrown after all workers stop.
 */
template <typename Fn>
auto run_replicas(std::size_t n, unsigned worker_budget, Fn&& fn)
    -> std::vector<decltype(fn(std::size_t{}))> {
    using Result = decltype(fn(std::size_t{}));
    const ReplicaPlan plan = replica_scheduler(n, worker_budget);
    std::vector<std::optional<Result>> slots(n);
    std::vector<std::exception_ptr> errors(n);

    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            try {
                slots[i].emplace(fn(i));
            } catch (...) {
                errors[i] = std::current_exception();
                return;
            }
        }
    };
    if (plan.workers() <= 1) {
        if (n > 0) work(0, n);
    } else {
        std::vector<std::jthread> threads;
        threads.reserve(plan.workers());
        for (const auto& [b, e] : plan.ranges) threads.emplace_back(work, b, e);
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (errors[i]) std::rethrow_exception(errors[i]);
    }
    std::vector<Result> out;
    out.reserve(n);
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
}

struct InitialLaw {
    enum class Kind { Stationary, Dirac, Gaussian };
    Kind kind = Kind::Stationary;
    Vec point;
    Vec mean;
    Mat covariance;

    static InitialLaw stationary() { return {}; }
    static InitialLaw dirac(Vec x0);
    static InitialLaw gaussian(Vec mean, Mat covariance);

    nlohmann::json to_json() const;
};

/*
 * Draws X_0. Stationary starts sample N(mean, cov) exactly when the invariant
 * law is Gaussian and fall back to the origin otherwise (burn-in then applies).
 */
Vec sample_initial(const ModelSpec& model, const InitialLaw& law, NoiseStream& noise);

/// Running (t, S_t) values of one replica.
struct TrajectoryRecord {
    std::vector<double> t;
    std::vector<double> S;
};

struct EnsembleConfig {
    InitialLaw initial;
    /// Times at which FunctionalSamples are taken; the path runs to the largest.
    std::vector<double> horizons;
    std::size_t replicas = 1;
    double h = 1e-3;
    std::uint64_t seed = 0;
    /// Replica i draws from stream first_stream + i.
    std::uint64_t first_stream = 0;
    /// Negative selects default_burn_in(model) for stationary starts and zero otherwise.
    double burn_in = -1.0;
    unsigned workers = 1;
    /// Centering constant R; defaults to the model's closed form.
    std::optional<double> R;
    /// Extra times at which S_t is recorded per replica.
    std::vector<double> trace_times;

    void validate() const;
};

struct ReplicaInfo {
    std::uint64_t stream_id = 0;
    std::size_t burn_in_steps = 0;
    std::size_t steps = 0;
    double realized_horizon = 0.0;
    double max_abs = 0.0;
};

struct Ensemble {
    std::vector<double> horizons;
    /// samples[k][i]: replica i at horizons[k].
    std::vector<std::vector<FunctionalSample>> samples;
    std::vector<TrajectoryRecord> traces;
    std::vector<ReplicaInfo> replicas;
    double burn_in = 0.0;
    double R = 0.0;
    std::uint64_t seed = 0;
};

/// Burn-in actually used for this configuration.
double effective_burn_in(const ModelSpec& model, const EnsembleConfig& cfg);

/// Replica i uses NoiseStream(cfg.seed, cfg.first_stream + i) for both X_0 and the path.
Ensemble run_ensemble(const ModelSpec& model, const EnsembleConfig& cfg);

}  // namespace eprlab
