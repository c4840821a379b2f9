#pragma once

#include "eprlab/model.hpp"
#include "eprlab/report.hpp"
#include "eprlab/sde.hpp"

#include <cstddef>
#include <optional>
#include <vector>

namespace eprlab {

/// Neumaier compensated sum.
class KahanSum {
public:
    void add(double v) {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v)) {
            comp_ += (sum_ - t) + v;
        } else {
            comp_ += (v - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }
    void merge(const KahanSum& other) {
        add(other.sum_);
        add(other.comp_);
    }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/*
 * Running Ito integral sum <psi(x_k), dw_k> and quadratic term sum |psi(x_k)|^2 h
 * along one path. x_k must be the left endpoint of the step driven by dw_k.
 */
class EprAccumulator {
public:
    void add(const Vec& psi, const WienerIncrement& inc) {
        ito_.add(psi.dot(inc.dw));
        quad_.add(psi.squaredNorm() * inc.h);
        time_.add(inc.h);
        ++steps_;
    }

    /// Appends a later segment of the same path.
    void merge(const EprAccumulator& later);

    double ito_sum() const { return ito_.value(); }
    double quad_sum() const { return quad_.value(); }
    double t_accum() const { return time_.value(); }
    std::size_t steps() const { return steps_; }

private:
    KahanSum ito_;
    KahanSum quad_;
    KahanSum time_;
    std::size_t steps_ = 0;
};

/// Adds one step; throws NumericError if psi(x) is not finite.
void accumulate(EprAccumulator& acc, const ModelSpec& model, const Vec& x,
                const WienerIncrement& inc);

struct FunctionalSample {
    double t = 0.0;
    double R_t = 0.0;
    /// t (R_t - R).
    double S_t = 0.0;
    /// ito + (quad - t mu|psi|^2), the unhalved variant.
    double S_t_unhalved = 0.0;
    double log_M_t = 0.0;
    double ito_sum = 0.0;
    double quad_sum = 0.0;
};

/// R defaults to the model's closed form; pass it explicitly otherwise.
FunctionalSample finalize(const EprAccumulator& acc, const ModelSpec& model,
                          std::optional<double> R = std::nullopt);
FunctionalSample finalize(const EprAccumulator& acc, double R);

/// Path observer feeding an accumulator, with optional snapshots at checkpoint times.
class EprObserver {
public:
    EprObserver(const ModelSpec& model, std::vector<double> checkpoints = {});

    void on_step(double t, const Vec& x, const WienerIncrement& inc);

    const EprAccumulator& accumulator() const { return acc_; }
    /// Snapshots taken once the accumulated time reaches each checkpoint.
    const std::vector<EprAccumulator>& snapshots() const { return snaps_; }

private:
    const ModelSpec* model_;
    std::vector<double> checkpoints_;
    std::vector<EprAccumulator> snaps_;
    EprAccumulator acc_;
    Vec psi_;
};

struct MartingaleConfig {
    double t = 1.0;
    double h = 1e-3;
    std::size_t n = 100000;
    std::uint64_t seed = 0;
    /// Burn-in before t starts; negative selects default_burn_in(model).
    double burn_in = -1.0;
    unsigned workers = 1;
};

/*
 * Mean of M_t = exp(log M_t) over n stationary-start replicas. Identity-mode
 * report against 1 with the Kish effective sample size in details.
 */
VerificationReport martingale_mean(const ModelSpec& model, const MartingaleConfig& cfg);

}  // namespace eprlab
