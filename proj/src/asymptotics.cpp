#include "eprlab/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <limits>
#include <optional>
#include <set>

namespace eprlab {

using nlohmann::json;

void EnsembleStats::validate() const {
    if (samples.size() < 2) throw ConfigError("ensemble: at least two replicas are required");
    for (const auto& s : samples) {
        if (s.t != samples.front().t) throw ConfigError("ensemble: samples taken at different t");
    }
    std::set<std::uint64_t> seen(stream_ids.begin(), stream_ids.end());
    if (seen.size() != stream_ids.size()) throw ConfigError("ensemble: repeated stream ids");
}

std::vector<double> EnsembleStats::S() const {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(s.S_t);
    return out;
}

EnsembleStats stats_at(const Ensemble& ens, std::size_t k) {
    if (k >= ens.horizons.size()) throw ConfigError("stats_at: horizon index out of range");
    EnsembleStats st;
    st.t = ens.horizons[k];
    st.samples = ens.samples[k];
    for (const auto& r : ens.replicas) st.stream_ids.push_back(r.stream_id);
    return st;
}

namespace {

struct Moments {
    double mean = 0.0;
    double var = 0.0;  // n - 1 divisor
    double m4 = 0.0;   // central, n divisor
};

Moments moments(const std::vector<double>& v) {
    Moments m;
    const auto n = static_cast<double>(v.size());
    KahanSum sum;
    for (double x : v) sum.add(x);
    m.mean = sum.value() / n;
    KahanSum sq, q4;
    for (double x : v) {
        const double d = x - m.mean;
        sq.add(d * d);
        q4.add(d * d * d * d);
    }
    m.var = v.size() > 1 ? sq.value() / (n - 1.0) : 0.0;
    m.m4 = q4.value() / n;
    return m;
}

}  // namespace

Estimate estimate_epr(const EnsembleStats& ens) {
    ens.validate();
    std::vector<double> r;
    r.reserve(ens.samples.size());
    for (const auto& s : ens.samples) r.push_back(s.R_t);
    const Moments m = moments(r);
    return {m.mean, std::sqrt(m.var / static_cast<double>(r.size())), r.size()};
}

json DeltaEstimate::to_json() const {
    json j = {{"delta_hat", delta_hat}, {"se", se}, {"method", method}, {"n", n},
              {"variance_divisor", "n-1"}};
    if (method == "ensemble") j["t"] = t;
    if (method == "batch_means") j["batch_len"] = batch_len;
    return j;
}

DeltaEstimate estimate_delta_ensemble(const std::vector<double>& S, double t) {
    if (S.size() < 30) throw InsufficientSampleError("estimate_delta_ensemble: needs >= 30 replicas");
    if (!(t > 0.0)) throw ConfigError("estimate_delta_ensemble: t must be positive");
    const Moments m = moments(S);
    const auto n = static_cast<double>(S.size());
    DeltaEstimate d;
    d.method = "ensemble";
    d.t = t;
    d.n = S.size();
    d.delta_hat = m.var / t;
    const double biased = m.var * (n - 1.0) / n;
    d.se = std::sqrt(std::max(0.0, m.m4 - biased * biased) / n) / t;
    return d;
}

DeltaEstimate estimate_delta_ensemble(const EnsembleStats& ens) {
    ens.validate();
    return estimate_delta_ensemble(ens.S(), ens.t);
}

DeltaEstimate estimate_delta_batch_means(const std::vector<double>& increments, double batch_len) {
    if (increments.size() < 30) {
        throw InsufficientSampleError("estimate_delta_batch_means: needs >= 30 batches");
    }
    if (!(batch_len > 0.0)) throw ConfigError("estimate_delta_batch_means: batch_len must be positive");
    std::vector<double> rates;
    rates.reserve(increments.size());
    for (double x : increments) rates.push_back(x / batch_len);
    const Moments m = moments(rates);
    const auto b = static_cast<double>(increments.size());
    DeltaEstimate d;
    d.method = "batch_means";
    d.batch_len = batch_len;
    d.n = increments.size();
    d.delta_hat = batch_len * m.var;
    // Batch means are roughly Gaussian, so Var(s^2) ~ 2 s^4 / (b - 1).
    d.se = d.delta_hat * std::sqrt(2.0 / (b - 1.0));
    return d;
}

DeltaEstimate estimate_delta_batch_means(const TrajectoryRecord& record, double batch_len) {
    if (record.t.size() != record.S.size()) throw ConfigError("trajectory record: size mismatch");
    std::vector<double> inc;
    inc.reserve(record.S.size());
    double prev_t = 0.0;
    double prev_s = 0.0;
    for (std::size_t k = 0; k < record.S.size(); ++k) {
        if (std::abs(record.t[k] - prev_t - batch_len) > 1e-9 * std::max(1.0, record.t[k])) {
            throw ConfigError("trajectory record: checkpoints are not spaced by batch_len");
        }
        inc.push_back(record.S[k] - prev_s);
        prev_t = record.t[k];
        prev_s = record.S[k];
    }
    return estimate_delta_batch_means(inc, batch_len);
}

double normalize_functional(double S, double t, double lambda, double delta) {
    return S / (lambda * std::sqrt(t * delta));
}

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double ks_statistic_normal(std::vector<double> values) {
    if (values.empty()) throw InsufficientSampleError("ks_statistic_normal: empty sample");
    std::sort(values.begin(), values.end());
    const auto n = static_cast<double>(values.size());
    double d = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double f = standard_normal_cdf(values[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

double kolmogorov_pvalue(double lambda) {
    if (lambda < 0.1) return 1.0;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? term : -term);
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

json CltReport::to_json() const {
    return {{"ks_statistic", ks_statistic}, {"p_value", p_value}, {"n", n},
            {"delta_used", delta_used},     {"t", t}};
}

CltReport clt_test(const EnsembleStats& ens, double delta) {
    if (!(delta > 0.0)) {
        throw DegenerateLimitError("clt_test: delta must be positive; check S_t == 0 exactly instead");
    }
    ens.validate();
    if (ens.samples.size() < 200) throw InsufficientSampleError("clt_test: needs >= 200 replicas");
    std::vector<double> z;
    z.reserve(ens.samples.size());
    for (const auto& s : ens.samples) z.push_back(normalize_functional(s.S_t, ens.t, 1.0, delta));
    CltReport r;
    r.n = z.size();
    r.t = ens.t;
    r.delta_used = delta;
    r.ks_statistic = ks_statistic_normal(std::move(z));
    r.p_value = kolmogorov_pvalue(std::sqrt(static_cast<double>(r.n)) * r.ks_statistic);
    return r;
}

double mdp_rate(double u, double delta) {
    if (!(delta > 0.0)) throw DegenerateLimitError("mdp_rate: delta must be positive");
    return u <= 0.0 ? 0.0 : u * u / (2.0 * delta);
}

json MdpReport::to_json() const {
    auto row_json = [](const MdpRow& r) {
        return json{{"t", r.t},       {"lambda_t", r.lambda_t},   {"u", r.u},
                    {"hits", r.hits}, {"n", r.n},                 {"probability", r.probability},
                    {"empirical", r.empirical}, {"theory", r.theory}};
    };
    json rows_j = json::array();
    for (const auto& r : rows) rows_j.push_back(row_json(r));
    json deep = json::array();
    for (const auto& r : deepest) deep.push_back(row_json(r));
    return {{"exponent", exponent}, {"delta", delta}, {"min_hits", kMinMdpHits},
            {"empty", empty},       {"rows", rows_j}, {"deepest", deep}};
}

MdpReport mdp_curve(const std::vector<EnsembleStats>& ensembles, double exponent,
                    const std::vector<double>& u_grid, double delta) {
    if (!(exponent > 0.0 && exponent < 0.5)) {
        throw ConfigError("mdp_curve: lambda exponent must lie in (0, 1/2)");
    }
    MdpReport rep;
    rep.exponent = exponent;
    rep.delta = delta;
    std::vector<double> grid = u_grid;
    std::sort(grid.begin(), grid.end());
    for (const auto& ens : ensembles) {
        ens.validate();
        const double lambda = std::pow(ens.t, exponent);
        std::vector<double> y;
        y.reserve(ens.samples.size());
        for (const auto& s : ens.samples) y.push_back(normalize_functional(s.S_t, ens.t, lambda, 1.0));
        std::sort(y.begin(), y.end());
        std::optional<MdpRow> deepest;
        for (double u : grid) {
            const auto first = std::lower_bound(y.begin(), y.end(), u);
            const auto hits = static_cast<std::size_t>(y.end() - first);
            if (hits < kMinMdpHits) continue;
            MdpRow row;
            row.t = ens.t;
            row.lambda_t = lambda;
            row.u = u;
            row.hits = hits;
            row.n = y.size();
            row.probability = static_cast<double>(hits) / static_cast<double>(y.size());
            row.empirical = -std::log(row.probability) / (lambda * lambda);
            row.theory = mdp_rate(u, delta);
            rep.rows.push_back(row);
            deepest = row;
        }
        if (deepest) rep.deepest.push_back(*deepest);
    }
    rep.empty = rep.rows.empty();
    return rep;
}

double lil_normalizer(double t) {
    if (!(t >= std::exp(2.0))) throw HorizonError("lil_normalizer: needs t >= e^2");
    return std::sqrt(2.0 * t * std::log(std::log(t)));
}

std::vector<double> lil_grid(double T, double theta) {
    const double start = std::exp(2.0);
    if (!(T >= start)) throw HorizonError("lil_grid: horizon must be at least e^2");
    if (!(theta > 0.0 && theta < 1.0)) throw ConfigError("lil_grid: theta must lie in (0, 1)");
    std::vector<double> grid;
    for (int n = 1;; ++n) {
        const double t = std::exp(std::pow(static_cast<double>(n), theta));
        if (t > T) break;
        if (t >= start) grid.push_back(t);
    }
    if (grid.empty() || grid.back() < T) grid.push_back(T);
    return grid;
}

json LilReport::to_json() const {
    return {{"sup", sup},
            {"inf", inf},
            {"sqrt_delta", sqrt_delta},
            {"margin", margin},
            {"fraction_within", fraction_within},
            {"max_sup", max_sup},
            {"max_sup_ratio", max_sup_ratio},
            {"grid_points", grid_points}};
}

LilReport lil_scan(const std::vector<TrajectoryRecord>& records, double delta, double margin) {
    if (!(delta > 0.0)) throw DegenerateLimitError("lil_scan: delta must be positive");
    LilReport rep;
    rep.sqrt_delta = std::sqrt(delta);
    rep.margin = margin;
    rep.max_sup = -std::numeric_limits<double>::infinity();
    std::size_t within = 0;
    for (const auto& rec : records) {
        if (rec.t.size() != rec.S.size()) throw ConfigError("lil_scan: record size mismatch");
        if (rec.t.empty() || rec.t.back() < std::exp(2.0)) {
            throw HorizonError("lil_scan: record ends before e^2");
        }
        double hi = -std::numeric_limits<double>::infinity();
        double lo = std::numeric_limits<double>::infinity();
        std::size_t used = 0;
        for (std::size_t k = 0; k < rec.t.size(); ++k) {
            if (rec.t[k] < std::exp(2.0)) continue;
            const double v = rec.S[k] / lil_normalizer(rec.t[k]);
            hi = std::max(hi, v);
            lo = std::min(lo, v);
            ++used;
        }
        rep.grid_points = std::max(rep.grid_points, used);
        rep.sup.push_back(hi);
        rep.inf.push_back(lo);
        rep.max_sup = std::max(rep.max_sup, hi);
        if (hi >= (1.0 - margin) * rep.sqrt_delta && hi <= (1.0 + margin) * rep.sqrt_delta) ++within;
    }
    rep.fraction_within =
        records.empty() ? 0.0 : static_cast<double>(within) / static_cast<double>(records.size());
    rep.max_sup_ratio = rep.max_sup / rep.sqrt_delta;
    return rep;
}

json PointStartReport::to_json() const {
    json clts = json::array();
    for (const auto& c : clt) clts.push_back(c.to_json());
    return {{"initial", initial.to_json()},
            {"R_hat", epr.value},
            {"R_se", epr.se},
            {"delta", delta.to_json()},
            {"clt", clts}};
}

PointStartReport point_start_suite(const ModelSpec& model, const InitialLaw& initial,
                                   std::vector<double> horizons, std::size_t replicas, double h,
                                   std::uint64_t seed, unsigned workers, double delta) {
    EnsembleConfig cfg;
    cfg.initial = initial;
    cfg.horizons = std::move(horizons);
    cfg.replicas = replicas;
    cfg.h = h;
    cfg.seed = seed;
    cfg.burn_in = initial.kind == InitialLaw::Kind::Stationary ? -1.0 : 0.0;
    cfg.workers = workers;
    const Ensemble ens = run_ensemble(model, cfg);

    PointStartReport rep;
    rep.initial = initial;
    const EnsembleStats last = stats_at(ens, ens.horizons.size() - 1);
    rep.epr = estimate_epr(last);
    rep.delta = estimate_delta_ensemble(last);
    for (std::size_t k = 0; k < ens.horizons.size(); ++k) {
        rep.clt.push_back(clt_test(stats_at(ens, k), delta));
    }
    return rep;
}

}  // namespace eprlab
