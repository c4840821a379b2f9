// Acceptance checks. Prints one PASS/FAIL line per criterion; exit status is
// nonzero if any selected criterion fails. `--only N` runs criterion N alone.

#include "eprlab/asymptotics.hpp"
#include "eprlab/coupling.hpp"
#include "eprlab/ensemble.hpp"
#include "eprlab/epr.hpp"
#include "eprlab/experiment.hpp"
#include "eprlab/models.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace eprlab;
using json = nlohmann::json;
namespace fs = std::filesystem;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

fs::path out_dir(int id, const std::string& sub = "") {
    fs::path p = fs::current_path() / "acceptance_out" / ("c" + std::to_string(id));
    if (!sub.empty()) p /= sub;
    fs::remove_all(p);
    return p;
}

const char* kRotatedOu = R"(
[model]
family = "rotated_ou"
[model.parameters]
a = 1.0
beta = 1.0
)";

ExperimentResult run_toml(const std::string& toml, const fs::path& out, unsigned workers = 0) {
    ExperimentConfig cfg = ExperimentConfig::from_toml_string(toml);
    cfg.workers = workers;
    return run_experiment(cfg, out);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

// ---------------------------------------------------------------------------
// 1. Reversible exactness

Outcome reversible_exactness() {
    std::size_t checked = 0;
    bool ok = true;
    NoiseStream gen(101, 0);
    for (int d : {1, 2, 3, 5}) {
        for (int variant = 0; variant < 2; ++variant) {
            RotatedGaussianParams p;
            p.dim = d;
            p.beta = 0.5 + 2.0 * gen.uniform();
            p.A = Mat::Zero(d, d);
            Mat s = Mat::Identity(d, d);
            if (variant == 1) {
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j) s(i, j) += 0.3 / d * gen.normal();
            }
            p.sigma = DiffusionField::constant_matrix(s);
            const ModelSpec m = make_rotated_gaussian(p);
            for (const InitialLaw& law : {InitialLaw::stationary(), InitialLaw::dirac(Vec::Constant(d, 3.0))}) {
                EnsembleConfig cfg;
                cfg.initial = law;
                cfg.horizons = {1.0, 10.0};
                cfg.replicas = 50;
                cfg.h = 1e-2;
                cfg.seed = 7;
                const Ensemble e = run_ensemble(m, cfg);
                for (const auto& per_t : e.samples)
                    for (const FunctionalSample& f : per_t) {
                        ok = ok && f.R_t == 0.0 && f.S_t == 0.0 && f.log_M_t == 0.0;
                        ++checked;
                    }
            }
        }
    }
    // The CLI pipeline end to end: the R_t column of samples.csv must read exactly 0.
    const fs::path out = out_dir(1);
    run_toml(R"(
kind = "simulate"
seed = 5
replicas = 10
h = 0.01
horizons = [1.0, 20.0]
[model]
family = "rotated_gaussian"
[model.parameters]
beta = 2.0
A = [[0.0, 0.0], [0.0, 0.0]]
)", out);
    std::istringstream csv(slurp(out / "samples.csv"));
    std::string line;
    std::getline(csv, line);
    std::size_t rows = 0;
    while (std::getline(csv, line)) {
        std::vector<std::string> cols;
        std::stringstream ls(line);
        std::string c;
        while (std::getline(ls, c, ',')) cols.push_back(c);
        ok = ok && cols.size() == 9 && cols[3] == "0" && cols[4] == "0" && cols[6] == "0";
        ++rows;
    }
    ok = ok && rows == 20;
    return {ok, std::to_string(checked) + " functional samples over 8 models and 2 initial laws plus " +
                    std::to_string(rows) + " CSV rows, all exactly zero: " + (ok ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 2. Mean EPR closed form

Outcome mean_epr() {
    const ExperimentResult res = run_toml(std::string(R"(
kind = "estimate"
seed = 2024
replicas = 2000
h = 1e-3
horizons = [400.0]
)") + kRotatedOu, out_dir(2));
    const json& rc = res.report.at("results").at("R_check");
    const double r = rc.at("R_hat"), se = rc.at("se");
    const bool ensemble_ok = rc.at("within_3se").get<bool>() && rc.at("within_rel_tol").get<bool>();

    // Oracle cross-check: one path of 10^7 steps, ergodic average of the functional.
    const ModelSpec m = make_rotated_ou(1.0, 1.0);
    EprObserver obs(m);
    PathConfig pc;
    pc.h = 1e-3;
    pc.t_end = 1e4;
    pc.burn_in = 10.0;
    pc.seed = 2024;
    pc.stream_id = 1u << 20;
    simulate_path(m, Vec::Zero(2), pc, obs);
    const FunctionalSample single = finalize(obs.accumulator(), 2.0);
    const double single_se = std::sqrt(8.0 / single.t);
    const bool single_ok = std::abs(single.R_t - 2.0) <= 3.0 * single_se;

    return {ensemble_ok && single_ok,
            "R_hat=" + num(r) + " se=" + num(se) + " |err|/R=" + num(std::abs(r - 2.0) / 2.0) +
                " (need <= 3se and <= 0.02); single-path 1e7 steps R=" + num(single.R_t) + " (+-" +
                num(3 * single_se) + ")"};
}

// ---------------------------------------------------------------------------
// 3. Asymptotic variance

// Oracle: Poisson equation M^T P + P M = -1/2 G^T G for the linear functional psi = G x.
double poisson_delta_oracle(const Eigen::MatrixXd& m, const Eigen::MatrixXd& cov) {
    const int d = static_cast<int>(m.rows());
    const Eigen::MatrixXd g = 2.0 * m + cov.inverse();
    const Eigen::MatrixXd rhs = -0.5 * g.transpose() * g;
    Eigen::MatrixXd kron = Eigen::MatrixXd::Zero(d * d, d * d);
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
            kron.block(i * d, j * d, d, d) += id(i, j) * m.transpose();
            kron.block(i * d, j * d, d, d) += m(j, i) * id;
        }
    const Eigen::VectorXd vp =
        kron.fullPivLu().solve(Eigen::Map<const Eigen::VectorXd>(rhs.data(), d * d));
    const Eigen::MatrixXd p = Eigen::Map<const Eigen::MatrixXd>(vp.data(), d, d);
    const Eigen::MatrixXd h = g + 2.0 * p;
    return (h.transpose() * h * cov).trace();
}

Outcome asymptotic_variance() {
    Eigen::MatrixXd m(2, 2);
    m << -1.0, 1.0, -1.0, -1.0;
    const double oracle = poisson_delta_oracle(m, 0.5 * Eigen::MatrixXd::Identity(2, 2));
    const double closed = closed_form_delta_rotated_ou(1.0, 1.0);

    const ExperimentResult res = run_toml(std::string(R"(
kind = "estimate"
seed = 2025
replicas = 2000
h = 1e-3
horizons = [400.0]
[estimate]
batch_horizon = 1e5
batch_len = 100.0
)") + kRotatedOu, out_dir(3));
    const json& r = res.report.at("results");
    const double ens = r.at("delta_check").at("delta_hat");
    const double rel = r.at("delta_check").at("rel_error");
    const double bm = r.at("batch_means").at("batch").at("delta_hat");
    const double bm_rel = r.at("batch_means").at("rel_difference_to_ensemble");
    const bool oracle_ok = std::abs(oracle - closed) < 1e-9;
    const bool ok = oracle_ok && rel <= 0.10 && bm_rel <= 0.15;
    return {ok, "Poisson oracle=" + num(oracle) + " closed form=" + num(closed) + "; ensemble delta=" +
                    num(ens) + " (rel err " + num(rel) + ", need <= 0.10); batch means t=1e5 delta=" +
                    num(bm) + " (rel diff " + num(bm_rel) + ", need <= 0.15)"};
}

// ---------------------------------------------------------------------------
// 4. CLT

Outcome clt() {
    const ExperimentResult res = run_toml(std::string(R"(
kind = "clt"
seed = 2026
replicas = 2000
h = 1e-3
horizons = [50.0, 400.0]
delta = 8.0
[clt]
alpha = 0.01
dirac_starts = [[0.0, 0.0], [5.0, 0.0]]
)") + kRotatedOu, out_dir(4));
    const json& r = res.report.at("results");
    std::ostringstream os;
    const json& rows = r.at("clt");
    os << "stationary KS(50)=" << num(rows[0].at("ks_statistic")) << " KS(400)="
       << num(rows[1].at("ks_statistic")) << " p(400)=" << num(rows[1].at("p_value"));
    for (const json& s : r.at("dirac_starts")) {
        const json& last = s.at("clt").back();
        os << "; x0=" << s.at("initial").at("x0").dump() << " KS(400)=" << num(last.at("ks_statistic"))
           << " p(400)=" << num(last.at("p_value"));
    }
    os << " (need p > 0.01 everywhere and KS decreasing)";
    return {res.exit_code == kExitPass, os.str()};
}

// ---------------------------------------------------------------------------
// 5. MDP

Outcome mdp() {
    const ExperimentResult res = run_toml(std::string(R"(
kind = "mdp"
seed = 2027
replicas = 10000
h = 1e-2
horizons = [100.0, 400.0, 1600.0]
delta = 8.0
[mdp]
exponent = 0.15
tolerance = 0.25
)") + kRotatedOu, out_dir(5));
    const json& r = res.report.at("results");
    std::ostringstream os;
    for (const json& d : r.at("discrepancy")) {
        os << "t=" << num(d.at("t")) << " u=" << num(d.at("u")) << " emp=" << num(d.at("empirical"))
           << " theory=" << num(d.at("theory")) << " rel=" << num(d.at("rel_discrepancy")) << "; ";
    }
    os << "need rel <= 0.25 at t=1600 and decreasing in t";
    return {res.exit_code == kExitPass, os.str()};
}

// ---------------------------------------------------------------------------
// 6. LIL

Outcome lil() {
    const ExperimentResult res = run_toml(std::string(R"(
kind = "lil"
seed = 2028
replicas = 100
h = 1e-2
delta = 8.0
[lil]
T = 1e5
theta = 0.9
margin = 0.25
min_fraction = 0.9
sup_cap = 1.4
)") + kRotatedOu, out_dir(6));
    const json& l = res.report.at("results").at("lil");
    return {res.exit_code == kExitPass,
            "fraction of sups in [0.75, 1.25] sqrt(delta)=" + num(l.at("fraction_within")) +
                " (need >= 0.9); max sup / sqrt(delta)=" + num(l.at("max_sup_ratio")) + " (need <= 1.4)"};
}

// ---------------------------------------------------------------------------
// 7. Martingale

Outcome martingale() {
    const ExperimentResult res = run_toml(std::string(R"(
kind = "verify-martingale"
seed = 2029
burn_in = 0.0
[martingale]
t = 1.0
h = [1e-3, 5e-4]
n = 100000
)") + kRotatedOu, out_dir(7));
    const json& r = res.report.at("results");
    std::ostringstream os;
    for (const json& c : r.at("checks")) {
        os << c.at("check").get<std::string>() << ": E M_t=" << num(c.at("lhs")) << " se=" << num(c.at("lhs_se"))
           << "; ";
    }
    const json& s = r.at("step_refinement")[0];
    os << "halving h moved the estimate by " << num(s.at("difference")) << " (3 se = "
       << num(3.0 * s.at("combined_se").get<double>()) << ")";
    // Diagnostic only: weaker rotation gives M_t a finite second moment.
    for (double a : {0.25, 0.5}) {
        MartingaleConfig mc;
        mc.h = 1e-3;
        mc.seed = 2029;
        mc.burn_in = 0.0;
        const VerificationReport d = martingale_mean(make_rotated_ou(a, 1.0), mc);
        os << "; [diagnostic a=" << num(a) << "] E M_t=" << num(d.lhs) << " se=" << num(d.lhs_se)
           << " ess=" << num(d.details.at("effective_sample_size"));
    }
    return {res.exit_code == kExitPass, os.str()};
}

// ---------------------------------------------------------------------------
// 8. Coupling

Outcome coupling() {
    std::ostringstream os;
    bool ok = true;
    // 1-D OU with K = 1, kappa = 0.
    {
        CouplingRunConfig cfg;
        cfg.n = 10000;
        cfg.h = 1e-3;
        cfg.seed = 2030;
        const VerificationReport r = coupling_check(make_scalar_ou(1.0, 1.0), to_vec({1.0}), to_vec({0.0}), 1.0, cfg);
        ok = ok && r.pass;
        os << "ou1d: " << num(r.rhs) << " coupled, excess " << num(r.details.at("max_gap_bound_excess")) << "; ";
    }
    const fs::path base = out_dir(8);
    for (const auto& [name, model] :
         std::vector<std::pair<std::string, std::string>>{
             {"rotated_ou", kRotatedOu},
             {"nonlinear", "[model]\nfamily = \"nonlinear_dissipative\"\n[model.parameters]\nd = 2\nK = 1.0\nc = 0.5\n"}}) {
        const ExperimentResult res = run_toml(std::string(R"(
kind = "verify-coupling"
seed = 2031
[coupling]
n = 10000
h = 1e-3
T = [0.5, 1.0]
pairs = [ { x = [0.0, 0.0], y = [0.5, 0.0] },
          { x = [0.0, 0.0], y = [1.0, 0.0] },
          { x = [1.0, -1.0], y = [-1.0, 1.0] } ]
)") + model, base / name);
        double worst_frac = 1.0, worst_excess = -1e300;
        for (const json& c : res.report.at("results").at("checks")) {
            worst_frac = std::min(worst_frac, c.at("rhs").get<double>());
            worst_excess = std::max(worst_excess, c.at("details").at("max_gap_bound_excess").get<double>());
        }
        ok = ok && res.exit_code == kExitPass;
        os << name << ": min fraction " << num(worst_frac) << ", worst excess " << num(worst_excess) << "; ";
    }
    os << "need fraction >= 0.999 and excess <= 10h = 0.01";
    return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// 9. Harnack

Outcome harnack() {
    std::ostringstream os;
    bool ok = true;
    const fs::path base = out_dir(9);
    for (const auto& [name, model] :
         std::vector<std::pair<std::string, std::string>>{
             {"rotated_ou", kRotatedOu},
             {"nonlinear", "[model]\nfamily = \"nonlinear_dissipative\"\n[model.parameters]\nd = 2\nK = 1.0\nc = 0.5\n"}}) {
        const ExperimentResult res = run_toml(std::string(R"(
kind = "verify-harnack"
seed = 2032
[harnack]
functions = ["constant", "gaussian", "logistic"]
p = [1.5, 2.0, 4.0]
distances = [0.5, 1.0, 2.0]
T = [0.25, 1.0]
x = [1.0, 0.0]
jensen = true
n = 100000
h = 1e-3
)") + model, base / name);
        const json& r = res.report.at("results");
        std::size_t total = 0, passed = 0;
        double min_margin = 1e300;
        for (const json& c : r.at("checks")) {
            ++total;
            if (c.at("pass").get<bool>()) ++passed;
            min_margin = std::min(min_margin, c.at("margin").get<double>());
        }
        ok = ok && res.exit_code == kExitPass;
        os << name << ": " << passed << "/" << total << " cases pass, Jensen margins nonnegative: "
           << (r.at("jensen_nonnegative_margin").get<bool>() ? "yes" : "no") << "; ";
    }
    return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// 10. Integration by parts

// E g(x + sqrt(T) Z) for scalar g by Simpson's rule on [-12, 12].
double gaussian_expectation(const std::function<double(double)>& g, double x, double T) {
    const int n = 24000;
    const double a = -12.0, b = 12.0, dz = (b - a) / n;
    double sum = 0.0;
    for (int k = 0; k <= n; ++k) {
        const double z = a + k * dz;
        const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        sum += w * g(x + std::sqrt(T) * z) * std::exp(-0.5 * z * z);
    }
    return sum * dz / 3.0 / std::sqrt(2.0 * M_PI);
}

Outcome integration_by_parts() {
    const Vec x = to_vec({0.5, 0.0});
    const Vec v = to_vec({1.0, 0.0});
    const double T = 1.0;
    IbpConfig cfg;
    cfg.n = 1000000;
    cfg.h = 1e-2;
    cfg.seed = 2033;
    const std::vector<TestFunction> fs = {test_function("gaussian"), test_function("logistic"),
                                          test_function("tanh")};
    std::ostringstream os;
    bool ok = true;

    // Brownian motion: E[grad_v f(x + W_T)] in closed form or by one-dimensional quadrature.
    const double s = 1.0 + 2.0 * T;
    const double gauss_exact = -2.0 * x[0] / s * (1.0 / s) * std::exp(-x.squaredNorm() / s);
    const double logistic_exact = gaussian_expectation(
        [](double z) {
            const double e = 1.0 / (1.0 + std::exp(-z));
            return e * (1.0 - e);
        },
        x[0], T);
    const double tanh_exact = gaussian_expectation(
        [](double z) {
            const double c = std::cosh(z);
            return 1.0 / (c * c);
        },
        x[0], T);
    const double exact[] = {gauss_exact, logistic_exact, tanh_exact};
    const auto bm = ibp_check_many(make_brownian(2), fs, v, x, T, cfg);
    for (std::size_t j = 0; j < fs.size(); ++j) {
        const bool lhs_ok = std::abs(bm[j].lhs - exact[j]) <= 3.0 * bm[j].lhs_se;
        const bool rhs_ok = std::abs(bm[j].rhs - exact[j]) <= 3.0 * bm[j].rhs_se;
        ok = ok && bm[j].pass && lhs_ok && rhs_ok;
        os << "brownian " << fs[j].name << ": exact=" << num(exact[j]) << " lhs=" << num(bm[j].lhs)
           << " rhs=" << num(bm[j].rhs) << " se=" << num(bm[j].rhs_se) << "; ";
    }
    // Linear f on Brownian motion: lhs is <u, v> exactly.
    IbpConfig lin = cfg;
    const VerificationReport l = ibp_check(make_brownian(2), test_function("linear"), v, x, T, lin);
    ok = ok && l.lhs == 1.0 && l.pass;
    os << "brownian linear: lhs=" << num(l.lhs) << " rhs=" << num(l.rhs) << "; ";

    const auto ou = ibp_check_many(make_rotated_ou(1.0, 1.0), fs, v, x, T, cfg);
    for (std::size_t j = 0; j < fs.size(); ++j) {
        ok = ok && ou[j].pass;
        os << "rotated_ou " << fs[j].name << ": lhs=" << num(ou[j].lhs) << " rhs=" << num(ou[j].rhs)
           << " margin/se=" << num(ou[j].margin / ou[j].combined_se()) << "; ";
    }
    return {ok, os.str()};
}

// ---------------------------------------------------------------------------
// 11. Determinism

Outcome determinism() {
    const std::vector<std::pair<std::string, std::string>> configs = {
        {"estimate", std::string(R"(
kind = "estimate"
seed = 77
replicas = 300
h = 1e-2
horizons = [5.0, 20.0]
[estimate]
batch_horizon = 500.0
batch_len = 10.0
)") + kRotatedOu},
        {"coupling", std::string(R"(
kind = "verify-coupling"
seed = 78
[coupling]
n = 500
h = 1e-2
T = [1.0]
)") + kRotatedOu},
        {"harnack", std::string(R"(
kind = "verify-harnack"
seed = 79
[harnack]
n = 400
h = 1e-2
T = [0.5]
p = [2.0]
)") + kRotatedOu},
        {"ibp", std::string(R"(
kind = "verify-ibp"
seed = 80
[ibp]
n = 500
h = 1e-2
)") + kRotatedOu}};
    const fs::path base = out_dir(11);
    bool ok = true;
    std::size_t compared = 0;
    for (const auto& [name, toml] : configs) {
        const fs::path a = base / (name + "_w1"), b = base / (name + "_w1_again"), c = base / (name + "_w7");
        run_toml(toml, a, 1);
        run_toml(toml, b, 1);
        run_toml(toml, c, 7);
        for (const auto& entry : fs::directory_iterator(a)) {
            const std::string f = entry.path().filename().string();
            if (f == "run_timing.json") continue;
            const std::string ref = slurp(a / f);
            ok = ok && ref == slurp(b / f) && ref == slurp(c / f);
            ++compared;
        }
    }
    return {ok, std::to_string(compared) + " artifacts byte-identical across repeat runs and 1 vs 7 workers: " +
                    (ok ? "yes" : "no")};
}

struct Criterion {
    const char* name;
    Outcome (*fn)();
};

const Criterion kCriteria[] = {
    {"reversible_exactness", reversible_exactness},
    {"mean_epr", mean_epr},
    {"asymptotic_variance", asymptotic_variance},
    {"clt", clt},
    {"mdp", mdp},
    {"lil", lil},
    {"martingale", martingale},
    {"coupling", coupling},
    {"harnack", harnack},
    {"integration_by_parts", integration_by_parts},
    {"determinism", determinism},
};

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
    }
    const int count = static_cast<int>(std::size(kCriteria));
    if (only < 0 || only > count) {
        std::cerr << "--only expects 1.." << count << "\n";
        return 1;
    }
    bool all = true;
    for (int i = 1; i <= count; ++i) {
        if (only != 0 && i != only) continue;
        const Criterion& c = kCriteria[i - 1];
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        all = all && o.pass;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i << " " << c.name << ": " << o.detail
                  << std::endl;
    }
    return all ? 0 : 1;
}
