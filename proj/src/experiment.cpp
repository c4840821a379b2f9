#include "eprlab/experiment.hpp"

#include "eprlab/asymptotics.hpp"
#include "eprlab/coupling.hpp"
#include "eprlab/epr.hpp"
#include "eprlab/models.hpp"
#include "eprlab/sde.hpp"

#include <toml.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace eprlab {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// JSON field access with dotted paths in every error

std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& path) {
    if (!obj.is_object()) throw ConfigError((path.empty() ? "config" : path) + ": expected a table");
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (!allowed.count(key)) throw ConfigError(join(path, key) + ": unknown key");
    }
}

double as_number(const json& v, const std::string& path) {
    if (!v.is_number()) throw ConfigError(path + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(path + ": must be finite");
    return x;
}

double number_or(const json& obj, const std::string& key, double fallback, const std::string& path) {
    return obj.contains(key) ? as_number(obj.at(key), join(path, key)) : fallback;
}

std::uint64_t as_count(const json& v, const std::string& path) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        const auto x = v.get<std::int64_t>();
        if (x < 0) throw ConfigError(path + ": must be non-negative");
        return static_cast<std::uint64_t>(x);
    }
    if (v.is_number_float()) {
        // Accept 1e5 and similar exact integral floats.
        const double x = v.get<double>();
        if (x >= 0.0 && x < 1.8e19 && std::floor(x) == x) return static_cast<std::uint64_t>(x);
    }
    throw ConfigError(path + ": expected a non-negative integer");
}

std::uint64_t count_or(const json& obj, const std::string& key, std::uint64_t fallback,
                       const std::string& path) {
    return obj.contains(key) ? as_count(obj.at(key), join(path, key)) : fallback;
}

bool bool_or(const json& obj, const std::string& key, bool fallback, const std::string& path) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_boolean()) throw ConfigError(join(path, key) + ": expected a boolean");
    return obj.at(key).get<bool>();
}

std::vector<double> number_list(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path + ": expected an array");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(as_number(v[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
}

std::vector<double> number_list_or(const json& obj, const std::string& key,
                                   std::vector<double> fallback, const std::string& path) {
    return obj.contains(key) ? number_list(obj.at(key), join(path, key)) : fallback;
}

std::vector<std::string> string_list(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path + ": expected an array");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_string()) throw ConfigError(path + "[" + std::to_string(i) + "]: expected a string");
        out.push_back(v[i].get<std::string>());
    }
    return out;
}

Vec as_vector(const json& v, int dim, const std::string& path) {
    const std::vector<double> xs = number_list(v, path);
    if (static_cast<int>(xs.size()) != dim) {
        throw ConfigError(path + ": expected " + std::to_string(dim) + " components, got " +
                          std::to_string(xs.size()));
    }
    return to_vec(xs);
}

Vec vector_or(const json& obj, const std::string& key, const Vec& fallback, int dim,
              const std::string& path) {
    return obj.contains(key) ? as_vector(obj.at(key), dim, join(path, key)) : fallback;
}

std::vector<Vec> vector_list(const json& v, int dim, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path + ": expected an array of points");
    std::vector<Vec> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(as_vector(v[i], dim, path + "[" + std::to_string(i) + "]"));
    }
    return out;
}

Mat as_matrix(const json& v, int dim, const std::string& path) {
    if (!v.is_array() || static_cast<int>(v.size()) != dim) {
        throw ConfigError(path + ": expected a " + std::to_string(dim) + "x" + std::to_string(dim) +
                          " matrix");
    }
    Mat m(dim, dim);
    for (int i = 0; i < dim; ++i) {
        const Vec row = as_vector(v[i], dim, path + "[" + std::to_string(i) + "]");
        m.row(i) = row.transpose();
    }
    return m;
}

json vec_json(const Vec& v) { return to_std(v); }

json vec_list_json(const std::vector<Vec>& vs) {
    json out = json::array();
    for (const auto& v : vs) out.push_back(vec_json(v));
    return out;
}

void require_positive(double x, const std::string& path) {
    if (!(x > 0.0)) throw ConfigError(path + ": must be positive");
}

Vec unit(int dim) {
    Vec e = Vec::Zero(dim);
    e[0] = 1.0;
    return e;
}

// ---------------------------------------------------------------------------
// Kind-specific sections. Each parse fills defaults so the echo is complete.

struct EstimateSection {
    std::optional<double> batch_horizon;
    double batch_len = 100.0;
    double R_rel_tol = 0.02;
    double delta_rel_tol = 0.10;
    double batch_rel_tol = 0.15;

    static EstimateSection parse(const json& s) {
        const std::string p = "estimate";
        check_keys(s, {"batch_horizon", "batch_len", "R_rel_tol", "delta_rel_tol", "batch_rel_tol"}, p);
        EstimateSection out;
        if (s.contains("batch_horizon")) {
            out.batch_horizon = as_number(s.at("batch_horizon"), p + ".batch_horizon");
            require_positive(*out.batch_horizon, p + ".batch_horizon");
        }
        out.batch_len = number_or(s, "batch_len", out.batch_len, p);
        require_positive(out.batch_len, p + ".batch_len");
        out.R_rel_tol = number_or(s, "R_rel_tol", out.R_rel_tol, p);
        out.delta_rel_tol = number_or(s, "delta_rel_tol", out.delta_rel_tol, p);
        out.batch_rel_tol = number_or(s, "batch_rel_tol", out.batch_rel_tol, p);
        if (out.batch_horizon && *out.batch_horizon / out.batch_len < 30.0) {
            throw ConfigError(p + ".batch_len: fewer than 30 batches fit in batch_horizon");
        }
        return out;
    }
    json to_json() const {
        json j = {{"batch_len", batch_len},
                  {"R_rel_tol", R_rel_tol},
                  {"delta_rel_tol", delta_rel_tol},
                  {"batch_rel_tol", batch_rel_tol}};
        if (batch_horizon) j["batch_horizon"] = *batch_horizon;
        return j;
    }
};

struct CltSection {
    double alpha = 0.01;
    bool require_ks_decrease = true;
    std::vector<Vec> dirac_starts;

    static CltSection parse(const json& s, int dim) {
        const std::string p = "clt";
        check_keys(s, {"alpha", "require_ks_decrease", "dirac_starts"}, p);
        CltSection out;
        out.alpha = number_or(s, "alpha", out.alpha, p);
        if (!(out.alpha > 0.0 && out.alpha < 1.0)) throw ConfigError(p + ".alpha: must lie in (0, 1)");
        out.require_ks_decrease = bool_or(s, "require_ks_decrease", true, p);
        if (s.contains("dirac_starts")) out.dirac_starts = vector_list(s.at("dirac_starts"), dim, p + ".dirac_starts");
        return out;
    }
    json to_json() const {
        return {{"alpha", alpha},
                {"require_ks_decrease", require_ks_decrease},
                {"dirac_starts", vec_list_json(dirac_starts)}};
    }
};

struct MdpSection {
    double exponent = 0.15;
    std::vector<double> u;
    double tolerance = 0.25;

    static MdpSection parse(const json& s) {
        const std::string p = "mdp";
        check_keys(s, {"exponent", "u", "tolerance"}, p);
        MdpSection out;
        out.exponent = number_or(s, "exponent", out.exponent, p);
        if (!(out.exponent > 0.0 && out.exponent < 0.5)) {
            throw ConfigError(p + ".exponent: must lie in (0, 1/2)");
        }
        std::vector<double> grid;
        for (int k = 1; k <= 40; ++k) grid.push_back(0.25 * k);
        out.u = number_list_or(s, "u", grid, p);
        if (out.u.empty()) throw ConfigError(p + ".u: must not be empty");
        for (std::size_t i = 0; i < out.u.size(); ++i) {
            require_positive(out.u[i], p + ".u[" + std::to_string(i) + "]");
        }
        out.tolerance = number_or(s, "tolerance", out.tolerance, p);
        require_positive(out.tolerance, p + ".tolerance");
        return out;
    }
    json to_json() const { return {{"exponent", exponent}, {"u", u}, {"tolerance", tolerance}}; }
};

struct LilSection {
    double T = 1e5;
    double theta = 0.9;
    double margin = 0.25;
    double min_fraction = 0.9;
    double sup_cap = 1.4;

    static LilSection parse(const json& s) {
        const std::string p = "lil";
        check_keys(s, {"T", "theta", "margin", "min_fraction", "sup_cap"}, p);
        LilSection out;
        out.T = number_or(s, "T", out.T, p);
        if (!(out.T > std::exp(2.0))) throw ConfigError(p + ".T: must exceed e^2");
        out.theta = number_or(s, "theta", out.theta, p);
        require_positive(out.theta, p + ".theta");
        out.margin = number_or(s, "margin", out.margin, p);
        out.min_fraction = number_or(s, "min_fraction", out.min_fraction, p);
        out.sup_cap = number_or(s, "sup_cap", out.sup_cap, p);
        return out;
    }
    json to_json() const {
        return {{"T", T}, {"theta", theta}, {"margin", margin}, {"min_fraction", min_fraction},
                {"sup_cap", sup_cap}};
    }
};

struct HarnackSection {
    std::vector<std::string> functions{"constant", "gaussian", "logistic"};
    std::vector<double> p{1.5, 2.0, 4.0};
    std::vector<double> distances{0.5, 1.0, 2.0};
    std::vector<double> T{0.25, 1.0};
    Vec x;
    Vec direction;
    bool jensen = true;
    std::uint64_t n = 100000;
    double h = 1e-3;

    static HarnackSection parse(const json& s, int dim, std::optional<std::uint64_t> replicas) {
        const std::string p = "harnack";
        check_keys(s, {"functions", "p", "distances", "T", "x", "direction", "jensen", "n", "h"}, p);
        HarnackSection out;
        if (s.contains("functions")) out.functions = string_list(s.at("functions"), p + ".functions");
        for (std::size_t i = 0; i < out.functions.size(); ++i) {
            const std::string fp = p + ".functions[" + std::to_string(i) + "]";
            TestFunction f;
            try {
                f = test_function(out.functions[i]);
            } catch (const ConfigError& e) {
                throw ConfigError(fp + ": " + e.what());
            }
            if (!f.positive || !f.bounded) {
                throw ConfigError(fp + ": '" + out.functions[i] + "' is not bounded and positive");
            }
        }
        out.p = number_list_or(s, "p", out.p, p);
        for (std::size_t i = 0; i < out.p.size(); ++i) {
            if (!(out.p[i] > 1.0)) throw ConfigError(p + ".p[" + std::to_string(i) + "]: must exceed 1");
        }
        out.distances = number_list_or(s, "distances", out.distances, p);
        out.T = number_list_or(s, "T", out.T, p);
        for (std::size_t i = 0; i < out.T.size(); ++i) require_positive(out.T[i], p + ".T[" + std::to_string(i) + "]");
        out.x = vector_or(s, "x", Vec::Zero(dim), dim, p);
        out.direction = vector_or(s, "direction", unit(dim), dim, p);
        if (!(out.direction.norm() > 0.0)) throw ConfigError(p + ".direction: must be nonzero");
        out.direction /= out.direction.norm();
        out.jensen = bool_or(s, "jensen", true, p);
        out.n = count_or(s, "n", replicas.value_or(out.n), p);
        if (out.n < 2) throw ConfigError(p + ".n: need at least 2 paths");
        out.h = number_or(s, "h", out.h, p);
        require_positive(out.h, p + ".h");
        return out;
    }
    json to_json() const {
        return {{"functions", functions}, {"p", p}, {"distances", distances}, {"T", T},
                {"x", vec_json(x)}, {"direction", vec_json(direction)}, {"jensen", jensen},
                {"n", n}, {"h", h}};
    }
};

struct IbpSection {
    std::vector<std::string> functions{"gaussian", "logistic", "tanh"};
    Vec v;
    Vec x;
    double T = 1.0;
    std::uint64_t n = 1000000;
    double h = 1e-2;

    static IbpSection parse(const json& s, int dim, std::optional<std::uint64_t> replicas) {
        const std::string p = "ibp";
        check_keys(s, {"functions", "v", "x", "T", "n", "h"}, p);
        IbpSection out;
        if (s.contains("functions")) out.functions = string_list(s.at("functions"), p + ".functions");
        if (out.functions.empty()) throw ConfigError(p + ".functions: must not be empty");
        for (std::size_t i = 0; i < out.functions.size(); ++i) {
            try {
                (void)test_function(out.functions[i]);
            } catch (const ConfigError& e) {
                throw ConfigError(p + ".functions[" + std::to_string(i) + "]: " + e.what());
            }
        }
        out.v = vector_or(s, "v", unit(dim), dim, p);
        out.x = vector_or(s, "x", Vec::Zero(dim), dim, p);
        out.T = number_or(s, "T", out.T, p);
        require_positive(out.T, p + ".T");
        out.n = count_or(s, "n", replicas.value_or(out.n), p);
        if (out.n < 2) throw ConfigError(p + ".n: need at least 2 paths");
        out.h = number_or(s, "h", out.h, p);
        require_positive(out.h, p + ".h");
        return out;
    }
    json to_json() const {
        return {{"functions", functions}, {"v", vec_json(v)}, {"x", vec_json(x)}, {"T", T},
                {"n", n}, {"h", h}};
    }
};

struct CouplingSection {
    std::vector<std::pair<Vec, Vec>> pairs;
    std::vector<double> T{0.5, 1.0};
    std::uint64_t n = 10000;
    double h = 1e-3;

    static CouplingSection parse(const json& s, int dim, std::optional<std::uint64_t> replicas) {
        const std::string p = "coupling";
        check_keys(s, {"pairs", "T", "n", "h"}, p);
        CouplingSection out;
        if (s.contains("pairs")) {
            const json& arr = s.at("pairs");
            if (!arr.is_array()) throw ConfigError(p + ".pairs: expected an array of tables");
            for (std::size_t i = 0; i < arr.size(); ++i) {
                const std::string pp = p + ".pairs[" + std::to_string(i) + "]";
                check_keys(arr[i], {"x", "y"}, pp);
                if (!arr[i].contains("x") || !arr[i].contains("y")) throw ConfigError(pp + ": needs x and y");
                out.pairs.emplace_back(as_vector(arr[i].at("x"), dim, pp + ".x"),
                                       as_vector(arr[i].at("y"), dim, pp + ".y"));
            }
        } else {
            for (double d : {0.5, 1.0, 2.0}) out.pairs.emplace_back(Vec::Zero(dim), d * unit(dim));
        }
        if (out.pairs.empty()) throw ConfigError(p + ".pairs: must not be empty");
        out.T = number_list_or(s, "T", out.T, p);
        for (std::size_t i = 0; i < out.T.size(); ++i) require_positive(out.T[i], p + ".T[" + std::to_string(i) + "]");
        out.n = count_or(s, "n", replicas.value_or(out.n), p);
        if (out.n < 1) throw ConfigError(p + ".n: need at least one pair");
        out.h = number_or(s, "h", out.h, p);
        require_positive(out.h, p + ".h");
        return out;
    }
    json to_json() const {
        json arr = json::array();
        for (const auto& [x, y] : pairs) arr.push_back({{"x", vec_json(x)}, {"y", vec_json(y)}});
        return {{"pairs", arr}, {"T", T}, {"n", n}, {"h", h}};
    }
};

struct MartingaleSection {
    double t = 1.0;
    std::vector<double> h{1e-3, 5e-4};
    std::uint64_t n = 100000;

    static MartingaleSection parse(const json& s, std::optional<std::uint64_t> replicas) {
        const std::string p = "martingale";
        check_keys(s, {"t", "h", "n"}, p);
        MartingaleSection out;
        out.t = number_or(s, "t", out.t, p);
        if (!(out.t >= 0.0)) throw ConfigError(p + ".t: must be non-negative");
        out.h = number_list_or(s, "h", out.h, p);
        if (out.h.empty()) throw ConfigError(p + ".h: must not be empty");
        for (std::size_t i = 0; i < out.h.size(); ++i) require_positive(out.h[i], p + ".h[" + std::to_string(i) + "]");
        out.n = count_or(s, "n", replicas.value_or(out.n), p);
        if (out.n < 100) throw ConfigError(p + ".n: need at least 100 replicas");
        return out;
    }
    json to_json() const { return {{"t", t}, {"h", h}, {"n", n}}; }
};

struct MomentsSection {
    double epsilon = 0.1;
    std::vector<Vec> starts;
    std::vector<double> horizons{1.0, 5.0};
    std::uint64_t n = 2000;
    double h = 1e-3;
    std::optional<double> psi_epsilon;
    std::uint64_t psi_n = 100000;

    static MomentsSection parse(const json& s, int dim, std::optional<std::uint64_t> replicas) {
        const std::string p = "moments";
        check_keys(s, {"epsilon", "starts", "horizons", "n", "h", "psi_epsilon", "psi_n"}, p);
        MomentsSection out;
        out.epsilon = number_or(s, "epsilon", out.epsilon, p);
        require_positive(out.epsilon, p + ".epsilon");
        out.starts = s.contains("starts") ? vector_list(s.at("starts"), dim, p + ".starts")
                                          : std::vector<Vec>{Vec::Zero(dim), unit(dim)};
        if (out.starts.empty()) throw ConfigError(p + ".starts: must not be empty");
        out.horizons = number_list_or(s, "horizons", out.horizons, p);
        for (std::size_t i = 0; i < out.horizons.size(); ++i) {
            require_positive(out.horizons[i], p + ".horizons[" + std::to_string(i) + "]");
        }
        out.n = count_or(s, "n", replicas.value_or(out.n), p);
        if (out.n < 2) throw ConfigError(p + ".n: need at least 2 paths");
        out.h = number_or(s, "h", out.h, p);
        require_positive(out.h, p + ".h");
        if (s.contains("psi_epsilon")) {
            out.psi_epsilon = as_number(s.at("psi_epsilon"), p + ".psi_epsilon");
            require_positive(*out.psi_epsilon, p + ".psi_epsilon");
        }
        out.psi_n = count_or(s, "psi_n", out.psi_n, p);
        return out;
    }
    json to_json() const {
        json j = {{"epsilon", epsilon}, {"starts", vec_list_json(starts)}, {"horizons", horizons},
                  {"n", n}, {"h", h}, {"psi_n", psi_n}};
        if (psi_epsilon) j["psi_epsilon"] = *psi_epsilon;
        return j;
    }
};

const std::set<std::string> kSectionNames = {"estimate", "clt",      "mdp",        "lil",    "harnack",
                                             "ibp",      "coupling", "martingale", "moments"};

bool uses_ensemble(ExperimentKind k) {
    return k == ExperimentKind::Simulate || k == ExperimentKind::Estimate ||
           k == ExperimentKind::Clt || k == ExperimentKind::Mdp || k == ExperimentKind::Lil;
}

InitialLaw parse_initial(const json& s, int dim) {
    const std::string p = "initial";
    check_keys(s, {"kind", "x0", "mean", "covariance"}, p);
    const std::string kind = s.contains("kind") && s.at("kind").is_string()
                                 ? s.at("kind").get<std::string>()
                                 : (s.contains("kind") ? throw ConfigError(p + ".kind: expected a string")
                                                       : std::string("stationary"));
    if (kind == "stationary") return InitialLaw::stationary();
    if (kind == "dirac") {
        if (!s.contains("x0")) throw ConfigError(p + ".x0: required for a dirac start");
        return InitialLaw::dirac(as_vector(s.at("x0"), dim, p + ".x0"));
    }
    if (kind == "gaussian") {
        if (!s.contains("mean")) throw ConfigError(p + ".mean: required for a gaussian start");
        if (!s.contains("covariance")) throw ConfigError(p + ".covariance: required for a gaussian start");
        const Mat cov = as_matrix(s.at("covariance"), dim, p + ".covariance");
        Eigen::LLT<Mat> llt(cov);
        if (llt.info() != Eigen::Success || !cov.isApprox(cov.transpose())) {
            throw ConfigError(p + ".covariance: must be symmetric positive definite");
        }
        return InitialLaw::gaussian(as_vector(s.at("mean"), dim, p + ".mean"), cov);
    }
    throw ConfigError(p + ".kind: unknown initial law '" + kind + "'");
}

ModelSpec build_model(const json& model) {
    try {
        return model_from_manifest(model);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
}

json toml_node_to_json(const toml::node& node) {
    if (const auto* t = node.as_table()) {
        json out = json::object();
        for (const auto& [k, v] : *t) out[std::string(k.str())] = toml_node_to_json(v);
        return out;
    }
    if (const auto* a = node.as_array()) {
        json out = json::array();
        for (const auto& v : *a) out.push_back(toml_node_to_json(v));
        return out;
    }
    if (const auto* i = node.as_integer()) return i->get();
    if (const auto* f = node.as_floating_point()) return f->get();
    if (const auto* b = node.as_boolean()) return b->get();
    if (const auto* s = node.as_string()) return s->get();
    std::ostringstream os;
    if (const auto* d = node.as_date()) os << *d;
    else if (const auto* tm = node.as_time()) os << *tm;
    else if (const auto* dt = node.as_date_time()) os << *dt;
    return os.str();
}

// ---------------------------------------------------------------------------
// Artifact writing

std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

class ArtifactWriter {
public:
    explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) {}

    void text(const std::string& name, const std::string& body) {
        std::ofstream f(dir_ / name, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot write " + (dir_ / name).string());
        f << body;
        if (!f) throw Error("write failed: " + (dir_ / name).string());
        if (std::find(written_.begin(), written_.end(), name) == written_.end()) written_.push_back(name);
    }
    void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }

    const std::vector<std::string>& written() const { return written_; }

private:
    fs::path dir_;
    std::vector<std::string> written_;
};

std::string samples_csv(const Ensemble& ens) {
    std::ostringstream os;
    os << "replica,stream_id,t,R_t,S_t,S_t_unhalved,log_M_t,ito_sum,quad_sum\n";
    for (std::size_t k = 0; k < ens.horizons.size(); ++k) {
        for (std::size_t i = 0; i < ens.samples[k].size(); ++i) {
            const FunctionalSample& s = ens.samples[k][i];
            os << i << ',' << ens.replicas[i].stream_id << ',' << fmt17(s.t) << ',' << fmt17(s.R_t)
               << ',' << fmt17(s.S_t) << ',' << fmt17(s.S_t_unhalved) << ',' << fmt17(s.log_M_t) << ','
               << fmt17(s.ito_sum) << ',' << fmt17(s.quad_sum) << '\n';
        }
    }
    return os.str();
}

json replica_table(const Ensemble& ens, std::uint64_t seed) {
    json rows = json::array();
    for (std::size_t i = 0; i < ens.replicas.size(); ++i) {
        const ReplicaInfo& r = ens.replicas[i];
        rows.push_back({{"replica", i},
                        {"seed", seed},
                        {"stream_id", r.stream_id},
                        {"burn_in_steps", r.burn_in_steps},
                        {"steps", r.steps},
                        {"realized_horizon", r.realized_horizon},
                        {"max_abs", r.max_abs}});
    }
    return rows;
}

std::string report_rows_csv(const std::vector<std::pair<std::string, VerificationReport>>& rows) {
    std::ostringstream os;
    os << "check,mode,lhs,rhs,lhs_se,rhs_se,margin,pass,n\n";
    for (const auto& [name, r] : rows) {
        os << name << ',' << (r.mode == VerificationReport::Mode::Inequality ? "inequality" : "identity")
           << ',' << fmt17(r.lhs) << ',' << fmt17(r.rhs) << ',' << fmt17(r.lhs_se) << ','
           << fmt17(r.rhs_se) << ',' << fmt17(r.margin) << ',' << (r.pass ? 1 : 0) << ',' << r.n << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Pipelines

struct Outcome {
    json report = json::object();
    bool pass = true;
    std::optional<Ensemble> ensemble;
    json extra_replicas;
    std::string samples;
};

EnsembleConfig base_ensemble(const ExperimentConfig& cfg) {
    EnsembleConfig e;
    e.initial = cfg.initial;
    e.horizons = cfg.horizons;
    e.replicas = cfg.replicas;
    e.h = cfg.h;
    e.seed = cfg.seed;
    e.burn_in = cfg.burn_in;
    e.workers = cfg.workers;
    e.R = cfg.R;
    return e;
}

/// delta from the config, the closed form, or the ensemble at the largest horizon, in that order.
std::pair<double, std::string> resolve_delta(const ExperimentConfig& cfg, const ModelSpec& model,
                                             const Ensemble* ens) {
    if (cfg.delta) return {*cfg.delta, "config"};
    if (model.closed_forms().delta) return {*model.closed_forms().delta, "closed_form"};
    if (!ens) throw ConfigError("delta: no closed form for this model; set delta in the config");
    const DeltaEstimate d = estimate_delta_ensemble(stats_at(*ens, ens->horizons.size() - 1));
    return {d.delta_hat, "ensemble_estimate"};
}

Outcome run_simulate(const ExperimentConfig& cfg, const ModelSpec& model) {
    EnsembleConfig e = base_ensemble(cfg);
    std::string r_source = "config";
    if (!e.R) {
        if (model.closed_forms().epr) {
            r_source = "closed_form";
        } else {
            e.R = 0.0;
            r_source = "zero_default";
        }
    }
    Outcome out;
    out.ensemble = run_ensemble(model, e);
    const Ensemble& ens = *out.ensemble;
    json per = json::array();
    for (std::size_t k = 0; k < ens.horizons.size(); ++k) {
        const Estimate r = estimate_epr(stats_at(ens, k));
        per.push_back({{"t", ens.horizons[k]}, {"mean_R_t", r.value}, {"se", r.se}, {"n", r.n}});
    }
    out.report = {{"R", ens.R}, {"R_source", r_source}, {"horizons", per}};
    out.samples = samples_csv(ens);
    return out;
}

Outcome run_estimate(const ExperimentConfig& cfg, const ModelSpec& model) {
    const EstimateSection sec = EstimateSection::parse(cfg.sections.value("estimate", json::object()));
    EnsembleConfig e = base_ensemble(cfg);
    if (!e.R && !model.closed_forms().epr) e.R = 0.0;
    Outcome out;
    out.ensemble = run_ensemble(model, e);
    const Ensemble& ens = *out.ensemble;
    const auto& cf = model.closed_forms();

    json per = json::array();
    for (std::size_t k = 0; k < ens.horizons.size(); ++k) {
        const EnsembleStats st = stats_at(ens, k);
        const Estimate r = estimate_epr(st);
        json row = {{"t", ens.horizons[k]}, {"R_hat", r.value}, {"R_se", r.se}, {"n", r.n}};
        if (st.samples.size() >= 30) row["delta"] = estimate_delta_ensemble(st).to_json();
        per.push_back(row);
    }
    out.report["horizons"] = per;

    const EnsembleStats last = stats_at(ens, ens.horizons.size() - 1);
    const Estimate r = estimate_epr(last);
    if (cf.epr) {
        const double err = std::abs(r.value - *cf.epr);
        const bool within_se = err <= 3.0 * r.se;
        const bool within_rel = err <= sec.R_rel_tol * std::abs(*cf.epr);
        out.report["R_check"] = {{"R_hat", r.value}, {"se", r.se}, {"R_exact", *cf.epr},
                                 {"abs_error", err}, {"within_3se", within_se},
                                 {"rel_tol", sec.R_rel_tol}, {"within_rel_tol", within_rel},
                                 {"pass", within_se && within_rel}};
        out.pass = out.pass && within_se && within_rel;
    }
    std::optional<DeltaEstimate> ens_delta;
    if (last.samples.size() >= 30) {
        ens_delta = estimate_delta_ensemble(last);
        if (cf.delta) {
            const double rel = std::abs(ens_delta->delta_hat - *cf.delta) / *cf.delta;
            const bool ok = rel <= sec.delta_rel_tol;
            out.report["delta_check"] = {{"delta_hat", ens_delta->delta_hat}, {"se", ens_delta->se},
                                         {"delta_exact", *cf.delta}, {"rel_error", rel},
                                         {"rel_tol", sec.delta_rel_tol}, {"pass", ok}};
            out.pass = out.pass && ok;
        }
    }
    if (sec.batch_horizon) {
        EnsembleConfig b = e;
        b.replicas = 1;
        b.first_stream = cfg.replicas;
        b.horizons = {*sec.batch_horizon};
        const auto batches = static_cast<std::size_t>(std::floor(*sec.batch_horizon / sec.batch_len + 1e-9));
        b.trace_times.clear();
        for (std::size_t j = 1; j <= batches; ++j) b.trace_times.push_back(sec.batch_len * static_cast<double>(j));
        const Ensemble path = run_ensemble(model, b);
        const DeltaEstimate bm = estimate_delta_batch_means(path.traces.at(0), sec.batch_len);
        json check = {{"batch", bm.to_json()}, {"stream_id", path.replicas.at(0).stream_id}};
        if (ens_delta) {
            const double rel = std::abs(bm.delta_hat - ens_delta->delta_hat) / ens_delta->delta_hat;
            const bool ok = rel <= sec.batch_rel_tol;
            check["rel_difference_to_ensemble"] = rel;
            check["rel_tol"] = sec.batch_rel_tol;
            check["pass"] = ok;
            out.pass = out.pass && ok;
        }
        out.report["batch_means"] = check;
        out.extra_replicas = replica_table(path, cfg.seed);
    }
    out.samples = samples_csv(ens);
    return out;
}

Outcome run_clt(const ExperimentConfig& cfg, const ModelSpec& model, ArtifactWriter& files) {
    const CltSection sec = CltSection::parse(cfg.sections.value("clt", json::object()), model.dim());
    EnsembleConfig e = base_ensemble(cfg);
    if (!e.R && !model.closed_forms().epr) {
        throw ConfigError("R: no closed form for this model; set R in the config");
    }
    Outcome out;
    out.ensemble = run_ensemble(model, e);
    const Ensemble& ens = *out.ensemble;
    const auto [delta, delta_source] = resolve_delta(cfg, model, &ens);

    std::ostringstream tsv;
    tsv << "start\tt\tks_statistic\tp_value\tn\n";
    json rows = json::array();
    std::vector<CltReport> reps;
    for (std::size_t k = 0; k < ens.horizons.size(); ++k) {
        reps.push_back(clt_test(stats_at(ens, k), delta));
        rows.push_back(reps.back().to_json());
        tsv << "initial\t" << fmt17(reps.back().t) << '\t' << fmt17(reps.back().ks_statistic) << '\t'
            << fmt17(reps.back().p_value) << '\t' << reps.back().n << '\n';
    }
    const bool p_ok = reps.back().p_value > sec.alpha;
    bool decrease_ok = true;
    if (sec.require_ks_decrease && reps.size() >= 2) {
        decrease_ok = reps.back().ks_statistic < reps.front().ks_statistic;
    }
    out.pass = p_ok && decrease_ok;
    out.report = {{"delta", delta}, {"delta_source", delta_source}, {"alpha", sec.alpha},
                  {"clt", rows}, {"p_value_pass", p_ok}, {"ks_decrease_pass", decrease_ok}};

    json starts = json::array();
    for (std::size_t j = 0; j < sec.dirac_starts.size(); ++j) {
        const PointStartReport ps = point_start_suite(model, InitialLaw::dirac(sec.dirac_starts[j]),
                                                      cfg.horizons, cfg.replicas, cfg.h,
                                                      cfg.seed + 1 + j, cfg.workers, delta);
        const bool ok = ps.clt.back().p_value > sec.alpha;
        json row = ps.to_json();
        row["seed"] = cfg.seed + 1 + j;
        row["pass"] = ok;
        starts.push_back(row);
        out.pass = out.pass && ok;
        for (const CltReport& c : ps.clt) {
            tsv << "dirac" << j << '\t' << fmt17(c.t) << '\t' << fmt17(c.ks_statistic) << '\t'
                << fmt17(c.p_value) << '\t' << c.n << '\n';
        }
    }
    if (!sec.dirac_starts.empty()) out.report["dirac_starts"] = starts;
    files.text("ks_vs_t.tsv", tsv.str());
    out.samples = samples_csv(ens);
    return out;
}

Outcome run_mdp(const ExperimentConfig& cfg, const ModelSpec& model, ArtifactWriter& files) {
    const MdpSection sec = MdpSection::parse(cfg.sections.value("mdp", json::object()));
    EnsembleConfig e = base_ensemble(cfg);
    if (!e.R && !model.closed_forms().epr) {
        throw ConfigError("R: no closed form for this model; set R in the config");
    }
    Outcome out;
    out.ensemble = run_ensemble(model, e);
    const Ensemble& ens = *out.ensemble;
    const auto [delta, delta_source] = resolve_delta(cfg, model, &ens);

    std::vector<EnsembleStats> stats;
    for (std::size_t k = 0; k < ens.horizons.size(); ++k) stats.push_back(stats_at(ens, k));
    const MdpReport rep = mdp_curve(stats, sec.exponent, sec.u, delta);

    std::ostringstream tsv;
    tsv << "t\tlambda_t\tu\thits\tn\tprobability\tempirical\ttheory\n";
    for (const MdpRow& r : rep.rows) {
        tsv << fmt17(r.t) << '\t' << fmt17(r.lambda_t) << '\t' << fmt17(r.u) << '\t' << r.hits << '\t'
            << r.n << '\t' << fmt17(r.probability) << '\t' << fmt17(r.empirical) << '\t'
            << fmt17(r.theory) << '\n';
    }
    files.text("mdp_rate.tsv", tsv.str());

    // Relative discrepancy at the deepest qualifying u, per horizon.
    json disc = json::array();
    std::vector<double> rel;
    for (const MdpRow& r : rep.deepest) {
        const double d = std::abs(r.empirical - r.theory) / r.theory;
        rel.push_back(d);
        disc.push_back({{"t", r.t}, {"u", r.u}, {"hits", r.hits}, {"empirical", r.empirical},
                        {"theory", r.theory}, {"rel_discrepancy", d}});
    }
    const bool covered = !rep.empty && rep.deepest.size() == ens.horizons.size();
    const bool last_ok = covered && rel.back() <= sec.tolerance;
    bool monotone = covered;
    for (std::size_t i = 1; monotone && i < rel.size(); ++i) monotone = rel[i] < rel[i - 1];
    out.pass = last_ok && monotone;
    out.report = {{"delta", delta}, {"delta_source", delta_source}, {"mdp", rep.to_json()},
                  {"discrepancy", disc}, {"tolerance", sec.tolerance},
                  {"largest_t_pass", last_ok}, {"monotone_pass", monotone}};
    out.samples = samples_csv(ens);
    return out;
}

Outcome run_lil(const ExperimentConfig& cfg, const ModelSpec& model, ArtifactWriter& files) {
    const LilSection sec = LilSection::parse(cfg.sections.value("lil", json::object()));
    EnsembleConfig e = base_ensemble(cfg);
    if (!e.R && !model.closed_forms().epr) {
        throw ConfigError("R: no closed form for this model; set R in the config");
    }
    e.trace_times = lil_grid(sec.T, sec.theta);
    e.horizons = {sec.T};
    Outcome out;
    out.ensemble = run_ensemble(model, e);
    const Ensemble& ens = *out.ensemble;
    const auto [delta, delta_source] = resolve_delta(cfg, model, nullptr);
    const LilReport rep = lil_scan(ens.traces, delta, sec.margin);

    std::ostringstream tsv;
    tsv << "replica\tt\tS_t\tnormalized\n";
    for (std::size_t i = 0; i < ens.traces.size(); ++i) {
        const TrajectoryRecord& tr = ens.traces[i];
        for (std::size_t j = 0; j < tr.t.size(); ++j) {
            if (tr.t[j] < std::exp(2.0)) continue;
            tsv << i << '\t' << fmt17(tr.t[j]) << '\t' << fmt17(tr.S[j]) << '\t'
                << fmt17(tr.S[j] / lil_normalizer(tr.t[j])) << '\n';
        }
    }
    files.text("lil_envelope.tsv", tsv.str());

    const bool frac_ok = rep.fraction_within >= sec.min_fraction;
    const bool cap_ok = rep.max_sup_ratio <= sec.sup_cap;
    out.pass = frac_ok && cap_ok;
    out.report = {{"delta", delta}, {"delta_source", delta_source}, {"lil", rep.to_json()},
                  {"min_fraction", sec.min_fraction}, {"sup_cap", sec.sup_cap},
                  {"fraction_pass", frac_ok}, {"sup_cap_pass", cap_ok}};
    out.samples = samples_csv(ens);
    return out;
}

json named_reports(const std::vector<std::pair<std::string, VerificationReport>>& rows) {
    json arr = json::array();
    for (const auto& [name, r] : rows) {
        json j = to_json(r);
        j["check"] = name;
        arr.push_back(j);
    }
    return arr;
}

bool all_pass(const std::vector<std::pair<std::string, VerificationReport>>& rows) {
    return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.second.pass; });
}

Outcome run_harnack(const ExperimentConfig& cfg, const ModelSpec& model) {
    const HarnackSection sec = HarnackSection::parse(cfg.sections.value("harnack", json::object()),
                                                     model.dim(), std::nullopt);
    std::vector<HarnackCase> cases;
    for (const auto& f : sec.functions) {
        for (double p : sec.p) {
            for (double T : sec.T) {
                for (double d : sec.distances) cases.push_back({f, p, sec.x, sec.x + d * sec.direction, T});
                if (sec.jensen) cases.push_back({f, p, sec.x, sec.x, T});
            }
        }
    }
    HarnackConfig hc;
    hc.n = sec.n;
    hc.h = sec.h;
    hc.seed = cfg.seed;
    hc.workers = cfg.workers;
    const std::vector<VerificationReport> reps = harnack_grid(model, cases, hc);
    std::vector<std::pair<std::string, VerificationReport>> rows;
    bool jensen_ok = true;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const HarnackCase& c = cases[i];
        const double dist = (c.x - c.y).norm();
        std::ostringstream name;
        name << c.f << " p=" << c.p << " |x-y|=" << dist << " T=" << c.T;
        rows.emplace_back(name.str(), reps[i]);
        if (dist == 0.0 && !(reps[i].margin >= 0.0)) jensen_ok = false;
    }
    Outcome out;
    out.pass = all_pass(rows) && jensen_ok;
    out.report = {{"checks", named_reports(rows)}, {"jensen_nonnegative_margin", jensen_ok}};
    out.samples = report_rows_csv(rows);
    return out;
}

Outcome run_ibp(const ExperimentConfig& cfg, const ModelSpec& model) {
    const IbpSection sec = IbpSection::parse(cfg.sections.value("ibp", json::object()), model.dim(),
                                             std::nullopt);
    std::vector<TestFunction> fs;
    for (const auto& name : sec.functions) fs.push_back(test_function(name));
    IbpConfig ic;
    ic.n = sec.n;
    ic.h = sec.h;
    ic.seed = cfg.seed;
    ic.workers = cfg.workers;
    const auto reps = ibp_check_many(model, fs, sec.v, sec.x, sec.T, ic);
    std::vector<std::pair<std::string, VerificationReport>> rows;
    for (std::size_t i = 0; i < fs.size(); ++i) rows.emplace_back(fs[i].name, reps[i]);
    Outcome out;
    out.pass = all_pass(rows);
    out.report = {{"checks", named_reports(rows)}};
    out.samples = report_rows_csv(rows);
    return out;
}

Outcome run_coupling(const ExperimentConfig& cfg, const ModelSpec& model) {
    const CouplingSection sec = CouplingSection::parse(cfg.sections.value("coupling", json::object()),
                                                       model.dim(), std::nullopt);
    CouplingRunConfig cc;
    cc.n = sec.n;
    cc.h = sec.h;
    cc.seed = cfg.seed;
    cc.workers = cfg.workers;
    std::vector<std::pair<std::string, VerificationReport>> rows;
    for (const auto& [x, y] : sec.pairs) {
        for (double T : sec.T) {
            std::ostringstream name;
            name << "|x-y|=" << (x - y).norm() << " T=" << T;
            rows.emplace_back(name.str(), coupling_check(model, x, y, T, cc));
        }
    }
    Outcome out;
    out.pass = all_pass(rows);
    out.report = {{"checks", named_reports(rows)}};
    out.samples = report_rows_csv(rows);
    return out;
}

Outcome run_martingale(const ExperimentConfig& cfg, const ModelSpec& model) {
    const MartingaleSection sec =
        MartingaleSection::parse(cfg.sections.value("martingale", json::object()), std::nullopt);
    std::vector<std::pair<std::string, VerificationReport>> rows;
    for (double h : sec.h) {
        MartingaleConfig mc;
        mc.t = sec.t;
        mc.h = h;
        mc.n = sec.n;
        mc.seed = cfg.seed;
        mc.burn_in = cfg.burn_in;
        mc.workers = cfg.workers;
        std::ostringstream name;
        name << "h=" << h;
        rows.emplace_back(name.str(), martingale_mean(model, mc));
    }
    Outcome out;
    out.pass = all_pass(rows);
    // Stability under step refinement: successive estimates agree within 3 combined se.
    json stability = json::array();
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const VerificationReport& a = rows[i - 1].second;
        const VerificationReport& b = rows[i].second;
        const double diff = std::abs(a.lhs - b.lhs);
        const double se = std::hypot(a.lhs_se, b.lhs_se);
        const bool ok = diff <= 3.0 * se;
        stability.push_back({{"from", rows[i - 1].first}, {"to", rows[i].first}, {"difference", diff},
                             {"combined_se", se}, {"pass", ok}});
        out.pass = out.pass && ok;
    }
    out.report = {{"checks", named_reports(rows)}, {"step_refinement", stability}};
    out.samples = report_rows_csv(rows);
    return out;
}

Outcome run_moments(const ExperimentConfig& cfg, const ModelSpec& model) {
    const MomentsSection sec = MomentsSection::parse(cfg.sections.value("moments", json::object()),
                                                     model.dim(), std::nullopt);
    ExpMomentConfig ec;
    ec.starts = sec.starts;
    ec.horizons = sec.horizons;
    ec.n = sec.n;
    ec.h = sec.h;
    ec.seed = cfg.seed;
    ec.workers = cfg.workers;
    std::vector<std::pair<std::string, VerificationReport>> rows;
    rows.emplace_back("exp_moment", exp_moment_check(model, sec.epsilon, ec));
    if (sec.psi_epsilon) {
        rows.emplace_back("psi_exp_moment", psi_exp_moment_check(model, *sec.psi_epsilon, sec.psi_n, cfg.seed));
    }
    Outcome out;
    out.pass = all_pass(rows);
    out.report = {{"checks", named_reports(rows)}};
    out.samples = report_rows_csv(rows);
    return out;
}

json sections_for(ExperimentKind k, const json& sections) {
    json out = json::object();
    auto keep = [&](const char* name) {
        if (sections.contains(name)) out[name] = sections.at(name);
    };
    switch (k) {
        case ExperimentKind::Estimate: keep("estimate"); break;
        case ExperimentKind::Clt: keep("clt"); break;
        case ExperimentKind::Mdp: keep("mdp"); break;
        case ExperimentKind::Lil: keep("lil"); break;
        case ExperimentKind::VerifyHarnack: keep("harnack"); break;
        case ExperimentKind::VerifyIbp: keep("ibp"); break;
        case ExperimentKind::VerifyCoupling: keep("coupling"); break;
        case ExperimentKind::VerifyMartingale: keep("martingale"); break;
        case ExperimentKind::VerifyMoments: keep("moments"); break;
        case ExperimentKind::Simulate: break;
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string kind_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::Simulate: return "simulate";
        case ExperimentKind::Estimate: return "estimate";
        case ExperimentKind::Clt: return "clt";
        case ExperimentKind::Mdp: return "mdp";
        case ExperimentKind::Lil: return "lil";
        case ExperimentKind::VerifyHarnack: return "verify-harnack";
        case ExperimentKind::VerifyIbp: return "verify-ibp";
        case ExperimentKind::VerifyCoupling: return "verify-coupling";
        case ExperimentKind::VerifyMartingale: return "verify-martingale";
        case ExperimentKind::VerifyMoments: return "verify-moments";
    }
    return "unknown";
}

ExperimentKind parse_kind(const std::string& text) {
    std::string t = text;
    std::replace(t.begin(), t.end(), ' ', '-');
    std::replace(t.begin(), t.end(), '_', '-');
    for (auto k : {ExperimentKind::Simulate, ExperimentKind::Estimate, ExperimentKind::Clt,
                   ExperimentKind::Mdp, ExperimentKind::Lil, ExperimentKind::VerifyHarnack,
                   ExperimentKind::VerifyIbp, ExperimentKind::VerifyCoupling,
                   ExperimentKind::VerifyMartingale, ExperimentKind::VerifyMoments}) {
        if (kind_name(k) == t) return k;
    }
    throw ConfigError("kind: unknown experiment kind '" + text + "'");
}

nlohmann::json toml_to_json(const std::string& text) {
    try {
        const toml::table tbl = toml::parse(text);
        return toml_node_to_json(tbl);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << "config: TOML parse error at line " << e.source().begin.line << ", column "
           << e.source().begin.column << ": " << e.description();
        throw ConfigError(os.str());
    }
}

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
    std::set<std::string> allowed = {"kind", "seed", "replicas", "h", "horizons", "burn_in",
                                     "R",    "delta", "model",   "initial"};
    allowed.insert(kSectionNames.begin(), kSectionNames.end());
    check_keys(doc, allowed, "");

    ExperimentConfig cfg;
    if (!doc.contains("kind") || !doc.at("kind").is_string()) {
        throw ConfigError("kind: required string (simulate, estimate, clt, mdp, lil, verify-*)");
    }
    cfg.kind = parse_kind(doc.at("kind").get<std::string>());
    if (!doc.contains("model")) throw ConfigError("model: required table");
    cfg.model = doc.at("model");
    const ModelSpec model = build_model(cfg.model);
    // Store the model's own normalized manifest minus derived data.
    json normalized = {{"family", model.manifest().at("family")},
                       {"parameters", model.manifest().value("parameters", json::object())}};
    if (cfg.model.contains("parameters")) normalized["parameters"] = cfg.model.at("parameters");
    cfg.model = normalized;

    cfg.seed = count_or(doc, "seed", 0, "");
    const std::optional<std::uint64_t> replicas =
        doc.contains("replicas") ? std::optional(as_count(doc.at("replicas"), "replicas")) : std::nullopt;
    cfg.replicas = replicas.value_or(1);
    cfg.h = number_or(doc, "h", cfg.h, "");
    require_positive(cfg.h, "h");
    cfg.burn_in = number_or(doc, "burn_in", -1.0, "");
    if (doc.contains("R")) cfg.R = as_number(doc.at("R"), "R");
    if (doc.contains("delta")) {
        cfg.delta = as_number(doc.at("delta"), "delta");
        require_positive(*cfg.delta, "delta");
    }
    cfg.initial = parse_initial(doc.value("initial", json::object()), model.dim());
    if (doc.contains("horizons")) cfg.horizons = number_list(doc.at("horizons"), "horizons");

    if (uses_ensemble(cfg.kind)) {
        if (!replicas) throw ConfigError("replicas: required for kind " + kind_name(cfg.kind));
        if (cfg.replicas == 0) throw ConfigError("replicas: must be at least 1");
        if (cfg.kind != ExperimentKind::Lil) {
            if (cfg.horizons.empty()) throw ConfigError("horizons: at least one horizon is required");
            for (std::size_t i = 0; i < cfg.horizons.size(); ++i) {
                require_positive(cfg.horizons[i], "horizons[" + std::to_string(i) + "]");
            }
            if (!std::is_sorted(cfg.horizons.begin(), cfg.horizons.end()) ||
                std::adjacent_find(cfg.horizons.begin(), cfg.horizons.end()) != cfg.horizons.end()) {
                throw ConfigError("horizons: must be strictly increasing");
            }
        }
        if (cfg.initial.kind == InitialLaw::Kind::Stationary && !model.has_stationary()) {
            throw ConfigError("initial.kind: model '" + model.family() +
                              "' has no invariant law; use a dirac or gaussian start");
        }
    }

    // Parse every section present, then keep only the one the kind uses, with defaults filled.
    json parsed = json::object();
    const int dim = model.dim();
    auto section = [&](const char* name) { return doc.value(name, json::object()); };
    if (doc.contains("estimate") || cfg.kind == ExperimentKind::Estimate)
        parsed["estimate"] = EstimateSection::parse(section("estimate")).to_json();
    if (doc.contains("clt") || cfg.kind == ExperimentKind::Clt)
        parsed["clt"] = CltSection::parse(section("clt"), dim).to_json();
    if (doc.contains("mdp") || cfg.kind == ExperimentKind::Mdp)
        parsed["mdp"] = MdpSection::parse(section("mdp")).to_json();
    if (doc.contains("lil") || cfg.kind == ExperimentKind::Lil)
        parsed["lil"] = LilSection::parse(section("lil")).to_json();
    if (doc.contains("harnack") || cfg.kind == ExperimentKind::VerifyHarnack)
        parsed["harnack"] = HarnackSection::parse(section("harnack"), dim, replicas).to_json();
    if (doc.contains("ibp") || cfg.kind == ExperimentKind::VerifyIbp)
        parsed["ibp"] = IbpSection::parse(section("ibp"), dim, replicas).to_json();
    if (doc.contains("coupling") || cfg.kind == ExperimentKind::VerifyCoupling)
        parsed["coupling"] = CouplingSection::parse(section("coupling"), dim, replicas).to_json();
    if (doc.contains("martingale") || cfg.kind == ExperimentKind::VerifyMartingale)
        parsed["martingale"] = MartingaleSection::parse(section("martingale"), replicas).to_json();
    if (doc.contains("moments") || cfg.kind == ExperimentKind::VerifyMoments)
        parsed["moments"] = MomentsSection::parse(section("moments"), dim, replicas).to_json();
    cfg.sections = sections_for(cfg.kind, parsed);

    // Module preconditions that depend on several fields.
    if (cfg.kind == ExperimentKind::Clt || cfg.kind == ExperimentKind::Mdp ||
        cfg.kind == ExperimentKind::Lil) {
        if (!cfg.R && !model.closed_forms().epr) {
            throw ConfigError("R: no closed form for model '" + model.family() + "'; set R");
        }
    }
    if (cfg.kind == ExperimentKind::Clt && cfg.replicas < 200) {
        throw ConfigError("replicas: the KS test needs at least 200 replicas");
    }
    if (cfg.kind == ExperimentKind::Lil && !cfg.delta && !model.closed_forms().delta) {
        throw ConfigError("delta: no closed form for model '" + model.family() + "'; set delta");
    }
    if ((cfg.kind == ExperimentKind::VerifyHarnack || cfg.kind == ExperimentKind::VerifyCoupling) &&
        !model.constant_diffusion()) {
        throw ConfigError("model: " + kind_name(cfg.kind) + " needs a constant diffusion matrix");
    }
    if (cfg.kind == ExperimentKind::VerifyMartingale && !model.has_stationary()) {
        throw ConfigError("model: verify-martingale needs a model with an invariant law");
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::from_toml_string(const std::string& text) {
    return from_json(toml_to_json(text));
}

ExperimentConfig ExperimentConfig::from_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("config: cannot read " + path.string());
    std::ostringstream buf;
    buf << f.rdbuf();
    if (path.extension() == ".json") {
        json doc;
        try {
            doc = json::parse(buf.str());
        } catch (const json::parse_error& e) {
            throw ConfigError("config: invalid JSON in " + path.string() + ": " + e.what());
        }
        if (doc.contains("config")) doc = doc.at("config");
        return from_json(doc);
    }
    return from_toml_string(buf.str());
}

json ExperimentConfig::to_json() const {
    json j = {{"kind", kind_name(kind)},
              {"seed", seed},
              {"replicas", replicas},
              {"h", h},
              {"horizons", horizons},
              {"burn_in", burn_in},
              {"model", model},
              {"initial", initial.to_json()}};
    if (R) j["R"] = *R;
    if (delta) j["delta"] = *delta;
    for (const auto& [name, sec] : sections.items()) j[name] = sec;
    return j;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const fs::path& out) {
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec || !fs::is_directory(out)) throw Error("cannot create output directory " + out.string());
    ArtifactWriter files(out);

    const ModelSpec model = build_model(cfg.model);
    json manifest = {{"version", EPRLAB_VERSION},
                     {"config", cfg.to_json()},
                     {"model", model.manifest()},
                     {"stream_rule",
                      "replica i draws from Philox4x32-10 keyed by (seed, stream_id = i); "
                      "single-path estimators use stream_id = replicas"}};
    files.json_file("manifest.json", manifest);

    const auto start = std::chrono::steady_clock::now();
    auto write_timing = [&](const std::string& status) {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        files.json_file("run_timing.json", {{"wall_clock_seconds", secs},
                                            {"workers", cfg.workers},
                                            {"hardware_concurrency", std::thread::hardware_concurrency()},
                                            {"status", status}});
    };

    Outcome res;
    try {
        switch (cfg.kind) {
            case ExperimentKind::Simulate: res = run_simulate(cfg, model); break;
            case ExperimentKind::Estimate: res = run_estimate(cfg, model); break;
            case ExperimentKind::Clt: res = run_clt(cfg, model, files); break;
            case ExperimentKind::Mdp: res = run_mdp(cfg, model, files); break;
            case ExperimentKind::Lil: res = run_lil(cfg, model, files); break;
            case ExperimentKind::VerifyHarnack: res = run_harnack(cfg, model); break;
            case ExperimentKind::VerifyIbp: res = run_ibp(cfg, model); break;
            case ExperimentKind::VerifyCoupling: res = run_coupling(cfg, model); break;
            case ExperimentKind::VerifyMartingale: res = run_martingale(cfg, model); break;
            case ExperimentKind::VerifyMoments: res = run_moments(cfg, model); break;
        }
    } catch (const std::exception& e) {
        json err = {{"kind", kind_name(cfg.kind)}, {"error", e.what()}};
        if (const auto* ne = dynamic_cast<const NumericError*>(&e)) {
            err["type"] = "numeric";
            err["step"] = ne->step();
            err["last_finite_state"] = to_std(ne->last_finite_state());
        } else if (dynamic_cast<const ConfigError*>(&e)) {
            err["type"] = "config";
        } else {
            err["type"] = "execution";
        }
        files.json_file("error.json", err);
        write_timing("error");
        throw;
    }

    if (res.ensemble) {
        manifest["burn_in"] = res.ensemble->burn_in;
        manifest["R"] = res.ensemble->R;
        manifest["realized_horizons"] = res.ensemble->horizons;
        manifest["replicas"] = replica_table(*res.ensemble, cfg.seed);
    }
    if (!res.extra_replicas.is_null()) manifest["single_path_replicas"] = res.extra_replicas;
    files.json_file("manifest.json", manifest);
    if (!res.samples.empty()) files.text("samples.csv", res.samples);

    ExperimentResult result;
    result.exit_code = res.pass ? kExitPass : kExitStatisticalFailure;
    result.report = {{"kind", kind_name(cfg.kind)},
                     {"pass", res.pass},
                     {"exit_code", result.exit_code},
                     {"results", res.report}};
    files.json_file("report.json", result.report);
    write_timing("ok");
    result.artifacts = files.written();
    return result;
}

}  // namespace eprlab
