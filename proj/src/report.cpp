#include "eprlab/report.hpp"

#include <cmath>

namespace eprlab {

double VerificationReport::combined_se() const { return std::hypot(lhs_se, rhs_se); }

VerificationReport VerificationReport::inequality(double lhs, double lhs_se, double rhs,
                                                  double rhs_se, std::size_t n) {
    VerificationReport r;
    r.mode = Mode::Inequality;
    r.lhs = lhs;
    r.rhs = rhs;
    r.lhs_se = lhs_se;
    r.rhs_se = rhs_se;
    r.n = n;
    r.margin = rhs - lhs;
    r.pass = std::isfinite(lhs) && std::isfinite(rhs) && lhs <= rhs + 3.0 * r.combined_se();
    return r;
}

VerificationReport VerificationReport::identity(double lhs, double lhs_se, double rhs,
                                                double rhs_se, std::size_t n) {
    VerificationReport r;
    r.mode = Mode::Identity;
    r.lhs = lhs;
    r.rhs = rhs;
    r.lhs_se = lhs_se;
    r.rhs_se = rhs_se;
    r.n = n;
    r.margin = std::abs(lhs - rhs);
    r.pass = std::isfinite(r.margin) && r.margin <= 3.0 * r.combined_se();
    return r;
}

nlohmann::json to_json(const VerificationReport& r) {
    return {{"mode", r.mode == VerificationReport::Mode::Inequality ? "inequality" : "identity"},
            {"lhs", r.lhs},
            {"rhs", r.rhs},
            {"lhs_se", r.lhs_se},
            {"rhs_se", r.rhs_se},
            {"margin", r.margin},
            {"pass", r.pass},
            {"n", r.n},
            {"details", r.details}};
}

}  // namespace eprlab
