#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <string>

namespace eprlab {

/*
 * Both sides of an inequality (lhs <= rhs) or an identity (lhs == rhs) with
 * Monte Carlo standard errors. The pass rule allows 3 combined standard errors.
 */
struct VerificationReport {
    enum class Mode { Inequality, Identity };

    double lhs = 0.0;
    double rhs = 0.0;
    double lhs_se = 0.0;
    double rhs_se = 0.0;
    /// rhs - lhs for inequalities, |lhs - rhs| for identities.
    double margin = 0.0;
    bool pass = false;
    std::size_t n = 0;
    Mode mode = Mode::Identity;
    nlohmann::json details = nlohmann::json::object();

    double combined_se() const;

    static VerificationReport inequality(double lhs, double lhs_se, double rhs, double rhs_se,
                                         std::size_t n);
    static VerificationReport identity(double lhs, double lhs_se, double rhs, double rhs_se,
                                       std::size_t n);
};

nlohmann::json to_json(const VerificationReport& r);

}  // namespace eprlab
