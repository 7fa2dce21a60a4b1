#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace rbmdc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Raised for malformed user input: bad matrices, inconsistent configs,
/// unknown presets. The CLI maps it to exit status 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical procedure cannot produce a trustworthy result
/// (non-convergence, singular systems, NaN/divergence). CLI exit status 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

}  // namespace rbmdc
