#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace dampc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Shared numerical tolerances. Every module reads from here.
namespace tol {
inline constexpr double feas = 1e-8;
inline constexpr double kkt = 1e-6;
inline constexpr double vertex = 1e-9;
inline constexpr double qp_regularization = 1e-9;
inline constexpr double report = 1e-6;
}  // namespace tol

enum class ErrorKind {
    Unbounded,
    Infeasible,
    NumericalFailure,
    DimensionTooLarge,
    DimensionMismatch,
    ParseError,
    SchemaError,
    IndefiniteCostMatrix,
    InvalidChain,
    DisturbanceOutsideW,
    UnboundedSupport,
    UnstructuredRow,
    EmptyIntersection,
    MissingAxisBound,
    ProjectionInfeasible,
    DesignMismatch,
    EmptyParamSet,
    LocalInfeasible,
    NoConvergence,
    InfeasibleAtStep,
    IdentificationFault,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what);
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::string& path, const std::string& contents);

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

// Threshold read once from DAMPC_LOG (error, warn, info, debug); warn by default.
LogLevel log_threshold();
void log(LogLevel level, const std::string& message);

inline double inf_norm(const Vec& v) { return v.size() == 0 ? 0.0 : v.lpNorm<Eigen::Infinity>(); }

}  // namespace dampc
