#include "dampc/common.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>

namespace dampc {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Unbounded: return "Unbounded";
        case ErrorKind::Infeasible: return "Infeasible";
        case ErrorKind::NumericalFailure: return "NumericalFailure";
        case ErrorKind::DimensionTooLarge: return "DimensionTooLarge";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::SchemaError: return "SchemaError";
        case ErrorKind::IndefiniteCostMatrix: return "IndefiniteCostMatrix";
        case ErrorKind::InvalidChain: return "InvalidChain";
        case ErrorKind::DisturbanceOutsideW: return "DisturbanceOutsideW";
        case ErrorKind::UnboundedSupport: return "UnboundedSupport";
        case ErrorKind::UnstructuredRow: return "UnstructuredRow";
        case ErrorKind::EmptyIntersection: return "EmptyIntersection";
        case ErrorKind::MissingAxisBound: return "MissingAxisBound";
        case ErrorKind::ProjectionInfeasible: return "ProjectionInfeasible";
        case ErrorKind::DesignMismatch: return "DesignMismatch";
        case ErrorKind::EmptyParamSet: return "EmptyParamSet";
        case ErrorKind::LocalInfeasible: return "LocalInfeasible";
        case ErrorKind::NoConvergence: return "NoConvergence";
        case ErrorKind::InfeasibleAtStep: return "InfeasibleAtStep";
        case ErrorKind::IdentificationFault: return "IdentificationFault";
    }
    return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

void write_file_atomic(const std::string& path, const std::string& contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << contents;
        out.flush();
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    fs::rename(tmp, target);
}

LogLevel log_threshold() {
    static const LogLevel level = [] {
        const char* env = std::getenv("DAMPC_LOG");
        const std::string v = env ? env : "";
        if (v == "error") return LogLevel::Error;
        if (v == "info") return LogLevel::Info;
        if (v == "debug") return LogLevel::Debug;
        return LogLevel::Warn;
    }();
    return level;
}

void log(LogLevel level, const std::string& message) {
    if (level > log_threshold()) return;
    static std::mutex mu;
    static const char* names[] = {"error", "warn", "info", "debug"};
    std::lock_guard<std::mutex> lock(mu);
    std::cerr << "[" << names[static_cast<int>(level)] << "] " << message << '\n';
}

}  // namespace dampc
