#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace volsmooth {

enum class ErrorCode {
    Domain,
    BelowIntrinsic,
    AboveBound,
    NoConvergence,
    Underdetermined,
    DegenerateParity,
    EmptySnapshot,
    Schema,
    Parse,
    Evaluation,
    NegativeVariance,
    Infeasible,
    DegenerateTheta,
    GenerationFailed,
    NoNeighbors,
    Shape,
    GraphMismatch,
    StaleTape,
    NonFiniteGradient,
    DegenerateSpread,
    EmptyInput,
    Config,
    Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::Domain: return "DomainError";
        case ErrorCode::BelowIntrinsic: return "BelowIntrinsic";
        case ErrorCode::AboveBound: return "AboveBound";
        case ErrorCode::NoConvergence: return "NoConvergence";
        case ErrorCode::Underdetermined: return "Underdetermined";
        case ErrorCode::DegenerateParity: return "DegenerateParity";
        case ErrorCode::EmptySnapshot: return "EmptySnapshot";
        case ErrorCode::Schema: return "SchemaError";
        case ErrorCode::Parse: return "ParseError";
        case ErrorCode::Evaluation: return "EvaluationError";
        case ErrorCode::NegativeVariance: return "NegativeVariance";
        case ErrorCode::Infeasible: return "Infeasible";
        case ErrorCode::DegenerateTheta: return "DegenerateTheta";
        case ErrorCode::GenerationFailed: return "GenerationFailed";
        case ErrorCode::NoNeighbors: return "NoNeighbors";
        case ErrorCode::Shape: return "ShapeError";
        case ErrorCode::GraphMismatch: return "GraphMismatch";
        case ErrorCode::StaleTape: return "StaleTape";
        case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
        case ErrorCode::DegenerateSpread: return "DegenerateSpread";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::Config: return "ConfigError";
        case ErrorCode::Io: return "IoError";
    }
    return "Error";
}

}  // namespace volsmooth
