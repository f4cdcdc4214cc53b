#pragma once

#include <stdexcept>
#include <string>

namespace nodeonet {

/// Failure categories surfaced by the library. CLI maps Validation-like
/// codes to exit 2 and numerical failures to exit 3.
enum class Error {
    Shape,                ///< operand shapes incompatible
    NonScalarLoss,        ///< backward requested from a non-scalar node
    NonFinite,            ///< NaN/Inf produced by an array operation
    NotPositiveDefinite,  ///< Cholesky failed after the jitter ladder
    BadGrid,              ///< grid violates a solver/sampler precondition
    Diverged,             ///< time integration blew up
    OutOfDomain,          ///< sensor outside the field support
    MissingInput,         ///< NODE variant given too few encoded inputs
    TimeNotOnGrid,        ///< query time not on the Euler grid
    GridMismatch,         ///< dataset label grid does not match model grid
    DegenerateLabels,     ///< zero label RMS in a relative-error computation
    InsufficientLevels,   ///< consistency study needs >= 3 mesh levels
    Validation,           ///< config/file failed schema or compatibility checks
    Io                    ///< file missing, corrupt, or unwritable
};

inline const char* error_name(Error e) {
    switch (e) {
    case Error::Shape: return "Shape";
    case Error::NonScalarLoss: return "NonScalarLoss";
    case Error::NonFinite: return "NonFinite";
    case Error::NotPositiveDefinite: return "NotPositiveDefinite";
    case Error::BadGrid: return "BadGrid";
    case Error::Diverged: return "Diverged";
    case Error::OutOfDomain: return "OutOfDomain";
    case Error::MissingInput: return "MissingInput";
    case Error::TimeNotOnGrid: return "TimeNotOnGrid";
    case Error::GridMismatch: return "GridMismatch";
    case Error::DegenerateLabels: return "DegenerateLabels";
    case Error::InsufficientLevels: return "InsufficientLevels";
    case Error::Validation: return "Validation";
    case Error::Io: return "Io";
    }
    return "Unknown";
}

class NodeOnetError : public std::runtime_error {
public:
    NodeOnetError(Error code, const std::string& what)
        : std::runtime_error(std::string(error_name(code)) + ": " + what), code_(code) {}

    Error code() const noexcept { return code_; }

    /// True for errors caused by bad usage/inputs rather than numerics.
    bool is_usage() const noexcept {
        switch (code_) {
        case Error::Diverged:
        case Error::NotPositiveDefinite:
        case Error::NonFinite:
            return false;
        default:
            return true;
        }
    }

private:
    Error code_;
};

[[noreturn]] inline void raise(Error code, const std::string& what) {
    throw NodeOnetError(code, what);
}

inline void require(bool cond, Error code, const std::string& what) {
    if (!cond) raise(code, what);
}

}  // namespace nodeonet
