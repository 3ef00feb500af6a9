#pragma once

#include <stdexcept>
#include <string>

namespace ccm {

struct CcmError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// graph construction / stepping
struct CycleError : CcmError { using CcmError::CcmError; };
struct ArityError : CcmError { using CcmError::CcmError; };
struct InterventionError : CcmError { using CcmError::CcmError; };
struct DomainError : CcmError { using CcmError::CcmError; };
struct ParamError : CcmError { using CcmError::CcmError; };

// modularization
struct NoPathError : CcmError { using CcmError::CcmError; };
struct BoundaryError : CcmError { using CcmError::CcmError; };
struct ChainError : CcmError { using CcmError::CcmError; };

// learning machinery
struct ShapeError : CcmError { using CcmError::CcmError; };
struct NumericsError : CcmError { using CcmError::CcmError; };
struct IncompatibleCheckpointError : CcmError { using CcmError::CcmError; };

// harness
struct ConfigError : CcmError { using CcmError::CcmError; };
struct MismatchError : CcmError { using CcmError::CcmError; };

}  // namespace ccm
