#pragma once

#include <stdexcept>

namespace pvdisagg {

// Stage-specific failures. The CLI maps these onto distinct exit codes
// (ingest 2, fit 3, solve 4); everything else is a generic failure.
struct IngestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SolveError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace pvdisagg
