#pragma once

#include <stdexcept>
#include <string>

namespace buckopt {

/// Invalid user-provided data: malformed model files, inconsistent indices,
/// out-of-range options.  The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A solver failed to produce a result: non-convergence, singular systems,
/// too many flagged samples.  The CLI maps this to exit code 1.
class SolveError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Geometry became degenerate during evaluation (element length ~ 0).
class SingularGeometryError : public SolveError {
public:
  using SolveError::SolveError;
};

} // namespace buckopt
