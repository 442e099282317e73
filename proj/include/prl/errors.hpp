#pragma once

#include <stdexcept>
#include <string>

namespace prl {

struct PrlError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// exact_policy_value / enumerate_law refuse models whose path count exceeds the budget
struct EnumerationTooLarge : PrlError {
    using PrlError::PrlError;
};

// a reduction scheme cannot be applied to the given trajectory/config
struct SchemeInapplicable : PrlError {
    using PrlError::PrlError;
};

// normal-equation matrix numerically singular even after jitter
struct SingularSystem : PrlError {
    using PrlError::PrlError;
};

// oracle bridge system has no solution within the residual gate
struct NoSolution : PrlError {
    using PrlError::PrlError;
};

// some P^{(t)}(A_t = a | W_t = w) is zero on the support
struct ZeroPropensity : PrlError {
    using PrlError::PrlError;
};

// experiment config failed validation; message names the field
struct ConfigError : PrlError {
    using PrlError::PrlError;
};

}  // namespace prl
