#pragma once

#include <stdexcept>
#include <string>

namespace sqreg {

struct InvalidParameter : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Requested polynomial degree, moment order or tensor size is beyond the supported range.
struct UnsupportedOrder : std::domain_error {
    using std::domain_error::domain_error;
};

/// Problem size beyond what an exhaustive procedure supports.
struct UnsupportedSize : std::domain_error {
    using std::domain_error::domain_error;
};

struct SingularityError : std::domain_error {
    using std::domain_error::domain_error;
};

/// Monte-Carlo standard error too large for the tolerance being resolved.
struct InsufficientPrecision : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Too few Monte-Carlo pairs for the requested top-quantile event.
struct InsufficientPairs : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct UsageError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {
inline void require(bool ok, const std::string& what) {
    if (!ok) throw InvalidParameter(what);
}
}  // namespace detail

}  // namespace sqreg
