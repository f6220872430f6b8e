#pragma once

#include <stdexcept>
#include <string>

namespace deconv {

/// Base class for all library errors.  `name()` is a stable machine-readable
/// identifier (used verbatim by the CLI error records); `what()` carries a
/// human-readable detail message.
class Error : public std::runtime_error {
public:
    Error(std::string name, const std::string& detail)
        : std::runtime_error(detail), name_(std::move(name)) {}

    const std::string& name() const noexcept { return name_; }

private:
    std::string name_;
};

#define DECONV_DEFINE_ERROR(NAME)                                            \
    class NAME : public Error {                                              \
    public:                                                                  \
        explicit NAME(const std::string& detail) : Error(#NAME, detail) {}   \
    }

DECONV_DEFINE_ERROR(InvalidDistribution);      // bad support/weights
DECONV_DEFINE_ERROR(InvalidSample);            // empty or non-finite data
DECONV_DEFINE_ERROR(InvalidKernel);            // nonpositive rate/scale
DECONV_DEFINE_ERROR(InvalidFunctional);        // bad parameter or tabulation
DECONV_DEFINE_ERROR(InvalidArgument);          // generic precondition failure
DECONV_DEFINE_ERROR(ZeroDensityAtObservation); // log-likelihood of impossible data
DECONV_DEFINE_ERROR(ZeroMixtureDensity);       // conditional expectation undefined
DECONV_DEFINE_ERROR(InstanceTooLarge);         // brute-force solver guard
DECONV_DEFINE_ERROR(NotDifferentiable);        // non-regular functional
DECONV_DEFINE_ERROR(InsufficientData);         // n too small for the statistic
DECONV_DEFINE_ERROR(DegenerateDerivative);     // delta method with g'(psi) = 0
DECONV_DEFINE_ERROR(DomainExceeded);           // tabulated functional out of range
DECONV_DEFINE_ERROR(WindowTooNarrow);          // quadrature window misses kernel mass
DECONV_DEFINE_ERROR(NotAbsolutelyContinuous);  // zero density where positivity needed
DECONV_DEFINE_ERROR(NotACdf);                  // CDF grid function malformed
DECONV_DEFINE_ERROR(IllConditioned);           // SVD cutoff removed every mode
DECONV_DEFINE_ERROR(InsufficientPoints);       // regression needs >= 3 points
DECONV_DEFINE_ERROR(NonpositiveVariance);      // efficiency ratio undefined
DECONV_DEFINE_ERROR(NotIntegrable);            // tail control impossible
DECONV_DEFINE_ERROR(TooManyFailures);          // replication failure rate > 5%
DECONV_DEFINE_ERROR(IoError);                  // file read/write problems
DECONV_DEFINE_ERROR(ParseError);               // malformed CSV/JSON inputs

#undef DECONV_DEFINE_ERROR

} // namespace deconv
