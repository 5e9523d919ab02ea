#pragma once

#include <stdexcept>
#include <string>

namespace ssflab {

/// Invalid construction parameters (ordering, exponents, empty supports).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Energy outside the region where the requested object is defined.
class UnsupportedEnergyError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// The Wronskian of the regular and Jost solutions is numerically zero.
class EigenvalueProximityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The discretization violates an exact continuum property beyond tolerance.
class DiscretizationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// 1 + rJT is numerically singular at the given coupling.
class ResonancePointError : public std::runtime_error {
public:
    ResonancePointError(const std::string& what, double coupling)
        : std::runtime_error(what), r(coupling) {}
    double r;
};

/// Branch tracking could not resolve an interval within the refinement budget.
class TrackingError : public std::runtime_error {
public:
    TrackingError(const std::string& what, double lo, double hi)
        : std::runtime_error(what), interval_lo(lo), interval_hi(hi) {}
    double interval_lo;
    double interval_hi;
};

/// Two independent computations of the same integer disagree.
class InconsistencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A near-singularity persists over an interval instead of an isolated point.
class DegenerateDetectionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ssflab
