#pragma once

#include <stdexcept>
#include <string>

namespace nes {

/// Invalid parameters or inputs outside an operation's domain.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A state matrix that is not Hurwitz where asymptotic stability is required.
class StabilityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A closed-form expression hit a (near) zero denominator.
class SingularityError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Adaptive step size collapsed below round-off; carries the last accepted time.
class StiffnessError : public std::runtime_error {
public:
    StiffnessError(const std::string& what, double last_time)
        : std::runtime_error(what), last_time_(last_time) {}

    double last_time() const noexcept { return last_time_; }

private:
    double last_time_;
};

}  // namespace nes
