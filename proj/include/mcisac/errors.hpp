#pragma once

#include <stdexcept>
#include <string>

namespace mcisac {

/// Configuration / validation failure. `field` names the offending key
/// ("system.frame_len" style) so callers can report it precisely.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string field, const std::string& what)
        : std::runtime_error(field.empty() ? what : field + ": " + what),
          field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A conic solve failed (infeasible, unbounded, or no convergence) in a
/// context where a solution was required.
class SolverError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// An internal invariant was violated; indicates a bug, not bad input.
class InvariantError : public std::logic_error {
    using std::logic_error::logic_error;
};

} // namespace mcisac
