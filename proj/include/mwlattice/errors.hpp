#pragma once

#include <stdexcept>
#include <string>

namespace mwl {

/// Invalid argument outside an operation's mathematical domain.
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// Index or physical value outside the supported range.
class RangeError : public std::out_of_range {
public:
  using std::out_of_range::out_of_range;
};

/// Two inputs that must agree (grids, dimensions) do not.
class ContractError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// A numerical procedure failed to converge or produce a result.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class SolverError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class IntegratorError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

class ExtractionError : public NumericalError {
public:
  using NumericalError::NumericalError;
};

} // namespace mwl
