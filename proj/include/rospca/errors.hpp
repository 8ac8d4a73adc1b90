#pragma once

#include <stdexcept>
#include <string>

namespace rospca {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad files, wrong shapes, out-of-range parameters.
/// The CLI maps these to exit code 2.
class ValidationError : public Error
{
public:
  using Error::Error;
};

/// Inputs were well formed but the numerics failed (singular scatter,
/// non-convergence, rank deficiency). The CLI maps these to exit code 3.
class NumericalError : public Error
{
public:
  using Error::Error;
};

class DimensionMismatch : public ValidationError
{
public:
  using ValidationError::ValidationError;
};

class DomainError : public ValidationError
{
public:
  using ValidationError::ValidationError;
};

/// Sample too degenerate for the requested statistic (all values equal,
/// zero interquartile range, ...).
class DegenerateSample : public NumericalError
{
public:
  using NumericalError::NumericalError;
};

class SingularMatrix : public NumericalError
{
public:
  using NumericalError::NumericalError;
};

class RankError : public NumericalError
{
public:
  using NumericalError::NumericalError;
};

class NonConvergence : public NumericalError
{
public:
  using NumericalError::NumericalError;
};

class SizeLimit : public ValidationError
{
public:
  using ValidationError::ValidationError;
};

} // namespace rospca
