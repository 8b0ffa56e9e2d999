#pragma once

#include <stdexcept>
#include <string>

namespace awml {

// Error taxonomy shared by every module. Callers that only care about
// "something went wrong" can catch awml::Error.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Two objects that must share a parameter layout do not.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Input data is malformed (non-finite values, bad shapes at a boundary).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A documented precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

// A configuration value is out of its admissible range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class GeometryError : public Error {
 public:
  using Error::Error;
};

// Statistical analysis cannot be carried out on the supplied population.
class AnalysisError : public Error {
 public:
  using Error::Error;
};

}  // namespace awml
