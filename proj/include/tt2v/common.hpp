#pragma once

#include <stdexcept>
#include <string>

namespace tt2v {

using Scalar = double;

// Error taxonomy shared by all modules. The CLI maps these onto exit codes:
// usage/config problems -> 2, data problems -> 3, training failures -> 4.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tt2v
