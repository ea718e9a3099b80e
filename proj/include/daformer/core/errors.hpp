#pragma once

#include <stdexcept>
#include <string>

namespace daformer {

/// Invalid user-provided configuration (dataset spec, hyperparameters, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or map shapes that do not satisfy an operation's contract.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched model state, e.g. teacher/student key sets differ.
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ScheduleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised during optimization, e.g. on NaN gradients or a NaN loss.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed files: checkpoints, CSV inputs, dataset caches.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace daformer
