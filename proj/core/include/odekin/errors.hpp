#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace odekin {

/// Shape mismatch in a tensor or tape operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid user-facing configuration (widths, scheme selection, CLI values).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A tensor picked up a NaN/Inf entry. Carries the flat index of the first
/// offending entry so callers can map it back to a batch column.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::size_t flat_index)
      : std::runtime_error(what), flat_index_(flat_index) {}
  std::size_t flat_index() const { return flat_index_; }

 private:
  std::size_t flat_index_;
};

/// Integration or rollout produced a non-finite state.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, long segment = -1, long pair_index = -1)
      : std::runtime_error(what), segment_(segment), pair_index_(pair_index) {}
  long segment() const { return segment_; }
  long pair_index() const { return pair_index_; }

 private:
  long segment_;
  long pair_index_;
};

/// A user-supplied callback returned a non-finite value.
class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace odekin
