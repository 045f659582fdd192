#pragma once

#include <stdexcept>
#include <string>

namespace graspkit {

// Root of every error the library throws. Subclasses name the failure class
// so callers (and the CLI exit-code mapping) can dispatch on type.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation.
class domain_error : public error {
 public:
  using error::error;
};

// Invalid user configuration (shapes, hyperparameters, layer tables).
class config_error : public error {
 public:
  using error::error;
};

// Malformed file contents.
class format_error : public error {
 public:
  using error::error;
};

class io_error : public error {
 public:
  using error::error;
};

// NaN/Inf encountered, divergence.
class numeric_error : public error {
 public:
  using error::error;
};

// Operation invoked on an object that is not ready for it.
class state_error : public error {
 public:
  using error::error;
};

// Frozen weights changed during training.
class integrity_error : public error {
 public:
  using error::error;
};

// Plan or execution would violate a table/transit constraint.
class safety_error : public error {
 public:
  using error::error;
};

class degenerate_observations_error : public error {
 public:
  degenerate_observations_error(const std::string& what, int rank)
      : error(what), rank_(rank) {}
  int rank() const noexcept { return rank_; }

 private:
  int rank_;
};

// Mapped quaternion collapsed to (near) zero norm.
class mapping_degenerate_error : public error {
 public:
  using error::error;
};

class unreachable_pose_error : public error {
 public:
  unreachable_pose_error(const std::string& what, double position_residual,
                         double orientation_residual)
      : error(what),
        position_residual_(position_residual),
        orientation_residual_(orientation_residual) {}
  double position_residual() const noexcept { return position_residual_; }
  double orientation_residual() const noexcept { return orientation_residual_; }

 private:
  double position_residual_;
  double orientation_residual_;
};

}  // namespace graspkit
