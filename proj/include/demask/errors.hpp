#pragma once

#include <stdexcept>
#include <string>

namespace demask {

/// Tensor, vector or image extents that do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller broke a documented precondition (non-unit normals, non-binary mask, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A posed vertex sits at or behind the camera plane.
class ProjectionError : public std::runtime_error {
 public:
  ProjectionError(int vertex, double depth)
      : std::runtime_error("vertex " + std::to_string(vertex) + " has camera depth " +
                           std::to_string(depth) + " (must be > 0)"),
        vertex_(vertex) {}
  int vertex() const noexcept { return vertex_; }

 private:
  int vertex_;
};

/// Degenerate anchor correspondences for the template warp.
class WarpError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A region-normalized quantity was asked for over an empty region.
class EmptyRegionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or mismatched on-disk asset, checkpoint or config.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A loss component evaluated to NaN or infinity.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace demask
