#pragma once

#include <cstdint>
#include <filesystem>

#include "demask/morphable_model.hpp"

namespace demask {

struct ToyModelOptions {
  int rows = 22;  // latitude samples
  int cols = 24;  // longitude samples
  int shape_dim = 8;
  int expression_dim = 6;
  int texture_dim = 8;
  std::uint64_t seed = 20211;
};

/// Procedural low-poly face: an ellipsoidal front shell with nose, eye-socket and
/// mouth relief, a painted albedo, and orthonormal smooth random bases. All
/// values are rounded to float so a generated basis equals its saved copy.
MorphableBasis make_toy_basis(const ToyModelOptions& options = {});

/// Landmark indices that carry weight 20 in the landmark loss (nose 27-35 and
/// inner mouth 60-67); everything else weighs 1.
std::array<double, kNumLandmarks> landmark_weights(double heavy = 20.0);

// Binary basis asset: "MFB1", u32 version, u32 V, T, d_shape, d_expr, d_tex, n_landmarks,
// then little-endian float32 arrays (mean_shape, shape_basis, expr_basis, mean_texture,
// texture_basis; all row-major) and int32 triangles, landmark indices.
void save_basis(const std::filesystem::path& path, const MorphableBasis& basis);
MorphableBasis load_basis(const std::filesystem::path& path);

/// One "x y" pair per line.
void save_landmark_table(const std::filesystem::path& path, const PointMatrix& landmarks);
PointMatrix load_landmark_table(const std::filesystem::path& path);

}  // namespace demask
