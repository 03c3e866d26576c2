#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "demask/coeff_layout.hpp"
#include "demask/image.hpp"

namespace demask {

inline constexpr int kNumLandmarks = 68;

using VertexMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using PointMatrix = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using Triangle = std::array<int, 3>;

/// Linear face model. Per-vertex attributes are flattened xyz-interleaved,
/// so basis row 3*v+k is coordinate k of vertex v.
///
/// Model coordinates: x right, y down, z away from the viewer; the face
/// looks towards -z.
struct MorphableBasis {
  Eigen::VectorXd mean_shape;     // 3V
  Eigen::MatrixXd shape_basis;    // 3V x d_shape
  Eigen::MatrixXd expr_basis;     // 3V x d_expr
  Eigen::VectorXd mean_texture;   // 3V, in [0,1]
  Eigen::MatrixXd texture_basis;  // 3V x d_tex
  std::vector<Triangle> triangles;
  std::vector<int> landmark_indices;  // 68 entries

  int num_vertices() const noexcept { return static_cast<int>(mean_shape.size() / 3); }
  int shape_dim() const noexcept { return static_cast<int>(shape_basis.cols()); }
  int expression_dim() const noexcept { return static_cast<int>(expr_basis.cols()); }
  int texture_dim() const noexcept { return static_cast<int>(texture_basis.cols()); }

  /// Layout whose shape/expression/texture sizes match this basis.
  CoeffLayout layout() const;

  /// Throws FormatError/DimensionError on any inconsistent count or index.
  void validate() const;
};

struct FaceMesh {
  VertexMatrix vertices;  // V x 3, model units
  VertexMatrix colors;    // V x 3, albedo in [0,1]
  std::vector<Triangle> triangles;
};

/// Pinhole camera looking down +z. `standoff` is added to every posed z so that a
/// model-space face at the origin sits in front of the camera (0 = no offset).
struct Camera {
  double focal = 224.0;
  double cx = 32.0;
  double cy = 32.0;
  int width = 64;
  int height = 64;
  double standoff = 0.0;

  /// Square image with the principal point at the centre and the toy face
  /// filling roughly three quarters of the frame.
  static Camera canonical(int size = 64);

  void validate() const;
};

struct ProjectedMesh {
  PointMatrix xy;           // V x 2, pixels
  Eigen::VectorXd depth;    // V, camera-space z
  VertexMatrix camera_vertices;
};

struct RenderedFace {
  Image image;                      // H x W x 3; 0 outside coverage
  std::vector<std::uint8_t> coverage;  // H x W, 1 where a triangle was written
  std::vector<float> depth;         // H x W, +inf outside coverage
  std::vector<std::int32_t> triangle_id;  // H x W, -1 outside coverage

  /// Coverage as a single-channel {0,1} image (the face-region map).
  Image coverage_map() const;
  std::size_t covered_pixels() const;
};

inline constexpr float kBackground = 0.0f;

FaceMesh reconstruct_mesh(const MorphableBasis& basis, const CoeffVector& c);

/// Rotation matrix for intrinsic X-Y-Z Euler angles (radians): R = Rx(a) * Ry(b) * Rz(c).
Eigen::Matrix3d euler_xyz(double a, double b, double c);

/// R*v + t (+ standoff on z), then (f*X/Z + cx, f*Y/Z + cy).
/// Throws ProjectionError for the first vertex with Z <= 0.
ProjectedMesh pose_and_project(const VertexMatrix& vertices, const Eigen::Vector3d& rotation,
                               const Eigen::Vector3d& translation, const Camera& cam);

/// Area-weighted unit vertex normals; isolated vertices get (0, 0, -1).
VertexMatrix vertex_normals(const VertexMatrix& vertices, std::span<const Triangle> triangles);

/// First nine real SH basis functions at unit direction n, in the order
/// Y00, Y1-1(y), Y10(z), Y11(x), Y2-2(xy), Y2-1(yz), Y20, Y21(xz), Y22.
std::array<double, kShBands> sh_basis(const Eigen::Vector3d& n);

/// albedo_ch * sum_b gamma[9*ch + b] * Y_b(n), without clamping.
VertexMatrix sh_radiance(const VertexMatrix& normals, const VertexMatrix& albedo,
                         std::span<const double> gamma);
/// sh_radiance clamped to [0,1]. Throws ContractError if any normal is off unit length by > 1e-6.
VertexMatrix sh_shade(const VertexMatrix& normals, const VertexMatrix& albedo, std::span<const double> gamma);

/// Z-buffered fill with barycentric colour interpolation. Pixel (x, y) samples
/// the point (x + 0.5, y + 0.5); points on a triangle edge count as inside.
RenderedFace rasterize(const PointMatrix& xy, const Eigen::VectorXd& depth,
                       std::span<const Triangle> triangles, const VertexMatrix& colors, const Camera& cam);

/// reconstruct -> pose -> normals -> SH shading -> rasterize.
RenderedFace render_face(const MorphableBasis& basis, const CoeffVector& c, const Camera& cam);

PointMatrix project_landmarks(const MorphableBasis& basis, const CoeffVector& c, const Camera& cam);

/// Per-group standard deviations used by sample_coeffs.
struct SamplingScales {
  double shape = 0.8;
  double expression = 1.0;
  double texture = 0.6;
  double illumination_low = 0.25;   // bands 1..3
  double illumination_high = 0.1;   // bands 4..8
  double illumination_dc = 0.25;    // spread of band 0 around its offset
  double band0_offset = 3.0;        // so that albedo * g0 * Y00 is about 0.85 * albedo
  double rotation = 0.12;           // radians
  double translation = 0.08;        // model units

  double sigma(CoeffGroup group, int index) const;
  double mean(CoeffGroup group, int index) const;
};

/// Independent Gaussian draw per entry, mean(group, i) + sigma(group, i) * N(0, 1).
CoeffVector sample_coeffs(const CoeffLayout& layout, std::uint64_t seed, const SamplingScales& scales = {});

}  // namespace demask
