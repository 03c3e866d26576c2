#include "demask/morphable_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Geometry>

#include "demask/errors.hpp"
#include "demask/random.hpp"

namespace demask {

CoeffLayout MorphableBasis::layout() const {
  CoeffLayout layout;
  layout.shape = shape_dim();
  layout.expression = expression_dim();
  layout.texture = texture_dim();
  return layout;
}

void MorphableBasis::validate() const {
  const Eigen::Index rows = mean_shape.size();
  if (rows == 0 || rows % 3 != 0) {
    throw FormatError("mean shape must hold 3*V entries, got " + std::to_string(rows));
  }
  if (shape_basis.rows() != rows || expr_basis.rows() != rows || texture_basis.rows() != rows ||
      mean_texture.size() != rows) {
    throw DimensionError("basis row counts disagree with mean shape (3V = " + std::to_string(rows) + ")");
  }
  const int v = num_vertices();
  for (const Triangle& t : triangles) {
    for (int idx : t) {
      if (idx < 0 || idx >= v) {
        throw FormatError("triangle index " + std::to_string(idx) + " outside [0, " + std::to_string(v) + ")");
      }
    }
  }
  if (landmark_indices.size() != kNumLandmarks) {
    throw FormatError("expected 68 landmark indices, got " + std::to_string(landmark_indices.size()));
  }
  for (int idx : landmark_indices) {
    if (idx < 0 || idx >= v) {
      throw FormatError("landmark index " + std::to_string(idx) + " outside [0, " + std::to_string(v) + ")");
    }
  }
}

Camera Camera::canonical(int size) {
  Camera cam;
  cam.width = size;
  cam.height = size;
  cam.focal = 3.5 * size;
  cam.cx = 0.5 * size;
  cam.cy = 0.5 * size;
  cam.standoff = 10.0;
  return cam;
}

void Camera::validate() const {
  if (!(focal > 0.0)) {
    throw ContractError("camera focal length must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw ContractError("camera image size must be positive");
  }
  if (cx < 0.0 || cx > width || cy < 0.0 || cy > height) {
    throw ContractError("principal point must lie inside the image");
  }
}

Image RenderedFace::coverage_map() const {
  Image map(image.width, image.height, 1);
  for (std::size_t i = 0; i < coverage.size(); ++i) {
    map.data[i] = coverage[i] ? 1.0f : 0.0f;
  }
  return map;
}

std::size_t RenderedFace::covered_pixels() const {
  return static_cast<std::size_t>(std::count(coverage.begin(), coverage.end(), std::uint8_t{1}));
}

FaceMesh reconstruct_mesh(const MorphableBasis& basis, const CoeffVector& c) {
  const CoeffLayout& layout = c.layout();
  if (layout.shape != basis.shape_dim() || layout.expression != basis.expression_dim() ||
      layout.texture != basis.texture_dim()) {
    throw DimensionError("coefficient layout " + to_string(layout) + " does not match basis " +
                         to_string(basis.layout()));
  }
  const int v = basis.num_vertices();
  const Eigen::VectorXd shape = basis.mean_shape + basis.shape_basis * c.group(CoeffGroup::Shape) +
                                basis.expr_basis * c.group(CoeffGroup::Expression);
  const Eigen::VectorXd albedo =
      (basis.mean_texture + basis.texture_basis * c.group(CoeffGroup::Texture)).cwiseMax(0.0).cwiseMin(1.0);

  FaceMesh mesh;
  mesh.vertices = Eigen::Map<const VertexMatrix>(shape.data(), v, 3);
  mesh.colors = Eigen::Map<const VertexMatrix>(albedo.data(), v, 3);
  mesh.triangles = basis.triangles;
  return mesh;
}

Eigen::Matrix3d euler_xyz(double a, double b, double c) {
  return (Eigen::AngleAxisd(a, Eigen::Vector3d::UnitX()) * Eigen::AngleAxisd(b, Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(c, Eigen::Vector3d::UnitZ()))
      .toRotationMatrix();
}

ProjectedMesh pose_and_project(const VertexMatrix& vertices, const Eigen::Vector3d& rotation,
                               const Eigen::Vector3d& translation, const Camera& cam) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw ContractError("pose must be finite");
  }
  const Eigen::Matrix3d r = euler_xyz(rotation.x(), rotation.y(), rotation.z());
  const Eigen::RowVector3d offset(translation.x(), translation.y(), translation.z() + cam.standoff);

  ProjectedMesh out;
  out.camera_vertices = (vertices * r.transpose()).rowwise() + offset;
  const Eigen::Index n = vertices.rows();
  out.xy.resize(n, 2);
  out.depth.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double z = out.camera_vertices(i, 2);
    if (!(z > 0.0)) {
      throw ProjectionError(static_cast<int>(i), z);
    }
    out.xy(i, 0) = cam.focal * out.camera_vertices(i, 0) / z + cam.cx;
    out.xy(i, 1) = cam.focal * out.camera_vertices(i, 1) / z + cam.cy;
    out.depth[i] = z;
  }
  return out;
}

VertexMatrix vertex_normals(const VertexMatrix& vertices, std::span<const Triangle> triangles) {
  VertexMatrix normals = VertexMatrix::Zero(vertices.rows(), 3);
  for (const Triangle& t : triangles) {
    const Eigen::RowVector3d a = vertices.row(t[0]);
    const Eigen::RowVector3d e1 = vertices.row(t[1]) - a;
    const Eigen::RowVector3d e2 = vertices.row(t[2]) - a;
    const Eigen::RowVector3d n = e1.cross(e2);  // length = 2 * area
    for (int idx : t) {
      normals.row(idx) += n;
    }
  }
  for (Eigen::Index i = 0; i < normals.rows(); ++i) {
    const double len = normals.row(i).norm();
    if (len > 0.0) {
      normals.row(i) /= len;
    } else {
      normals.row(i) = Eigen::RowVector3d(0.0, 0.0, -1.0);
    }
  }
  return normals;
}

std::array<double, kShBands> sh_basis(const Eigen::Vector3d& n) {
  const double x = n.x();
  const double y = n.y();
  const double z = n.z();
  return {0.282094791773878,
          0.488602511902920 * y,
          0.488602511902920 * z,
          0.488602511902920 * x,
          1.092548430592079 * x * y,
          1.092548430592079 * y * z,
          0.315391565252520 * (3.0 * z * z - 1.0),
          1.092548430592079 * x * z,
          0.546274215296040 * (x * x - y * y)};
}

VertexMatrix sh_radiance(const VertexMatrix& normals, const VertexMatrix& albedo, std::span<const double> gamma) {
  if (gamma.size() != static_cast<std::size_t>(kIlluminationDim)) {
    throw DimensionError("illumination needs 27 coefficients, got " + std::to_string(gamma.size()));
  }
  if (normals.rows() != albedo.rows()) {
    throw DimensionError("normals and albedo vertex counts differ");
  }
  VertexMatrix out(normals.rows(), 3);
  for (Eigen::Index v = 0; v < normals.rows(); ++v) {
    const auto y = sh_basis(normals.row(v).transpose());
    for (int ch = 0; ch < 3; ++ch) {
      double irradiance = 0.0;
      for (int b = 0; b < kShBands; ++b) {
        irradiance += gamma[ch * kShBands + b] * y[b];
      }
      out(v, ch) = albedo(v, ch) * irradiance;
    }
  }
  return out;
}

VertexMatrix sh_shade(const VertexMatrix& normals, const VertexMatrix& albedo, std::span<const double> gamma) {
  for (Eigen::Index v = 0; v < normals.rows(); ++v) {
    const double len = normals.row(v).norm();
    if (!(std::abs(len - 1.0) <= 1e-6)) {
      throw ContractError("normal " + std::to_string(v) + " has length " + std::to_string(len));
    }
  }
  return sh_radiance(normals, albedo, gamma).cwiseMax(0.0).cwiseMin(1.0);
}

namespace {

inline double edge(double ax, double ay, double bx, double by, double px, double py) {
  return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
}

}  // namespace

RenderedFace rasterize(const PointMatrix& xy, const Eigen::VectorXd& depth, std::span<const Triangle> triangles,
                       const VertexMatrix& colors, const Camera& cam) {
  const int w = cam.width;
  const int h = cam.height;
  const std::size_t pixels = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);

  RenderedFace out;
  out.image = Image(w, h, 3, kBackground);
  out.coverage.assign(pixels, 0);
  out.depth.assign(pixels, std::numeric_limits<float>::infinity());
  out.triangle_id.assign(pixels, -1);
  if (!xy.allFinite()) {
    throw ContractError("projected vertices must be finite");
  }
  std::vector<double> zbuf(pixels, std::numeric_limits<double>::infinity());

  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const auto [i0, i1, i2] = triangles[t];
    const double x0 = xy(i0, 0), y0 = xy(i0, 1);
    const double x1 = xy(i1, 0), y1 = xy(i1, 1);
    const double x2 = xy(i2, 0), y2 = xy(i2, 1);
    const double area = edge(x0, y0, x1, y1, x2, y2);
    if (area == 0.0) {
      continue;
    }
    const int xmin = std::max(0, static_cast<int>(std::ceil(std::min({x0, x1, x2}) - 0.5)));
    const int xmax = std::min(w - 1, static_cast<int>(std::floor(std::max({x0, x1, x2}) - 0.5)));
    const int ymin = std::max(0, static_cast<int>(std::ceil(std::min({y0, y1, y2}) - 0.5)));
    const int ymax = std::min(h - 1, static_cast<int>(std::floor(std::max({y0, y1, y2}) - 0.5)));
    for (int py = ymin; py <= ymax; ++py) {
      const double sy = py + 0.5;
      for (int px = xmin; px <= xmax; ++px) {
        const double sx = px + 0.5;
        const double w0 = edge(x1, y1, x2, y2, sx, sy);
        const double w1 = edge(x2, y2, x0, y0, sx, sy);
        const double w2 = edge(x0, y0, x1, y1, sx, sy);
        const bool inside = (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0) || (w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0);
        if (!inside) {
          continue;
        }
        const double b0 = w0 / area;
        const double b1 = w1 / area;
        const double b2 = w2 / area;
        const double z = b0 * depth[i0] + b1 * depth[i1] + b2 * depth[i2];
        const std::size_t p = static_cast<std::size_t>(py) * w + px;
        if (!(z < zbuf[p])) {
          continue;
        }
        zbuf[p] = z;
        out.depth[p] = static_cast<float>(z);
        out.coverage[p] = 1;
        out.triangle_id[p] = static_cast<std::int32_t>(t);
        for (int ch = 0; ch < 3; ++ch) {
          out.image.data[p * 3 + ch] =
              static_cast<float>(b0 * colors(i0, ch) + b1 * colors(i1, ch) + b2 * colors(i2, ch));
        }
      }
    }
  }
  return out;
}

namespace {

Eigen::Vector3d pose_part(const CoeffVector& c, CoeffGroup g) {
  const Eigen::VectorXd v = c.group(g);
  return {v[0], v[1], v[2]};
}

}  // namespace

RenderedFace render_face(const MorphableBasis& basis, const CoeffVector& c, const Camera& cam) {
  const FaceMesh mesh = reconstruct_mesh(basis, c);
  const ProjectedMesh projected =
      pose_and_project(mesh.vertices, pose_part(c, CoeffGroup::Rotation), pose_part(c, CoeffGroup::Translation), cam);
  const VertexMatrix normals = vertex_normals(projected.camera_vertices, mesh.triangles);
  const Eigen::VectorXd gamma = c.group(CoeffGroup::Illumination);
  const VertexMatrix shaded =
      sh_shade(normals, mesh.colors, std::span<const double>(gamma.data(), static_cast<std::size_t>(gamma.size())));
  return rasterize(projected.xy, projected.depth, mesh.triangles, shaded, cam);
}

PointMatrix project_landmarks(const MorphableBasis& basis, const CoeffVector& c, const Camera& cam) {
  const FaceMesh mesh = reconstruct_mesh(basis, c);
  VertexMatrix picked(kNumLandmarks, 3);
  for (int i = 0; i < kNumLandmarks; ++i) {
    picked.row(i) = mesh.vertices.row(basis.landmark_indices[i]);
  }
  return pose_and_project(picked, pose_part(c, CoeffGroup::Rotation), pose_part(c, CoeffGroup::Translation), cam).xy;
}

double SamplingScales::sigma(CoeffGroup group, int index) const {
  switch (group) {
    case CoeffGroup::Shape:
      return shape;
    case CoeffGroup::Expression:
      return expression;
    case CoeffGroup::Texture:
      return texture;
    case CoeffGroup::Illumination: {
      const int band = index % kShBands;
      if (band == 0) {
        return illumination_dc;
      }
      return band <= 3 ? illumination_low : illumination_high;
    }
    case CoeffGroup::Rotation:
      return rotation;
    case CoeffGroup::Translation:
      return translation;
  }
  return 0.0;
}

double SamplingScales::mean(CoeffGroup group, int index) const {
  return (group == CoeffGroup::Illumination && index % kShBands == 0) ? band0_offset : 0.0;
}

CoeffVector sample_coeffs(const CoeffLayout& layout, std::uint64_t seed, const SamplingScales& scales) {
  CoeffVector c(layout);
  Rng rng(derive_seed(seed, 0xC0EFF));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (CoeffGroup g : kCoeffGroups) {
    for (int i = 0; i < layout.dim(g); ++i) {
      c.set(g, i, scales.mean(g, i) + scales.sigma(g, i) * normal(rng));
    }
  }
  return c;
}

}  // namespace demask
