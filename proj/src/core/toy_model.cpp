#include "demask/toy_model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "demask/errors.hpp"
#include "demask/random.hpp"

namespace demask {
namespace {

double gauss2(double dx, double dy, double sx, double sy) {
  return std::exp(-0.5 * ((dx * dx) / (sx * sx) + (dy * dy) / (sy * sy)));
}

// Semantic 68-point layout in model (x, y), y down.
std::array<Eigen::Vector2d, kNumLandmarks> landmark_targets() {
  std::array<Eigen::Vector2d, kNumLandmarks> t{};
  const double pi = std::numbers::pi;
  for (int i = 0; i <= 16; ++i) {  // jaw, subject's right to left
    const double a = pi * i / 16.0;
    t[i] = {-0.70 * std::cos(a), -0.10 + 0.82 * std::sin(a)};
  }
  for (int i = 0; i < 5; ++i) {  // brows
    const double u = i / 4.0;
    const double arch = 0.05 * std::sin(pi * u);
    t[17 + i] = {-0.55 + 0.42 * u, -0.42 - arch};
    t[26 - i] = {0.55 - 0.42 * u, -0.42 - arch};
  }
  for (int i = 0; i < 4; ++i) {  // nose bridge
    t[27 + i] = {0.0, -0.30 + 0.12 * i};
  }
  for (int i = 0; i < 5; ++i) {  // nostrils
    t[31 + i] = {-0.14 + 0.07 * i, 0.14 + 0.03 * (1.0 - std::abs(i - 2) / 2.0)};
  }
  auto ellipse = [&](int first, int count, double cx, double cy, double rx, double ry, double phase) {
    for (int i = 0; i < count; ++i) {
      const double a = phase + 2.0 * pi * i / count;
      t[first + i] = {cx - rx * std::cos(a), cy - ry * std::sin(a)};
    }
  };
  ellipse(36, 6, -0.32, -0.25, 0.12, 0.05, 0.0);
  ellipse(42, 6, 0.32, -0.25, 0.12, 0.05, 0.0);
  ellipse(48, 12, 0.0, 0.42, 0.28, 0.11, 0.0);
  ellipse(60, 8, 0.0, 0.42, 0.17, 0.045, 0.0);
  return t;
}

// Appends `column` to `basis` after Gram-Schmidt against the existing columns.
void orthonormal_push(Eigen::MatrixXd& basis, int k, Eigen::VectorXd column) {
  for (int pass = 0; pass < 2; ++pass) {
    for (int j = 0; j < k; ++j) {
      column -= basis.col(j).dot(column) * basis.col(j);
    }
  }
  basis.col(k) = column / column.norm();
}

struct Bump {
  double cx, cy, sx, sy;
  Eigen::Vector3d dir;
};

Eigen::MatrixXd smooth_basis(const Eigen::MatrixXd& xy, int dim, Rng& rng, double y_lo, double y_hi,
                             int bumps_per_column, double width_lo, double width_hi, bool displacement) {
  const Eigen::Index v = xy.rows();
  Eigen::MatrixXd basis(3 * v, dim);
  std::uniform_real_distribution<double> ux(-0.7, 0.7);
  std::uniform_real_distribution<double> uy(y_lo, y_hi);
  std::uniform_real_distribution<double> uw(width_lo, width_hi);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < dim; ++k) {
    std::vector<Bump> bumps;
    for (int b = 0; b < bumps_per_column; ++b) {
      bumps.push_back({ux(rng), uy(rng), uw(rng), uw(rng), {normal(rng), normal(rng), normal(rng)}});
    }
    Eigen::VectorXd column(3 * v);
    for (Eigen::Index i = 0; i < v; ++i) {
      Eigen::Vector3d d = Eigen::Vector3d::Zero();
      for (const Bump& b : bumps) {
        d += gauss2(xy(i, 0) - b.cx, xy(i, 1) - b.cy, b.sx, b.sy) * b.dir;
        // mirrored twin keeps the field roughly symmetric; displacements flip x
        const Eigen::Vector3d twin = displacement ? Eigen::Vector3d(-b.dir.x(), b.dir.y(), b.dir.z()) : b.dir;
        d += gauss2(xy(i, 0) + b.cx, xy(i, 1) - b.cy, b.sx, b.sy) * twin;
      }
      column.segment<3>(3 * i) = d;
    }
    orthonormal_push(basis, k, std::move(column));
  }
  return basis;
}

template <typename Derived>
void round_to_float(Eigen::PlainObjectBase<Derived>& m) {
  m = m.template cast<float>().template cast<double>();
}

}  // namespace

MorphableBasis make_toy_basis(const ToyModelOptions& options) {
  if (options.rows < 3 || options.cols < 3) {
    throw ContractError("toy mesh grid needs at least 3x3 samples");
  }
  const int rows = options.rows;
  const int cols = options.cols;
  const int v = rows * cols;
  const double theta_max = 1.2;
  const double phi_max = 1.3;
  const double ax = 0.8, ay = 1.05, az = 0.7;

  MorphableBasis basis;
  basis.mean_shape.resize(3 * v);
  basis.mean_texture.resize(3 * v);
  Eigen::MatrixXd xy(v, 2);
  const Eigen::Vector3d skin(0.82, 0.62, 0.52);
  const Eigen::Vector3d lips(0.62, 0.26, 0.26);
  const Eigen::Vector3d eyes(0.18, 0.14, 0.14);
  const Eigen::Vector3d brows(0.30, 0.20, 0.16);

  for (int i = 0; i < rows; ++i) {
    const double theta = -theta_max + 2.0 * theta_max * i / (rows - 1);
    for (int j = 0; j < cols; ++j) {
      const double phi = -phi_max + 2.0 * phi_max * j / (cols - 1);
      double x = ax * std::sin(phi) * std::cos(theta);
      double y = ay * std::sin(theta);
      double z = -az * std::cos(phi) * std::cos(theta);
      z -= 0.28 * gauss2(x, y - 0.02, 0.09, 0.17);                         // nose
      z += 0.07 * (gauss2(x + 0.32, y + 0.25, 0.1, 0.07) + gauss2(x - 0.32, y + 0.25, 0.1, 0.07));  // sockets
      z += 0.04 * gauss2(x, y - 0.42, 0.2, 0.04);                          // mouth line
      z -= 0.05 * gauss2(x, y - 0.75, 0.18, 0.1);                          // chin
      const int idx = i * cols + j;
      basis.mean_shape.segment<3>(3 * idx) = Eigen::Vector3d(x, y, z);
      xy(idx, 0) = x;
      xy(idx, 1) = y;

      Eigen::Vector3d albedo = skin;
      const double lip_w = gauss2(x, y - 0.42, 0.2, 0.06);
      const double eye_w = gauss2(x + 0.32, y + 0.25, 0.09, 0.04) + gauss2(x - 0.32, y + 0.25, 0.09, 0.04);
      const double brow_w = gauss2(std::abs(x) - 0.34, y + 0.44, 0.16, 0.03);
      albedo = albedo * (1.0 - lip_w) + lips * lip_w;
      albedo = albedo * (1.0 - std::min(1.0, eye_w)) + eyes * std::min(1.0, eye_w);
      albedo = albedo * (1.0 - brow_w) + brows * brow_w;
      basis.mean_texture.segment<3>(3 * idx) = albedo.cwiseMax(0.0).cwiseMin(1.0);
    }
  }

  for (int i = 0; i + 1 < rows; ++i) {
    for (int j = 0; j + 1 < cols; ++j) {
      const int a = i * cols + j;
      const int b = a + 1;
      const int c = a + cols;
      const int d = c + 1;
      // wound so face normals point towards -z (the viewer)
      basis.triangles.push_back({a, c, b});
      basis.triangles.push_back({b, c, d});
    }
  }

  Rng rng(derive_seed(options.seed, 1));
  basis.shape_basis = smooth_basis(xy, options.shape_dim, rng, -0.9, 0.9, 3, 0.25, 0.55, true);
  basis.expr_basis = smooth_basis(xy, options.expression_dim, rng, -0.45, 0.7, 3, 0.12, 0.3, true);
  basis.texture_basis = smooth_basis(xy, options.texture_dim, rng, -0.9, 0.9, 3, 0.3, 0.7, false);

  const auto targets = landmark_targets();
  for (const Eigen::Vector2d& target : targets) {
    Eigen::Index best = 0;
    (xy.rowwise() - target.transpose()).rowwise().squaredNorm().minCoeff(&best);
    basis.landmark_indices.push_back(static_cast<int>(best));
  }

  round_to_float(basis.mean_shape);
  round_to_float(basis.mean_texture);
  round_to_float(basis.shape_basis);
  round_to_float(basis.expr_basis);
  round_to_float(basis.texture_basis);
  basis.validate();
  return basis;
}

std::array<double, kNumLandmarks> landmark_weights(double heavy) {
  std::array<double, kNumLandmarks> w{};
  w.fill(1.0);
  for (int i = 27; i <= 35; ++i) {
    w[i] = heavy;
  }
  for (int i = 60; i <= 67; ++i) {
    w[i] = heavy;
  }
  return w;
}

namespace {

constexpr char kMagic[4] = {'M', 'F', 'B', '1'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw FormatError("basis file truncated in header");
  }
  return v;
}

template <typename Derived>
void write_floats(std::ostream& os, const Eigen::DenseBase<Derived>& m) {
  // row-major order regardless of Eigen storage
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float f = static_cast<float>(m(r, c));
      os.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
  }
}

Eigen::MatrixXd read_floats(std::istream& is, Eigen::Index rows, Eigen::Index cols, const char* what) {
  std::vector<float> buf(static_cast<std::size_t>(rows * cols));
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
    throw FormatError(std::string("basis file truncated in ") + what);
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = buf[static_cast<std::size_t>(r * cols + c)];
    }
  }
  return m;
}

std::vector<std::int32_t> read_ints(std::istream& is, std::size_t n, const char* what) {
  std::vector<std::int32_t> buf(n);
  if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(std::int32_t)))) {
    throw FormatError(std::string("basis file truncated in ") + what);
  }
  return buf;
}

}  // namespace

void save_basis(const std::filesystem::path& path, const MorphableBasis& basis) {
  basis.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(basis.num_vertices()));
  write_u32(os, static_cast<std::uint32_t>(basis.triangles.size()));
  write_u32(os, static_cast<std::uint32_t>(basis.shape_dim()));
  write_u32(os, static_cast<std::uint32_t>(basis.expression_dim()));
  write_u32(os, static_cast<std::uint32_t>(basis.texture_dim()));
  write_u32(os, static_cast<std::uint32_t>(basis.landmark_indices.size()));
  write_floats(os, basis.mean_shape.transpose());
  write_floats(os, basis.shape_basis);
  write_floats(os, basis.expr_basis);
  write_floats(os, basis.mean_texture.transpose());
  write_floats(os, basis.texture_basis);
  for (const Triangle& t : basis.triangles) {
    for (int idx : t) {
      const auto v = static_cast<std::int32_t>(idx);
      os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  for (int idx : basis.landmark_indices) {
    const auto v = static_cast<std::int32_t>(idx);
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  if (!os) {
    throw FormatError("failed writing " + path.string());
  }
}

MorphableBasis load_basis(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw FormatError("cannot open basis file " + path.string());
  }
  char magic[4] = {};
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(path.string() + " is not an MFB1 basis file");
  }
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) {
    throw FormatError("unsupported basis version " + std::to_string(version));
  }
  const std::uint32_t v = read_u32(is);
  const std::uint32_t t = read_u32(is);
  const std::uint32_t ds = read_u32(is);
  const std::uint32_t de = read_u32(is);
  const std::uint32_t dt = read_u32(is);
  const std::uint32_t nl = read_u32(is);
  if (v == 0 || v > (1u << 24) || t > (1u << 26) || ds > 4096 || de > 4096 || dt > 4096 || nl != kNumLandmarks) {
    throw FormatError("implausible basis header counts in " + path.string());
  }
  const Eigen::Index rows = 3 * static_cast<Eigen::Index>(v);
  MorphableBasis basis;
  basis.mean_shape = read_floats(is, 1, rows, "mean_shape").transpose();
  basis.shape_basis = read_floats(is, rows, ds, "shape_basis");
  basis.expr_basis = read_floats(is, rows, de, "expr_basis");
  basis.mean_texture = read_floats(is, 1, rows, "mean_texture").transpose();
  basis.texture_basis = read_floats(is, rows, dt, "texture_basis");
  const auto tris = read_ints(is, 3 * static_cast<std::size_t>(t), "triangles");
  for (std::size_t i = 0; i < t; ++i) {
    basis.triangles.push_back({tris[3 * i], tris[3 * i + 1], tris[3 * i + 2]});
  }
  const auto lms = read_ints(is, nl, "landmarks");
  basis.landmark_indices.assign(lms.begin(), lms.end());
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after basis payload in " + path.string());
  }
  basis.validate();
  return basis;
}

void save_landmark_table(const std::filesystem::path& path, const PointMatrix& landmarks) {
  std::ofstream os(path);
  if (!os) {
    throw FormatError("cannot open " + path.string() + " for writing");
  }
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < landmarks.rows(); ++i) {
    os << landmarks(i, 0) << ' ' << landmarks(i, 1) << '\n';
  }
}

PointMatrix load_landmark_table(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) {
    throw FormatError("cannot open landmark table " + path.string());
  }
  std::vector<Eigen::Vector2d> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    std::istringstream ls(line);
    double x = 0.0, y = 0.0;
    if (!(ls >> x >> y)) {
      throw FormatError("bad landmark line: " + line);
    }
    rows.emplace_back(x, y);
  }
  PointMatrix out(static_cast<Eigen::Index>(rows.size()), 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return out;
}

}  // namespace demask
