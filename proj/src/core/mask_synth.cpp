#include "demask/mask_synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include <Eigen/Dense>

#include "demask/errors.hpp"
#include "demask/random.hpp"

namespace demask {

const Anchor* MaskTemplate::find_anchor(const std::string& label) const {
  const auto it = std::find_if(anchors.begin(), anchors.end(), [&](const Anchor& a) { return a.label == label; });
  return it == anchors.end() ? nullptr : &*it;
}

void MaskTemplate::validate() const {
  if (rgba.channels != 4) {
    throw FormatError("template " + name + " must be RGBA");
  }
  if (anchors.size() < 3) {
    throw FormatError("template " + name + " needs at least 3 anchors");
  }
  for (std::size_t i = 3; i < rgba.data.size(); i += 4) {
    if (rgba.data[i] != 0.0f && rgba.data[i] != 1.0f) {
      throw FormatError("template " + name + " alpha is not binary");
    }
  }
  for (const Anchor& a : anchors) {
    if (a.x < 0.0 || a.y < 0.0 || a.x > rgba.width - 1 || a.y > rgba.height - 1) {
      throw FormatError("anchor " + a.label + " of template " + name + " lies outside the image");
    }
  }
}

float luminance(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

MaskTemplate retexture(const MaskTemplate& tmpl, const TexturePatch& patch, std::uint64_t seed) {
  if (patch.rgb.empty() || patch.rgb.channels < 3) {
    throw ContractError("texture patch " + patch.name + " is empty");
  }
  Rng rng(derive_seed(seed, 0x7E47));
  std::uniform_int_distribution<int> ox(0, patch.rgb.width - 1);
  std::uniform_int_distribution<int> oy(0, patch.rgb.height - 1);
  const int offset_x = ox(rng);
  const int offset_y = oy(rng);

  MaskTemplate out = tmpl;
  for (int y = 0; y < tmpl.rgba.height; ++y) {
    for (int x = 0; x < tmpl.rgba.width; ++x) {
      if (tmpl.rgba.at(x, y, 3) < 0.5f) {
        continue;
      }
      const float lum = luminance(tmpl.rgba.at(x, y, 0), tmpl.rgba.at(x, y, 1), tmpl.rgba.at(x, y, 2));
      const int px = (x + offset_x) % patch.rgb.width;
      const int py = (y + offset_y) % patch.rgb.height;
      for (int c = 0; c < 3; ++c) {
        out.rgba.at(x, y, c) = patch.rgb.at(px, py, c) * lum;
      }
    }
  }
  return out;
}

Eigen::Matrix<double, 2, 3> fit_affine(const std::vector<Eigen::Vector2d>& src,
                                       const std::vector<Eigen::Vector2d>& dst) {
  if (src.size() != dst.size()) {
    throw WarpError("anchor correspondence counts differ");
  }
  if (src.size() < 3) {
    throw WarpError("affine warp needs at least 3 anchor correspondences, got " + std::to_string(src.size()));
  }
  const auto n = static_cast<Eigen::Index>(src.size());
  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (const auto& p : src) {
    centroid += p;
  }
  centroid /= static_cast<double>(n);
  Eigen::MatrixXd centered(2, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    centered.col(i) = src[static_cast<std::size_t>(i)] - centroid;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  const auto sv = svd.singularValues();
  if (sv[0] <= 0.0 || sv[1] <= 1e-6 * sv[0]) {
    throw WarpError("template anchors are collinear or coincident");
  }

  Eigen::MatrixXd design(n, 3);
  Eigen::MatrixXd rhs(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = src[static_cast<std::size_t>(i)];
    const auto& d = dst[static_cast<std::size_t>(i)];
    design.row(i) << s.x(), s.y(), 1.0;
    rhs.row(i) << d.x(), d.y();
  }
  const Eigen::MatrixXd solution = design.colPivHouseholderQr().solve(rhs);  // 3 x 2
  const Eigen::Matrix<double, 2, 3> affine = solution.transpose();
  if (std::abs(affine.leftCols<2>().determinant()) < 1e-9) {
    throw WarpError("face anchors are degenerate (singular affine map)");
  }
  return affine;
}

namespace {

double snap(double v) {
  const double r = std::round(v);
  return std::abs(v - r) < 1e-9 ? r : v;
}

float fetch(const Image& img, int x, int y, int c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) {
    return 0.0f;
  }
  return img.at(x, y, c);
}

}  // namespace

Image warp_template(const MaskTemplate& tmpl, const std::vector<Anchor>& face_anchors, int width, int height) {
  std::vector<Eigen::Vector2d> src;
  std::vector<Eigen::Vector2d> dst;
  for (const Anchor& fa : face_anchors) {
    if (const Anchor* ta = tmpl.find_anchor(fa.label)) {
      src.emplace_back(ta->x, ta->y);
      dst.emplace_back(fa.x, fa.y);
    }
  }
  const Eigen::Matrix<double, 2, 3> affine = fit_affine(src, dst);
  const Eigen::Matrix2d inv = affine.leftCols<2>().inverse();
  const Eigen::Vector2d shift = affine.col(2);

  Image out(width, height, 4, 0.0f);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const Eigen::Vector2d t = inv * (Eigen::Vector2d(x, y) - shift);
      const double tx = snap(t.x());
      const double ty = snap(t.y());
      const int x0 = static_cast<int>(std::floor(tx));
      const int y0 = static_cast<int>(std::floor(ty));
      const double fx = tx - x0;
      const double fy = ty - y0;
      for (int c = 0; c < 4; ++c) {
        const double v = (1.0 - fx) * (1.0 - fy) * fetch(tmpl.rgba, x0, y0, c) +
                         fx * (1.0 - fy) * fetch(tmpl.rgba, x0 + 1, y0, c) +
                         (1.0 - fx) * fy * fetch(tmpl.rgba, x0, y0 + 1, c) + fx * fy * fetch(tmpl.rgba, x0 + 1, y0 + 1, c);
        out.at(x, y, c) = static_cast<float>(v);
      }
      out.at(x, y, 3) = out.at(x, y, 3) >= 0.5f ? 1.0f : 0.0f;
    }
  }
  return out;
}

Composite composite(const Image& face, const Image& warped_rgba) {
  if (face.width != warped_rgba.width || face.height != warped_rgba.height) {
    throw DimensionError("face and warped template sizes differ");
  }
  if (face.channels != 3 || warped_rgba.channels != 4) {
    throw DimensionError("composite expects an RGB face and an RGBA template");
  }
  Composite out{face, Image(face.width, face.height, 1, 0.0f)};
  for (int y = 0; y < face.height; ++y) {
    for (int x = 0; x < face.width; ++x) {
      if (warped_rgba.at(x, y, 3) < 0.5f) {
        continue;
      }
      out.mask.at(x, y, 0) = 1.0f;
      for (int c = 0; c < 3; ++c) {
        out.masked.at(x, y, c) = warped_rgba.at(x, y, c);
      }
    }
  }
  return out;
}

Image noise_fill(const Image& masked, const Image& mask, std::uint64_t seed) {
  if (masked.width != mask.width || masked.height != mask.height || mask.channels != 1) {
    throw DimensionError("noise_fill: image and mask shapes differ");
  }
  Rng rng(derive_seed(seed, 0x401CE));
  std::uniform_real_distribution<float> uniform(0.0f, 1.0f);
  Image out = masked;
  for (std::size_t p = 0; p < mask.data.size(); ++p) {
    const bool on = mask.data[p] > 0.5f;
    for (int c = 0; c < masked.channels; ++c) {
      const float z = uniform(rng);
      if (on) {
        out.data[p * masked.channels + c] = z;
      }
    }
  }
  return out;
}

TrainingPair make_pair(const MorphableBasis& basis, const Camera& cam, const std::vector<MaskTemplate>& templates,
                       const std::vector<TexturePatch>& patches, std::uint64_t seed, const SynthOptions& options) {
  if (templates.empty() || patches.empty()) {
    throw ContractError("make_pair needs at least one template and one texture patch");
  }
  const CoeffLayout layout = basis.layout();
  std::string last_failure = "no attempt made";
  for (int attempt = 0; attempt <= options.max_retries; ++attempt) {
    const std::uint64_t s = derive_seed(seed, static_cast<std::uint64_t>(attempt));
    Rng rng(derive_seed(s, 2));
    const CoeffVector coeffs = sample_coeffs(layout, derive_seed(s, 1), options.scales);
    try {
      const RenderedFace face = render_face(basis, coeffs, cam);
      const PointMatrix landmarks = project_landmarks(basis, coeffs, cam);

      std::uniform_int_distribution<std::size_t> pick_t(0, templates.size() - 1);
      std::uniform_int_distribution<std::size_t> pick_p(0, patches.size() - 1);
      const MaskTemplate& tmpl = templates[pick_t(rng)];
      const TexturePatch& patch = patches[pick_p(rng)];
      const std::uint64_t tex_seed = rng();

      std::uniform_real_distribution<double> jitter(-options.anchor_jitter, options.anchor_jitter);
      std::vector<Anchor> face_anchors;
      for (const auto& [label, landmark] : options.binding.landmark_for_label) {
        const double jx = jitter(rng);
        const double jy = jitter(rng);
        face_anchors.push_back({label, landmarks(landmark, 0) + jx, landmarks(landmark, 1) + jy});
      }
      const MaskTemplate textured = retexture(tmpl, patch, tex_seed);
      const Image warped = warp_template(textured, face_anchors, cam.width, cam.height);
      Composite comp = composite(face.image, warped);
      const double fraction = set_fraction(comp.mask);
      if (fraction <= 0.0 || fraction > options.max_mask_fraction) {
        last_failure = "mask covers " + std::to_string(fraction) + " of the image";
        continue;
      }
      return TrainingPair{face.image, std::move(comp.masked), std::move(comp.mask), face.coverage_map(), coeffs,
                          landmarks, tmpl.name, patch.name};
    } catch (const ProjectionError& e) {
      last_failure = e.what();
    } catch (const WarpError& e) {
      last_failure = e.what();
    }
  }
  throw std::runtime_error("make_pair(seed=" + std::to_string(seed) + ") failed after " +
                           std::to_string(options.max_retries + 1) + " attempts: " + last_failure);
}

namespace {

// Template canvas. Anchor positions follow the toy face's mean landmarks mapped
// by x_t = 48 + 60 x, y_t = 16 + 60 (y + 0.18).
constexpr int kTemplateW = 96;
constexpr int kTemplateH = 84;

struct SilhouetteStyle {
  double top;       // top edge row at the centre
  double arch;      // how much the top edge drops towards the sides
  double bottom;    // bottom row
  double top_hw;    // half width at the top
  double mid_hw;    // widest half width
  double power;     // bottom roundness (lower = pointier)
  double pleat;     // fold amplitude
  Eigen::Vector3d colour;
};

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

MaskTemplate draw_template(const std::string& name, const SilhouetteStyle& s) {
  MaskTemplate t;
  t.name = name;
  t.rgba = Image(kTemplateW, kTemplateH, 4, 0.0f);
  const double cx = 48.0;
  for (int y = 0; y < kTemplateH; ++y) {
    for (int x = 0; x < kTemplateW; ++x) {
      const double dx = x - cx;
      const double top_edge = s.top + s.arch * (dx / s.mid_hw) * (dx / s.mid_hw);
      if (y < top_edge || y > s.bottom) {
        continue;
      }
      const double u = (y - s.top) / (s.bottom - s.top);
      double hw = s.top_hw + (s.mid_hw - s.top_hw) * smoothstep(u / 0.45);
      if (u > 0.55) {
        const double v = std::clamp((u - 0.55) / 0.45, 0.0, 1.0);
        hw *= std::pow(1.0 - std::pow(v, s.power), 1.0 / s.power);
      }
      if (std::abs(dx) > hw) {
        continue;
      }
      const double fold = 1.0 - s.pleat * (0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * (y - s.top) / 9.0));
      const double rim = std::min({std::abs(hw - std::abs(dx)), y - top_edge, s.bottom - y});
      const double shade = fold * (rim < 2.0 ? 0.85 : 1.0);
      for (int c = 0; c < 3; ++c) {
        t.rgba.at(x, y, c) = static_cast<float>(std::clamp(s.colour[c] * shade, 0.0, 1.0));
      }
      t.rgba.at(x, y, 3) = 1.0f;
    }
  }
  t.anchors = {{"nose_bridge", 48.0, 16.0}, {"left_jaw", 9.2, 39.6}, {"right_jaw", 86.8, 39.6}, {"chin", 48.0, 70.0}};
  return t;
}

}  // namespace

namespace {

// Snap to the 8-bit grid so assets survive a PNG round trip bit-exactly.
void quantize8(Image& image) {
  for (float& v : image.data) v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
}

// Zero-padded index prefix: directory listings sort back into creation order.
std::string indexed_name(int i, const char* kind) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%03d_%s", i, kind);
  return buf;
}

}  // namespace

std::vector<MaskTemplate> procedural_templates(int count, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x7E3));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::array<Eigen::Vector3d, 6> palette = {Eigen::Vector3d(0.55, 0.75, 0.92), Eigen::Vector3d(0.95, 0.95, 0.95),
                                                  Eigen::Vector3d(0.12, 0.12, 0.14), Eigen::Vector3d(0.6, 0.62, 0.66),
                                                  Eigen::Vector3d(0.85, 0.55, 0.65), Eigen::Vector3d(0.3, 0.45, 0.35)};
  std::vector<MaskTemplate> out;
  for (int i = 0; i < count; ++i) {
    SilhouetteStyle s{};
    const int kind = i % 3;  // 0 surgical, 1 cup, 2 beak
    s.top = 9.0 + 5.0 * u(rng);
    s.arch = 4.0 + 6.0 * u(rng);
    s.bottom = 72.0 + 8.0 * u(rng);
    s.mid_hw = 40.0 + 7.0 * u(rng);
    s.top_hw = kind == 1 ? 14.0 + 6.0 * u(rng) : 24.0 + 8.0 * u(rng);
    s.power = kind == 0 ? 2.5 + 1.5 * u(rng) : (kind == 1 ? 1.8 + 0.4 * u(rng) : 1.1 + 0.3 * u(rng));
    s.pleat = kind == 0 ? 0.1 + 0.1 * u(rng) : 0.04 * u(rng);
    s.colour = palette[static_cast<std::size_t>(u(rng) * palette.size()) % palette.size()];
    static constexpr std::array<const char*, 3> kinds = {"surgical", "cup", "beak"};
    out.push_back(draw_template(indexed_name(i, kinds[static_cast<std::size_t>(kind)]), s));
    quantize8(out.back().rgba);
  }
  return out;
}

std::vector<TexturePatch> procedural_patches(int count, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x9A7));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  constexpr int kSize = 32;
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<TexturePatch> out;
  for (int i = 0; i < count; ++i) {
    const Eigen::Vector3d a(u(rng), u(rng), u(rng));
    const Eigen::Vector3d b(u(rng), u(rng), u(rng));
    const int kind = i % 4;  // stripes, checker, dots, waves
    const int period = std::array{4, 8, 16}[static_cast<std::size_t>(u(rng) * 3) % 3];
    const int fx = 1 + static_cast<int>(u(rng) * 3);
    const int fy = 1 + static_cast<int>(u(rng) * 3);
    TexturePatch p;
    static constexpr std::array<const char*, 4> kinds = {"stripes", "checker", "dots", "waves"};
    p.name = indexed_name(i, kinds[static_cast<std::size_t>(kind)]);
    p.rgb = Image(kSize, kSize, 3);
    for (int y = 0; y < kSize; ++y) {
      for (int x = 0; x < kSize; ++x) {
        double w = 0.0;
        switch (kind) {
          case 0:
            w = ((x + y) / (period / 2)) % 2;
            break;
          case 1:
            w = ((x / period) + (y / period)) % 2;
            break;
          case 2: {
            const double dx = (x % period) - period / 2.0;
            const double dy = (y % period) - period / 2.0;
            w = (dx * dx + dy * dy) < period * period / 10.0 ? 1.0 : 0.0;
            break;
          }
          default:
            w = 0.5 + 0.25 * std::sin(two_pi * fx * x / kSize) + 0.25 * std::cos(two_pi * fy * y / kSize);
        }
        for (int c = 0; c < 3; ++c) {
          p.rgb.at(x, y, c) = static_cast<float>(a[c] * (1.0 - w) + b[c] * w);
        }
      }
    }
    quantize8(p.rgb);
    out.push_back(std::move(p));
  }
  return out;
}

void save_templates(const std::filesystem::path& dir, const std::vector<MaskTemplate>& templates) {
  std::filesystem::create_directories(dir);
  for (const MaskTemplate& t : templates) {
    save_image(dir / (t.name + ".png"), t.rgba);
    std::ofstream os(dir / (t.name + ".anchors.txt"));
    os.precision(17);
    for (const Anchor& a : t.anchors) {
      os << a.label << ' ' << a.x << ' ' << a.y << '\n';
    }
  }
}

namespace {

std::vector<std::filesystem::path> sorted_pngs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw FormatError("not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace

std::vector<MaskTemplate> load_templates(const std::filesystem::path& dir) {
  std::vector<MaskTemplate> out;
  for (const auto& png : sorted_pngs(dir)) {
    MaskTemplate t;
    t.name = png.stem().string();
    t.rgba = load_image(png, true);
    if (t.rgba.channels != 4) {
      throw FormatError("template " + png.string() + " has no alpha channel");
    }
    for (std::size_t i = 3; i < t.rgba.data.size(); i += 4) {
      t.rgba.data[i] = t.rgba.data[i] >= 0.5f ? 1.0f : 0.0f;
    }
    const auto anchor_path = dir / (t.name + ".anchors.txt");
    std::ifstream is(anchor_path);
    if (!is) {
      throw FormatError("missing anchors file " + anchor_path.string());
    }
    std::string line;
    while (std::getline(is, line)) {
      std::istringstream ls(line);
      Anchor a;
      if (ls >> a.label >> a.x >> a.y) {
        t.anchors.push_back(a);
      }
    }
    t.validate();
    out.push_back(std::move(t));
  }
  if (out.empty()) {
    throw FormatError("no templates found in " + dir.string());
  }
  return out;
}

void save_patches(const std::filesystem::path& dir, const std::vector<TexturePatch>& patches) {
  std::filesystem::create_directories(dir);
  for (const TexturePatch& p : patches) {
    save_image(dir / (p.name + ".png"), p.rgb);
  }
}

std::vector<TexturePatch> load_patches(const std::filesystem::path& dir) {
  std::vector<TexturePatch> out;
  for (const auto& png : sorted_pngs(dir)) {
    out.push_back({png.stem().string(), load_image(png, false)});
  }
  if (out.empty()) {
    throw FormatError("no texture patches found in " + dir.string());
  }
  return out;
}

}  // namespace demask
