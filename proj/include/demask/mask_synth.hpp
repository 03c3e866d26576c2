#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "demask/image.hpp"
#include "demask/morphable_model.hpp"

namespace demask {

struct Anchor {
  std::string label;
  double x = 0.0;
  double y = 0.0;
};

/// RGBA template; alpha holds the silhouette.
struct MaskTemplate {
  std::string name;
  Image rgba;
  std::vector<Anchor> anchors;

  const Anchor* find_anchor(const std::string& label) const;
  /// Binarizes alpha and checks anchors lie inside the image.
  void validate() const;
};

/// Tileable RGB patch.
struct TexturePatch {
  std::string name;
  Image rgb;
};

struct TrainingPair {
  Image clean;        // I
  Image masked;       // I_m
  Image mask;         // m, single channel {0,1}
  Image face_region;  // M, rasterizer coverage of the clean render
  CoeffVector coeffs;
  PointMatrix landmarks;  // 68 x 2
  std::string template_name;
  std::string patch_name;
};

/// Which landmark each template anchor label is pinned to.
struct AnchorBinding {
  std::map<std::string, int> landmark_for_label = {
      {"nose_bridge", 28}, {"left_jaw", 2}, {"right_jaw", 14}, {"chin", 8}};
};

struct SynthOptions {
  AnchorBinding binding;
  SamplingScales scales;
  double anchor_jitter = 1.5;    // pixels, uniform per anchor
  double max_mask_fraction = 0.9;
  int max_retries = 8;
};

/// Luminance used to carry the template's shading folds onto a new texture.
float luminance(float r, float g, float b);

/// Replaces the rgb inside alpha=1 with the tiled patch (random tile offset per seed),
/// multiplied by the template's own luminance. Alpha is untouched.
MaskTemplate retexture(const MaskTemplate& tmpl, const TexturePatch& patch, std::uint64_t seed);

/// Least-squares 2x3 affine A with A * [x y 1]^T ~= dst for each correspondence.
/// Throws WarpError for fewer than 3 points or (near-)collinear sources.
Eigen::Matrix<double, 2, 3> fit_affine(const std::vector<Eigen::Vector2d>& src,
                                       const std::vector<Eigen::Vector2d>& dst);

/// Warps the template into a width x height canvas so that its anchors land on
/// `face_anchors` (matched by label). Bilinear sampling at integer pixel coordinates;
/// alpha re-binarized at 0.5.
Image warp_template(const MaskTemplate& tmpl, const std::vector<Anchor>& face_anchors, int width, int height);

struct Composite {
  Image masked;
  Image mask;
};

/// masked = warped.rgb where alpha = 1, else face; mask = alpha.
Composite composite(const Image& face, const Image& warped_rgba);

/// masked * (1 - m) + U[0,1) * m, one uniform draw per pixel and channel whether masked or not.
Image noise_fill(const Image& masked, const Image& mask, std::uint64_t seed);

/// Full synthesis of one training pair; deterministic per seed.
TrainingPair make_pair(const MorphableBasis& basis, const Camera& cam, const std::vector<MaskTemplate>& templates,
                       const std::vector<TexturePatch>& patches, std::uint64_t seed, const SynthOptions& options = {});

/// Procedurally drawn surgical/cup/beak style masks with anchors in template coordinates.
std::vector<MaskTemplate> procedural_templates(int count = 20, std::uint64_t seed = 7);
std::vector<TexturePatch> procedural_patches(int count = 12, std::uint64_t seed = 11);

// Directory formats: templates are <name>.png (RGBA) + <name>.anchors.txt ("label x y"
// per line); patches are plain RGB PNGs.
void save_templates(const std::filesystem::path& dir, const std::vector<MaskTemplate>& templates);
std::vector<MaskTemplate> load_templates(const std::filesystem::path& dir);
void save_patches(const std::filesystem::path& dir, const std::vector<TexturePatch>& patches);
std::vector<TexturePatch> load_patches(const std::filesystem::path& dir);

}  // namespace demask
