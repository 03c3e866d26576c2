#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace demask {

enum class CoeffGroup { Shape, Expression, Texture, Illumination, Rotation, Translation };

inline constexpr std::array<CoeffGroup, 6> kCoeffGroups = {
    CoeffGroup::Shape,        CoeffGroup::Expression, CoeffGroup::Texture,
    CoeffGroup::Illumination, CoeffGroup::Rotation,   CoeffGroup::Translation};

/// Spherical-harmonics bands per colour channel.
inline constexpr int kShBands = 9;
inline constexpr int kIlluminationDim = 3 * kShBands;

std::string_view group_name(CoeffGroup group);
std::optional<CoeffGroup> group_from_name(std::string_view name);

/// Sizes of the coefficient groups, packed contiguously in declaration order:
/// shape | expression | texture | illumination | rotation | translation.
struct CoeffLayout {
  int shape = 8;
  int expression = 6;
  int texture = 8;
  int illumination = kIlluminationDim;
  int rotation = 3;
  int translation = 3;

  /// 8/6/8/27/3/3, matching the bundled toy basis.
  static CoeffLayout toy() { return {}; }
  /// 80/64/80/27/3/3 (257 entries).
  static CoeffLayout full() { return {80, 64, 80, kIlluminationDim, 3, 3}; }

  int dim(CoeffGroup group) const;
  int offset(CoeffGroup group) const;
  int total() const;

  /// Throws DimensionError unless illumination is 27, pose groups are 3 and the rest non-negative.
  void validate() const;

  friend bool operator==(const CoeffLayout&, const CoeffLayout&) = default;
};

std::string to_string(const CoeffLayout& layout);

/// A coefficient vector bound to its layout. Entries are always finite.
class CoeffVector {
 public:
  explicit CoeffVector(const CoeffLayout& layout);
  CoeffVector(const CoeffLayout& layout, Eigen::VectorXd values);

  const CoeffLayout& layout() const noexcept { return layout_; }
  const Eigen::VectorXd& values() const noexcept { return values_; }
  int size() const noexcept { return static_cast<int>(values_.size()); }

  double operator[](int i) const { return values_[i]; }
  void set(int i, double value);

  Eigen::VectorXd group(CoeffGroup g) const { return values_.segment(layout_.offset(g), layout_.dim(g)); }
  double get(CoeffGroup g, int index) const;
  void set(CoeffGroup g, int index, double value);

  friend bool operator==(const CoeffVector& a, const CoeffVector& b) {
    return a.layout_ == b.layout_ && a.values_ == b.values_;
  }

 private:
  void check_index(CoeffGroup g, int index) const;

  CoeffLayout layout_;
  Eigen::VectorXd values_;
};

/// "group index value" per entry, values with 17 significant digits.
std::string coeffs_to_text(const CoeffVector& c);
/// Inverse of coeffs_to_text; throws FormatError on a malformed line or a missing entry.
CoeffVector coeffs_from_text(const std::string& text, const CoeffLayout& layout);

}  // namespace demask
