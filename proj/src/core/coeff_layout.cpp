#include "demask/coeff_layout.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include "demask/errors.hpp"

namespace demask {

std::string_view group_name(CoeffGroup group) {
  switch (group) {
    case CoeffGroup::Shape:
      return "shape";
    case CoeffGroup::Expression:
      return "expression";
    case CoeffGroup::Texture:
      return "texture";
    case CoeffGroup::Illumination:
      return "illumination";
    case CoeffGroup::Rotation:
      return "rotation";
    case CoeffGroup::Translation:
      return "translation";
  }
  return "?";
}

std::optional<CoeffGroup> group_from_name(std::string_view name) {
  for (CoeffGroup g : kCoeffGroups) {
    if (group_name(g) == name) {
      return g;
    }
  }
  return std::nullopt;
}

int CoeffLayout::dim(CoeffGroup group) const {
  switch (group) {
    case CoeffGroup::Shape:
      return shape;
    case CoeffGroup::Expression:
      return expression;
    case CoeffGroup::Texture:
      return texture;
    case CoeffGroup::Illumination:
      return illumination;
    case CoeffGroup::Rotation:
      return rotation;
    case CoeffGroup::Translation:
      return translation;
  }
  return 0;
}

int CoeffLayout::offset(CoeffGroup group) const {
  int off = 0;
  for (CoeffGroup g : kCoeffGroups) {
    if (g == group) {
      return off;
    }
    off += dim(g);
  }
  return off;
}

int CoeffLayout::total() const { return shape + expression + texture + illumination + rotation + translation; }

void CoeffLayout::validate() const {
  if (shape < 0 || expression < 0 || texture < 0) {
    throw DimensionError("negative coefficient group size in layout " + to_string(*this));
  }
  if (illumination != kIlluminationDim || rotation != 3 || translation != 3) {
    throw DimensionError("layout " + to_string(*this) +
                         " must have illumination=27, rotation=3, translation=3");
  }
}

std::string to_string(const CoeffLayout& layout) {
  std::ostringstream os;
  os << layout.shape << '/' << layout.expression << '/' << layout.texture << '/' << layout.illumination
     << '/' << layout.rotation << '/' << layout.translation;
  return os.str();
}

CoeffVector::CoeffVector(const CoeffLayout& layout) : layout_(layout) {
  layout_.validate();
  values_ = Eigen::VectorXd::Zero(layout_.total());
}

CoeffVector::CoeffVector(const CoeffLayout& layout, Eigen::VectorXd values)
    : layout_(layout), values_(std::move(values)) {
  layout_.validate();
  if (values_.size() != layout_.total()) {
    throw DimensionError("coefficient vector has " + std::to_string(values_.size()) +
                         " entries, layout " + to_string(layout_) + " needs " +
                         std::to_string(layout_.total()));
  }
  if (!values_.allFinite()) {
    throw ContractError("coefficient vector contains non-finite entries");
  }
}

void CoeffVector::set(int i, double value) {
  if (i < 0 || i >= size()) {
    throw DimensionError("coefficient index " + std::to_string(i) + " out of range [0, " +
                         std::to_string(size()) + ")");
  }
  if (!std::isfinite(value)) {
    throw ContractError("non-finite coefficient value");
  }
  values_[i] = value;
}

void CoeffVector::check_index(CoeffGroup g, int index) const {
  if (index < 0 || index >= layout_.dim(g)) {
    throw DimensionError(std::string(group_name(g)) + " index " + std::to_string(index) +
                         " out of range [0, " + std::to_string(layout_.dim(g)) + ")");
  }
}

double CoeffVector::get(CoeffGroup g, int index) const {
  check_index(g, index);
  return values_[layout_.offset(g) + index];
}

void CoeffVector::set(CoeffGroup g, int index, double value) {
  check_index(g, index);
  set(layout_.offset(g) + index, value);
}

std::string coeffs_to_text(const CoeffVector& c) {
  std::string out;
  char buf[64];
  for (CoeffGroup g : kCoeffGroups) {
    for (int i = 0; i < c.layout().dim(g); ++i) {
      std::snprintf(buf, sizeof(buf), " %d %.17g\n", i, c.get(g, i));
      out += std::string(group_name(g)) + buf;
    }
  }
  return out;
}

CoeffVector coeffs_from_text(const std::string& text, const CoeffLayout& layout) {
  CoeffVector c(layout);
  std::vector<bool> seen(static_cast<std::size_t>(layout.total()), false);
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    std::istringstream ls(line);
    std::string name;
    int index = -1;
    double value = 0.0;
    std::string rest;
    if (!(ls >> name >> index >> value) || (ls >> rest)) {
      throw FormatError("coefficient line " + std::to_string(line_no) + " is not 'group index value': " + line);
    }
    const auto g = group_from_name(name);
    if (!g || index < 0 || index >= layout.dim(*g)) {
      throw FormatError("coefficient line " + std::to_string(line_no) + " names no entry of layout " +
                        to_string(layout) + ": " + line);
    }
    c.set(*g, index, value);
    seen[static_cast<std::size_t>(layout.offset(*g) + index)] = true;
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (!seen[i]) {
      throw FormatError("coefficient entry " + std::to_string(i) + " is missing");
    }
  }
  return c;
}

}  // namespace demask
