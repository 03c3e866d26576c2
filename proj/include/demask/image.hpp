#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace demask {

/// Interleaved row-major float image, values nominally in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f);

  bool empty() const noexcept { return data.empty(); }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  bool same_shape(const Image& other) const noexcept {
    return width == other.width && height == other.height && channels == other.channels;
  }

  float& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

/// Single-channel {0,1} map stored as floats so it composes with Image math.
Image binarize(const Image& map, float threshold = 0.5f);

/// Fraction of pixels > 0.5 in a single-channel map.
double set_fraction(const Image& map);

/// Loads PNG/JPEG etc. as float RGB (or RGBA when keep_alpha and present).
Image load_image(const std::filesystem::path& path, bool keep_alpha = false);
void save_image(const std::filesystem::path& path, const Image& image);

std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(std::span<const std::uint8_t> bytes, bool keep_alpha = false);

}  // namespace demask
