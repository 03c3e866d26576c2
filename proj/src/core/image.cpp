#include "demask/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "demask/errors.hpp"

namespace demask {

Image::Image(int w, int h, int c, float fill)
    : width(w), height(h), channels(c),
      data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * c, fill) {
  if (w < 0 || h < 0 || c < 0) {
    throw DimensionError("negative image extent");
  }
}

Image binarize(const Image& map, float threshold) {
  Image out = map;
  for (float& v : out.data) {
    v = v >= threshold ? 1.0f : 0.0f;
  }
  return out;
}

double set_fraction(const Image& map) {
  if (map.empty()) {
    return 0.0;
  }
  const auto set = std::count_if(map.data.begin(), map.data.end(), [](float v) { return v > 0.5f; });
  return static_cast<double>(set) / static_cast<double>(map.data.size());
}

namespace {

cv::Mat to_mat(const Image& image) {
  if (image.channels != 1 && image.channels != 3 && image.channels != 4) {
    throw DimensionError("PNG export supports 1, 3 or 4 channels, got " +
                         std::to_string(image.channels));
  }
  cv::Mat mat(image.height, image.width, CV_8UC(image.channels));
  for (int y = 0; y < image.height; ++y) {
    auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        const float v = std::clamp(image.at(x, y, c), 0.0f, 1.0f);
        row[x * image.channels + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  if (image.channels == 3) {
    cv::cvtColor(mat, mat, cv::COLOR_RGB2BGR);
  } else if (image.channels == 4) {
    cv::cvtColor(mat, mat, cv::COLOR_RGBA2BGRA);
  }
  return mat;
}

Image from_mat(cv::Mat mat, bool keep_alpha) {
  if (mat.empty()) {
    throw FormatError("could not decode image");
  }
  if (mat.depth() != CV_8U) {
    mat.convertTo(mat, CV_8U, 1.0 / 257.0);
  }
  switch (mat.channels()) {
    case 1:
      cv::cvtColor(mat, mat, cv::COLOR_GRAY2RGB);
      break;
    case 3:
      cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
      break;
    case 4:
      cv::cvtColor(mat, mat, keep_alpha ? cv::COLOR_BGRA2RGBA : cv::COLOR_BGRA2RGB);
      break;
    default:
      throw FormatError("unsupported channel count " + std::to_string(mat.channels()));
  }
  Image out(mat.cols, mat.rows, mat.channels());
  for (int y = 0; y < mat.rows; ++y) {
    const auto* row = mat.ptr<std::uint8_t>(y);
    for (int x = 0; x < mat.cols * out.channels; ++x) {
      out.data[static_cast<std::size_t>(y) * mat.cols * out.channels + x] = row[x] / 255.0f;
    }
  }
  return out;
}

}  // namespace

Image load_image(const std::filesystem::path& path, bool keep_alpha) {
  if (!std::filesystem::exists(path)) {
    throw FormatError("image not found: " + path.string());
  }
  return from_mat(cv::imread(path.string(), cv::IMREAD_UNCHANGED), keep_alpha);
}

void save_image(const std::filesystem::path& path, const Image& image) {
  if (!cv::imwrite(path.string(), to_mat(image))) {
    throw FormatError("could not write image: " + path.string());
  }
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  std::vector<std::uint8_t> bytes;
  if (!cv::imencode(".png", to_mat(image), bytes)) {
    throw FormatError("PNG encoding failed");
  }
  return bytes;
}

Image decode_png(std::span<const std::uint8_t> bytes, bool keep_alpha) {
  const cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1, const_cast<std::uint8_t*>(bytes.data()));
  return from_mat(cv::imdecode(raw, cv::IMREAD_UNCHANGED), keep_alpha);
}

}  // namespace demask
