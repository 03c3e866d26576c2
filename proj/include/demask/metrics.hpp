#pragma once

#include <limits>
#include <ostream>
#include <string>

#include <Eigen/Core>

#include "demask/image.hpp"

namespace demask {

/// Returned by psnr() for identical images.
inline constexpr double kPsnrInfinity = std::numeric_limits<double>::infinity();

double mean_absolute_error(const Image& a, const Image& b);
double mean_squared_error(const Image& a, const Image& b);

/// 10 log10(peak^2 / MSE); kPsnrInfinity when MSE is zero.
double psnr(const Image& a, const Image& b, double peak = 1.0);

/// Single-scale SSIM on the channel-mean grayscale, 11x11 Gaussian window (sigma 1.5),
/// valid windows only, C1 = (0.01 peak)^2, C2 = (0.03 peak)^2.
double ssim(const Image& a, const Image& b, double peak = 1.0);

/// Cosine of the angle between two feature vectors.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct FidResult {
  double value = 0.0;
  /// Largest magnitude of a negative eigenvalue clipped to zero inside the matrix square root.
  double clipped = 0.0;
};

/// Frechet distance between Gaussians fitted to the rows of `a` and `b` (covariance with 1/(N-1)):
/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2}). The trace of the square root is taken as
/// sum sqrt(eig(S_a^{1/2} S_b S_a^{1/2})), with negative eigenvalues clipped at 0.
FidResult frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);
double fid(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

struct MetricValue {
  double value = 0.0;
  std::size_t count = 0;
};

struct MetricsReport {
  MetricValue l1;
  MetricValue psnr;
  MetricValue ssim;
  MetricValue cos_id;
  MetricValue fid;
  std::size_t failures = 0;
  std::string extractor;  // feature extractor behind cos_id and fid
  double fid_clipped = 0.0;

  /// key=value lines.
  std::string to_key_values() const;
  /// Header line plus one data row.
  std::string to_csv() const;
  /// "L1 | PSNR | SSIM | Cos ID | FID" style row.
  std::string table_row(const std::string& method) const;
};

}  // namespace demask
