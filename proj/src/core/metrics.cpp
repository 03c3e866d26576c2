#include "demask/metrics.hpp"

#include <array>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <vector>

#include <Eigen/Eigenvalues>

#include "demask/errors.hpp"

namespace demask {
namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": image shapes differ");
  }
  if (a.empty()) {
    throw DimensionError(std::string(what) + ": empty image");
  }
}

std::vector<double> channel_mean(const Image& img) {
  std::vector<double> out(img.pixel_count());
  for (std::size_t p = 0; p < out.size(); ++p) {
    double s = 0.0;
    for (int c = 0; c < img.channels; ++c) {
      s += img.data[p * img.channels + c];
    }
    out[p] = s / img.channels;
  }
  return out;
}

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> g{};
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double d = i - kSsimWindow / 2;
    g[i] = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
    sum += g[i];
  }
  for (double& v : g) {
    v /= sum;
  }
  return g;
}

// Separable valid-mode Gaussian filter of a w x h field.
std::vector<double> filter_valid(const std::vector<double>& src, int w, int h) {
  static const auto g = gaussian_window();
  const int ow = w - kSsimWindow + 1;
  const int oh = h - kSsimWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) {
        s += g[k] * src[static_cast<std::size_t>(y) * w + x + k];
      }
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kSsimWindow; ++k) {
        s += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      }
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double mean_absolute_error(const Image& a, const Image& b) {
  require_same_shape(a, b, "l1");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    s += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
  }
  return s / static_cast<double>(a.data.size());
}

double mean_squared_error(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b, double peak) {
  const double mse = mean_squared_error(a, b);
  if (mse == 0.0) {
    return kPsnrInfinity;
  }
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Image& a, const Image& b, double peak) {
  require_same_shape(a, b, "ssim");
  if (a.width < kSsimWindow || a.height < kSsimWindow) {
    throw DimensionError("ssim needs images of at least 11x11, got " + std::to_string(a.width) + "x" +
                         std::to_string(a.height));
  }
  const int w = a.width;
  const int h = a.height;
  const std::vector<double> x = channel_mean(a);
  const std::vector<double> y = channel_mean(b);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, w, h);
  const auto my = filter_valid(y, w, h);
  const auto sxx = filter_valid(xx, w, h);
  const auto syy = filter_valid(yy, w, h);
  const auto sxy = filter_valid(xy, w, h);
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size()) {
    throw DimensionError("feature lengths differ");
  }
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) {
    throw ContractError("cosine similarity of a zero vector");
  }
  return a.dot(b) / (na * nb);
}

namespace {

void moments(const Eigen::MatrixXd& f, Eigen::VectorXd& mean, Eigen::MatrixXd& cov) {
  mean = f.colwise().mean().transpose();
  const Eigen::MatrixXd centered = f.rowwise() - mean.transpose();
  cov = centered.transpose() * centered / static_cast<double>(f.rows() - 1);
}

}  // namespace

FidResult frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() < 2 || b.rows() < 2) {
    throw ContractError("FID needs at least 2 samples per set");
  }
  if (a.cols() != b.cols()) {
    throw DimensionError("FID feature dimensions differ");
  }
  Eigen::VectorXd mu_a, mu_b;
  Eigen::MatrixXd cov_a, cov_b;
  moments(a, mu_a, cov_a);
  moments(b, mu_b, cov_b);

  FidResult result;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_a(cov_a);
  Eigen::VectorXd lambda_a = eig_a.eigenvalues();
  for (Eigen::Index i = 0; i < lambda_a.size(); ++i) {
    if (lambda_a[i] < 0.0) {
      result.clipped = std::max(result.clipped, -lambda_a[i]);
      lambda_a[i] = 0.0;
    }
  }
  const Eigen::MatrixXd sqrt_a =
      eig_a.eigenvectors() * lambda_a.cwiseSqrt().asDiagonal() * eig_a.eigenvectors().transpose();
  Eigen::MatrixXd inner = sqrt_a * cov_b * sqrt_a;
  inner = 0.5 * (inner + inner.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_inner(inner, Eigen::EigenvaluesOnly);
  double trace_sqrt = 0.0;
  for (Eigen::Index i = 0; i < eig_inner.eigenvalues().size(); ++i) {
    const double l = eig_inner.eigenvalues()[i];
    if (l < 0.0) {
      result.clipped = std::max(result.clipped, -l);
    } else {
      trace_sqrt += std::sqrt(l);
    }
  }
  // non-negative by construction; clamp the roundoff of identical sets
  result.value = std::max(0.0, (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * trace_sqrt);
  return result;
}

double fid(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return frechet_distance(a, b).value; }

namespace {

std::string fmt(double v) {
  if (std::isinf(v)) {
    return v > 0 ? "inf" : "-inf";
  }
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << v;
  return os.str();
}

}  // namespace

std::string MetricsReport::to_key_values() const {
  std::ostringstream os;
  os << "l1=" << fmt(l1.value) << "\nl1_count=" << l1.count << "\npsnr=" << fmt(psnr.value)
     << "\npsnr_count=" << psnr.count << "\nssim=" << fmt(ssim.value) << "\nssim_count=" << ssim.count
     << "\ncos_id=" << fmt(cos_id.value) << "\ncos_id_count=" << cos_id.count << "\nfid=" << fmt(fid.value)
     << "\nfid_count=" << fid.count << "\nfid_clipped=" << fmt(fid_clipped) << "\nfailures=" << failures
     << "\nextractor=" << extractor << '\n';
  return os.str();
}

std::string MetricsReport::to_csv() const {
  std::ostringstream os;
  os << "l1,psnr,ssim,cos_id,fid,count,failures,extractor\n"
     << fmt(l1.value) << ',' << fmt(psnr.value) << ',' << fmt(ssim.value) << ',' << fmt(cos_id.value) << ','
     << fmt(fid.value) << ',' << l1.count << ',' << failures << ',' << extractor << '\n';
  return os.str();
}

std::string MetricsReport::table_row(const std::string& method) const {
  std::ostringstream os;
  os << std::left << std::setw(14) << method << " | L1 " << fmt(l1.value) << " | PSNR " << fmt(psnr.value)
     << " | SSIM " << fmt(ssim.value) << " | Cos ID " << fmt(cos_id.value) << " | FID " << fmt(fid.value)
     << " | n=" << l1.count;
  return os.str();
}

}  // namespace demask
