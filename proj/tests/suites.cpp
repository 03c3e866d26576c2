#include "suites.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "demask/metrics.hpp"
#include "demask/morphable_model.hpp"
#include "demask/nn/embedder.hpp"
#include "demask/nn/face_renderer.hpp"
#include "demask/nn/losses.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace suites {
namespace {

namespace L = demask::losses;
using support::from;
using support::rows;

constexpr int kH = 4;
constexpr int kW = 4;
constexpr int kC = 3;
constexpr int kB = 2;

torch::Tensor uniform_t(std::mt19937_64& rng, torch::IntArrayRef shape, double lo, double hi) {
  std::int64_t n = 1;
  for (auto s : shape) n *= s;
  return from(oracle::uniform(rng, static_cast<std::size_t>(n), lo, hi), shape);
}

torch::Tensor binary_t(std::mt19937_64& rng, torch::IntArrayRef shape) {
  return (uniform_t(rng, shape, 0.0, 1.0) > 0.5).to(torch::kFloat64);
}

std::string fmt(const std::string& name, int i, double got, double want) {
  std::ostringstream s;
  s.precision(17);
  s << name << " instance " << i << ": got " << got << ", oracle " << want;
  return s.str();
}

double value(const torch::Tensor& t) { return t.item<double>(); }

void track(Result& r, double& worst, const std::string& name, int i, double got, double want, double tol) {
  const double d = std::abs(got - want);
  worst = std::max(worst, d);
  r.check(d < tol, fmt(name, i, got, want));
}

}  // namespace

Result loss_oracles(int instances) {
  Result r;
  std::mt19937_64 rng(20240611);
  double worst = 0.0;
  int checks = 0;
  const double tol = 1e-6;
  for (int i = 0; i < instances; ++i) {
    const auto img_shape = std::vector<int64_t>{kB, kC, kH, kW};
    const auto map_shape = std::vector<int64_t>{kB, 1, kH, kW};

    const auto pred = uniform_t(rng, map_shape, 0.0, 1.0);
    const auto target = binary_t(rng, map_shape);
    for (double keep : {0.25, 0.5, 1.0}) {
      for (long min_keep : {0L, 6L}) {
        track(r, worst, "bce_ohem", i, value(L::bce_ohem(pred, target, keep, min_keep)),
              oracle::bce_ohem(rows(pred), rows(target), keep, min_keep), tol);
        ++checks;
      }
    }

    const auto c_pred = uniform_t(rng, {kB, 55}, -2.0, 2.0);
    const auto c_true = uniform_t(rng, {kB, 55}, -2.0, 2.0);
    track(r, worst, "coef", i, value(L::coef_loss(c_pred, c_true)), oracle::mean_abs(rows(c_pred), rows(c_true)), tol);

    const auto rendered = uniform_t(rng, img_shape, 0.0, 1.0);
    const auto image = uniform_t(rng, img_shape, 0.0, 1.0);
    auto region = binary_t(rng, map_shape);
    region.index_put_({torch::indexing::Slice(), 0, 0, 0}, 1.0);
    track(r, worst, "photo", i, value(L::photo_loss(rendered, image, region)),
          oracle::photo(rows(rendered), rows(image), rows(region), kH, kW), tol);

    const auto fa = demask::normalize_rows(uniform_t(rng, {kB, 8}, -1.0, 1.0));
    const auto fb = demask::normalize_rows(uniform_t(rng, {kB, 8}, -1.0, 1.0));
    track(r, worst, "identity", i, value(L::identity_loss(fa, fb)), oracle::identity(rows(fa), rows(fb)), tol);

    const auto q_pred = uniform_t(rng, {kB, 68, 2}, 0.0, 64.0);
    const auto q_true = uniform_t(rng, {kB, 68, 2}, 0.0, 64.0);
    const auto w = oracle::uniform(rng, 68, 0.5, 20.0);
    track(r, worst, "landmark", i, value(L::landmark_loss(q_pred, q_true, from(w, {68}))),
          oracle::landmark(rows(q_pred), rows(q_true), w), tol);

    track(r, worst, "pix", i, value(L::pix_loss(rendered, image)), oracle::mean_abs(rows(rendered), rows(image)), tol);
    track(r, worst, "tv", i, value(L::tv_loss(rendered)), oracle::tv(rows(rendered), kC, kH, kW), tol);

    const auto d_fake = uniform_t(rng, {kB}, 0.0, 1.0);
    const auto d_real = uniform_t(rng, {kB}, 0.0, 1.0);
    const auto grad_sq = uniform_t(rng, {kB}, 0.0, 3.0);
    track(r, worst, "adv_g", i, value(L::adv_loss_g(d_fake)), oracle::adv_g(support::flat(d_fake)), tol);
    for (double r1 : {1.0, 0.5}) {
      track(r, worst, "discriminator", i, value(L::discriminator_loss(d_real, d_fake, grad_sq, r1)),
            oracle::discriminator(support::flat(d_real), support::flat(d_fake), support::flat(grad_sq), r1), tol);
    }
    checks += 9;
  }

  const double recon = L::total_3d_loss(L::Recon3dTerms<double>{1, 1, 1, 1, 1});
  const double gen = L::generator_total_loss(L::GeneratorTerms<double>{1, 1, 1, 1});
  r.check(std::abs(recon - 3.101) < 1e-12, fmt("total_3d unit components", 0, recon, 3.101));
  r.check(std::abs(gen - 10.21) < 1e-12, fmt("generator_total unit components", 0, gen, 10.21));
  const auto recon_t = L::total_3d_loss(L::Recon3dTerms<torch::Tensor>{
      torch::tensor(1.0, torch::kFloat64), torch::tensor(1.0, torch::kFloat64), torch::tensor(1.0, torch::kFloat64),
      torch::tensor(1.0, torch::kFloat64), torch::tensor(1.0, torch::kFloat64)});
  r.check(std::abs(value(recon_t) - 3.101) < 1e-12, fmt("total_3d tensor unit components", 0, value(recon_t), 3.101));

  std::ostringstream s;
  s << instances << " instances, " << checks << " comparisons, max |delta| " << worst << "; weighted sums " << recon
    << " and " << gen;
  r.summary = s.str();
  return r;
}

namespace {

using ScalarFn = std::function<torch::Tensor(const torch::Tensor&)>;

double gradient_error(const ScalarFn& f, const std::vector<double>& x, torch::IntArrayRef shape, double h) {
  const auto analytic = support::analytic_gradient(f, x, shape);
  const std::vector<int64_t> dims(shape.begin(), shape.end());
  const auto numeric = oracle::numeric_gradient(
      [&](const std::vector<double>& v) {
        torch::NoGradGuard no_grad;
        return f(from(v, dims)).item<double>();
      },
      x, h);
  return oracle::relative_error(analytic, numeric);
}

/// Values at least `gap` away from `base` so |x - base| stays differentiable under +-h.
std::vector<double> offset_from(std::mt19937_64& rng, const std::vector<double>& base, double gap) {
  std::uniform_real_distribution<double> mag(gap, 0.5);
  std::bernoulli_distribution sign;
  std::vector<double> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out[i] = base[i] + (sign(rng) ? 1.0 : -1.0) * mag(rng);
  return out;
}

/// OHEM selection is piecewise; keep the k-th and (k+1)-th largest terms apart so the
/// finite-difference stencil never crosses a selection boundary.
bool well_separated(const std::vector<double>& p, const std::vector<double>& m, double keep, double gap) {
  const std::size_t n = static_cast<std::size_t>(kH * kW);
  const auto k = static_cast<std::size_t>(std::ceil(keep * static_cast<double>(n)));
  for (std::size_t b = 0; b < p.size() / n; ++b) {
    std::vector<double> terms;
    for (std::size_t i = 0; i < n; ++i) {
      const double q = p[b * n + i];
      const double t = m[b * n + i];
      terms.push_back(-(t * std::log(q) + (1 - t) * std::log(1 - q)));
    }
    std::sort(terms.begin(), terms.end(), std::greater<>());
    if (k < n && terms[k - 1] - terms[k] < gap) return false;
  }
  return true;
}

}  // namespace

Result loss_gradients(int instances, double h) {
  Result r;
  std::mt19937_64 rng(777);
  const std::vector<int64_t> img{kB, kC, kH, kW};
  const std::vector<int64_t> map{kB, 1, kH, kW};
  const std::size_t img_n = kB * kC * kH * kW;
  const std::size_t map_n = kB * kH * kW;
  std::map<std::string, double> worst;
  auto record = [&](const std::string& name, int i, double err) {
    worst[name] = std::max(worst[name], err);
    std::ostringstream s;
    s << name << " instance " << i << ": relative error " << err;
    r.check(err < 1e-2, s.str());
  };

  for (int i = 0; i < instances; ++i) {
    std::vector<double> p, m;
    do {
      p = oracle::uniform(rng, map_n, 0.05, 0.95);
      m = oracle::uniform(rng, map_n, 0.0, 1.0);
      for (auto& v : m) v = v > 0.5 ? 1.0 : 0.0;
    } while (!well_separated(p, m, 0.25, 0.05));
    const auto target = from(m, map);
    record("bce", i, gradient_error([&](const torch::Tensor& x) { return L::bce_ohem(x, target, 0.25, 0); }, p, map, h));

    const auto c_true = oracle::uniform(rng, kB * 55, -1.0, 1.0);
    const auto c_t = from(c_true, {kB, 55});
    record("coef", i,
           gradient_error([&](const torch::Tensor& x) { return L::coef_loss(x, c_t); }, offset_from(rng, c_true, 0.01),
                          {kB, 55}, h));

    const auto image = from(oracle::uniform(rng, img_n, 0.0, 1.0), img);
    auto region = (from(oracle::uniform(rng, map_n, 0.0, 1.0), map) > 0.4).to(torch::kFloat64);
    region.index_put_({torch::indexing::Slice(), 0, 0, 0}, 1.0);
    record("photo", i,
           gradient_error([&](const torch::Tensor& x) { return L::photo_loss(x, image, region); },
                          oracle::uniform(rng, img_n, 0.0, 1.0), img, h));

    const auto target_img = oracle::uniform(rng, img_n, 0.0, 1.0);
    const auto target_t = from(target_img, img);
    record("pix", i,
           gradient_error([&](const torch::Tensor& x) { return L::pix_loss(x, target_t); },
                          offset_from(rng, target_img, 0.01), img, h));

    record("tv", i, gradient_error([](const torch::Tensor& x) { return L::tv_loss(x); }, oracle::uniform(rng, img_n, 0.0, 1.0),
                                   img, h));
  }
  std::ostringstream s;
  s << instances << " instances each, worst relative error:";
  for (const auto& [k, v] : worst) s << ' ' << k << '=' << v;
  r.summary = s.str();
  return r;
}

Result rendering(int triangles) {
  using namespace demask;
  Result r;
  Camera cam;
  cam.width = 32;
  cam.height = 32;
  cam.focal = 40.0;
  cam.cx = 16.0;
  cam.cy = 16.0;
  std::mt19937_64 rng(31337);
  std::uniform_real_distribution<double> u(-8.0, 40.0);
  const std::vector<Triangle> tri = {{0, 1, 2}};
  int exact = 0;
  for (int t = 0; t < triangles; ++t) {
    std::array<double, 6> v{};
    for (auto& x : v) x = u(rng);
    PointMatrix xy(3, 2);
    xy << v[0], v[1], v[2], v[3], v[4], v[5];
    const auto out = rasterize(xy, Eigen::VectorXd::Constant(3, 3.0), tri, VertexMatrix::Constant(3, 3, 0.5), cam);
    if (out.coverage == oracle::triangle_coverage(v, cam.width, cam.height)) {
      ++exact;
    } else {
      r.fail("triangle " + std::to_string(t) + " coverage differs from the oracle");
    }
  }

  std::normal_distribution<double> g;
  VertexMatrix normals(100, 3);
  for (int i = 0; i < normals.rows(); ++i) normals.row(i) = Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized();
  const VertexMatrix albedo = VertexMatrix::Constant(100, 3, 0.6);
  std::vector<double> gamma(27, 0.0);
  const auto black = sh_shade(normals, albedo, gamma);
  r.check(black.cwiseAbs().maxCoeff() == 0.0, "zero illumination is not black");
  gamma[0] = 1.1;
  gamma[9] = 0.7;
  gamma[18] = 1.9;
  const auto flat = sh_radiance(normals, albedo, gamma);
  bool uniform = true;
  for (int i = 0; i < flat.rows(); ++i)
    for (int c = 0; c < 3; ++c) uniform = uniform && flat(i, c) == flat(0, c);
  r.check(uniform, "band-0 shading varies with the normal");
  const double y00 = 0.5 / std::sqrt(std::acos(-1.0));
  r.check(std::abs(flat(0, 0) - 0.6 * 1.1 * y00) < 1e-15, "band-0 value differs from albedo * g0 * Y00");

  Camera pin;
  pin.width = 128;
  pin.height = 128;
  pin.focal = 100.0;
  pin.cx = 64.0;
  pin.cy = 64.0;
  VertexMatrix pts(21, 3);
  pts.row(0) << 1.0, 0.0, 2.0;
  std::uniform_real_distribution<double> side(-2.0, 2.0), depth(1.0, 20.0);
  for (int i = 1; i < pts.rows(); ++i) pts.row(i) << side(rng), side(rng), depth(rng);
  const auto proj = pose_and_project(pts, Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero(), pin);
  double worst = std::abs(proj.xy(0, 0) - 114.0) + std::abs(proj.xy(0, 1) - 64.0);
  for (int i = 1; i < pts.rows(); ++i) {
    worst = std::max(worst, std::abs(proj.xy(i, 0) - (100.0 * pts(i, 0) / pts(i, 2) + 64.0)));
    worst = std::max(worst, std::abs(proj.xy(i, 1) - (100.0 * pts(i, 1) / pts(i, 2) + 64.0)));
  }
  r.check(worst < 1e-9, "pinhole projection off by " + std::to_string(worst));

  std::ostringstream s;
  s << exact << "/" << triangles << " triangles exact; SH zero/band-0 exact: " << (black.cwiseAbs().maxCoeff() == 0.0)
    << "/" << uniform << "; pinhole max error " << worst;
  r.summary = s.str();
  return r;
}

Result metrics() {
  using namespace demask;
  Result r;
  std::mt19937_64 rng(4711);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  auto random_image = [&](int w, int h) {
    Image img(w, h, 3);
    for (auto& v : img.data) v = u(rng);
    return img;
  };
  const auto a = random_image(32, 32);
  const double p = psnr(a, a);
  const double s = ssim(a, a);
  const ToyEmbedder embedder;
  const double c = cos_id(a, a, embedder);
  std::vector<Image> set;
  for (int i = 0; i < 40; ++i) set.push_back(random_image(32, 32));
  const auto feats = embed_images(set, embedder);
  const double f = fid(feats, feats);
  r.check(p == std::numeric_limits<double>::infinity(), "psnr of identical images is not infinite");
  r.check(std::abs(s - 1.0) < 1e-12, "ssim of identical images is not 1");
  r.check(std::abs(c - 1.0) < 1e-6, "cos_id of identical images is not 1");
  r.check(std::abs(f) < 1e-6, "fid of identical sets is not 0");

  std::normal_distribution<double> g;
  const int n = 5000;
  const int d = 8;
  const double offset = 1.0;
  const double expected = d * offset * offset;
  Eigen::MatrixXd fa(n, d), fb(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      fa(i, j) = g(rng);
      fb(i, j) = g(rng) + offset;
    }
  }
  const double shifted = fid(fa, fb);
  const double rel = std::abs(shifted - expected) / expected;
  r.check(rel < 0.1, "fid mean offset off by " + std::to_string(100 * rel) + "%");

  double asym = 0.0;
  for (int i = 0; i < 10; ++i) {
    const auto x = random_image(24, 24);
    const auto y = random_image(24, 24);
    asym = std::max(asym, std::abs(ssim(x, y) - ssim(y, x)));
  }
  r.check(asym < 1e-9, "ssim asymmetry " + std::to_string(asym));

  std::ostringstream out;
  out << "psnr=" << p << " ssim=" << s << " cos_id=" << c << " fid=" << f << "; offset fid " << shifted << " vs "
      << expected << " (" << 100 * rel << "%); ssim asymmetry " << asym;
  r.summary = out.str();
  return r;
}

}  // namespace suites
