#include "doctest_torch.hpp"

#include <cmath>
#include <iostream>

#include "demask/errors.hpp"
#include "demask/nn/losses.hpp"
#include "suites.hpp"

using namespace demask;
namespace L = demask::losses;

namespace {

torch::Tensor full(torch::IntArrayRef shape, double v) { return torch::full(shape, v, torch::kFloat64); }
double val(const torch::Tensor& t) { return t.item<double>(); }

void report(const suites::Result& r) {
  for (const auto& f : r.failures) MESSAGE(f);
  MESSAGE(r.summary);
  CHECK(r.pass);
}

}  // namespace

TEST_CASE("loss ops match scalar-loop oracles") { report(suites::loss_oracles(20)); }

TEST_CASE("loss gradients match central differences") { report(suites::loss_gradients(10, 1e-3)); }

TEST_CASE("bce_ohem examples") {
  const auto m = torch::randint(0, 2, {2, 1, 8, 8}, torch::kFloat64);
  CHECK(val(L::bce_ohem(L::clamp_prob(m), m, 0.25)) < 1e-5);
  for (double keep : {0.1, 0.25, 1.0}) {
    CHECK(val(L::bce_ohem(full({2, 1, 8, 8}, 0.5), m, keep)) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(L::bce_ohem(full({1, 1, 2, 2}, 0.5), full({1, 1, 2, 2}, 0.3), 0.25), ContractError);
  // keep = 1 is the plain mean.
  const auto p = torch::rand({2, 1, 4, 4}, torch::kFloat64) * 0.9 + 0.05;
  CHECK(val(L::bce_ohem(p, m.narrow(2, 0, 4).narrow(3, 0, 4), 1.0)) ==
        doctest::Approx(val(L::bce_map(p, m.narrow(2, 0, 4).narrow(3, 0, 4)).mean())).epsilon(1e-12));
}

TEST_CASE("coef_loss examples") {
  const auto c = torch::randn({3, 55}, torch::kFloat64);
  CHECK(val(L::coef_loss(c, c)) == 0.0);
  CHECK(val(L::coef_loss(c + 1.0, c)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS(L::coef_loss(c, c.narrow(1, 0, 54)));
}

TEST_CASE("photo_loss examples") {
  const auto img = torch::rand({2, 3, 6, 6}, torch::kFloat64);
  const auto region = full({2, 1, 6, 6}, 1.0);
  CHECK(val(L::photo_loss(img, img, region)) == 0.0);
  const double d = 0.2;
  CHECK(val(L::photo_loss(img + d, img, region)) == doctest::Approx(d * std::sqrt(3.0)).epsilon(1e-12));
  CHECK_THROWS_AS(L::photo_loss(img, img, full({2, 1, 6, 6}, 0.0)), EmptyRegionError);
}

TEST_CASE("identity_loss examples") {
  auto a = torch::zeros({1, 4}, torch::kFloat64);
  a[0][0] = 1.0;
  auto b = torch::zeros({1, 4}, torch::kFloat64);
  b[0][1] = 1.0;
  CHECK(val(L::identity_loss(a, a)) == doctest::Approx(0.0));
  CHECK(val(L::identity_loss(a, -a)) == doctest::Approx(2.0));
  CHECK(val(L::identity_loss(a, b)) == doctest::Approx(1.0));
  CHECK_THROWS(L::identity_loss(a, torch::zeros({1, 4}, torch::kFloat64)));
}

TEST_CASE("landmark_loss examples") {
  const auto q = torch::rand({1, 68, 2}, torch::kFloat64) * 64;
  auto w = full({68}, 1.0);
  w[30] = 20.0;
  CHECK(val(L::landmark_loss(q, q, w)) == 0.0);
  auto moved = q.clone();
  moved[0][30][0] += 1.0;
  CHECK(val(L::landmark_loss(moved, q, w)) == doctest::Approx(20.0 / 68.0).epsilon(1e-12));
  CHECK_THROWS(L::landmark_loss(q, q.narrow(1, 0, 67), w));
}

TEST_CASE("pix and tv examples") {
  const auto img = torch::rand({2, 3, 5, 5}, torch::kFloat64);
  CHECK(val(L::pix_loss(img, img)) == 0.0);
  CHECK(val(L::pix_loss(img + 0.5, img)) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(val(L::tv_loss(full({1, 3, 5, 5}, 0.3))) == 0.0);
  const auto ramp = torch::tensor({0.0, 1.0, 0.0, 1.0}, torch::kFloat64).reshape({1, 1, 2, 2});
  CHECK(val(L::tv_loss(ramp)) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS(L::tv_loss(full({1, 1, 1, 4}, 0.0)));
}

TEST_CASE("adversarial examples") {
  CHECK(val(L::adv_loss_g(full({3}, 1.0))) < 1e-5);
  CHECK(val(L::adv_loss_g(full({3}, 0.5))) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(val(L::adv_loss_g(torch::tensor({0.25, 0.5}, torch::kFloat64))) ==
        doctest::Approx((std::log(4.0) + std::log(2.0)) / 2).epsilon(1e-12));
  CHECK(val(L::adv_loss_g(torch::tensor({0.25, 0.5}, torch::kFloat64))) == doctest::Approx(1.0397).epsilon(1e-4));
  const auto zeros = full({4}, 0.0);
  CHECK(val(L::discriminator_loss(full({4}, 1.0), full({4}, 0.0), zeros)) < 1e-4);
  CHECK(val(L::discriminator_loss(full({4}, 0.5), full({4}, 0.5), zeros)) == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
  CHECK(val(L::discriminator_loss(full({4}, 0.5), full({4}, 0.5), zeros)) == doctest::Approx(1.3863).epsilon(1e-4));
}

TEST_CASE("input gradient norm") {
  auto x = torch::rand({3, 2, 4, 4}, torch::kFloat64).requires_grad_(true);
  const auto y = (x * x).sum({1, 2, 3});
  const auto g = L::input_gradient_norm_sq(y, x);
  const auto expected = (4 * x * x).sum({1, 2, 3});
  CHECK(torch::allclose(g, expected.detach()));
}

TEST_CASE("weighted sums") {
  CHECK(L::total_3d_loss({1, 1, 1, 1, 1}) == doctest::Approx(3.101).epsilon(1e-15));
  CHECK(L::total_3d_loss({0, 0, 0, 0, 0}) == 0.0);
  CHECK(L::total_3d_loss({std::log(2.0), 0.5, 0.2, 1, 68}) == doctest::Approx(1.5611).epsilon(1e-4));
  CHECK(L::generator_total_loss({1, 1, 1, 1}) == doctest::Approx(10.21).epsilon(1e-15));
  CHECK(L::generator_total_loss({0, 0, 0, 0}) == 0.0);
  CHECK(L::generator_total_loss({0.1, 1, 0.5, std::log(2.0)}) == doctest::Approx(1.156931).epsilon(1e-6));
  try {
    L::total_3d_loss({1, 1, NAN, 1, 1});
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(std::string(e.what()).find("photo") != std::string::npos);
  }
  CHECK_THROWS_AS(L::generator_total_loss({1, INFINITY, 1, 1}), NonFiniteError);
}
