#include "demask/nn/losses.hpp"

#include <cmath>

#include "demask/errors.hpp"

namespace demask::losses {
namespace {

void require_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (a.sizes() != b.sizes()) {
    throw DimensionError(std::string(what) + ": shapes " + c10::str(a.sizes()) + " and " + c10::str(b.sizes()) +
                         " differ");
  }
}

torch::Tensor per_sample(const torch::Tensor& t) {
  return t.dim() <= 1 ? t.reshape({1, -1}) : t.reshape({t.size(0), -1});
}

}  // namespace

torch::Tensor clamp_prob(const torch::Tensor& p) { return p.clamp(kProbEps, 1.0 - kProbEps); }

torch::Tensor bce_map(const torch::Tensor& pred, const torch::Tensor& target) {
  require_same_shape(pred, target, "bce");
  const auto p = clamp_prob(pred);
  return -(target * torch::log(p) + (1.0 - target) * torch::log(1.0 - p));
}

torch::Tensor bce_ohem(const torch::Tensor& pred, const torch::Tensor& target, double keep_fraction,
                       std::int64_t min_keep) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ContractError("keep_fraction must be in (0, 1], got " + std::to_string(keep_fraction));
  }
  if (!torch::logical_or(target == 0, target == 1).all().item<bool>()) {
    throw ContractError("bce target must be binary");
  }
  const auto terms = per_sample(bce_map(pred, target));
  const std::int64_t n = terms.size(1);
  const auto wanted = static_cast<std::int64_t>(std::ceil(keep_fraction * static_cast<double>(n) - 1e-9));
  const std::int64_t k = std::min(n, std::max({min_keep, wanted, std::int64_t{1}}));
  if (k == n) {
    return terms.mean(1).mean();
  }
  return std::get<0>(terms.topk(k, 1)).mean(1).mean();
}

torch::Tensor coef_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  require_same_shape(pred, target, "coef_loss");
  return (pred - target).abs().mean();
}

torch::Tensor photo_loss(const torch::Tensor& rendered, const torch::Tensor& image, const torch::Tensor& region) {
  require_same_shape(rendered, image, "photo_loss");
  if (rendered.dim() != 4) {
    throw DimensionError("photo_loss expects [B,C,H,W] images");
  }
  const auto m = region.dim() == 3 ? region.unsqueeze(1) : region;
  if (m.size(0) != rendered.size(0) || m.size(1) != 1 || m.size(2) != rendered.size(2) ||
      m.size(3) != rendered.size(3)) {
    throw DimensionError("photo_loss: region map must be [B,1,H,W] matching the images");
  }
  const auto area = m.sum({1, 2, 3});
  if ((area <= 0).any().item<bool>()) {
    throw EmptyRegionError("photo_loss: face region is empty");
  }
  const auto diff = (rendered - image) * m;
  const auto sq = diff.pow(2).sum(1, /*keepdim=*/true);
  // sqrt has an infinite slope at 0; route zero pixels around it
  const auto positive = sq > 0;
  const auto safe = torch::where(positive, sq, torch::ones_like(sq));
  const auto dist = torch::where(positive, torch::sqrt(safe), torch::zeros_like(sq));
  return (dist.sum({1, 2, 3}) / area).mean();
}

torch::Tensor identity_loss(const torch::Tensor& a, const torch::Tensor& b) {
  require_same_shape(a, b, "identity_loss");
  const auto fa = per_sample(a);
  const auto fb = per_sample(b);
  const auto na = fa.norm(2, 1);
  const auto nb = fb.norm(2, 1);
  if ((na == 0).any().item<bool>() || (nb == 0).any().item<bool>()) {
    throw ContractError("identity_loss: zero feature vector");
  }
  return (1.0 - (fa * fb).sum(1) / (na * nb)).mean();
}

torch::Tensor landmark_loss(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& weights) {
  require_same_shape(pred, target, "landmark_loss");
  const auto p = pred.dim() == 2 ? pred.unsqueeze(0) : pred;
  const auto t = target.dim() == 2 ? target.unsqueeze(0) : target;
  if (p.dim() != 3 || p.size(2) != 2) {
    throw DimensionError("landmark_loss expects [B,n,2] points");
  }
  if (weights.dim() != 1 || weights.size(0) != p.size(1)) {
    throw DimensionError("landmark_loss: need one weight per landmark");
  }
  const auto sq = (p - t).pow(2).sum(2);  // [B, n]
  return (sq * weights.to(sq.dtype())).sum(1).div(static_cast<double>(p.size(1))).mean();
}

torch::Tensor pix_loss(const torch::Tensor& output, const torch::Tensor& target) {
  require_same_shape(output, target, "pix_loss");
  return (output - target).abs().mean();
}

torch::Tensor tv_loss(const torch::Tensor& image) {
  const auto img = image.dim() == 3 ? image.unsqueeze(0) : image;
  if (img.dim() != 4 || img.size(2) < 2 || img.size(3) < 2) {
    throw DimensionError("tv_loss needs [B,C,H,W] with H, W >= 2");
  }
  const auto dx = img.narrow(3, 1, img.size(3) - 1) - img.narrow(3, 0, img.size(3) - 1);
  const auto dy = img.narrow(2, 1, img.size(2) - 1) - img.narrow(2, 0, img.size(2) - 1);
  const double hwc = static_cast<double>(img.size(1) * img.size(2) * img.size(3));
  return ((dx.pow(2).sum({1, 2, 3}) + dy.pow(2).sum({1, 2, 3})) / hwc).mean();
}

torch::Tensor adv_loss_g(const torch::Tensor& d_fake) { return (-torch::log(clamp_prob(d_fake))).mean(); }

torch::Tensor discriminator_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake,
                                 const torch::Tensor& grad_norm_sq, double r1_weight) {
  const auto real_term = (-torch::log(clamp_prob(d_real))).mean();
  const auto fake_term = (-torch::log(1.0 - clamp_prob(d_fake))).mean();
  return real_term + fake_term + r1_weight * grad_norm_sq.mean();
}

torch::Tensor input_gradient_norm_sq(const torch::Tensor& output, const torch::Tensor& input) {
  const auto grads = torch::autograd::grad({output.sum()}, {input}, /*grad_outputs=*/{}, /*retain_graph=*/true,
                                           /*create_graph=*/true);
  return grads[0].pow(2).reshape({input.size(0), -1}).sum(1);
}

void require_finite(const std::string& name, double value) {
  if (!std::isfinite(value)) {
    throw NonFiniteError(name + " loss is not finite (" + std::to_string(value) + ")");
  }
}

double total_3d_loss(const Recon3dTerms<double>& t, const Recon3dWeights& w) {
  require_finite("bce", t.bce);
  require_finite("coef", t.coef);
  require_finite("photo", t.photo);
  require_finite("id", t.id);
  require_finite("lm", t.lm);
  return w.bce * t.bce + w.coef * t.coef + w.photo * t.photo + w.id * t.id + w.lm * t.lm;
}

torch::Tensor total_3d_loss(const Recon3dTerms<torch::Tensor>& t, const Recon3dWeights& w) {
  require_finite("bce", t.bce.item<double>());
  require_finite("coef", t.coef.item<double>());
  require_finite("photo", t.photo.item<double>());
  require_finite("id", t.id.item<double>());
  require_finite("lm", t.lm.item<double>());
  return w.bce * t.bce + w.coef * t.coef + w.photo * t.photo + w.id * t.id + w.lm * t.lm;
}

double generator_total_loss(const GeneratorTerms<double>& t, const GeneratorWeights& w) {
  require_finite("pix", t.pix);
  require_finite("id", t.id);
  require_finite("tv", t.tv);
  require_finite("adv", t.adv);
  return w.pix * t.pix + w.id * t.id + w.tv * t.tv + w.adv * t.adv;
}

torch::Tensor generator_total_loss(const GeneratorTerms<torch::Tensor>& t, const GeneratorWeights& w) {
  require_finite("pix", t.pix.item<double>());
  require_finite("id", t.id.item<double>());
  require_finite("tv", t.tv.item<double>());
  require_finite("adv", t.adv.item<double>());
  return w.pix * t.pix + w.id * t.id + w.tv * t.tv + w.adv * t.adv;
}

}  // namespace demask::losses
