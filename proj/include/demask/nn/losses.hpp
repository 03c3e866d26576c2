#pragma once

#include <string>

#include <torch/torch.h>

namespace demask::losses {

/// Probabilities are clamped to [eps, 1 - eps] before any log.
inline constexpr double kProbEps = 1e-7;

torch::Tensor clamp_prob(const torch::Tensor& p);

/// Per-pixel binary cross-entropy, same shape as the inputs.
torch::Tensor bce_map(const torch::Tensor& pred, const torch::Tensor& target);

/// BCE with online hard example mining. Inputs are [B, ...]; for every sample the
/// k = min(N, max(min_keep, ceil(keep_fraction * N))) largest per-pixel terms are
/// averaged, then samples are averaged. keep_fraction = 1 is the plain mean BCE.
/// Throws ContractError if target is not binary.
torch::Tensor bce_ohem(const torch::Tensor& pred, const torch::Tensor& target, double keep_fraction,
                       std::int64_t min_keep = 0);

/// mean |pred - target|.
torch::Tensor coef_loss(const torch::Tensor& pred, const torch::Tensor& target);

/// Per sample: sum over region pixels of the RGB Euclidean distance, divided by the
/// region pixel count; averaged over the batch. rendered/image are [B,3,H,W], region
/// is [B,1,H,W]. Throws EmptyRegionError if any sample's region is empty.
torch::Tensor photo_loss(const torch::Tensor& rendered, const torch::Tensor& image, const torch::Tensor& region);

/// 1 - cosine similarity of feature rows ([B,d] or [d]), averaged over the batch.
torch::Tensor identity_loss(const torch::Tensor& a, const torch::Tensor& b);

/// (1/n) sum_i w_i |pred_i - target_i|^2 over [B,n,2] landmarks, averaged over the batch.
torch::Tensor landmark_loss(const torch::Tensor& pred, const torch::Tensor& target, const torch::Tensor& weights);

/// mean |a - b| over every entry.
torch::Tensor pix_loss(const torch::Tensor& output, const torch::Tensor& target);

/// Squared forward differences along x and y (last column / row dropped), summed and
/// divided by H*W*C; averaged over the batch. Needs H, W >= 2.
torch::Tensor tv_loss(const torch::Tensor& image);

/// mean(-log D(fake)).
torch::Tensor adv_loss_g(const torch::Tensor& d_fake);

/// mean(-log D(real)) + mean(-log(1 - D(fake))) + r1_weight * mean(|grad_real|^2).
torch::Tensor discriminator_loss(const torch::Tensor& d_real, const torch::Tensor& d_fake,
                                 const torch::Tensor& grad_norm_sq, double r1_weight = 1.0);

/// Per-sample squared norm of d(sum output)/d(input), kept in the graph so the
/// penalty can be back-propagated. `input` must require grad.
torch::Tensor input_gradient_norm_sq(const torch::Tensor& output, const torch::Tensor& input);

struct Recon3dWeights {
  double bce = 1.0;
  double coef = 1.0;
  double photo = 1.0;
  double id = 0.1;
  double lm = 0.001;
};

template <typename T>
struct Recon3dTerms {
  T bce;
  T coef;
  T photo;
  T id;
  T lm;
};

/// bce + coef + photo + 0.1 id + 0.001 lm by default; throws NonFiniteError naming
/// the first non-finite component.
double total_3d_loss(const Recon3dTerms<double>& terms, const Recon3dWeights& weights = {});
torch::Tensor total_3d_loss(const Recon3dTerms<torch::Tensor>& terms, const Recon3dWeights& weights = {});

struct GeneratorWeights {
  double pix = 10.0;
  double id = 0.1;
  double tv = 0.1;
  double adv = 0.01;
};

template <typename T>
struct GeneratorTerms {
  T pix;
  T id;
  T tv;
  T adv;
};

/// 10 pix + 0.1 id + 0.1 tv + 0.01 adv by default.
double generator_total_loss(const GeneratorTerms<double>& terms, const GeneratorWeights& weights = {});
torch::Tensor generator_total_loss(const GeneratorTerms<torch::Tensor>& terms, const GeneratorWeights& weights = {});

/// Throws NonFiniteError("<name> ...") when the scalar is NaN or infinite.
void require_finite(const std::string& name, double value);

}  // namespace demask::losses
