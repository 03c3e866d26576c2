#include "demask/nn/inpaint_net.hpp"

#include "demask/errors.hpp"

namespace demask {
namespace {

namespace F = torch::nn::functional;

torch::nn::Conv2d conv(int in, int out, int kernel, int stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2));
}

torch::Tensor upsample2(const torch::Tensor& x) {
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .scale_factor(std::vector<double>{2.0, 2.0})
                               .mode(torch::kNearest));
}

}  // namespace

void GeneratorConfig::validate() const {
  if (base_width <= 0 || residual_blocks < 0) {
    throw ContractError("generator needs a positive base width and a non-negative block count");
  }
}

GeneratorImpl::GeneratorImpl(const GeneratorConfig& config) : config_(config) {
  config_.validate();
  const int w = config_.base_width;
  in_ = register_module("input", conv(GeneratorConfig::kInputChannels, w, 3));
  in_norm_ = register_module("in_norm", make_group_norm(w));
  down1_ = register_module("down1", conv(w, 2 * w, 3, 2));
  down1_norm_ = register_module("down1_norm", make_group_norm(2 * w));
  down2_ = register_module("down2", conv(2 * w, 4 * w, 3, 2));
  down2_norm_ = register_module("down2_norm", make_group_norm(4 * w));
  blocks_ = register_module("blocks", torch::nn::ModuleList());
  for (int i = 0; i < config_.residual_blocks; ++i) {
    blocks_->push_back(ResidualBlock(4 * w, 4 * w, 1));
  }
  up1_ = register_module("up1", conv(4 * w, 2 * w, 3));
  up1_norm_ = register_module("up1_norm", make_group_norm(2 * w));
  up2_ = register_module("up2", conv(2 * w, w, 3));
  up2_norm_ = register_module("up2_norm", make_group_norm(w));
  out_ = register_module("out", conv(w, 3, 3));
  init_parameters(*this, config_.init_seed);
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& mask, const torch::Tensor& prior, const torch::Tensor& noisy) {
  if (mask.dim() != 4 || prior.dim() != 4 || noisy.dim() != 4 || mask.size(1) != 1 || prior.size(1) != 3 ||
      noisy.size(1) != 3) {
    throw DimensionError("generator expects mask [B,1,H,W], prior [B,3,H,W] and noisy [B,3,H,W]; got " +
                         c10::str(mask.sizes()) + ", " + c10::str(prior.sizes()) + ", " + c10::str(noisy.sizes()));
  }
  for (int d : {0, 2, 3}) {
    if (mask.size(d) != prior.size(d) || mask.size(d) != noisy.size(d)) {
      throw DimensionError("generator inputs disagree in batch or spatial size");
    }
  }
  if (mask.size(2) % 4 != 0 || mask.size(3) % 4 != 0) {
    throw DimensionError("generator input height and width must be multiples of 4");
  }
  auto x = torch::cat({mask, prior, noisy}, 1);
  x = torch::relu(in_norm_(in_(x)));
  x = torch::relu(down1_norm_(down1_(x)));
  x = torch::relu(down2_norm_(down2_(x)));
  for (const auto& block : *blocks_) {
    x = block->as<ResidualBlock>()->forward(x);
  }
  x = torch::relu(up1_norm_(up1_(upsample2(x))));
  x = torch::relu(up2_norm_(up2_(upsample2(x))));
  return torch::sigmoid(out_(x));
}

void DiscriminatorConfig::validate() const {
  for (int w : widths) {
    if (w <= 0) {
      throw ContractError("discriminator widths must be positive");
    }
  }
  if (input_size < 16 || input_size % 16 != 0) {
    throw ContractError("discriminator input size must be a positive multiple of 16");
  }
}

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& config) : config_(config) {
  config_.validate();
  features_ = torch::nn::Sequential();
  int in = 3;
  for (int w : config_.widths) {
    features_->push_back(conv(in, w, 3));
    features_->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
    features_->push_back(conv(w, w, 3, 2));
    features_->push_back(torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(0.2)));
    in = w;
  }
  register_module("features", features_);
  const int side = config_.input_size / 16;
  head_ = register_module("head", torch::nn::Linear(in * side * side, 1));
  init_parameters(*this, config_.init_seed);
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& image) {
  const int s = config_.input_size;
  if (image.dim() != 4 || image.size(1) != 3 || image.size(2) != s || image.size(3) != s) {
    throw DimensionError("discriminator input must be [B,3," + std::to_string(s) + "," + std::to_string(s) +
                         "], got " + c10::str(image.sizes()));
  }
  return head_(features_->forward(image).flatten(1)).squeeze(1);
}

}  // namespace demask
