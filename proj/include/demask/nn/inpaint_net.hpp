#pragma once

#include <array>
#include <cstdint>

#include <torch/torch.h>

#include "demask/nn/seg_recon_net.hpp"

namespace demask {

struct GeneratorConfig {
  static constexpr int kInputChannels = 7;  // m (1) + I_3D (3) + I_n (3)
  int base_width = 32;
  int residual_blocks = 6;
  std::uint64_t init_seed = 2;

  void validate() const;
};

/// Two stride-2 encoders, stacked residual blocks at 1/4 resolution, two
/// upsample+conv decoders and a sigmoid output.
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorConfig& config);

  /// mask [B,1,H,W], prior [B,3,H,W], noisy [B,3,H,W] -> [B,3,H,W] in [0,1].
  /// H and W must be multiples of 4.
  torch::Tensor forward(const torch::Tensor& mask, const torch::Tensor& prior, const torch::Tensor& noisy);

  const GeneratorConfig& config() const noexcept { return config_; }

 private:
  GeneratorConfig config_;
  torch::nn::Conv2d in_{nullptr}, down1_{nullptr}, down2_{nullptr}, up1_{nullptr}, up2_{nullptr}, out_{nullptr};
  torch::nn::GroupNorm in_norm_{nullptr}, down1_norm_{nullptr}, down2_norm_{nullptr}, up1_norm_{nullptr},
      up2_norm_{nullptr};
  torch::nn::ModuleList blocks_;
};
TORCH_MODULE(Generator);

struct DiscriminatorConfig {
  std::array<int, 4> widths = {32, 64, 128, 128};
  int input_size = 64;
  std::uint64_t init_seed = 3;

  void validate() const;
};

/// VGG-style stack: each stage is conv3x3 + LeakyReLU followed by a stride-2
/// conv3x3 + LeakyReLU; a linear layer maps the flattened features to one logit.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorConfig& config);

  /// [B,3,S,S] -> [B] logits.
  torch::Tensor forward(const torch::Tensor& image);
  /// sigmoid(forward(image)), in (0,1).
  torch::Tensor probability(const torch::Tensor& image) { return torch::sigmoid(forward(image)); }

  const DiscriminatorConfig& config() const noexcept { return config_; }

 private:
  DiscriminatorConfig config_;
  torch::nn::Sequential features_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(Discriminator);

}  // namespace demask
