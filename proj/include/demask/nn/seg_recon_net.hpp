#pragma once

#include <array>
#include <cstdint>
#include <string_view>

#include <torch/torch.h>

#include "demask/coeff_layout.hpp"

namespace demask {

/// Re-initialises every Conv2d / Linear / norm layer below `module` from a private
/// generator seeded with `seed` (uniform +-1/sqrt(fan_in) for weights and biases,
/// unit scale / zero shift for norms). Global torch RNG state is never touched.
void init_parameters(torch::nn::Module& module, std::uint64_t seed);

/// FNV-1a over the raw bytes of every parameter and buffer, in registration order.
std::uint64_t parameter_checksum(const torch::nn::Module& module);

enum class NormKind { Group, Batch };

std::string_view norm_name(NormKind kind);
/// "batch" or "group"; throws ContractError otherwise.
NormKind parse_norm(std::string_view name);

/// GroupNorm (up to 8 groups dividing `channels`) or BatchNorm2d.
torch::nn::AnyModule make_norm(NormKind kind, int channels);

/// conv3x3-norm-ReLU-conv3x3-norm plus a (projected when shapes change) skip, then ReLU.
class ResidualBlockImpl : public torch::nn::Module {
 public:
  ResidualBlockImpl(int in_channels, int out_channels, int stride = 1, NormKind norm = NormKind::Group);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, skip_{nullptr};
  torch::nn::AnyModule norm1_, norm2_, skip_norm_;
};
TORCH_MODULE(ResidualBlock);

/// elu(feature(x)) * sigmoid(gate(x)), both 3x3 convolutions.
class GatedConvImpl : public torch::nn::Module {
 public:
  GatedConvImpl(int in_channels, int out_channels);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d feature{nullptr};
  torch::nn::Conv2d gate{nullptr};
};
TORCH_MODULE(GatedConv);

/// GroupNorm with up to 8 groups that divide `channels`.
torch::nn::GroupNorm make_group_norm(int channels);

struct BackboneConfig {
  std::array<int, 4> widths = {16, 32, 64, 128};
  int input_size = 64;
  int fusion_width = 32;
  int coeff_dim = CoeffLayout::toy().total();
  bool gated = true;
  NormKind norm = NormKind::Batch;
  std::uint64_t init_seed = 1;

  /// Wider stages for the full 237/257-entry layouts; not exercised at desk scale.
  static BackboneConfig full(const CoeffLayout& layout);
  void validate() const;
};

struct SegReconOutput {
  torch::Tensor mask;    // [B,1,H,W], probabilities clamped to [1e-7, 1 - 1e-7]
  torch::Tensor coeffs;  // [B, coeff_dim]
};

/// Four residual stages on a stride-2 stem. The occlusion head fuses stages 1-3
/// at stage-1 resolution; the coefficient head runs a gated convolution before
/// stage 4, then global average pooling and a linear layer.
class SegReconNetImpl : public torch::nn::Module {
 public:
  explicit SegReconNetImpl(const BackboneConfig& config);
  /// image: [B,3,S,S] with S = config.input_size.
  SegReconOutput forward(const torch::Tensor& image);

  const BackboneConfig& config() const noexcept { return config_; }
  GatedConv gated_conv() const { return gated_; }

 private:
  BackboneConfig config_;
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::AnyModule stem_norm_;
  ResidualBlock stage1_{nullptr}, stage2_{nullptr}, stage3_{nullptr}, stage4_{nullptr};
  torch::nn::Conv2d fuse_{nullptr}, seg_out_{nullptr};
  GatedConv gated_{nullptr};
  torch::nn::Linear coeff_head_{nullptr};
};
TORCH_MODULE(SegReconNet);

}  // namespace demask
