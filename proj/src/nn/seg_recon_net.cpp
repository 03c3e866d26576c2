#include "demask/nn/seg_recon_net.hpp"

#include <cmath>

#include <ATen/CPUGeneratorImpl.h>

#include "demask/errors.hpp"
#include "demask/nn/losses.hpp"

namespace demask {
namespace {

namespace F = torch::nn::functional;

torch::nn::Conv2d conv(int in, int out, int kernel, int stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, kernel).stride(stride).padding(kernel / 2));
}

void fill_uniform(torch::Tensor& t, double bound, at::Generator& gen) {
  t.uniform_(-bound, bound, gen);
}

}  // namespace

void init_parameters(torch::nn::Module& module, std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  for (const auto& child : module.modules(/*include_self=*/false)) {
    if (auto* c = child->as<torch::nn::Conv2d>()) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(c->weight[0].numel()));
      fill_uniform(c->weight, bound, gen);
      if (c->bias.defined()) {
        fill_uniform(c->bias, bound, gen);
      }
    } else if (auto* l = child->as<torch::nn::Linear>()) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(l->weight.size(1)));
      fill_uniform(l->weight, bound, gen);
      if (l->bias.defined()) {
        fill_uniform(l->bias, bound, gen);
      }
    } else if (auto* g = child->as<torch::nn::GroupNorm>()) {
      g->weight.fill_(1.0);
      g->bias.zero_();
    } else if (auto* bn = child->as<torch::nn::BatchNorm2d>()) {
      bn->weight.fill_(1.0);
      bn->bias.zero_();
    }
  }
}

std::uint64_t parameter_checksum(const torch::nn::Module& module) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const torch::Tensor& t) {
    const auto c = t.detach().contiguous();
    const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
    const auto n = static_cast<std::size_t>(c.numel()) * c.element_size();
    for (std::size_t i = 0; i < n; ++i) {
      h = (h ^ bytes[i]) * 1099511628211ull;
    }
  };
  for (const auto& p : module.parameters()) {
    mix(p);
  }
  for (const auto& b : module.buffers()) {
    mix(b);
  }
  return h;
}

torch::nn::GroupNorm make_group_norm(int channels) {
  int groups = 8;
  while (channels % groups != 0) {
    --groups;
  }
  return torch::nn::GroupNorm(torch::nn::GroupNormOptions(groups, channels));
}

std::string_view norm_name(NormKind kind) { return kind == NormKind::Batch ? "batch" : "group"; }

NormKind parse_norm(std::string_view name) {
  if (name == "batch") {
    return NormKind::Batch;
  }
  if (name == "group") {
    return NormKind::Group;
  }
  throw ContractError("norm: expected batch or group, got '" + std::string(name) + "'");
}

torch::nn::AnyModule make_norm(NormKind kind, int channels) {
  if (kind == NormKind::Batch) {
    return torch::nn::AnyModule(torch::nn::BatchNorm2d(channels));
  }
  return torch::nn::AnyModule(make_group_norm(channels));
}

ResidualBlockImpl::ResidualBlockImpl(int in_channels, int out_channels, int stride, NormKind norm) {
  conv1_ = register_module("conv1", conv(in_channels, out_channels, 3, stride));
  norm1_ = make_norm(norm, out_channels);
  register_module("norm1", norm1_.ptr());
  conv2_ = register_module("conv2", conv(out_channels, out_channels, 3));
  norm2_ = make_norm(norm, out_channels);
  register_module("norm2", norm2_.ptr());
  if (stride != 1 || in_channels != out_channels) {
    skip_ = register_module("skip", conv(in_channels, out_channels, 1, stride));
    skip_norm_ = make_norm(norm, out_channels);
    register_module("skip_norm", skip_norm_.ptr());
  }
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(norm1_.forward(conv1_(x)));
  y = norm2_.forward(conv2_(y));
  const auto shortcut = skip_ ? skip_norm_.forward(skip_(x)) : x;
  return torch::relu(y + shortcut);
}

GatedConvImpl::GatedConvImpl(int in_channels, int out_channels) {
  feature = register_module("feature", conv(in_channels, out_channels, 3));
  gate = register_module("gate", conv(in_channels, out_channels, 3));
}

torch::Tensor GatedConvImpl::forward(const torch::Tensor& x) {
  return torch::elu(feature(x)) * torch::sigmoid(gate(x));
}

BackboneConfig BackboneConfig::full(const CoeffLayout& layout) {
  BackboneConfig c;
  c.widths = {64, 128, 256, 512};
  c.input_size = 224;
  c.fusion_width = 64;
  c.coeff_dim = layout.total();
  return c;
}

void BackboneConfig::validate() const {
  for (int w : widths) {
    if (w <= 0) {
      throw ContractError("backbone widths must be positive");
    }
  }
  if (input_size < 16 || input_size % 16 != 0) {
    throw ContractError("backbone input size must be a positive multiple of 16, got " + std::to_string(input_size));
  }
  if (fusion_width <= 0 || coeff_dim <= 0) {
    throw ContractError("backbone fusion width and coefficient dim must be positive");
  }
}

SegReconNetImpl::SegReconNetImpl(const BackboneConfig& config) : config_(config) {
  config_.validate();
  const auto& w = config_.widths;
  stem_ = register_module("stem", conv(3, w[0], 3, 2));
  stem_norm_ = make_norm(config_.norm, w[0]);
  register_module("stem_norm", stem_norm_.ptr());
  stage1_ = register_module("stage1", ResidualBlock(w[0], w[0], 1, config_.norm));
  stage2_ = register_module("stage2", ResidualBlock(w[0], w[1], 2, config_.norm));
  stage3_ = register_module("stage3", ResidualBlock(w[1], w[2], 2, config_.norm));
  fuse_ = register_module("fuse", conv(w[0] + w[1] + w[2], config_.fusion_width, 1));
  seg_out_ = register_module("seg_out", conv(config_.fusion_width, 1, 1));
  if (config_.gated) {
    gated_ = register_module("gated", GatedConv(w[2], w[2]));
  }
  stage4_ = register_module("stage4", ResidualBlock(w[2], w[3], 2, config_.norm));
  coeff_head_ = register_module("coeff_head", torch::nn::Linear(w[3], config_.coeff_dim));
  init_parameters(*this, config_.init_seed);
  torch::NoGradGuard no_grad;
  coeff_head_->bias.zero_();
}

SegReconOutput SegReconNetImpl::forward(const torch::Tensor& image) {
  const int s = config_.input_size;
  if (image.dim() != 4 || image.size(1) != 3 || image.size(2) != s || image.size(3) != s) {
    throw DimensionError("seg-recon input must be [B,3," + std::to_string(s) + "," + std::to_string(s) + "], got " +
                         c10::str(image.sizes()));
  }
  const auto x0 = torch::relu(stem_norm_.forward(stem_(image)));
  const auto f1 = stage1_(x0);
  const auto f2 = stage2_(f1);
  const auto f3 = stage3_(f2);

  const std::vector<int64_t> mid = {f1.size(2), f1.size(3)};
  auto up = [&](const torch::Tensor& t) {
    return F::interpolate(t, F::InterpolateFuncOptions().size(mid).mode(torch::kBilinear).align_corners(false));
  };
  const auto fused = torch::relu(fuse_(torch::cat({f1, up(f2), up(f3)}, 1)));
  auto mask = torch::sigmoid(seg_out_(fused));
  mask = F::interpolate(mask, F::InterpolateFuncOptions()
                                  .size(std::vector<int64_t>{s, s})
                                  .mode(torch::kBilinear)
                                  .align_corners(false));

  auto g = config_.gated ? gated_(f3) : f3;
  const auto f4 = stage4_(g);
  const auto pooled = f4.mean({2, 3});
  return {losses::clamp_prob(mask), coeff_head_(pooled)};
}

}  // namespace demask
