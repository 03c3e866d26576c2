#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <Eigen/Core>
#include <torch/torch.h>

#include "demask/image.hpp"

namespace demask {

/// Maps images to unit-norm identity features. Implementations are frozen and
/// deterministic; gradients still flow back to the input images.
class IdentityEmbedder {
 public:
  virtual ~IdentityEmbedder() = default;
  /// [B,3,H,W] in [0,1] -> [B,dim], every row of unit length.
  virtual torch::Tensor embed(const torch::Tensor& images) const = 0;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;
};

/// Small randomly initialised conv encoder (3-16-32-64, stride 2, average pool,
/// linear to `dim`) with fixed seed and frozen weights.
class ToyEmbedder : public IdentityEmbedder {
 public:
  explicit ToyEmbedder(std::uint64_t seed = 4242, int dim = 64);
  torch::Tensor embed(const torch::Tensor& images) const override;
  std::string name() const override;
  int dim() const override { return dim_; }

 private:
  struct Net;
  std::shared_ptr<Net> net_;
  std::uint64_t seed_;
  int dim_;
};

/// TorchScript module taking [B,3,H,W] and returning [B,d]; outputs are re-normalised.
class ScriptedEmbedder : public IdentityEmbedder {
 public:
  explicit ScriptedEmbedder(const std::filesystem::path& path);
  torch::Tensor embed(const torch::Tensor& images) const override;
  std::string name() const override;
  int dim() const override;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

/// Rows scaled to unit length; throws ContractError on a zero row.
torch::Tensor normalize_rows(const torch::Tensor& features);

/// Cosine similarity of the two images' identity features.
double cos_id(const Image& a, const Image& b, const IdentityEmbedder& embedder);

/// Embeds a list of images in batches, returning an N x dim matrix in double.
Eigen::MatrixXd embed_images(const std::vector<Image>& images, const IdentityEmbedder& embedder,
                             int batch_size = 32);

}  // namespace demask
