#include "demask/nn/embedder.hpp"

#include <torch/script.h>

#include "demask/errors.hpp"
#include "demask/nn/face_renderer.hpp"
#include "demask/nn/seg_recon_net.hpp"

namespace demask {

torch::Tensor normalize_rows(const torch::Tensor& features) {
  const auto norms = features.norm(2, 1, true);
  if ((norms == 0).any().item<bool>()) {
    throw ContractError("identity feature has zero length");
  }
  return features / norms;
}

struct ToyEmbedder::Net : torch::nn::Module {
  explicit Net(int dim) {
    auto opts = [](int in, int out) { return torch::nn::Conv2dOptions(in, out, 3).stride(2).padding(1); };
    c1 = register_module("c1", torch::nn::Conv2d(opts(3, 16)));
    c2 = register_module("c2", torch::nn::Conv2d(opts(16, 32)));
    c3 = register_module("c3", torch::nn::Conv2d(opts(32, 64)));
    fc = register_module("fc", torch::nn::Linear(64, dim));
  }
  torch::Tensor forward(torch::Tensor x) {
    x = torch::relu(c1(x - 0.5));
    x = torch::relu(c2(x));
    x = torch::relu(c3(x));
    return fc(x.mean({2, 3}));
  }
  torch::nn::Conv2d c1{nullptr}, c2{nullptr}, c3{nullptr};
  torch::nn::Linear fc{nullptr};
};

ToyEmbedder::ToyEmbedder(std::uint64_t seed, int dim) : net_(std::make_shared<Net>(dim)), seed_(seed), dim_(dim) {
  init_parameters(*net_, seed);
  for (auto& p : net_->parameters()) {
    p.set_requires_grad(false);
  }
  net_->eval();
}

torch::Tensor ToyEmbedder::embed(const torch::Tensor& images) const {
  if (images.dim() != 4 || images.size(1) != 3) {
    throw DimensionError("embedder expects [B,3,H,W], got " + c10::str(images.sizes()));
  }
  return normalize_rows(net_->forward(images.to(torch::kFloat32)));
}

std::string ToyEmbedder::name() const { return "toy-frozen-random(seed=" + std::to_string(seed_) + ")"; }

struct ScriptedEmbedder::Impl {
  mutable torch::jit::script::Module module;
  std::string path;
  int dim = -1;
};

ScriptedEmbedder::ScriptedEmbedder(const std::filesystem::path& path) : impl_(std::make_shared<Impl>()) {
  try {
    impl_->module = torch::jit::load(path.string());
  } catch (const c10::Error& e) {
    throw FormatError("cannot load embedder " + path.string() + ": " + e.what_without_backtrace());
  }
  impl_->module.eval();
  impl_->path = path.string();
}

torch::Tensor ScriptedEmbedder::embed(const torch::Tensor& images) const {
  if (images.dim() != 4 || images.size(1) != 3) {
    throw DimensionError("embedder expects [B,3,H,W], got " + c10::str(images.sizes()));
  }
  auto out = impl_->module.forward({images.to(torch::kFloat32)}).toTensor();
  if (out.dim() != 2 || out.size(0) != images.size(0)) {
    throw FormatError("scripted embedder returned " + c10::str(out.sizes()) + ", expected [B,d]");
  }
  impl_->dim = static_cast<int>(out.size(1));
  return normalize_rows(out);
}

std::string ScriptedEmbedder::name() const { return "external(" + impl_->path + ")"; }

int ScriptedEmbedder::dim() const { return impl_->dim; }

double cos_id(const Image& a, const Image& b, const IdentityEmbedder& embedder) {
  torch::NoGradGuard no_grad;
  const auto f = embedder.embed(torch::stack({image_to_tensor(a), image_to_tensor(b)})).to(torch::kFloat64);
  return (f[0] * f[1]).sum().item<double>();
}

Eigen::MatrixXd embed_images(const std::vector<Image>& images, const IdentityEmbedder& embedder, int batch_size) {
  torch::NoGradGuard no_grad;
  std::vector<torch::Tensor> rows;
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(images.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const Image*> chunk;
    for (std::size_t i = start; i < end; ++i) {
      chunk.push_back(&images[i]);
    }
    rows.push_back(embedder.embed(stack_images(chunk)).to(torch::kFloat64));
  }
  if (rows.empty()) {
    return {};
  }
  const auto all = torch::cat(rows).contiguous();
  Eigen::MatrixXd out(all.size(0), all.size(1));
  const double* p = all.data_ptr<double>();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      out(r, c) = p[r * out.cols() + c];
    }
  }
  return out;
}

}  // namespace demask
