#pragma once

// Conversions between library types and the plain buffers the oracles take.

#include <vector>

#include <torch/torch.h>

#include "oracles.hpp"

namespace support {

/// [B, ...] tensor -> one flattened row per sample.
inline oracle::Batch rows(const torch::Tensor& t) {
  const auto c = t.to(torch::kFloat64).contiguous().reshape({t.size(0), -1});
  oracle::Batch out(static_cast<std::size_t>(c.size(0)));
  for (int64_t b = 0; b < c.size(0); ++b) {
    const auto* p = c[b].data_ptr<double>();
    out[static_cast<std::size_t>(b)].assign(p, p + c.size(1));
  }
  return out;
}

inline std::vector<double> flat(const torch::Tensor& t) {
  const auto c = t.to(torch::kFloat64).contiguous().reshape({-1});
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

inline torch::Tensor from(const std::vector<double>& v, torch::IntArrayRef shape) {
  return torch::tensor(v, torch::kFloat64).reshape(shape);
}

/// Analytic gradient of a scalar function of one tensor.
template <typename F>
std::vector<double> analytic_gradient(F&& f, const std::vector<double>& x, torch::IntArrayRef shape) {
  auto t = from(x, shape).requires_grad_(true);
  f(t).backward();
  return flat(t.grad());
}

}  // namespace support
