#pragma once

#include <torch/torch.h>

#include "demask/image.hpp"
#include "demask/morphable_model.hpp"

namespace demask {

/// Batched torch mirror of reconstruct_mesh / pose_and_project / sh_shade / rasterize.
///
/// Visibility (which triangle covers which pixel) comes from the CPU rasterizer on
/// detached vertices; barycentric weights are then recomputed in torch from the
/// projected vertex positions, so colours carry gradients to every coefficient group
/// through albedo, shading and geometry. Coverage itself is not differentiable.
class TorchFaceModel {
 public:
  TorchFaceModel(const MorphableBasis& basis, const Camera& cam, torch::Dtype dtype = torch::kFloat32);

  struct Output {
    torch::Tensor image;      // [B,3,H,W]
    torch::Tensor coverage;   // [B,1,H,W], {0,1}
    torch::Tensor landmarks;  // [B,68,2], pixels
  };

  /// coeffs: [B, layout.total()]
  Output render(const torch::Tensor& coeffs) const;
  torch::Tensor landmarks(const torch::Tensor& coeffs) const;

  const CoeffLayout& layout() const noexcept { return layout_; }
  const Camera& camera() const noexcept { return cam_; }
  const MorphableBasis& basis() const noexcept { return basis_; }

  /// Smallest camera depth a posed vertex may take; predictions that push the face
  /// behind this plane are clamped rather than rejected.
  static constexpr double kMinDepth = 0.5;

 private:
  struct Posed {
    torch::Tensor camera_vertices;  // [B,V,3]
    torch::Tensor xy;               // [B,V,2]
    torch::Tensor albedo;           // [B,V,3]
  };
  Posed pose(const torch::Tensor& coeffs) const;
  torch::Tensor project(const torch::Tensor& camera_vertices) const;

  MorphableBasis basis_;
  Camera cam_;
  CoeffLayout layout_;
  torch::Dtype dtype_;
  torch::Tensor mean_shape_, shape_basis_, expr_basis_;  // [3V], [3V,d]
  torch::Tensor mean_texture_, texture_basis_;
  torch::Tensor triangles_;  // [T,3] int64
  torch::Tensor landmark_index_;  // [68] int64
};

/// Euler X-Y-Z rotation matrices for a batch of angle triples [B,3] -> [B,3,3].
torch::Tensor euler_xyz_batch(const torch::Tensor& angles);

/// HWC Image <-> [C,H,W] float tensor.
torch::Tensor image_to_tensor(const Image& image);
Image tensor_to_image(const torch::Tensor& chw);

/// Stacks images of equal shape into [B,C,H,W].
torch::Tensor stack_images(const std::vector<const Image*>& images);

}  // namespace demask
