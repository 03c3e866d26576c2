#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

#include "demask/mask_synth.hpp"
#include "demask/morphable_model.hpp"
#include "demask/nn/face_renderer.hpp"
#include "demask/nn/inpaint_net.hpp"
#include "demask/nn/seg_recon_net.hpp"

namespace demask {

/// Everything make_pair needs.
struct SynthAssets {
  MorphableBasis basis;
  Camera camera;
  std::vector<MaskTemplate> templates;
  std::vector<TexturePatch> patches;
  SynthOptions options;

  /// Toy basis, canonical camera at `image_size`, procedural templates and patches.
  static SynthAssets procedural(int image_size = 64);
  /// basis.mfb, templates/ and patches/ as written by `demask gen-assets`.
  static SynthAssets load(const std::filesystem::path& dir, int image_size = 64);
  void save(const std::filesystem::path& dir) const;
};

/// Seed streams so training, held-out and noise draws never overlap.
enum class SeedStream : std::uint64_t { Train = 1, Heldout = 2, Noise = 3, Synth = 4 };

/// Pair `index` of a stream: make_pair(..., derive_seed(seed, stream, index)).
TrainingPair synth_pair(const SynthAssets& assets, std::uint64_t seed, SeedStream stream, std::uint64_t index);
std::vector<TrainingPair> synth_pairs(const SynthAssets& assets, std::uint64_t seed, SeedStream stream,
                                      std::uint64_t first, int count);

struct Batch {
  torch::Tensor clean;      // [B,3,H,W]
  torch::Tensor masked;     // [B,3,H,W]
  torch::Tensor mask;       // [B,1,H,W]
  torch::Tensor region;     // [B,1,H,W]
  torch::Tensor coeffs;     // [B,N]
  torch::Tensor landmarks;  // [B,68,2]
};
Batch collate(const std::vector<TrainingPair>& pairs);

/// (prob > threshold) as 0/1 floats.
torch::Tensor binarize_probability(const torch::Tensor& prob, double threshold = 0.5);

/// noise_fill per sample with its own seed; masked [B,3,H,W], mask [B,1,H,W].
torch::Tensor noise_fill_batch(const torch::Tensor& masked, const torch::Tensor& mask,
                               const std::vector<std::uint64_t>& seeds);

/// Generator conditioning for a batch.
struct Conditioning {
  torch::Tensor mask_prob;  // [B,1,H,W]
  torch::Tensor mask;       // [B,1,H,W], binarized
  torch::Tensor coeffs;     // [B,N]
  torch::Tensor prior;      // [B,3,H,W], rendered I_3D
  torch::Tensor noisy;      // [B,3,H,W], I_n
};

/// Runs the (frozen) seg-recon net without gradients and renders its coefficients.
Conditioning predict_conditioning(SegReconNet& net, const TorchFaceModel& face, const torch::Tensor& masked,
                                  const std::vector<std::uint64_t>& noise_seeds);

/// Single-image inference: m-hat, c-hat, I_3D, I_n and the generator output. The
/// returned `output` takes the generator's pixels inside the binarized mask and the
/// input pixels elsewhere; `raw` is the generator output before compositing.
class MaskRemovalPipeline {
 public:
  MaskRemovalPipeline(SegReconNet net, Generator generator, const MorphableBasis& basis, const Camera& camera);

  struct Result {
    Image input;
    Image mask_prob;  // 1 channel
    Image mask;       // 1 channel, {0,1}
    CoeffVector coeffs{CoeffLayout::toy()};
    Image prior;
    Image noisy;
    Image raw;
    Image output;
  };

  Result infer(const Image& image, std::uint64_t noise_seed) const;
  /// Re-renders with `coeffs` and re-runs the generator on the cached mask and noise of `base`.
  Result rerender(const Result& base, const CoeffVector& coeffs) const;

  const TorchFaceModel& face_model() const noexcept { return face_; }
  const CoeffLayout& layout() const noexcept { return face_.layout(); }

 private:
  Result generate(Result r) const;

  mutable SegReconNet net_;
  mutable Generator generator_;
  TorchFaceModel face_;
};

/// out = mask ? generated : input, per pixel (mask [B,1,H,W] of 0/1).
torch::Tensor composite_output(const torch::Tensor& generated, const torch::Tensor& input, const torch::Tensor& mask);

}  // namespace demask
