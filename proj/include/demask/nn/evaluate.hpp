#pragma once

#include <functional>
#include <string>
#include <vector>

#include "demask/mask_synth.hpp"
#include "demask/metrics.hpp"
#include "demask/nn/embedder.hpp"
#include "demask/nn/pipeline.hpp"

namespace demask {

/// Produces the mask-free estimate for one test pair.
using RemovalFn = std::function<Image(const TrainingPair&)>;

/// Returns the clean image (oracle).
RemovalFn identity_pipeline();
/// Returns the masked input unchanged.
RemovalFn input_pipeline();
/// Runs the trained pipeline; noise seed per pair derived from `seed` and its index.
RemovalFn model_pipeline(const MaskRemovalPipeline& pipeline, std::uint64_t seed);

/// Runs `fn` on every pair and aggregates L1, PSNR, SSIM and Cos-ID (means over
/// successful samples) plus FID between output and clean feature sets. A sample
/// whose pipeline throws is counted in `failures` and left out.
MetricsReport evaluate(const std::vector<TrainingPair>& testset, const RemovalFn& fn,
                       const IdentityEmbedder& embedder);

/// |a & b| / |a | b| on {0,1} maps; 1 when both are empty.
double mask_iou(const Image& predicted, const Image& truth);

struct ReconEval {
  double mean_iou = 0.0;
  double mean_coef_loss = 0.0;
};

/// Binarized m-hat IoU and coef_loss on held-out pairs.
ReconEval evaluate_recon(SegReconNet& net, const std::vector<TrainingPair>& pairs, int batch_size = 25);

struct InpaintEval {
  double pix_loss = 0.0;         // mean |G - I| over all pixels of masked inputs
  double off_mask_l1 = 0.0;      // same, restricted to pixels where the true mask is 0
  double mask_free_l1 = 0.0;     // mean |G - I| when the clean image itself is the input
};

/// Generator quality on held-out pairs, conditioned like training (`predicted`
/// selects the frozen net's mask and coefficients over the ground truth).
InpaintEval evaluate_inpaint(SegReconNet& net, Generator& generator, const TorchFaceModel& face,
                             const std::vector<TrainingPair>& pairs, std::uint64_t noise_seed, bool predicted = true,
                             int batch_size = 25);

}  // namespace demask
