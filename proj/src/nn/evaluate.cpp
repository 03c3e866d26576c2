#include "demask/nn/evaluate.hpp"

#include "demask/errors.hpp"
#include "demask/nn/losses.hpp"
#include "demask/random.hpp"

namespace demask {
namespace {

std::vector<std::uint64_t> noise_seeds(std::uint64_t seed, std::size_t first, std::size_t count) {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(derive_seed(seed, static_cast<std::uint64_t>(SeedStream::Noise), first + i));
  }
  return out;
}

template <typename Fn>
void for_chunks(const std::vector<TrainingPair>& pairs, int batch_size, Fn fn) {
  for (std::size_t start = 0; start < pairs.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(pairs.size(), start + static_cast<std::size_t>(batch_size));
    fn(start, std::vector<TrainingPair>(pairs.begin() + start, pairs.begin() + end));
  }
}

}  // namespace

RemovalFn identity_pipeline() {
  return [](const TrainingPair& p) { return p.clean; };
}

RemovalFn input_pipeline() {
  return [](const TrainingPair& p) { return p.masked; };
}

RemovalFn model_pipeline(const MaskRemovalPipeline& pipeline, std::uint64_t seed) {
  auto counter = std::make_shared<std::uint64_t>(0);
  return [&pipeline, seed, counter](const TrainingPair& p) {
    const auto noise = derive_seed(seed, static_cast<std::uint64_t>(SeedStream::Noise), (*counter)++);
    return pipeline.infer(p.masked, noise).output;
  };
}

MetricsReport evaluate(const std::vector<TrainingPair>& testset, const RemovalFn& fn,
                       const IdentityEmbedder& embedder) {
  if (testset.empty()) {
    throw ContractError("evaluate needs a non-empty test set");
  }
  MetricsReport report;
  report.extractor = embedder.name();
  std::vector<Image> outputs;
  std::vector<Image> cleans;
  double l1 = 0.0, psnr_sum = 0.0, ssim_sum = 0.0, cos_sum = 0.0;
  for (const auto& pair : testset) {
    Image out;
    try {
      out = fn(pair);
      if (!out.same_shape(pair.clean)) {
        throw DimensionError("pipeline output shape differs from the clean image");
      }
    } catch (const std::exception&) {
      ++report.failures;
      continue;
    }
    l1 += mean_absolute_error(out, pair.clean);
    psnr_sum += psnr(out, pair.clean);
    ssim_sum += ssim(out, pair.clean);
    cos_sum += cos_id(out, pair.clean, embedder);
    outputs.push_back(std::move(out));
    cleans.push_back(pair.clean);
  }
  const std::size_t n = outputs.size();
  if (n == 0) {
    return report;
  }
  const double dn = static_cast<double>(n);
  report.l1 = {l1 / dn, n};
  report.psnr = {psnr_sum / dn, n};
  report.ssim = {ssim_sum / dn, n};
  report.cos_id = {cos_sum / dn, n};
  if (n >= 2) {
    const FidResult f = frechet_distance(embed_images(outputs, embedder), embed_images(cleans, embedder));
    report.fid = {f.value, n};
    report.fid_clipped = f.clipped;
  }
  return report;
}

double mask_iou(const Image& predicted, const Image& truth) {
  if (!predicted.same_shape(truth) || predicted.channels != 1) {
    throw DimensionError("mask_iou needs two single-channel maps of equal size");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < predicted.data.size(); ++i) {
    const bool a = predicted.data[i] > 0.5f;
    const bool b = truth.data[i] > 0.5f;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

ReconEval evaluate_recon(SegReconNet& net, const std::vector<TrainingPair>& pairs, int batch_size) {
  if (pairs.empty()) {
    throw ContractError("evaluate_recon needs pairs");
  }
  torch::NoGradGuard no_grad;
  net->eval();
  ReconEval e;
  for_chunks(pairs, batch_size, [&](std::size_t, const std::vector<TrainingPair>& chunk) {
    const Batch b = collate(chunk);
    const auto out = net->forward(b.masked);
    const auto bin = binarize_probability(out.mask);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto idx = static_cast<std::int64_t>(i);
      e.mean_iou += mask_iou(tensor_to_image(bin[idx]), chunk[i].mask);
      e.mean_coef_loss += losses::coef_loss(out.coeffs[idx], b.coeffs[idx]).item<double>();
    }
  });
  e.mean_iou /= static_cast<double>(pairs.size());
  e.mean_coef_loss /= static_cast<double>(pairs.size());
  return e;
}

InpaintEval evaluate_inpaint(SegReconNet& net, Generator& generator, const TorchFaceModel& face,
                             const std::vector<TrainingPair>& pairs, std::uint64_t noise_seed, bool predicted,
                             int batch_size) {
  if (pairs.empty()) {
    throw ContractError("evaluate_inpaint needs pairs");
  }
  torch::NoGradGuard no_grad;
  net->eval();
  generator->eval();
  double pix = 0.0, off_sum = 0.0, off_count = 0.0, free_sum = 0.0;
  for_chunks(pairs, batch_size, [&](std::size_t start, const std::vector<TrainingPair>& chunk) {
    const Batch b = collate(chunk);
    const auto seeds = noise_seeds(noise_seed, start, chunk.size());
    Conditioning c;
    if (predicted) {
      c = predict_conditioning(net, face, b.masked, seeds);
    } else {
      c.mask = b.mask;
      c.prior = face.render(b.coeffs).image;
      c.noisy = noise_fill_batch(b.masked, b.mask, seeds);
    }
    const auto out = generator->forward(c.mask, c.prior, c.noisy);
    const auto err = (out - b.clean).abs();
    pix += err.mean({1, 2, 3}).sum().item<double>();
    const auto off = 1.0 - b.mask;
    off_sum += (err * off).sum().item<double>();
    off_count += off.sum().item<double>() * 3.0;

    // mask-free baseline: the clean face as input, conditioned the same way
    Conditioning f;
    if (predicted) {
      f = predict_conditioning(net, face, b.clean, seeds);
    } else {
      f.mask = torch::zeros_like(b.mask);
      f.prior = face.render(b.coeffs).image;
      f.noisy = b.clean;
    }
    const auto free_out = generator->forward(f.mask, f.prior, f.noisy);
    free_sum += (free_out - b.clean).abs().mean({1, 2, 3}).sum().item<double>();
  });
  const double n = static_cast<double>(pairs.size());
  return {pix / n, off_count > 0 ? off_sum / off_count : 0.0, free_sum / n};
}

}  // namespace demask
