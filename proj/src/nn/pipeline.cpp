#include "demask/nn/pipeline.hpp"

#include "demask/errors.hpp"
#include "demask/random.hpp"
#include "demask/toy_model.hpp"

namespace demask {

SynthAssets SynthAssets::procedural(int image_size) {
  SynthAssets a;
  a.basis = make_toy_basis();
  a.camera = Camera::canonical(image_size);
  a.templates = procedural_templates();
  a.patches = procedural_patches();
  return a;
}

SynthAssets SynthAssets::load(const std::filesystem::path& dir, int image_size) {
  SynthAssets a;
  a.basis = load_basis(dir / "basis.mfb");
  a.camera = Camera::canonical(image_size);
  a.templates = load_templates(dir / "templates");
  a.patches = load_patches(dir / "patches");
  if (a.templates.empty() || a.patches.empty()) {
    throw FormatError(dir.string() + ": asset directory has no templates or no patches");
  }
  return a;
}

void SynthAssets::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  save_basis(dir / "basis.mfb", basis);
  save_templates(dir / "templates", templates);
  save_patches(dir / "patches", patches);
}

TrainingPair synth_pair(const SynthAssets& assets, std::uint64_t seed, SeedStream stream, std::uint64_t index) {
  return make_pair(assets.basis, assets.camera, assets.templates, assets.patches,
                   derive_seed(seed, static_cast<std::uint64_t>(stream), index), assets.options);
}

std::vector<TrainingPair> synth_pairs(const SynthAssets& assets, std::uint64_t seed, SeedStream stream,
                                      std::uint64_t first, int count) {
  std::vector<TrainingPair> pairs;
  pairs.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    pairs.push_back(synth_pair(assets, seed, stream, first + static_cast<std::uint64_t>(i)));
  }
  return pairs;
}

Batch collate(const std::vector<TrainingPair>& pairs) {
  if (pairs.empty()) {
    throw ContractError("cannot collate an empty batch");
  }
  std::vector<torch::Tensor> clean, masked, mask, region, coeffs, landmarks;
  for (const auto& p : pairs) {
    clean.push_back(image_to_tensor(p.clean));
    masked.push_back(image_to_tensor(p.masked));
    mask.push_back(image_to_tensor(p.mask));
    region.push_back(image_to_tensor(p.face_region));
    const auto& v = p.coeffs.values();
    coeffs.push_back(torch::from_blob(const_cast<double*>(v.data()), {v.size()}, torch::kFloat64).to(torch::kFloat32));
    landmarks.push_back(
        torch::from_blob(const_cast<double*>(p.landmarks.data()), {p.landmarks.rows(), 2}, torch::kFloat64)
            .to(torch::kFloat32));
  }
  return {torch::stack(clean), torch::stack(masked), torch::stack(mask),
          torch::stack(region), torch::stack(coeffs), torch::stack(landmarks)};
}

torch::Tensor binarize_probability(const torch::Tensor& prob, double threshold) {
  return (prob > threshold).to(prob.scalar_type());
}

torch::Tensor noise_fill_batch(const torch::Tensor& masked, const torch::Tensor& mask,
                               const std::vector<std::uint64_t>& seeds) {
  if (masked.size(0) != static_cast<std::int64_t>(seeds.size()) || mask.size(0) != masked.size(0)) {
    throw DimensionError("noise_fill_batch: need one seed and one mask per image");
  }
  std::vector<torch::Tensor> out;
  for (std::int64_t b = 0; b < masked.size(0); ++b) {
    const Image filled = noise_fill(tensor_to_image(masked[b]), tensor_to_image(mask[b]), seeds[b]);
    out.push_back(image_to_tensor(filled));
  }
  return torch::stack(out);
}

Conditioning predict_conditioning(SegReconNet& net, const TorchFaceModel& face, const torch::Tensor& masked,
                                  const std::vector<std::uint64_t>& noise_seeds) {
  torch::NoGradGuard no_grad;
  Conditioning c;
  const auto out = net->forward(masked);
  c.mask_prob = out.mask;
  c.mask = binarize_probability(out.mask);
  c.coeffs = out.coeffs;
  c.prior = face.render(out.coeffs).image.to(torch::kFloat32);
  c.noisy = noise_fill_batch(masked, c.mask, noise_seeds);
  return c;
}

torch::Tensor composite_output(const torch::Tensor& generated, const torch::Tensor& input, const torch::Tensor& mask) {
  return torch::where(mask > 0.5, generated, input);
}

MaskRemovalPipeline::MaskRemovalPipeline(SegReconNet net, Generator generator, const MorphableBasis& basis,
                                         const Camera& camera)
    : net_(std::move(net)), generator_(std::move(generator)), face_(basis, camera) {
  net_->eval();
  generator_->eval();
  if (net_->config().coeff_dim != face_.layout().total()) {
    throw FormatError("seg-recon net predicts " + std::to_string(net_->config().coeff_dim) +
                      " coefficients but the basis layout " + to_string(face_.layout()) + " needs " +
                      std::to_string(face_.layout().total()));
  }
}

MaskRemovalPipeline::Result MaskRemovalPipeline::infer(const Image& image, std::uint64_t noise_seed) const {
  const Camera& cam = face_.camera();
  if (image.width != cam.width || image.height != cam.height || image.channels != 3) {
    throw DimensionError("input must be " + std::to_string(cam.width) + "x" + std::to_string(cam.height) +
                         " RGB, got " + std::to_string(image.width) + "x" + std::to_string(image.height) + "x" +
                         std::to_string(image.channels));
  }
  const auto input = image_to_tensor(image).unsqueeze(0);
  const Conditioning c = predict_conditioning(net_, face_, input, {noise_seed});
  const auto coeffs = c.coeffs[0].to(torch::kFloat64).contiguous();
  Eigen::VectorXd values = Eigen::Map<const Eigen::VectorXd>(coeffs.data_ptr<double>(), coeffs.numel());
  Result r{image,
           tensor_to_image(c.mask_prob[0]),
           tensor_to_image(c.mask[0]),
           CoeffVector(layout(), values),
           tensor_to_image(c.prior[0]),
           tensor_to_image(c.noisy[0]),
           {},
           {}};
  return generate(std::move(r));
}

MaskRemovalPipeline::Result MaskRemovalPipeline::rerender(const Result& base, const CoeffVector& coeffs) const {
  if (!(coeffs.layout() == layout())) {
    throw DimensionError("coefficient layout " + to_string(coeffs.layout()) + " does not match " +
                         to_string(layout()));
  }
  Result r = base;
  r.coeffs = coeffs;
  if (!(coeffs == base.coeffs)) {
    torch::NoGradGuard no_grad;
    const auto& v = coeffs.values();
    const auto t = torch::from_blob(const_cast<double*>(v.data()), {1, v.size()}, torch::kFloat64)
                       .to(torch::kFloat32);
    r.prior = tensor_to_image(face_.render(t).image[0]);
  }
  return generate(std::move(r));
}

MaskRemovalPipeline::Result MaskRemovalPipeline::generate(Result r) const {
  torch::NoGradGuard no_grad;
  const auto mask = image_to_tensor(r.mask).unsqueeze(0);
  const auto raw = generator_->forward(mask, image_to_tensor(r.prior).unsqueeze(0), image_to_tensor(r.noisy).unsqueeze(0));
  r.raw = tensor_to_image(raw[0]);
  r.output = tensor_to_image(composite_output(raw, image_to_tensor(r.input).unsqueeze(0), mask)[0]);
  return r;
}

}  // namespace demask
