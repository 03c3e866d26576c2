#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "demask/nn/embedder.hpp"
#include "demask/nn/inpaint_net.hpp"
#include "demask/nn/losses.hpp"
#include "demask/nn/pipeline.hpp"
#include "demask/nn/seg_recon_net.hpp"

namespace demask {

enum class Stage { Recon, Inpaint };

struct TrainConfig {
  Stage stage = Stage::Recon;
  std::int64_t total_steps = 2000;
  int batch_size = 8;
  double lr_initial = 1e-4;
  double lr_after_midpoint = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;  // 0: only the final checkpoint
  int image_size = 64;

  // stage 1
  double ohem_keep = 0.25;
  int ohem_min_keep = 16;
  losses::Recon3dWeights recon_weights;
  std::array<int, 4> backbone_widths = {16, 32, 64, 128};
  NormKind backbone_norm = NormKind::Batch;

  // stage 2
  losses::GeneratorWeights generator_weights;
  double r1_weight = 1.0;
  bool use_discriminator = true;
  bool predicted_condition = true;  // false: condition on ground-truth mask and coefficients
  int generator_width = 32;
  int generator_blocks = 6;
  std::array<int, 4> discriminator_widths = {32, 64, 128, 128};

  /// Full-scale schedule: 500k (recon) / 200k (inpaint) steps, batch 8, 1e-4 -> 1e-5.
  static TrainConfig full_scale(Stage stage);
  /// 2000 steps at 64x64 with the single-core learning rates.
  static TrainConfig desk(Stage stage);

  void validate() const;
  /// Sets one field from its config-file key; throws ContractError for unknown
  /// keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// "key = value" lines for every field, in a fixed order.
  std::string to_text() const;
  /// Applies "key = value" lines (blank lines and '#' comments allowed) on top of `base`.
  static TrainConfig parse(const std::string& text, TrainConfig base);
  static TrainConfig load(const std::filesystem::path& path, TrainConfig base);
  static std::vector<std::string> keys();

  BackboneConfig backbone(const CoeffLayout& layout) const;
  GeneratorConfig generator() const;
  DiscriminatorConfig discriminator() const;
};

std::string_view stage_name(Stage stage);

/// lr_initial for step < floor(total_steps / 2), else lr_after_midpoint.
/// Throws ContractError for step outside [0, total_steps).
double lr_at(std::int64_t step, const TrainConfig& config);

/// Per-step loss components.
class LossHistory {
 public:
  struct Entry {
    std::int64_t step;
    std::string component;
    double value;
  };

  void record(std::int64_t step, const std::string& component, double value);
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  /// Values of one component in step order.
  std::vector<double> series(const std::string& component) const;
  /// Mean of a component over steps in [begin, end).
  double window_mean(const std::string& component, std::int64_t begin, std::int64_t end) const;
  /// Drops entries with step >= `step`.
  void truncate(std::int64_t step);

  /// "step,component,value" header plus one row per entry; values printed with
  /// 17 significant digits so the CSV round-trips exactly.
  std::string to_csv() const;
  static LossHistory from_csv(const std::string& text);
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<Entry> entries_;
};

using StepCallback = std::function<void(std::int64_t step, const LossHistory& history)>;

/// Stage 1: trains the seg-recon net on pairs synthesised on the fly.
class ReconTrainer {
 public:
  ReconTrainer(TrainConfig config, SynthAssets assets, std::shared_ptr<const IdentityEmbedder> embedder);

  /// Trains until `until_step` (default: total_steps). Writes a checkpoint every
  /// checkpoint_every steps and at the end when a checkpoint directory is set.
  /// Throws NonFiniteError naming the step and every component on a bad loss.
  void run(std::int64_t until_step = -1, const StepCallback& on_step = {});

  /// Loss components on one batch without updating anything.
  losses::Recon3dTerms<torch::Tensor> compute_losses(const Batch& batch);

  void set_checkpoint_dir(std::filesystem::path dir) { checkpoint_dir_ = std::move(dir); }
  void save(const std::filesystem::path& path) const;
  /// Restores parameters, optimizer moments, step and history.
  void resume(const std::filesystem::path& path);

  std::int64_t step() const noexcept { return step_; }
  const LossHistory& history() const noexcept { return history_; }
  const TrainConfig& config() const noexcept { return config_; }
  SegReconNet net() const { return net_; }
  const TorchFaceModel& face_model() const noexcept { return face_; }

 private:
  void train_step();

  TrainConfig config_;
  SynthAssets assets_;
  std::shared_ptr<const IdentityEmbedder> embedder_;
  TorchFaceModel face_;
  SegReconNet net_;
  std::unique_ptr<torch::optim::Adam> optimizer_;
  torch::Tensor landmark_weights_;
  LossHistory history_;
  std::int64_t step_ = 0;
  std::filesystem::path checkpoint_dir_;
};

/// Stage 2: one discriminator update then one generator update per step, with
/// the seg-recon net frozen.
class InpaintTrainer {
 public:
  InpaintTrainer(TrainConfig config, SynthAssets assets, SegReconNet frozen,
                 std::shared_ptr<const IdentityEmbedder> embedder);

  void run(std::int64_t until_step = -1, const StepCallback& on_step = {});

  /// Conditioning for a batch of pairs (predicted or ground truth per config).
  Conditioning condition(const Batch& batch, const std::vector<std::uint64_t>& noise_seeds);

  void set_checkpoint_dir(std::filesystem::path dir) { checkpoint_dir_ = std::move(dir); }
  void save(const std::filesystem::path& path) const;
  void resume(const std::filesystem::path& path);

  std::int64_t step() const noexcept { return step_; }
  const LossHistory& history() const noexcept { return history_; }
  const TrainConfig& config() const noexcept { return config_; }
  Generator generator() const { return generator_; }
  Discriminator discriminator() const { return discriminator_; }
  SegReconNet frozen_net() const { return frozen_; }

 private:
  void train_step();

  TrainConfig config_;
  SynthAssets assets_;
  std::shared_ptr<const IdentityEmbedder> embedder_;
  TorchFaceModel face_;
  SegReconNet frozen_;
  Generator generator_{nullptr};
  Discriminator discriminator_{nullptr};
  std::unique_ptr<torch::optim::Adam> g_optimizer_;
  std::unique_ptr<torch::optim::Adam> d_optimizer_;
  LossHistory history_;
  std::int64_t step_ = 0;
  std::filesystem::path checkpoint_dir_;
};

/// Writes / reads a standalone seg-recon checkpoint (the form ReconTrainer::save emits).
void save_seg_recon(const std::filesystem::path& path, const SegReconNet& net, const CoeffLayout& layout);
/// Throws FormatError when the stored layout differs from `layout`.
SegReconNet load_seg_recon(const std::filesystem::path& path, const CoeffLayout& layout);
Generator load_generator(const std::filesystem::path& path);

}  // namespace demask
