#include "demask/nn/trainer.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "demask/errors.hpp"
#include "demask/nn/checkpoint.hpp"
#include "demask/random.hpp"
#include "demask/toy_model.hpp"

namespace demask {
namespace {

constexpr std::uint64_t kBackboneInitStream = 0xB0;
constexpr std::uint64_t kGeneratorInitStream = 0xB1;
constexpr std::uint64_t kDiscriminatorInitStream = 0xB2;

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) {
      throw std::invalid_argument(v);
    }
    return d;
  } catch (const std::exception&) {
    throw ContractError(key + ": expected a number, got '" + v + "'");
  }
}

std::int64_t parse_int(const std::string& key, const std::string& v) {
  std::int64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ContractError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ContractError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") {
    return true;
  }
  if (v == "false" || v == "0") {
    return false;
  }
  throw ContractError(key + ": expected true or false, got '" + v + "'");
}

std::array<int, 4> parse_widths(const std::string& key, const std::string& v) {
  std::array<int, 4> out{};
  std::istringstream in(v);
  std::string item;
  int i = 0;
  while (std::getline(in, item, ',')) {
    if (i == 4) {
      throw ContractError(key + ": expected 4 comma-separated widths, got '" + v + "'");
    }
    out[i++] = static_cast<int>(parse_int(key, trim(item)));
  }
  if (i != 4) {
    throw ContractError(key + ": expected 4 comma-separated widths, got '" + v + "'");
  }
  return out;
}

std::string format_widths(const std::array<int, 4>& w) {
  return std::to_string(w[0]) + "," + std::to_string(w[1]) + "," + std::to_string(w[2]) + "," + std::to_string(w[3]);
}

struct Field {
  const char* key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define DOUBLE_FIELD(name, member)                                                            \
  Field {                                                                                     \
    name, [](TrainConfig& c, const std::string& v) { c.member = parse_double(name, v); },    \
        [](const TrainConfig& c) { return format_double(c.member); }                          \
  }
#define INT_FIELD(name, member)                                                                               \
  Field {                                                                                                     \
    name, [](TrainConfig& c, const std::string& v) { c.member = static_cast<decltype(c.member)>(parse_int(name, v)); }, \
        [](const TrainConfig& c) { return std::to_string(c.member); }                                         \
  }
#define BOOL_FIELD(name, member)                                                           \
  Field {                                                                                  \
    name, [](TrainConfig& c, const std::string& v) { c.member = parse_bool(name, v); },   \
        [](const TrainConfig& c) { return std::string(c.member ? "true" : "false"); }      \
  }
#define WIDTHS_FIELD(name, member)                                                           \
  Field {                                                                                    \
    name, [](TrainConfig& c, const std::string& v) { c.member = parse_widths(name, v); },   \
        [](const TrainConfig& c) { return format_widths(c.member); }                         \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"stage",
            [](TrainConfig& c, const std::string& v) {
              if (v == "recon") {
                c.stage = Stage::Recon;
              } else if (v == "inpaint") {
                c.stage = Stage::Inpaint;
              } else {
                throw ContractError("stage: expected recon or inpaint, got '" + v + "'");
              }
            },
            [](const TrainConfig& c) { return std::string(stage_name(c.stage)); }},
      INT_FIELD("total_steps", total_steps),
      INT_FIELD("batch_size", batch_size),
      DOUBLE_FIELD("lr_initial", lr_initial),
      DOUBLE_FIELD("lr_after_midpoint", lr_after_midpoint),
      DOUBLE_FIELD("beta1", beta1),
      DOUBLE_FIELD("beta2", beta2),
      Field{"seed", [](TrainConfig& c, const std::string& v) { c.seed = parse_uint("seed", v); },
            [](const TrainConfig& c) { return std::to_string(c.seed); }},
      INT_FIELD("checkpoint_every", checkpoint_every),
      INT_FIELD("image_size", image_size),
      DOUBLE_FIELD("ohem_keep", ohem_keep),
      INT_FIELD("ohem_min_keep", ohem_min_keep),
      DOUBLE_FIELD("w_bce", recon_weights.bce),
      DOUBLE_FIELD("w_coef", recon_weights.coef),
      DOUBLE_FIELD("w_photo", recon_weights.photo),
      DOUBLE_FIELD("w_id", recon_weights.id),
      DOUBLE_FIELD("w_lm", recon_weights.lm),
      WIDTHS_FIELD("backbone_widths", backbone_widths),
      Field{"backbone_norm", [](TrainConfig& c, const std::string& v) { c.backbone_norm = parse_norm(v); },
            [](const TrainConfig& c) { return std::string(norm_name(c.backbone_norm)); }},
      DOUBLE_FIELD("w_pix", generator_weights.pix),
      DOUBLE_FIELD("w_gen_id", generator_weights.id),
      DOUBLE_FIELD("w_tv", generator_weights.tv),
      DOUBLE_FIELD("w_adv", generator_weights.adv),
      DOUBLE_FIELD("r1_weight", r1_weight),
      BOOL_FIELD("use_discriminator", use_discriminator),
      BOOL_FIELD("predicted_condition", predicted_condition),
      INT_FIELD("generator_width", generator_width),
      INT_FIELD("generator_blocks", generator_blocks),
      WIDTHS_FIELD("discriminator_widths", discriminator_widths),
  };
  return table;
}

#undef DOUBLE_FIELD
#undef INT_FIELD
#undef BOOL_FIELD
#undef WIDTHS_FIELD

void set_lr(torch::optim::Adam& opt, double lr) {
  for (auto& group : opt.param_groups()) {
    static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
  }
}

std::unique_ptr<torch::optim::Adam> make_adam(const std::vector<torch::Tensor>& params, const TrainConfig& c) {
  return std::make_unique<torch::optim::Adam>(
      params, torch::optim::AdamOptions(c.lr_initial).betas({c.beta1, c.beta2}).eps(1e-8).weight_decay(0.0));
}

std::vector<std::uint64_t> batch_seeds(std::uint64_t seed, SeedStream stream, std::int64_t step, int batch) {
  std::vector<std::uint64_t> out;
  for (int i = 0; i < batch; ++i) {
    out.push_back(derive_seed(seed, static_cast<std::uint64_t>(stream),
                              static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(batch) + i));
  }
  return out;
}

std::vector<TrainingPair> train_batch(const SynthAssets& assets, const TrainConfig& c, std::int64_t step) {
  return synth_pairs(assets, c.seed, SeedStream::Train,
                     static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(c.batch_size), c.batch_size);
}

std::string describe(const std::vector<std::pair<std::string, double>>& parts) {
  std::string s;
  for (const auto& [k, v] : parts) {
    s += (s.empty() ? "" : ", ") + k + "=" + format_double(v);
  }
  return s;
}

bool checkpoint_due(const TrainConfig& c, std::int64_t step) {
  return c.checkpoint_every > 0 && step % c.checkpoint_every == 0 && step < c.total_steps;
}

std::string step_name(const char* stem, std::int64_t step) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_step%07lld.ckpt", stem, static_cast<long long>(step));
  return buf;
}

void write_backbone_meta(CheckpointWriter& w, const BackboneConfig& b, const CoeffLayout& layout) {
  w.set("layout", to_string(layout));
  w.set("backbone_widths", format_widths(b.widths));
  w.set("input_size", std::to_string(b.input_size));
  w.set("fusion_width", std::to_string(b.fusion_width));
  w.set("coeff_dim", std::to_string(b.coeff_dim));
  w.set("gated", b.gated ? "true" : "false");
  w.set("norm", std::string(norm_name(b.norm)));
}

BackboneConfig read_backbone_meta(const CheckpointReader& r) {
  BackboneConfig b;
  b.widths = parse_widths("backbone_widths", r.get("backbone_widths"));
  b.input_size = static_cast<int>(parse_int("input_size", r.get("input_size")));
  b.fusion_width = static_cast<int>(parse_int("fusion_width", r.get("fusion_width")));
  b.coeff_dim = static_cast<int>(parse_int("coeff_dim", r.get("coeff_dim")));
  b.gated = parse_bool("gated", r.get("gated"));
  b.norm = parse_norm(r.get("norm"));
  return b;
}

}  // namespace

std::string_view stage_name(Stage stage) { return stage == Stage::Recon ? "recon" : "inpaint"; }

TrainConfig TrainConfig::full_scale(Stage stage) {
  TrainConfig c;
  c.stage = stage;
  c.total_steps = stage == Stage::Recon ? 500000 : 200000;
  c.batch_size = 8;
  c.lr_initial = 1e-4;
  c.lr_after_midpoint = 1e-5;
  return c;
}

TrainConfig TrainConfig::desk(Stage stage) {
  TrainConfig c;
  c.stage = stage;
  c.total_steps = 2000;
  c.batch_size = 8;
  c.lr_initial = 1e-3;
  c.lr_after_midpoint = 1e-4;
  return c;
}

void TrainConfig::validate() const {
  if (total_steps <= 0) {
    throw ContractError("total_steps must be positive");
  }
  if (batch_size <= 0) {
    throw ContractError("batch_size must be positive");
  }
  if (!(lr_initial > 0.0) || !(lr_after_midpoint > 0.0)) {
    throw ContractError("learning rates must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ContractError("betas must lie in [0, 1)");
  }
  if (checkpoint_every < 0) {
    throw ContractError("checkpoint_every must be >= 0");
  }
  if (image_size < 16 || image_size % 16 != 0) {
    throw ContractError("image_size must be a positive multiple of 16");
  }
  if (!(ohem_keep > 0.0 && ohem_keep <= 1.0)) {
    throw ContractError("ohem_keep must be in (0, 1]");
  }
  if (ohem_min_keep < 0 || r1_weight < 0.0) {
    throw ContractError("ohem_min_keep and r1_weight must be non-negative");
  }
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, trim(value));
      return;
    }
  }
  throw ContractError("unknown config key '" + key + "'");
}

std::string TrainConfig::to_text() const {
  std::string out;
  for (const auto& f : fields()) {
    out += std::string(f.key) + " = " + f.get(*this) + "\n";
  }
  return out;
}

TrainConfig TrainConfig::parse(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) {
      line.resize(hash);
    }
    line = trim(line);
    if (line.empty()) {
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ContractError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) {
    throw FormatError("cannot read config " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), std::move(base));
}

std::vector<std::string> TrainConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) {
    out.emplace_back(f.key);
  }
  return out;
}

BackboneConfig TrainConfig::backbone(const CoeffLayout& layout) const {
  BackboneConfig b;
  b.widths = backbone_widths;
  b.norm = backbone_norm;
  b.input_size = image_size;
  b.coeff_dim = layout.total();
  b.init_seed = derive_seed(seed, kBackboneInitStream);
  return b;
}

GeneratorConfig TrainConfig::generator() const {
  GeneratorConfig g;
  g.base_width = generator_width;
  g.residual_blocks = generator_blocks;
  g.init_seed = derive_seed(seed, kGeneratorInitStream);
  return g;
}

DiscriminatorConfig TrainConfig::discriminator() const {
  DiscriminatorConfig d;
  d.widths = discriminator_widths;
  d.input_size = image_size;
  d.init_seed = derive_seed(seed, kDiscriminatorInitStream);
  return d;
}

double lr_at(std::int64_t step, const TrainConfig& config) {
  if (step < 0 || step >= config.total_steps) {
    throw ContractError("step " + std::to_string(step) + " outside [0, " + std::to_string(config.total_steps) + ")");
  }
  return step < config.total_steps / 2 ? config.lr_initial : config.lr_after_midpoint;
}

void LossHistory::record(std::int64_t step, const std::string& component, double value) {
  entries_.push_back({step, component, value});
}

std::vector<double> LossHistory::series(const std::string& component) const {
  std::vector<double> out;
  for (const auto& e : entries_) {
    if (e.component == component) {
      out.push_back(e.value);
    }
  }
  return out;
}

double LossHistory::window_mean(const std::string& component, std::int64_t begin, std::int64_t end) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.component == component && e.step >= begin && e.step < end) {
      sum += e.value;
      ++n;
    }
  }
  if (n == 0) {
    throw EmptyRegionError("no '" + component + "' entries in steps [" + std::to_string(begin) + ", " +
                           std::to_string(end) + ")");
  }
  return sum / static_cast<double>(n);
}

void LossHistory::truncate(std::int64_t step) {
  std::erase_if(entries_, [step](const Entry& e) { return e.step >= step; });
}

std::string LossHistory::to_csv() const {
  std::string out = "step,component,value\n";
  char buf[64];
  for (const auto& e : entries_) {
    std::snprintf(buf, sizeof(buf), "%.17g", e.value);
    out += std::to_string(e.step) + "," + e.component + "," + buf + "\n";
  }
  return out;
}

LossHistory LossHistory::from_csv(const std::string& text) {
  LossHistory h;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "step,component,value") {
    throw FormatError("loss history must start with 'step,component,value'");
  }
  while (std::getline(in, line)) {
    if (trim(line).empty()) {
      continue;
    }
    const auto a = line.find(',');
    const auto b = line.find(',', a == std::string::npos ? a : a + 1);
    if (a == std::string::npos || b == std::string::npos) {
      throw FormatError("malformed loss history row: " + line);
    }
    h.record(parse_int("step", line.substr(0, a)), line.substr(a + 1, b - a - 1),
             parse_double("value", trim(line.substr(b + 1))));
  }
  return h;
}

void LossHistory::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw FormatError("cannot write " + path.string());
  }
  out << to_csv();
}

// ---------------------------------------------------------------- stage 1

ReconTrainer::ReconTrainer(TrainConfig config, SynthAssets assets, std::shared_ptr<const IdentityEmbedder> embedder)
    : config_(std::move(config)),
      assets_(std::move(assets)),
      embedder_(std::move(embedder)),
      face_(assets_.basis, assets_.camera),
      net_(config_.backbone(assets_.basis.layout())) {
  config_.validate();
  if (assets_.camera.width != config_.image_size || assets_.camera.height != config_.image_size) {
    throw ContractError("asset camera is " + std::to_string(assets_.camera.width) + "x" +
                        std::to_string(assets_.camera.height) + " but image_size is " +
                        std::to_string(config_.image_size));
  }
  if (!embedder_) {
    throw ContractError("recon trainer needs an identity embedder");
  }
  optimizer_ = make_adam(net_->parameters(), config_);
  const auto w = landmark_weights();
  landmark_weights_ = torch::tensor(std::vector<double>(w.begin(), w.end()), torch::kFloat32);
}

losses::Recon3dTerms<torch::Tensor> ReconTrainer::compute_losses(const Batch& batch) {
  const auto out = net_->forward(batch.masked);
  const auto rendered = face_.render(out.coeffs);
  losses::Recon3dTerms<torch::Tensor> t;
  t.bce = losses::bce_ohem(out.mask, batch.mask, config_.ohem_keep, config_.ohem_min_keep);
  t.coef = losses::coef_loss(out.coeffs, batch.coeffs);
  t.photo = losses::photo_loss(rendered.image, batch.clean, batch.region);
  t.id = losses::identity_loss(embedder_->embed(rendered.image), embedder_->embed(batch.clean));
  t.lm = losses::landmark_loss(rendered.landmarks, batch.landmarks, landmark_weights_);
  return t;
}

void ReconTrainer::train_step() {
  net_->train();
  const Batch batch = collate(train_batch(assets_, config_, step_));
  const auto t = compute_losses(batch);
  const std::vector<std::pair<std::string, double>> parts = {{"bce", t.bce.item<double>()},
                                                             {"coef", t.coef.item<double>()},
                                                             {"photo", t.photo.item<double>()},
                                                             {"id", t.id.item<double>()},
                                                             {"lm", t.lm.item<double>()}};
  torch::Tensor total;
  try {
    total = losses::total_3d_loss(t, config_.recon_weights);
  } catch (const NonFiniteError& e) {
    throw NonFiniteError("step " + std::to_string(step_) + ": " + e.what() + " [" + describe(parts) + "]");
  }
  optimizer_->zero_grad();
  total.backward();
  set_lr(*optimizer_, lr_at(step_, config_));
  optimizer_->step();
  for (const auto& [k, v] : parts) {
    history_.record(step_, k, v);
  }
  history_.record(step_, "total", total.item<double>());
  ++step_;
}

void ReconTrainer::run(std::int64_t until_step, const StepCallback& on_step) {
  const std::int64_t end = until_step < 0 ? config_.total_steps : std::min(until_step, config_.total_steps);
  while (step_ < end) {
    train_step();
    if (on_step) {
      on_step(step_, history_);
    }
    if (!checkpoint_dir_.empty() && checkpoint_due(config_, step_)) {
      save(checkpoint_dir_ / step_name("seg_recon", step_));
    }
  }
  if (!checkpoint_dir_.empty()) {
    save(checkpoint_dir_ / "seg_recon.ckpt");
    history_.save(checkpoint_dir_ / "recon_history.csv");
  }
}

void ReconTrainer::save(const std::filesystem::path& path) const {
  CheckpointWriter w("seg_recon");
  write_backbone_meta(w, net_->config(), assets_.basis.layout());
  w.set("step", std::to_string(step_));
  w.add_module("net", *net_);
  w.add_optimizer("adam", *optimizer_);
  w.add_text("config", config_.to_text());
  w.add_text("history", history_.to_csv());
  w.save(path);
}

void ReconTrainer::resume(const std::filesystem::path& path) {
  CheckpointReader r(path, "seg_recon");
  r.require("layout", to_string(assets_.basis.layout()));
  if (r.read_text("config") != config_.to_text()) {
    throw FormatError(path.string() + ": checkpoint was trained with a different config");
  }
  r.load_module("net", *net_);
  r.load_optimizer("adam", *optimizer_);
  step_ = parse_int("step", r.get("step"));
  history_ = LossHistory::from_csv(r.read_text("history"));
}

void save_seg_recon(const std::filesystem::path& path, const SegReconNet& net, const CoeffLayout& layout) {
  CheckpointWriter w("seg_recon");
  write_backbone_meta(w, net->config(), layout);
  w.set("step", "0");
  w.add_module("net", *net);
  w.save(path);
}

SegReconNet load_seg_recon(const std::filesystem::path& path, const CoeffLayout& layout) {
  CheckpointReader r(path, "seg_recon");
  r.require("layout", to_string(layout));
  SegReconNet net(read_backbone_meta(r));
  r.load_module("net", *net);
  net->eval();
  return net;
}

// ---------------------------------------------------------------- stage 2

InpaintTrainer::InpaintTrainer(TrainConfig config, SynthAssets assets, SegReconNet frozen,
                               std::shared_ptr<const IdentityEmbedder> embedder)
    : config_(std::move(config)),
      assets_(std::move(assets)),
      embedder_(std::move(embedder)),
      face_(assets_.basis, assets_.camera),
      frozen_(std::move(frozen)),
      generator_(config_.generator()) {
  config_.validate();
  if (assets_.camera.width != config_.image_size || assets_.camera.height != config_.image_size) {
    throw ContractError("asset camera size does not match image_size");
  }
  if (!embedder_) {
    throw ContractError("inpaint trainer needs an identity embedder");
  }
  if (frozen_->config().coeff_dim != assets_.basis.layout().total()) {
    throw FormatError("frozen seg-recon net does not match the basis layout " + to_string(assets_.basis.layout()));
  }
  frozen_->eval();
  for (auto& p : frozen_->parameters()) {
    p.set_requires_grad(false);
  }
  g_optimizer_ = make_adam(generator_->parameters(), config_);
  if (config_.use_discriminator) {
    discriminator_ = Discriminator(config_.discriminator());
    d_optimizer_ = make_adam(discriminator_->parameters(), config_);
  }
}

Conditioning InpaintTrainer::condition(const Batch& batch, const std::vector<std::uint64_t>& noise_seeds) {
  if (config_.predicted_condition) {
    return predict_conditioning(frozen_, face_, batch.masked, noise_seeds);
  }
  torch::NoGradGuard no_grad;
  Conditioning c;
  c.mask_prob = batch.mask;
  c.mask = batch.mask;
  c.coeffs = batch.coeffs;
  c.prior = face_.render(batch.coeffs).image;
  c.noisy = noise_fill_batch(batch.masked, batch.mask, noise_seeds);
  return c;
}

void InpaintTrainer::train_step() {
  generator_->train();
  const Batch batch = collate(train_batch(assets_, config_, step_));
  const auto seeds = batch_seeds(config_.seed, SeedStream::Noise, step_, config_.batch_size);
  const Conditioning cond = condition(batch, seeds);
  const double lr = lr_at(step_, config_);

  const auto fake = generator_->forward(cond.mask, cond.prior, cond.noisy);
  torch::Tensor adv = torch::zeros({}, fake.options());
  double d_value = 0.0;
  double r1_value = 0.0;
  if (config_.use_discriminator) {
    discriminator_->train();
    auto real = batch.clean.clone().set_requires_grad(true);
    const auto d_real = discriminator_->forward(real);
    const auto r1 = losses::input_gradient_norm_sq(d_real, real);
    const auto d_fake = discriminator_->forward(fake.detach());
    const auto d_loss = losses::discriminator_loss(torch::sigmoid(d_real), torch::sigmoid(d_fake), r1, config_.r1_weight);
    d_value = d_loss.item<double>();
    r1_value = r1.mean().item<double>();
    losses::require_finite("discriminator", d_value);
    d_optimizer_->zero_grad();
    d_loss.backward();
    set_lr(*d_optimizer_, lr);
    d_optimizer_->step();
    adv = losses::adv_loss_g(discriminator_->probability(fake));
  }

  losses::GeneratorTerms<torch::Tensor> t{losses::pix_loss(fake, batch.clean),
                                          losses::identity_loss(embedder_->embed(fake), embedder_->embed(batch.clean)),
                                          losses::tv_loss(fake), adv};
  const std::vector<std::pair<std::string, double>> parts = {{"pix", t.pix.item<double>()},
                                                             {"id", t.id.item<double>()},
                                                             {"tv", t.tv.item<double>()},
                                                             {"adv", t.adv.item<double>()}};
  torch::Tensor total;
  try {
    total = losses::generator_total_loss(t, config_.generator_weights);
  } catch (const NonFiniteError& e) {
    throw NonFiniteError("step " + std::to_string(step_) + ": " + e.what() + " [" + describe(parts) + "]");
  }
  g_optimizer_->zero_grad();
  total.backward();
  set_lr(*g_optimizer_, lr);
  g_optimizer_->step();

  history_.record(step_, "d_loss", d_value);
  history_.record(step_, "r1", r1_value);
  for (const auto& [k, v] : parts) {
    history_.record(step_, k, v);
  }
  history_.record(step_, "total", total.item<double>());
  ++step_;
}

void InpaintTrainer::run(std::int64_t until_step, const StepCallback& on_step) {
  const std::int64_t end = until_step < 0 ? config_.total_steps : std::min(until_step, config_.total_steps);
  while (step_ < end) {
    train_step();
    if (on_step) {
      on_step(step_, history_);
    }
    if (!checkpoint_dir_.empty() && checkpoint_due(config_, step_)) {
      save(checkpoint_dir_ / step_name("inpaint", step_));
    }
  }
  if (!checkpoint_dir_.empty()) {
    save(checkpoint_dir_ / "inpaint.ckpt");
    history_.save(checkpoint_dir_ / "inpaint_history.csv");
  }
}

void InpaintTrainer::save(const std::filesystem::path& path) const {
  CheckpointWriter w("inpaint");
  w.set("layout", to_string(assets_.basis.layout()));
  w.set("step", std::to_string(step_));
  w.set("generator_width", std::to_string(generator_->config().base_width));
  w.set("generator_blocks", std::to_string(generator_->config().residual_blocks));
  w.set("discriminator", config_.use_discriminator ? "true" : "false");
  w.set("seg_recon_checksum", std::to_string(parameter_checksum(*frozen_)));
  w.add_module("generator", *generator_);
  w.add_optimizer("generator_adam", *g_optimizer_);
  if (config_.use_discriminator) {
    w.add_module("discriminator", *discriminator_);
    w.add_optimizer("discriminator_adam", *d_optimizer_);
  }
  w.add_text("config", config_.to_text());
  w.add_text("history", history_.to_csv());
  w.save(path);
}

void InpaintTrainer::resume(const std::filesystem::path& path) {
  CheckpointReader r(path, "inpaint");
  r.require("layout", to_string(assets_.basis.layout()));
  r.require("seg_recon_checksum", std::to_string(parameter_checksum(*frozen_)));
  if (r.read_text("config") != config_.to_text()) {
    throw FormatError(path.string() + ": checkpoint was trained with a different config");
  }
  r.load_module("generator", *generator_);
  r.load_optimizer("generator_adam", *g_optimizer_);
  if (config_.use_discriminator) {
    r.load_module("discriminator", *discriminator_);
    r.load_optimizer("discriminator_adam", *d_optimizer_);
  }
  step_ = parse_int("step", r.get("step"));
  history_ = LossHistory::from_csv(r.read_text("history"));
}

Generator load_generator(const std::filesystem::path& path) {
  CheckpointReader r(path, "inpaint");
  GeneratorConfig g;
  g.base_width = static_cast<int>(parse_int("generator_width", r.get("generator_width")));
  g.residual_blocks = static_cast<int>(parse_int("generator_blocks", r.get("generator_blocks")));
  Generator gen(g);
  r.load_module("generator", *gen);
  gen->eval();
  return gen;
}

}  // namespace demask
