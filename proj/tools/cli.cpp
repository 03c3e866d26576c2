#include "demask/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "demask/errors.hpp"
#include "demask/nn/embedder.hpp"
#include "demask/nn/evaluate.hpp"
#include "demask/nn/trainer.hpp"
#include "demask/random.hpp"
#include "demask/service/edit_service.hpp"
#include "demask/service/http_api.hpp"
#include "demask/toy_model.hpp"

namespace demask {
namespace {

namespace fs = std::filesystem;

struct Common {
  std::uint64_t seed = 0;
  CLI::Option* seed_option = nullptr;
};

struct TrainFlags {
  std::string config_path;
  std::string assets;
  std::string out;
  std::string resume;
  std::string recon;
  std::string embedder;
  std::int64_t log_every = 100;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
};

struct ModelFlags {
  std::string assets;
  std::string recon;
  std::string inpaint;
  int size = 64;
};

void add_train_flags(CLI::App* sub, TrainFlags& f) {
  sub->add_option("--config", f.config_path, "file of 'key = value' lines; flags override it")
      ->check(CLI::ExistingFile);
  sub->add_option("--assets", f.assets, "asset directory from gen-assets (default: procedural assets)")
      ->check(CLI::ExistingDirectory);
  sub->add_option("--out", f.out, "output directory for checkpoints and loss history")->required();
  sub->add_option("--resume", f.resume, "checkpoint to resume from")->check(CLI::ExistingFile);
  sub->add_option("--embedder", f.embedder, "TorchScript identity embedder (default: frozen toy embedder)")
      ->check(CLI::ExistingFile);
  sub->add_option("--log-every", f.log_every, "print losses every N steps (0: never)");
  for (const auto& key : TrainConfig::keys()) {
    if (key == "seed" || key == "stage") {
      continue;  // --seed is global; the stage follows the subcommand
    }
    std::string names = "--" + key;
    if (key == "total_steps") {
      names += ",--steps";
    }
    f.options[key] = sub->add_option(names, f.values[key], "config key " + key);
  }
}

void add_model_flags(CLI::App* sub, ModelFlags& f, bool require_checkpoints) {
  sub->add_option("--assets", f.assets, "asset directory from gen-assets (default: procedural assets)")
      ->check(CLI::ExistingDirectory);
  auto* r = sub->add_option("--recon", f.recon, "seg-recon checkpoint")->check(CLI::ExistingFile);
  auto* i = sub->add_option("--inpaint", f.inpaint, "inpaint checkpoint")->check(CLI::ExistingFile);
  if (require_checkpoints) {
    r->required();
    i->required();
  }
}

SynthAssets load_assets(const std::string& dir, int size) {
  return dir.empty() ? SynthAssets::procedural(size) : SynthAssets::load(dir, size);
}

std::shared_ptr<const IdentityEmbedder> make_embedder(const std::string& path) {
  if (path.empty()) {
    return std::make_shared<ToyEmbedder>();
  }
  return std::make_shared<ScriptedEmbedder>(path);
}

TrainConfig build_config(Stage stage, const TrainFlags& f, const Common& common) {
  TrainConfig c = TrainConfig::desk(stage);
  if (!f.config_path.empty()) {
    c = TrainConfig::load(f.config_path, c);
  }
  for (const auto& [key, option] : f.options) {
    if (option->count() > 0) {
      c.set(key, f.values.at(key));
    }
  }
  if (common.seed_option->count() > 0) {
    c.seed = common.seed;
  }
  c.stage = stage;
  c.validate();
  return c;
}

StepCallback progress(std::ostream& out, std::int64_t every, const std::vector<std::string>& components) {
  if (every <= 0) {
    return {};
  }
  return [&out, every, components](std::int64_t step, const LossHistory& h) {
    if (step % every != 0) {
      return;
    }
    out << "step " << step;
    for (const auto& c : components) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), " %s=%.6g", c.c_str(), h.window_mean(c, step - every, step));
      out << buf;
    }
    out << '\n' << std::flush;
  };
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary);
  if (!file || !(file << text)) {
    throw FormatError("cannot write " + path.string());
  }
}

void write_result(const fs::path& dir, const MaskRemovalPipeline::Result& r) {
  fs::create_directories(dir);
  save_image(dir / "mask.png", r.mask);
  save_image(dir / "mask_prob.png", r.mask_prob);
  save_image(dir / "prior.png", r.prior);
  save_image(dir / "noisy.png", r.noisy);
  save_image(dir / "raw.png", r.raw);
  save_image(dir / "output.png", r.output);
  write_text(dir / "coeffs.txt", coeffs_to_text(r.coeffs));
}

Overrides parse_overrides(const std::vector<std::string>& items) {
  Overrides out;
  for (const auto& item : items) {
    out.push_back(parse_override(item));
  }
  return out;
}

std::unique_ptr<EditService> open_service(const ModelFlags& f, const Image& probe, const Common& common) {
  const int size = probe.empty() ? f.size : probe.width;
  const auto assets = load_assets(f.assets, size);
  auto service = EditService::from_checkpoints(assets.basis, assets.camera, f.recon, f.inpaint, common.seed);
  if (!service->ready()) {
    throw FormatError("cannot load checkpoints: " + service->unavailable_reason());
  }
  return service;
}

// ------------------------------------------------------------------ commands

int cmd_gen_assets(const std::string& out_dir, int size, const Common& common, std::ostream& out) {
  SynthAssets assets = SynthAssets::procedural(size);
  if (common.seed_option->count() > 0) {
    ToyModelOptions opts;
    opts.seed = derive_seed(common.seed, 0xA55E7);
    assets.basis = make_toy_basis(opts);
    assets.templates = procedural_templates(20, derive_seed(common.seed, 0x7E3));
    assets.patches = procedural_patches(12, derive_seed(common.seed, 0x9A7));
  }
  assets.save(out_dir);
  const CoeffVector zero(assets.basis.layout());
  save_landmark_table(fs::path(out_dir) / "landmarks.txt", project_landmarks(assets.basis, zero, assets.camera));
  out << "wrote basis (" << assets.basis.num_vertices() << " vertices, layout " << to_string(assets.basis.layout())
      << "), " << assets.templates.size() << " templates and " << assets.patches.size() << " patches to " << out_dir
      << '\n';
  return kExitOk;
}

int cmd_synth(const std::string& assets_dir, int size, int n, std::uint64_t first, const std::string& stream_name,
              const std::string& out_dir, const Common& common, std::ostream& out) {
  static const std::map<std::string, SeedStream> streams = {
      {"train", SeedStream::Train}, {"heldout", SeedStream::Heldout}, {"synth", SeedStream::Synth}};
  const auto assets = load_assets(assets_dir, size);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  for (int i = 0; i < n; ++i) {
    const auto pair = synth_pair(assets, common.seed, streams.at(stream_name), first + static_cast<std::uint64_t>(i));
    const std::string stem = std::to_string(first + static_cast<std::uint64_t>(i));
    save_image(dir / (stem + "_clean.png"), pair.clean);
    save_image(dir / (stem + "_masked.png"), pair.masked);
    save_image(dir / (stem + "_mask.png"), pair.mask);
    write_text(dir / (stem + "_coeffs.txt"), coeffs_to_text(pair.coeffs));
  }
  out << "wrote " << n << " pairs to " << out_dir << '\n';
  return kExitOk;
}

int cmd_train_3d(const TrainFlags& f, const Common& common, std::ostream& out) {
  const auto config = build_config(Stage::Recon, f, common);
  ReconTrainer trainer(config, load_assets(f.assets, config.image_size), make_embedder(f.embedder));
  if (!f.resume.empty()) {
    trainer.resume(f.resume);
  }
  trainer.set_checkpoint_dir(f.out);
  trainer.run(-1, progress(out, f.log_every, {"bce", "coef", "photo", "id", "lm", "total"}));
  out << "wrote " << (fs::path(f.out) / "seg_recon.ckpt").string() << " at step " << trainer.step() << '\n';
  return kExitOk;
}

int cmd_train_inpaint(const TrainFlags& f, const Common& common, std::ostream& out) {
  const auto config = build_config(Stage::Inpaint, f, common);
  auto assets = load_assets(f.assets, config.image_size);
  auto frozen = load_seg_recon(f.recon, assets.basis.layout());
  InpaintTrainer trainer(config, std::move(assets), frozen, make_embedder(f.embedder));
  if (!f.resume.empty()) {
    trainer.resume(f.resume);
  }
  trainer.set_checkpoint_dir(f.out);
  trainer.run(-1, progress(out, f.log_every, {"d_loss", "pix", "id", "tv", "adv", "total"}));
  out << "wrote " << (fs::path(f.out) / "inpaint.ckpt").string() << " at step " << trainer.step() << '\n';
  return kExitOk;
}

int cmd_infer(const ModelFlags& f, const std::string& input, const std::string& out_dir, const Common& common,
              std::ostream& out) {
  const Image image = load_image(input);
  const auto service = open_service(f, image, common);
  write_result(out_dir, service->infer(image));
  out << "wrote results to " << out_dir << '\n';
  return kExitOk;
}

int cmd_edit(const ModelFlags& f, const std::string& input, const std::vector<std::string>& sets,
             const std::string& out_dir, const Common& common, std::ostream& out) {
  const Image image = load_image(input);
  const auto overrides = parse_overrides(sets);
  const auto service = open_service(f, image, common);
  const auto session = service->create_session(image);
  write_result(out_dir, service->edit(session.session_id, overrides));
  out << "applied " << overrides.size() << " override(s); wrote results to " << out_dir << '\n';
  return kExitOk;
}

int cmd_seq(const ModelFlags& f, const std::string& input, const std::vector<std::string>& set_a,
            const std::vector<std::string>& set_b, int frames, const std::string& out_dir, const Common& common,
            std::ostream& out) {
  const Image image = load_image(input);
  const auto a = parse_overrides(set_a);
  const auto b = parse_overrides(set_b);
  const auto service = open_service(f, image, common);
  const auto session = service->create_session(image);
  const auto results = service->sequence(session.session_id, a, b, frames);
  fs::create_directories(out_dir);
  for (std::size_t k = 0; k < results.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%03zu.png", k);
    save_image(fs::path(out_dir) / name, results[k].output);
  }
  out << "wrote " << results.size() << " frames to " << out_dir << '\n';
  return kExitOk;
}

int cmd_eval(const ModelFlags& f, const std::string& which, int n, const std::string& embedder_path,
             const std::string& format, const Common& common, std::ostream& out) {
  const auto assets = load_assets(f.assets, f.size);
  const auto testset = synth_pairs(assets, common.seed, SeedStream::Heldout, 0, n);
  const auto embedder = make_embedder(embedder_path);
  std::shared_ptr<MaskRemovalPipeline> pipeline;
  RemovalFn fn;
  if (which == "identity") {
    fn = identity_pipeline();
  } else if (which == "input") {
    fn = input_pipeline();
  } else {
    if (f.recon.empty() || f.inpaint.empty()) {
      throw ContractError("eval --pipeline model needs --recon and --inpaint");
    }
    pipeline = std::make_shared<MaskRemovalPipeline>(load_seg_recon(f.recon, assets.basis.layout()),
                                                     load_generator(f.inpaint), assets.basis, assets.camera);
    fn = model_pipeline(*pipeline, common.seed);
  }
  const auto report = evaluate(testset, fn, *embedder);
  if (format == "csv") {
    out << report.to_csv();
  } else if (format == "table") {
    out << report.table_row(which) << '\n';
  } else {
    out << report.to_key_values();
  }
  return kExitOk;
}

int cmd_serve(const ModelFlags& f, const std::string& host, int port, const Common& common, std::ostream& out,
              std::ostream& err) {
  const auto assets = load_assets(f.assets, f.size);
  auto service = EditService::from_checkpoints(assets.basis, assets.camera, f.recon, f.inpaint, common.seed);
  if (!service->ready()) {
    err << "demask: warning: serving without a model: " << service->unavailable_reason() << '\n';
  }
  HttpApi api(*service);
  out << "serving on http://" << host << ':' << port << '\n' << std::flush;
  api.serve(host, port);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Face mask removal guided by a 3D morphable model", "demask"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  common.seed_option = app.add_option("--seed", common.seed, "seed for every stochastic component (config key seed)");

  auto* gen = app.add_subcommand("gen-assets", "write the toy basis, procedural templates and patches");
  std::string gen_out;
  int gen_size = 64;
  gen->add_option("--out", gen_out, "asset directory")->required();
  gen->add_option("--size", gen_size, "image size of the golden landmark table")->check(CLI::Range(16, 4096));

  auto* synth = app.add_subcommand("synth", "materialize synthetic training pairs");
  std::string synth_assets, synth_out, synth_stream = "synth";
  int synth_n = 0;
  int synth_size = 64;
  std::uint64_t synth_first = 0;
  synth->add_option("--assets", synth_assets, "asset directory (default: procedural assets)")
      ->check(CLI::ExistingDirectory);
  synth->add_option("--n", synth_n, "number of pairs")->required()->check(CLI::Range(1, 1000000));
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--first", synth_first, "index of the first pair");
  synth->add_option("--size", synth_size, "image size")->check(CLI::Range(16, 4096));
  synth->add_option("--stream", synth_stream, "seed stream")->check(CLI::IsMember({"train", "heldout", "synth"}));

  auto* train3d = app.add_subcommand("train-3d", "train the segmentation-reconstruction network");
  TrainFlags recon_flags;
  add_train_flags(train3d, recon_flags);

  auto* train_inp = app.add_subcommand("train-inpaint", "train the inpainting generator against a frozen seg-recon net");
  TrainFlags inpaint_flags;
  add_train_flags(train_inp, inpaint_flags);
  train_inp->add_option("--recon", inpaint_flags.recon, "trained seg-recon checkpoint")
      ->required()
      ->check(CLI::ExistingFile);

  ModelFlags model;
  std::string input, out_dir;

  auto* infer = app.add_subcommand("infer", "remove the mask from one image");
  add_model_flags(infer, model, true);
  infer->add_option("--input", input, "masked face image")->required()->check(CLI::ExistingFile);
  infer->add_option("--out", out_dir, "output directory")->required();

  auto* edit = app.add_subcommand("edit", "remove the mask with coefficient overrides");
  std::vector<std::string> sets;
  add_model_flags(edit, model, true);
  edit->add_option("--input", input, "masked face image")->required()->check(CLI::ExistingFile);
  edit->add_option("--out", out_dir, "output directory")->required();
  edit->add_option("--set", sets, "override group:index=value, repeatable");

  auto* seq = app.add_subcommand("seq", "interpolate between two override sets");
  std::vector<std::string> set_a, set_b;
  int frames = 5;
  add_model_flags(seq, model, true);
  seq->add_option("--input", input, "masked face image")->required()->check(CLI::ExistingFile);
  seq->add_option("--out", out_dir, "output directory")->required();
  seq->add_option("--set-a", set_a, "start override group:index=value, repeatable");
  seq->add_option("--set-b", set_b, "end override group:index=value, repeatable");
  seq->add_option("--frames", frames, "number of frames")->check(CLI::Range(2, 10000));

  auto* eval = app.add_subcommand("eval", "metric battery on held-out synthetic pairs");
  std::string which = "model", eval_format = "kv", eval_embedder;
  int eval_n = 100;
  add_model_flags(eval, model, false);
  eval->add_option("--pipeline", which, "identity, input or model")
      ->check(CLI::IsMember({"identity", "input", "model"}));
  eval->add_option("--n", eval_n, "number of held-out pairs")->check(CLI::Range(1, 1000000));
  eval->add_option("--size", model.size, "image size")->check(CLI::Range(16, 4096));
  eval->add_option("--embedder", eval_embedder, "TorchScript feature extractor (default: frozen toy embedder)")
      ->check(CLI::ExistingFile);
  eval->add_option("--format", eval_format, "kv, csv or table")->check(CLI::IsMember({"kv", "csv", "table"}));

  auto* serve = app.add_subcommand("serve", "start the HTTP edit service");
  std::string host = "127.0.0.1";
  int port = 8080;
  add_model_flags(serve, model, false);
  serve->add_option("--size", model.size, "image size")->check(CLI::Range(16, 4096));
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "port")->check(CLI::Range(1, 65535));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      app.exit(e, out, err);
      return kExitOk;
    }
    err << "demask: " << e.what() << '\n';
    const auto selected = app.get_subcommands();
    err << (selected.empty() ? app.help() : selected.front()->help());
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      return cmd_gen_assets(gen_out, gen_size, common, out);
    }
    if (synth->parsed()) {
      return cmd_synth(synth_assets, synth_size, synth_n, synth_first, synth_stream, synth_out, common, out);
    }
    if (train3d->parsed()) {
      return cmd_train_3d(recon_flags, common, out);
    }
    if (train_inp->parsed()) {
      return cmd_train_inpaint(inpaint_flags, common, out);
    }
    if (infer->parsed()) {
      return cmd_infer(model, input, out_dir, common, out);
    }
    if (edit->parsed()) {
      return cmd_edit(model, input, sets, out_dir, common, out);
    }
    if (seq->parsed()) {
      return cmd_seq(model, input, set_a, set_b, frames, out_dir, common, out);
    }
    if (eval->parsed()) {
      return cmd_eval(model, which, eval_n, eval_embedder, eval_format, common, out);
    }
    if (serve->parsed()) {
      return cmd_serve(model, host, port, common, out, err);
    }
  } catch (const ServiceError& e) {
    err << "demask: error: " << e.what() << (e.detail().empty() ? "" : ": " + e.detail()) << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "demask: error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace demask
