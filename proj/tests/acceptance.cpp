// Acceptance runner: one PASS/FAIL line per criterion; exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "cli_harness.hpp"
#include "demask/nn/evaluate.hpp"
#include "demask/nn/trainer.hpp"
#include "demask/random.hpp"
#include "demask/service/edit_service.hpp"
#include "suites.hpp"

using namespace demask;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void verdict(const std::string& name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

void info(const std::string& text) { std::cout << "INFO " << text << std::endl; }

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

void suite(const std::string& name, const std::function<suites::Result()>& run, double budget_s) {
  const auto t0 = Clock::now();
  const auto r = run();
  const double took = seconds_since(t0);
  std::string detail = r.summary + "; " + fixed(took, 1) + " s";
  for (std::size_t i = 0; i < r.failures.size() && i < 5; ++i) detail += "; " + r.failures[i];
  verdict(name, r.pass && took < budget_s, detail);
}

constexpr std::uint64_t kSeed = 0;
constexpr int kHeldout = 100;

SegReconNet closed_loop_recon(const SynthAssets& assets, const std::vector<TrainingPair>& held,
                              std::shared_ptr<const IdentityEmbedder> embedder) {
  auto cfg = TrainConfig::desk(Stage::Recon);
  cfg.batch_size = 4;
  cfg.seed = kSeed;
  ReconTrainer trainer(cfg, assets, embedder);
  auto net = trainer.net();
  const auto before = evaluate_recon(net, held);
  const auto t0 = Clock::now();
  trainer.run();
  const double took = seconds_since(t0);
  const auto after = evaluate_recon(net, held);
  const auto& h = trainer.history();
  info("recon bce window mean: steps 0-99 " + fixed(h.window_mean("bce", 0, 100)) + ", last 100 " +
       fixed(h.window_mean("bce", cfg.total_steps - 100, cfg.total_steps)));
  const double ratio = after.mean_coef_loss / before.mean_coef_loss;
  const bool iou_ok = after.mean_iou >= 0.8;
  const bool coef_ok = ratio <= 0.5;
  const bool time_ok = took <= 30 * 60;
  std::ostringstream d;
  d << "IoU " << fixed(after.mean_iou) << " (>= 0.8 " << (iou_ok ? "ok" : "missed") << "), coef_loss "
    << fixed(before.mean_coef_loss) << " -> " << fixed(after.mean_coef_loss) << " ratio " << fixed(ratio, 3)
    << " (<= 0.5 " << (coef_ok ? "ok" : "missed") << "), " << cfg.total_steps << " steps batch " << cfg.batch_size
    << " in " << fixed(took, 1) << " s";
  verdict("closed-loop-recon", iou_ok && coef_ok && time_ok, d.str());
  net->eval();
  return net;
}

Generator closed_loop_inpaint(const SynthAssets& assets, const std::vector<TrainingPair>& held, SegReconNet frozen,
                              std::shared_ptr<const IdentityEmbedder> embedder) {
  auto cfg = TrainConfig::desk(Stage::Inpaint);
  cfg.batch_size = 4;
  cfg.seed = kSeed;
  InpaintTrainer trainer(cfg, assets, frozen, embedder);
  auto gen = trainer.generator();
  const TorchFaceModel face(assets.basis, assets.camera);
  const std::uint64_t noise = derive_seed(kSeed, static_cast<std::uint64_t>(SeedStream::Noise));
  const auto before = evaluate_inpaint(frozen, gen, face, held, noise);
  const auto t0 = Clock::now();
  trainer.run();
  const double took = seconds_since(t0);
  const auto after = evaluate_inpaint(frozen, gen, face, held, noise);
  const auto& h = trainer.history();
  info("inpaint pix window mean: steps 0-99 " + fixed(h.window_mean("pix", 0, 100)) + ", last 100 " +
       fixed(h.window_mean("pix", cfg.total_steps - 100, cfg.total_steps)));
  const double ratio = after.pix_loss / before.pix_loss;
  const double off_ratio = after.off_mask_l1 / after.mask_free_l1;
  const bool pix_ok = ratio <= 0.6;
  const bool off_ok = off_ratio <= 2.0;
  const bool time_ok = took <= 30 * 60;
  std::ostringstream d;
  d << "L_pix " << fixed(before.pix_loss) << " -> " << fixed(after.pix_loss) << " ratio " << fixed(ratio, 3)
    << " (<= 0.6), off-mask L1 " << fixed(after.off_mask_l1) << " vs mask-free " << fixed(after.mask_free_l1)
    << " ratio " << fixed(off_ratio, 3) << " (<= 2), " << cfg.total_steps << " steps in " << fixed(took, 1) << " s";
  verdict("closed-loop-inpaint", pix_ok && off_ok && time_ok, d.str());
  gen->eval();
  return gen;
}

void determinism() {
  using harness::cli;
  const auto root = harness::fresh_dir("demask_acceptance_determinism");
  const std::vector<std::string> small = {"--image_size",      "32", "--batch_size",      "2",
                                          "--backbone_widths", "8,8,16,16", "--generator_width", "8",
                                          "--generator_blocks", "1", "--discriminator_widths", "8,8,8,8",
                                          "--steps",           "3",  "--seed",            "11"};
  std::vector<std::string> problems;
  int commands = 0;
  auto twice = [&](const std::string& label, const std::function<std::vector<std::string>(const fs::path&)>& args) {
    const auto a = root / (label + "_a");
    const auto b = root / (label + "_b");
    const auto ra = cli(args(a));
    const auto rb = cli(args(b));
    commands += 2;
    if (ra.code != 0 || rb.code != 0) {
      problems.push_back(label + " exited with " + std::to_string(ra.code) + "/" + std::to_string(rb.code) + " " +
                         ra.err);
      return;
    }
    for (const auto& f : harness::differing(a, b)) problems.push_back(label + ":" + f);
  };
  auto with = [](std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  };

  twice("gen-assets", [](const fs::path& out) {
    return std::vector<std::string>{"gen-assets", "--out", out.string(), "--size", "32", "--seed", "11"};
  });
  const auto assets = (root / "gen-assets_a").string();
  twice("synth", [&](const fs::path& out) {
    return std::vector<std::string>{"synth", "--assets", assets, "--n", "6", "--size", "32", "--seed", "11",
                                    "--out", out.string()};
  });
  twice("train-3d", [&](const fs::path& out) {
    return with({"train-3d", "--assets", assets, "--out", out.string()}, small);
  });
  const auto recon = (root / "train-3d_a" / "seg_recon.ckpt").string();
  twice("train-inpaint", [&](const fs::path& out) {
    return with({"train-inpaint", "--assets", assets, "--recon", recon, "--out", out.string()}, small);
  });
  const auto inpaint = (root / "train-inpaint_a" / "inpaint.ckpt").string();
  const auto input = (root / "synth_a" / "0_masked.png").string();
  const std::vector<std::string> model = {"--assets", assets, "--recon", recon, "--inpaint", inpaint,
                                          "--input",  input,  "--seed",  "11"};
  twice("infer", [&](const fs::path& out) { return with({"infer", "--out", out.string()}, model); });
  twice("edit", [&](const fs::path& out) {
    return with({"edit", "--set", "expression:1=0.7", "--out", out.string()}, model);
  });
  twice("seq", [&](const fs::path& out) {
    return with({"seq", "--set-a", "shape:0=-1", "--set-b", "shape:0=1", "--frames", "3", "--out", out.string()},
                model);
  });

  std::string detail = std::to_string(commands) + " runs of gen-assets/synth/train-3d/train-inpaint/infer/edit/seq";
  if (problems.empty()) {
    detail += ", histories, checkpoints and outputs byte-identical";
  } else {
    detail += ", differing: ";
    for (const auto& p : problems) detail += p + " ";
  }
  verdict("determinism", problems.empty(), detail);
  fs::remove_all(root);
}

void edits(const SynthAssets& assets, SegReconNet net, Generator gen) {
  auto pipeline = std::make_shared<const MaskRemovalPipeline>(net, gen, assets.basis, assets.camera);
  EditService service(pipeline, kSeed);
  const auto inputs = synth_pairs(assets, kSeed, SeedStream::Synth, 0, 10);
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> group_pick(0, 5);
  std::normal_distribution<double> value(0.0, 1.0);
  const auto layout = assets.basis.layout();
  int sessions = 0, edits_done = 0, zero_ok = 0, off_ok = 0;
  for (const auto& pair : inputs) {
    const auto session = service.create_session(pair.masked);
    ++sessions;
    const auto zero = service.edit(session.session_id, {});
    if (zero.output == session.result.output && zero.prior == session.result.prior) ++zero_ok;
    bool invariant = true;
    for (int e = 0; e < 5; ++e) {
      Overrides o;
      for (int k = 0; k < 3; ++k) {
        const auto g = kCoeffGroups[static_cast<std::size_t>(group_pick(rng))];
        std::uniform_int_distribution<int> index(0, layout.dim(g) - 1);
        const int i = index(rng);
        const double scale = (g == CoeffGroup::Rotation || g == CoeffGroup::Translation) ? 0.1 : 1.0;
        o.push_back({g, i, session.result.coeffs.get(g, i) + scale * value(rng)});
      }
      const auto r = service.edit(session.session_id, o);
      ++edits_done;
      const auto& m = session.result.mask;
      for (int y = 0; y < m.height && invariant; ++y)
        for (int x = 0; x < m.width && invariant; ++x)
          if (m.at(x, y, 0) < 0.5f)
            for (int c = 0; c < 3; ++c)
              if (r.output.at(x, y, c) != session.result.output.at(x, y, c)) invariant = false;
    }
    if (invariant) ++off_ok;
  }
  std::ostringstream d;
  d << zero_ok << "/" << sessions << " zero-override edits bit-identical; off-mask pixels invariant in " << off_ok << "/"
    << sessions << " sessions (" << edits_done << " edits)";
  verdict("edit-invariants", zero_ok == sessions && off_ok == sessions, d.str());
}

}  // namespace

int main() {
  torch::set_num_threads(1);
  suite("loss-oracles", [] { return suites::loss_oracles(20); }, 60.0);
  suite("loss-gradients", [] { return suites::loss_gradients(10, 1e-3); }, 120.0);
  suite("rendering", [] { return suites::rendering(50); }, 600.0);
  suite("metrics", [] { return suites::metrics(); }, 600.0);

  const auto assets = SynthAssets::procedural(64);
  const auto held = synth_pairs(assets, kSeed, SeedStream::Heldout, 0, kHeldout);
  const auto embedder = std::make_shared<ToyEmbedder>();
  auto net = closed_loop_recon(assets, held, embedder);
  auto gen = closed_loop_inpaint(assets, held, net, embedder);

  determinism();
  edits(assets, net, gen);

  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " criterion(s) failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
