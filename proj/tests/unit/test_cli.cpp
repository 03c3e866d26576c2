#include "doctest_torch.hpp"

#include "cli_harness.hpp"
#include "demask/nn/trainer.hpp"

using harness::cli;
namespace fs = std::filesystem;

namespace {

const std::vector<std::string> kSmallRecon = {"--image_size", "32", "--batch_size", "2", "--backbone_widths",
                                              "8,8,16,16"};
const std::vector<std::string> kSmallInpaint = {"--image_size",        "32", "--batch_size",         "2",
                                                "--backbone_widths",   "8,8,16,16", "--generator_width", "8",
                                                "--generator_blocks",  "1",  "--discriminator_widths", "8,8,8,8"};

std::vector<std::string> join(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

/// gen-assets, a recon and an inpaint checkpoint, shared by the cases below.
struct Fixture {
  fs::path root = harness::fresh_dir("demask_cli_fixture");
  fs::path assets = root / "assets";
  fs::path recon = root / "recon";
  fs::path inpaint = root / "inpaint";
  fs::path pairs = root / "pairs";

  Fixture() {
    REQUIRE(cli({"gen-assets", "--out", assets.string(), "--size", "32"}).code == 0);
    REQUIRE(cli({"synth", "--assets", assets.string(), "--n", "2", "--size", "32", "--out", pairs.string()}).code == 0);
    REQUIRE(cli(join({"train-3d", "--assets", assets.string(), "--out", recon.string(), "--steps", "2"}, kSmallRecon))
                .code == 0);
    REQUIRE(cli(join({"train-inpaint", "--assets", assets.string(), "--recon", (recon / "seg_recon.ckpt").string(),
                      "--out", inpaint.string(), "--steps", "2"},
                     kSmallInpaint))
                .code == 0);
  }
  std::vector<std::string> model(const std::string& cmd, const fs::path& out) const {
    return {cmd,       "--assets", assets.string(), "--recon", (recon / "seg_recon.ckpt").string(), "--inpaint",
            (inpaint / "inpaint.ckpt").string(), "--input", (pairs / "0_masked.png").string(), "--out", out.string()};
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("cli: usage errors exit with 2") {
  CHECK(cli({}).code == demask::kExitUsage);
  CHECK(cli({"synth", "--n", "3"}).code == demask::kExitUsage);
  CHECK(cli({"no-such-command"}).code == demask::kExitUsage);
  CHECK(cli({"infer", "--recon", "/nonexistent.ckpt", "--inpaint", "/nonexistent.ckpt", "--input", "/nonexistent.png",
             "--out", "/tmp/x"})
            .code == demask::kExitUsage);
  const auto help = cli({"--help"});
  CHECK(help.code == demask::kExitOk);
  CHECK(help.out.find("train-3d") != std::string::npos);
}

TEST_CASE("cli: gen-assets and synth") {
  const auto dir = harness::fresh_dir("demask_cli_synth");
  REQUIRE(cli({"gen-assets", "--out", (dir / "assets").string(), "--size", "32"}).code == 0);
  CHECK(fs::exists(dir / "assets" / "basis.mfb"));
  CHECK(fs::exists(dir / "assets" / "landmarks.txt"));
  const std::vector<std::string> args = {"synth", "--assets", (dir / "assets").string(), "--n", "8", "--size", "32"};
  REQUIRE(cli(join(args, {"--out", (dir / "a").string()})).code == 0);
  REQUIRE(cli(join(args, {"--out", (dir / "b").string()})).code == 0);
  CHECK(harness::snapshot(dir / "a").size() == 32);
  CHECK(harness::differing(dir / "a", dir / "b").empty());
  REQUIRE(cli(join(args, {"--out", (dir / "c").string(), "--seed", "4"})).code == 0);
  CHECK_FALSE(harness::differing(dir / "a", dir / "c").empty());
  fs::remove_all(dir);
}

TEST_CASE("cli: training is reproducible and honours config precedence") {
  const auto& f = fixture();
  const auto dir = harness::fresh_dir("demask_cli_train");
  REQUIRE(cli(join({"train-3d", "--assets", f.assets.string(), "--out", (dir / "again").string(), "--steps", "2"},
                   kSmallRecon))
              .code == 0);
  CHECK(harness::read_bytes(dir / "again" / "recon_history.csv") ==
        harness::read_bytes(f.recon / "recon_history.csv"));

  std::ofstream(dir / "cfg.txt") << "total_steps = 3\nbatch_size = 2\n";
  REQUIRE(cli(join({"train-3d", "--config", (dir / "cfg.txt").string(), "--out", (dir / "file").string()}, kSmallRecon))
              .code == 0);
  const auto from_file = demask::LossHistory::from_csv(harness::read_bytes(dir / "file" / "recon_history.csv"));
  CHECK(from_file.series("bce").size() == 3);
  REQUIRE(cli(join({"train-3d", "--config", (dir / "cfg.txt").string(), "--steps", "1", "--out", (dir / "flag").string()},
                   kSmallRecon))
              .code == 0);
  const auto from_flag = demask::LossHistory::from_csv(harness::read_bytes(dir / "flag" / "recon_history.csv"));
  CHECK(from_flag.series("bce").size() == 1);

  CHECK(cli({"train-3d", "--out", (dir / "bad").string(), "--batch_size", "0"}).code == demask::kExitRuntime);
  fs::remove_all(dir);
}

TEST_CASE("cli: infer, edit and seq") {
  const auto& f = fixture();
  const auto dir = harness::fresh_dir("demask_cli_infer");
  REQUIRE(cli(f.model("infer", dir / "a")).code == 0);
  REQUIRE(cli(f.model("infer", dir / "b")).code == 0);
  for (const char* name : {"mask.png", "prior.png", "noisy.png", "raw.png", "output.png", "coeffs.txt"})
    CHECK(fs::exists(dir / "a" / name));
  CHECK(harness::differing(dir / "a", dir / "b").empty());

  REQUIRE(cli(f.model("edit", dir / "zero")).code == 0);
  CHECK(harness::read_bytes(dir / "zero" / "output.png") == harness::read_bytes(dir / "a" / "output.png"));
  REQUIRE(cli(join(f.model("edit", dir / "e"), {"--set", "expression:0=1.5", "--set", "shape:1=-1"})).code == 0);
  CHECK(harness::read_bytes(dir / "e" / "mask.png") == harness::read_bytes(dir / "a" / "mask.png"));
  CHECK(cli(join(f.model("edit", dir / "bad"), {"--set", "expression:99=1"})).code == demask::kExitRuntime);

  REQUIRE(cli(join(f.model("seq", dir / "s"), {"--set-a", "expression:0=-1", "--set-b", "expression:0=1", "--frames",
                                               "3"}))
              .code == 0);
  CHECK(fs::exists(dir / "s" / "frame_002.png"));
  fs::remove_all(dir);
}

TEST_CASE("cli: eval") {
  const auto r = cli({"eval", "--pipeline", "identity", "--n", "4", "--size", "32"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("l1=0") != std::string::npos);
  CHECK(r.out.find("psnr=inf") != std::string::npos);
  const auto input = cli({"eval", "--pipeline", "input", "--n", "4", "--size", "32", "--format", "csv"});
  CHECK(input.code == 0);
  CHECK(input.out.find(',') != std::string::npos);
  const auto& f = fixture();
  const auto model = cli({"eval", "--pipeline", "model", "--n", "2", "--size", "32", "--assets", f.assets.string(),
                          "--recon", (f.recon / "seg_recon.ckpt").string(), "--inpaint",
                          (f.inpaint / "inpaint.ckpt").string(), "--format", "table"});
  CHECK(model.code == 0);
  CHECK(cli({"eval", "--pipeline", "model", "--n", "2", "--size", "32"}).code == demask::kExitRuntime);
}
