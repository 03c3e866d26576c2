#include "doctest_torch.hpp"

#include "demask/nn/trainer.hpp"
#include "demask/service/edit_service.hpp"
#include "demask/service/http_api.hpp"

// After Eigen: httplib pulls in resolv.h, whose _res macro breaks Eigen's product kernels.
#include <httplib.h>
#include <json.hpp>

using namespace demask;
using nlohmann::json;

namespace {

const SynthAssets& assets() {
  static const SynthAssets a = SynthAssets::procedural(32);
  return a;
}

SegReconNet small_net(double seg_bias = 0.0, bool set_bias = false) {
  BackboneConfig c;
  c.widths = {8, 8, 16, 16};
  c.input_size = 32;
  c.fusion_width = 8;
  SegReconNet net(c);
  net->eval();
  if (set_bias) {
    torch::NoGradGuard no_grad;
    net->named_parameters()["seg_out.bias"].fill_(seg_bias);
  }
  return net;
}

std::shared_ptr<const MaskRemovalPipeline> pipeline(SegReconNet net) {
  GeneratorConfig g;
  g.base_width = 8;
  g.residual_blocks = 1;
  Generator gen(g);
  gen->eval();
  return std::make_shared<const MaskRemovalPipeline>(net, gen, assets().basis, assets().camera);
}

/// Untrained small nets; the binarized mask covers part of the image.
std::shared_ptr<const MaskRemovalPipeline> default_pipeline() {
  static const auto p = pipeline(small_net());
  return p;
}

Image input_image() { return synth_pair(assets(), 0, SeedStream::Heldout, 1).masked; }

bool off_mask_equal(const Image& a, const Image& b, const Image& mask) {
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y, 0) < 0.5f)
        for (int c = 0; c < 3; ++c)
          if (a.at(x, y, c) != b.at(x, y, c)) return false;
  return true;
}

double mean_inside(const Image& img, const Image& coverage) {
  double s = 0.0;
  int n = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (coverage.at(x, y, 0) > 0.5f) {
        for (int c = 0; c < 3; ++c) s += img.at(x, y, c);
        ++n;
      }
  return s / (3.0 * n);
}

}  // namespace

TEST_CASE("override parsing and application") {
  const auto o = parse_override("expression:2=0.8");
  CHECK(o.group == CoeffGroup::Expression);
  CHECK(o.index == 2);
  CHECK(o.value == 0.8);
  CHECK_THROWS_AS(parse_override("expression2=0.8"), ServiceError);
  CHECK_THROWS_AS(parse_override("nose:0=1"), ServiceError);
  CHECK_THROWS_AS(parse_override("shape:x=1"), ServiceError);
  CHECK_THROWS_AS(parse_override("shape:0=abc"), ServiceError);

  const CoeffVector base = sample_coeffs(CoeffLayout::toy(), 1);
  CHECK(apply_overrides(base, {}) == base);
  const auto c = apply_overrides(base, {{CoeffGroup::Shape, 1, 0.5}, {CoeffGroup::Shape, 1, 0.7}});
  CHECK(c.get(CoeffGroup::Shape, 1) == 0.7);
  try {
    apply_overrides(base, {{CoeffGroup::Expression, 6, 1.0}});
    FAIL("expected ServiceError");
  } catch (const ServiceError& e) {
    CHECK(e.code() == "invalid_argument");
    CHECK(e.detail().find("expression[0..5]") != std::string::npos);
  }
}

TEST_CASE("interpolation endpoints") {
  const auto a = sample_coeffs(CoeffLayout::toy(), 1);
  const auto b = sample_coeffs(CoeffLayout::toy(), 2);
  const auto two = interpolate_coeffs(a, b, 2);
  REQUIRE(two.size() == 2);
  CHECK(two[0] == a);
  CHECK(two[1] == b);
  const auto three = interpolate_coeffs(a, b, 3);
  CHECK(three[1].values().isApprox(0.5 * (a.values() + b.values())));
  CHECK_THROWS_AS(interpolate_coeffs(a, b, 1), ServiceError);
}

TEST_CASE("layout description") {
  const auto entries = describe_layout(CoeffLayout::toy());
  REQUIRE(entries.size() == 6);
  CHECK(entries[0].group == "shape");
  CHECK(entries[3].dim == 27);
  CHECK(entries[3].offset == 22);
  CHECK(entries[3].min[0] < 3.0);
  CHECK(entries[3].max[0] > 3.0);
}

TEST_CASE("edit invariants") {
  EditService svc(default_pipeline(), 9);
  const auto image = input_image();
  const auto session = svc.create_session(image);
  const auto& base = session.result;

  SUBCASE("zero-override edit is bit-identical") {
    const auto again = svc.edit(session.session_id, {});
    CHECK(again.output == base.output);
    CHECK(again.prior == base.prior);
    CHECK(again.raw == base.raw);
  }
  SUBCASE("off-mask pixels never change across edits") {
    for (double v : {-1.0, 0.5, 2.0}) {
      const auto r = svc.edit(session.session_id, {{CoeffGroup::Expression, 0, v}, {CoeffGroup::Shape, 2, -v}});
      CHECK(r.mask == base.mask);
      CHECK(off_mask_equal(r.output, base.output, base.mask));
      CHECK(off_mask_equal(r.output, image, base.mask));
    }
  }
  SUBCASE("brighter band 0 brightens the prior inside the face") {
    Overrides dim, bright;
    for (int ch = 0; ch < 3; ++ch) {
      dim.push_back({CoeffGroup::Illumination, ch * 9, 2.0});
      bright.push_back({CoeffGroup::Illumination, ch * 9, 3.0});
    }
    const auto a = svc.edit(session.session_id, dim);
    const auto b = svc.edit(session.session_id, bright);
    const auto coverage = render_face(assets().basis, a.coeffs, assets().camera).coverage_map();
    CHECK(mean_inside(b.prior, coverage) > mean_inside(a.prior, coverage));
  }
  SUBCASE("expression sweep moves landmarks monotonically") {
    std::vector<PointMatrix> marks;
    for (double v : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
      const auto r = svc.edit(session.session_id, {{CoeffGroup::Expression, 0, v}});
      marks.push_back(project_landmarks(assets().basis, r.coeffs, assets().camera));
    }
    int moving = 0;
    for (int i = 0; i < kNumLandmarks; ++i) {
      for (int k = 0; k < 2; ++k) {
        const double total = marks.back()(i, k) - marks.front()(i, k);
        if (std::abs(total) < 1e-6) continue;
        ++moving;
        for (std::size_t s = 1; s < marks.size(); ++s) CHECK((marks[s](i, k) - marks[s - 1](i, k)) * total > 0.0);
      }
    }
    CHECK(moving > 0);
  }
  SUBCASE("sequences") {
    const Overrides a = {{CoeffGroup::Expression, 1, -1.0}};
    const Overrides b = {{CoeffGroup::Expression, 1, 1.0}};
    const auto two = svc.sequence(session.session_id, a, b, 2);
    REQUIRE(two.size() == 2);
    CHECK(two[0].output == svc.edit(session.session_id, a).output);
    CHECK(two[1].output == svc.edit(session.session_id, b).output);
    const auto three = svc.sequence(session.session_id, a, b, 3);
    CHECK(three.size() == 3);
    const auto same = svc.sequence(session.session_id, a, a, 3);
    CHECK(same[0].output == same[2].output);
    CHECK_THROWS_AS(svc.sequence(session.session_id, a, b, 1), ServiceError);
  }
  SUBCASE("bad index and unknown session") {
    CHECK_THROWS_AS(svc.edit(session.session_id, {{CoeffGroup::Rotation, 3, 0.0}}), ServiceError);
    CHECK_THROWS_AS(svc.edit("nope", {}), ServiceError);
  }
}

TEST_CASE("service inference is deterministic per seed and image") {
  EditService a(default_pipeline(), 9);
  EditService b(default_pipeline(), 9);
  const auto image = input_image();
  CHECK(a.infer(image).output == b.infer(image).output);
  CHECK(a.create_session(image).result.output == a.infer(image).output);
}

TEST_CASE("unmasked input passes through") {
  EditService svc(pipeline(small_net(-100.0, true)), 3);
  const auto image = synth_pair(assets(), 0, SeedStream::Heldout, 2).clean;
  const auto r = svc.infer(image);
  CHECK(set_fraction(r.mask) == 0.0);
  CHECK(r.noisy == image);
  CHECK(r.output == image);
}

TEST_CASE("service without a model") {
  EditService svc(nullptr, 1);
  CHECK_FALSE(svc.ready());
  CHECK(svc.health().at("status") == "unavailable");
  try {
    svc.create_session(input_image());
    FAIL("expected ServiceError");
  } catch (const ServiceError& e) {
    CHECK(e.code() == "unavailable");
  }
  const auto missing = EditService::from_checkpoints(assets().basis, assets().camera, "/nonexistent/a.ckpt",
                                                     "/nonexistent/b.ckpt", 1);
  CHECK_FALSE(missing->ready());
  CHECK(missing->layout().size() == 6);
}

TEST_CASE("base64") {
  const std::vector<std::uint8_t> bytes = {0, 1, 2, 250, 251, 255, 7};
  CHECK(base64_encode(bytes) == "AAEC+vv/Bw==");
  CHECK(base64_decode(base64_encode(bytes)) == bytes);
  CHECK_THROWS_AS(base64_decode("***"), ServiceError);
}

namespace {

std::string png_b64(const Image& img) { return base64_encode(encode_png(img)); }

json parse(const HttpResponse& r) { return json::parse(r.body); }

}  // namespace

TEST_CASE("HTTP routes") {
  EditService svc(default_pipeline(), 9);
  HttpApi api(svc);

  const auto health = api.handle("GET", "/healthz", "");
  CHECK(health.status == 200);
  CHECK(parse(health)["status"] == "ok");

  const auto layout = parse(api.handle("GET", "/model/layout", ""));
  REQUIRE(layout["groups"].size() == 6);
  CHECK(layout["groups"][1]["name"] == "expression");
  CHECK(layout["groups"][1]["dim"] == 6);
  CHECK(layout["groups"][1]["min"].size() == 6);

  const auto created = api.handle("POST", "/session", json{{"image", png_b64(input_image())}}.dump());
  REQUIRE(created.status == 200);
  const auto s = parse(created);
  const std::string id = s["session_id"];
  CHECK(s["coeffs"]["illumination"].size() == 27);
  for (const char* k : {"mask_png", "prior_png", "output_png"}) CHECK(!s[k].get<std::string>().empty());
  const auto decoded = decode_png(base64_decode(s["output_png"]));
  CHECK(decoded.width == 32);

  const auto zero = api.handle("POST", "/session/" + id + "/edit", json{{"overrides", json::array()}}.dump());
  REQUIRE(zero.status == 200);
  CHECK(parse(zero)["output_png"] == s["output_png"]);

  const auto edited = api.handle(
      "POST", "/session/" + id + "/edit",
      json{{"overrides", json::array({json{{"group", "expression"}, {"index", 0}, {"value", 1.5}}})}}.dump());
  CHECK(edited.status == 200);

  const auto seq = api.handle("POST", "/session/" + id + "/sequence",
                              json{{"overrides_a", json::array()},
                                   {"overrides_b", json::array({json{{"group", "shape"}, {"index", 0}, {"value", 1.0}}})},
                                   {"steps", 3}}
                                  .dump());
  REQUIRE(seq.status == 200);
  CHECK(parse(seq)["frames"].size() == 3);

  auto expect_error = [](const HttpResponse& r, int status, const std::string& code) {
    CHECK(r.status == status);
    const auto j = json::parse(r.body);
    CHECK(j["code"] == code);
    CHECK(j.contains("message"));
    CHECK(j.contains("detail"));
  };
  expect_error(api.handle("POST", "/session/" + id + "/sequence",
                          json{{"overrides_a", json::array()}, {"overrides_b", json::array()}, {"steps", 1}}.dump()),
               400, "invalid_argument");
  expect_error(api.handle("POST", "/session/deadbeef/edit", json{{"overrides", json::array()}}.dump()), 404,
               "not_found");
  expect_error(api.handle("POST", "/session/" + id + "/edit",
                          json{{"overrides", json::array({json{{"group", "shape"}, {"index", 99}, {"value", 1}}})}}.dump()),
               400, "invalid_argument");
  expect_error(api.handle("POST", "/session", "{not json"), 400, "invalid_argument");
  expect_error(api.handle("POST", "/session", json{{"image", "@@@"}}.dump()), 400, "invalid_argument");
  expect_error(api.handle("POST", "/session", json{{"image", png_b64(Image(16, 16, 3, 0.5f))}}.dump()), 400,
               "invalid_argument");
  expect_error(api.handle("GET", "/nowhere", ""), 404, "not_found");
  CHECK(api.handle("GET", "/session", "").status == 400);

  EditService empty(nullptr, 1);
  HttpApi down(empty);
  CHECK(down.handle("GET", "/healthz", "").status == 200);
  expect_error(down.handle("POST", "/session", json{{"image", png_b64(input_image())}}.dump()), 503, "unavailable");
}

TEST_CASE("HTTP over a socket") {
  EditService svc(default_pipeline(), 9);
  HttpApi api(svc);
  const int port = api.serve_background();
  REQUIRE(port > 0);
  httplib::Client client("127.0.0.1", port);
  const auto health = client.Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body)["status"] == "ok");
  const auto created = client.Post("/session", json{{"image", png_b64(input_image())}}.dump(), "application/json");
  REQUIRE(created);
  CHECK(created->status == 200);
  const auto missing = client.Get("/nowhere");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  api.stop();
}
