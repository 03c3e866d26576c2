#include "demask/service/edit_service.hpp"

#include <charconv>
#include <cstdio>

#include "demask/errors.hpp"
#include "demask/nn/checkpoint.hpp"
#include "demask/nn/trainer.hpp"
#include "demask/random.hpp"

namespace demask {
namespace {

std::string range_text(const CoeffLayout& layout) {
  std::string s;
  for (CoeffGroup g : kCoeffGroups) {
    s += (s.empty() ? "" : ", ") + std::string(group_name(g)) + "[0.." + std::to_string(layout.dim(g) - 1) + "]";
  }
  return s;
}

std::uint64_t fnv1a(const std::vector<float>& data) {
  std::uint64_t h = 1469598103934665603ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
  for (std::size_t i = 0; i < data.size() * sizeof(float); ++i) {
    h = (h ^ bytes[i]) * 1099511628211ull;
  }
  return h;
}

}  // namespace

Override parse_override(const std::string& text) {
  const auto colon = text.find(':');
  const auto eq = text.find('=');
  if (colon == std::string::npos || eq == std::string::npos || eq < colon) {
    throw ServiceError("invalid_argument", "override must look like group:index=value", text);
  }
  const auto group = group_from_name(text.substr(0, colon));
  if (!group) {
    throw ServiceError("invalid_argument", "unknown coefficient group '" + text.substr(0, colon) + "'",
                       "groups: shape, expression, texture, illumination, rotation, translation");
  }
  const std::string idx = text.substr(colon + 1, eq - colon - 1);
  const std::string val = text.substr(eq + 1);
  int index = 0;
  const auto r = std::from_chars(idx.data(), idx.data() + idx.size(), index);
  if (r.ec != std::errc() || r.ptr != idx.data() + idx.size()) {
    throw ServiceError("invalid_argument", "override index is not an integer", text);
  }
  double value = 0.0;
  try {
    std::size_t used = 0;
    value = std::stod(val, &used);
    if (used != val.size()) {
      throw std::invalid_argument(val);
    }
  } catch (const std::exception&) {
    throw ServiceError("invalid_argument", "override value is not a number", text);
  }
  return {*group, index, value};
}

CoeffVector apply_overrides(const CoeffVector& base, const Overrides& overrides) {
  CoeffVector out = base;
  for (const auto& o : overrides) {
    if (o.index < 0 || o.index >= base.layout().dim(o.group)) {
      throw ServiceError("invalid_argument",
                         "index " + std::to_string(o.index) + " out of range for group " +
                             std::string(group_name(o.group)),
                         "valid ranges: " + range_text(base.layout()));
    }
    if (!std::isfinite(o.value)) {
      throw ServiceError("invalid_argument", "override value must be finite");
    }
    out.set(o.group, o.index, o.value);
  }
  return out;
}

std::vector<CoeffVector> interpolate_coeffs(const CoeffVector& a, const CoeffVector& b, int steps) {
  if (steps < 2) {
    throw ServiceError("invalid_argument", "a sequence needs at least 2 steps, got " + std::to_string(steps));
  }
  if (!(a.layout() == b.layout())) {
    throw ServiceError("invalid_argument", "sequence endpoints have different layouts");
  }
  std::vector<CoeffVector> out;
  for (int k = 0; k < steps; ++k) {
    if (k == 0) {
      out.push_back(a);
    } else if (k == steps - 1) {
      out.push_back(b);
    } else {
      const double t = static_cast<double>(k) / static_cast<double>(steps - 1);
      out.emplace_back(a.layout(), ((1.0 - t) * a.values() + t * b.values()).eval());
    }
  }
  return out;
}

std::vector<LayoutEntry> describe_layout(const CoeffLayout& layout, const SamplingScales& scales) {
  std::vector<LayoutEntry> out;
  for (CoeffGroup g : kCoeffGroups) {
    LayoutEntry e;
    e.group = std::string(group_name(g));
    e.offset = layout.offset(g);
    e.dim = layout.dim(g);
    for (int i = 0; i < e.dim; ++i) {
      e.min.push_back(scales.mean(g, i) - 3.0 * scales.sigma(g, i));
      e.max.push_back(scales.mean(g, i) + 3.0 * scales.sigma(g, i));
    }
    out.push_back(std::move(e));
  }
  return out;
}

EditService::EditService(std::shared_ptr<const MaskRemovalPipeline> pipeline, std::uint64_t seed,
                         std::map<std::string, std::string> versions)
    : pipeline_(std::move(pipeline)), seed_(seed), versions_(std::move(versions)) {
  if (pipeline_) {
    layout_ = pipeline_->layout();
  } else {
    unavailable_reason_ = "no model loaded";
  }
}

std::unique_ptr<EditService> EditService::from_checkpoints(const MorphableBasis& basis, const Camera& camera,
                                                           const std::filesystem::path& recon_checkpoint,
                                                           const std::filesystem::path& inpaint_checkpoint,
                                                           std::uint64_t seed) {
  std::map<std::string, std::string> versions;
  try {
    const auto rm = read_checkpoint_meta(recon_checkpoint);
    const auto im = read_checkpoint_meta(inpaint_checkpoint);
    versions["seg_recon"] = "v" + rm.at("format_version") + " step " + rm.at("step");
    versions["inpaint"] = "v" + im.at("format_version") + " step " + im.at("step");
    auto net = load_seg_recon(recon_checkpoint, basis.layout());
    auto gen = load_generator(inpaint_checkpoint);
    auto pipeline = std::make_shared<const MaskRemovalPipeline>(net, gen, basis, camera);
    return std::make_unique<EditService>(std::move(pipeline), seed, std::move(versions));
  } catch (const std::exception& e) {
    auto svc = std::make_unique<EditService>(nullptr, seed, std::move(versions));
    svc->unavailable_reason_ = e.what();
    svc->layout_ = basis.layout();
    return svc;
  }
}

const MaskRemovalPipeline& EditService::require_pipeline() const {
  if (!pipeline_) {
    throw ServiceError("unavailable", "model checkpoints are not loaded", unavailable_reason_);
  }
  return *pipeline_;
}

std::uint64_t EditService::noise_seed_for(const Image& image) const {
  return derive_seed(seed_, static_cast<std::uint64_t>(SeedStream::Noise), fnv1a(image.data));
}

MaskRemovalPipeline::Result EditService::infer(const Image& image) const {
  const auto& p = require_pipeline();
  try {
    return p.infer(image, noise_seed_for(image));
  } catch (const DimensionError& e) {
    throw ServiceError("invalid_argument", "image has the wrong size", e.what());
  }
}

EditService::SessionResult EditService::create_session(const Image& image) {
  auto session = std::make_shared<Session>();
  session->base = infer(image);
  session->current = session->base;
  std::string id;
  {
    std::lock_guard lock(sessions_mutex_);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(derive_seed(seed_, 0x5E55, next_session_++)));
    id = buf;
    sessions_[id] = session;
  }
  return {id, session->current};
}

std::shared_ptr<EditService::Session> EditService::find(const std::string& id) const {
  std::lock_guard lock(sessions_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) {
    throw ServiceError("not_found", "no session '" + id + "'");
  }
  return it->second;
}

MaskRemovalPipeline::Result EditService::edit(const std::string& session_id, const Overrides& overrides) {
  const auto& p = require_pipeline();
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  const CoeffVector c = apply_overrides(s->base.coeffs, overrides);
  s->current = p.rerender(s->base, c);
  s->overrides = overrides;
  return s->current;
}

std::vector<MaskRemovalPipeline::Result> EditService::sequence(const std::string& session_id, const Overrides& a,
                                                               const Overrides& b, int steps) {
  const auto& p = require_pipeline();
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  const auto path = interpolate_coeffs(apply_overrides(s->base.coeffs, a), apply_overrides(s->base.coeffs, b), steps);
  std::vector<MaskRemovalPipeline::Result> frames;
  frames.reserve(path.size());
  for (const auto& c : path) {
    frames.push_back(p.rerender(s->base, c));
  }
  return frames;
}

MaskRemovalPipeline::Result EditService::current(const std::string& session_id) const {
  auto s = find(session_id);
  std::lock_guard lock(s->mutex);
  return s->current;
}

std::vector<LayoutEntry> EditService::layout() const { return describe_layout(layout_); }

std::map<std::string, std::string> EditService::health() const {
  auto out = versions_;
  out["status"] = ready() ? "ok" : "unavailable";
  out["layout"] = to_string(layout_);
  if (!ready()) {
    out["reason"] = unavailable_reason_;
  }
  return out;
}

std::size_t EditService::session_count() const {
  std::lock_guard lock(sessions_mutex_);
  return sessions_.size();
}

}  // namespace demask
