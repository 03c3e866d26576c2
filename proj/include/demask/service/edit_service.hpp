#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "demask/nn/pipeline.hpp"

namespace demask {

/// Error with a machine-readable code: "invalid_argument", "not_found" or "unavailable".
class ServiceError : public std::runtime_error {
 public:
  ServiceError(std::string code, const std::string& message, std::string detail = {})
      : std::runtime_error(message), code_(std::move(code)), detail_(std::move(detail)) {}
  const std::string& code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string code_;
  std::string detail_;
};

struct Override {
  CoeffGroup group;
  int index;
  double value;
};
using Overrides = std::vector<Override>;

/// "group:index=value", e.g. "expression:2=0.8".
Override parse_override(const std::string& text);

/// Copy of `base` with every override applied; later overrides of the same entry win.
/// Throws ServiceError("invalid_argument") listing the valid range on a bad index.
CoeffVector apply_overrides(const CoeffVector& base, const Overrides& overrides);

/// Sequence of K coefficient vectors (1 - t) a + t b with t = k / (K - 1); the
/// endpoints are a and b exactly. Throws ServiceError for K < 2.
std::vector<CoeffVector> interpolate_coeffs(const CoeffVector& a, const CoeffVector& b, int steps);

struct LayoutEntry {
  std::string group;
  int offset = 0;
  int dim = 0;
  std::vector<double> min;  // mean - 3 sigma of the sampling prior
  std::vector<double> max;  // mean + 3 sigma
};

/// Slider ranges for every group of `layout`.
std::vector<LayoutEntry> describe_layout(const CoeffLayout& layout, const SamplingScales& scales = {});

/// Sessions around a MaskRemovalPipeline. Each session caches m-hat, c-hat and the
/// noise image; edits swap coefficients and re-run the generator on the cached
/// inputs, so pixels outside the predicted mask never change within a session.
class EditService {
 public:
  /// A service without a pipeline answers health checks and reports everything
  /// else as unavailable.
  EditService(std::shared_ptr<const MaskRemovalPipeline> pipeline, std::uint64_t seed,
              std::map<std::string, std::string> versions = {});

  /// Loads both checkpoints; a missing or unreadable checkpoint leaves the service unavailable.
  static std::unique_ptr<EditService> from_checkpoints(const MorphableBasis& basis, const Camera& camera,
                                                       const std::filesystem::path& recon_checkpoint,
                                                       const std::filesystem::path& inpaint_checkpoint,
                                                       std::uint64_t seed);

  bool ready() const noexcept { return pipeline_ != nullptr; }
  const std::string& unavailable_reason() const noexcept { return unavailable_reason_; }

  struct SessionResult {
    std::string session_id;
    MaskRemovalPipeline::Result result;
  };

  /// Stateless single pass; the noise seed depends on the service seed and the image bytes.
  MaskRemovalPipeline::Result infer(const Image& image) const;
  SessionResult create_session(const Image& image);
  /// Replaces the session's override set and returns the re-generated result.
  MaskRemovalPipeline::Result edit(const std::string& session_id, const Overrides& overrides);
  std::vector<MaskRemovalPipeline::Result> sequence(const std::string& session_id, const Overrides& a,
                                                    const Overrides& b, int steps);
  /// The session's current result.
  MaskRemovalPipeline::Result current(const std::string& session_id) const;

  std::vector<LayoutEntry> layout() const;
  /// "status" plus checkpoint versions.
  std::map<std::string, std::string> health() const;

  std::size_t session_count() const;

 private:
  struct Session {
    mutable std::mutex mutex;
    MaskRemovalPipeline::Result base;
    MaskRemovalPipeline::Result current;
    Overrides overrides;
  };

  const MaskRemovalPipeline& require_pipeline() const;
  std::shared_ptr<Session> find(const std::string& id) const;
  std::uint64_t noise_seed_for(const Image& image) const;

  std::shared_ptr<const MaskRemovalPipeline> pipeline_;
  std::uint64_t seed_;
  std::map<std::string, std::string> versions_;
  std::string unavailable_reason_;
  CoeffLayout layout_;

  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_session_ = 0;
};

}  // namespace demask
