#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <torch/torch.h>

namespace demask {

inline constexpr std::int64_t kCheckpointVersion = 1;

/// Named modules and optimizers in one torch archive, plus a version number,
/// a kind tag ("seg_recon", "inpaint") and a flat string meta map.
class CheckpointWriter {
 public:
  explicit CheckpointWriter(std::string kind);

  void set(const std::string& key, const std::string& value);
  void add_module(const std::string& name, const torch::nn::Module& module);
  /// Adam state keyed by (group, parameter index), so the bytes do not depend on
  /// tensor addresses the way libtorch's own optimizer serialization does.
  void add_optimizer(const std::string& name, const torch::optim::Adam& optimizer);
  /// Free-form text (may span lines), e.g. a loss history.
  void add_text(const std::string& name, const std::string& text);
  /// Writes to a sibling temp file and renames it into place.
  void save(const std::filesystem::path& path);

 private:
  std::string kind_;
  std::map<std::string, std::string> meta_;
  torch::serialize::OutputArchive archive_;
};

class CheckpointReader {
 public:
  /// Throws FormatError for a missing/unreadable file, a version other than
  /// kCheckpointVersion, or a kind other than `expected_kind`.
  CheckpointReader(const std::filesystem::path& path, const std::string& expected_kind);

  const std::map<std::string, std::string>& meta() const noexcept { return meta_; }
  bool has(const std::string& key) const { return meta_.count(key) != 0; }
  /// Throws FormatError when the key is absent.
  const std::string& get(const std::string& key) const;
  /// Throws FormatError("<key>: checkpoint has X, expected Y") on mismatch.
  void require(const std::string& key, const std::string& expected) const;

  void load_module(const std::string& name, torch::nn::Module& module);
  void load_optimizer(const std::string& name, torch::optim::Adam& optimizer);
  std::string read_text(const std::string& name);

 private:
  std::filesystem::path path_;
  std::map<std::string, std::string> meta_;
  torch::serialize::InputArchive archive_;
};

/// Reads only the meta map (for health/status reporting).
std::map<std::string, std::string> read_checkpoint_meta(const std::filesystem::path& path);

}  // namespace demask
