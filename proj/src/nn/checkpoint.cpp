#include "demask/nn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "demask/errors.hpp"

namespace demask {
namespace {

std::string encode_meta(const std::map<std::string, std::string>& meta) {
  std::ostringstream out;
  for (const auto& [k, v] : meta) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ContractError("checkpoint meta entries may not contain newlines or '=' in keys: " + k);
    }
    out << k << '=' << v << '\n';
  }
  return out.str();
}

std::map<std::string, std::string> decode_meta(const std::string& text) {
  std::map<std::string, std::string> meta;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("malformed checkpoint meta line: " + line);
    }
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return meta;
}

struct Header {
  std::int64_t version = 0;
  std::string kind;
  std::map<std::string, std::string> meta;
};

Header read_header(torch::serialize::InputArchive& archive, const std::filesystem::path& path) {
  Header h;
  c10::IValue value;
  if (!archive.try_read("format_version", value) || !value.isInt()) {
    throw FormatError(path.string() + " is not a checkpoint (no format_version)");
  }
  h.version = value.toInt();
  if (!archive.try_read("kind", value) || !value.isString()) {
    throw FormatError(path.string() + ": checkpoint has no kind");
  }
  h.kind = value.toStringRef();
  if (!archive.try_read("meta", value) || !value.isString()) {
    throw FormatError(path.string() + ": checkpoint has no meta block");
  }
  h.meta = decode_meta(value.toStringRef());
  return h;
}

void load_archive(torch::serialize::InputArchive& archive, const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw FormatError("checkpoint not found: " + path.string());
  }
  try {
    archive.load_from(path.string());
  } catch (const c10::Error& e) {
    throw FormatError("cannot read checkpoint " + path.string() + ": " + e.what_without_backtrace());
  }
}

}  // namespace

CheckpointWriter::CheckpointWriter(std::string kind) : kind_(std::move(kind)) {}

void CheckpointWriter::set(const std::string& key, const std::string& value) { meta_[key] = value; }

void CheckpointWriter::add_module(const std::string& name, const torch::nn::Module& module) {
  torch::serialize::OutputArchive sub;
  module.save(sub);
  archive_.write("module." + name, sub);
}

void CheckpointWriter::add_optimizer(const std::string& name, const torch::optim::Adam& optimizer) {
  torch::serialize::OutputArchive sub;
  const auto& groups = optimizer.param_groups();
  sub.write("groups", c10::IValue(static_cast<std::int64_t>(groups.size())));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::string gp = "g" + std::to_string(g);
    const auto& params = groups[g].params();
    sub.write(gp + ".count", c10::IValue(static_cast<std::int64_t>(params.size())));
    sub.write(gp + ".lr", c10::IValue(groups[g].options().get_lr()));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto it = optimizer.state().find(params[i].unsafeGetTensorImpl());
      if (it == optimizer.state().end()) continue;
      const auto& st = static_cast<const torch::optim::AdamParamState&>(*it->second);
      const std::string pp = gp + ".p" + std::to_string(i);
      sub.write(pp + ".step", c10::IValue(st.step()));
      sub.write(pp + ".exp_avg", st.exp_avg(), true);
      sub.write(pp + ".exp_avg_sq", st.exp_avg_sq(), true);
      if (st.max_exp_avg_sq().defined()) sub.write(pp + ".max_exp_avg_sq", st.max_exp_avg_sq(), true);
    }
  }
  archive_.write("optim." + name, sub);
}

void CheckpointWriter::add_text(const std::string& name, const std::string& text) {
  archive_.write("text." + name, c10::IValue(text));
}

void CheckpointWriter::save(const std::filesystem::path& path) {
  archive_.write("format_version", c10::IValue(kCheckpointVersion));
  archive_.write("kind", c10::IValue(kind_));
  archive_.write("meta", c10::IValue(encode_meta(meta_)));
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  // Via a stream: save_to(path) names the archive root after the file, which would
  // make identical checkpoints differ by file name.
  std::ostringstream bytes;
  archive_.save_to(bytes);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << bytes.str();
    if (!out) {
      throw FormatError("could not write checkpoint " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

CheckpointReader::CheckpointReader(const std::filesystem::path& path, const std::string& expected_kind)
    : path_(path) {
  load_archive(archive_, path);
  const Header h = read_header(archive_, path);
  if (h.version != kCheckpointVersion) {
    throw FormatError(path.string() + ": checkpoint version " + std::to_string(h.version) + ", expected " +
                      std::to_string(kCheckpointVersion));
  }
  if (h.kind != expected_kind) {
    throw FormatError(path.string() + ": checkpoint kind '" + h.kind + "', expected '" + expected_kind + "'");
  }
  meta_ = h.meta;
}

const std::string& CheckpointReader::get(const std::string& key) const {
  const auto it = meta_.find(key);
  if (it == meta_.end()) {
    throw FormatError(path_.string() + ": checkpoint meta has no '" + key + "'");
  }
  return it->second;
}

void CheckpointReader::require(const std::string& key, const std::string& expected) const {
  const std::string& actual = get(key);
  if (actual != expected) {
    throw FormatError(key + ": checkpoint has " + actual + ", expected " + expected);
  }
}

void CheckpointReader::load_module(const std::string& name, torch::nn::Module& module) {
  torch::serialize::InputArchive sub;
  if (!archive_.try_read("module." + name, sub)) {
    throw FormatError(path_.string() + ": checkpoint has no module '" + name + "'");
  }
  try {
    module.load(sub);
  } catch (const c10::Error& e) {
    throw FormatError(path_.string() + ": module '" + name + "' does not match: " + e.what_without_backtrace());
  }
}

void CheckpointReader::load_optimizer(const std::string& name, torch::optim::Adam& optimizer) {
  torch::serialize::InputArchive sub;
  if (!archive_.try_read("optim." + name, sub)) {
    throw FormatError(path_.string() + ": checkpoint has no optimizer '" + name + "'");
  }
  const auto mismatch = [&](const std::string& why) {
    return FormatError(path_.string() + ": optimizer '" + name + "' does not match: " + why);
  };
  auto& groups = optimizer.param_groups();
  c10::IValue v;
  if (!sub.try_read("groups", v) || !v.isInt() || v.toInt() != static_cast<std::int64_t>(groups.size())) {
    throw mismatch("parameter group count");
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::string gp = "g" + std::to_string(g);
    const auto& params = groups[g].params();
    if (!sub.try_read(gp + ".count", v) || !v.isInt() || v.toInt() != static_cast<std::int64_t>(params.size())) {
      throw mismatch("parameter count in group " + std::to_string(g));
    }
    if (sub.try_read(gp + ".lr", v) && v.isDouble()) groups[g].options().set_lr(v.toDouble());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::string pp = gp + ".p" + std::to_string(i);
      if (!sub.try_read(pp + ".step", v) || !v.isInt()) continue;
      auto st = std::make_unique<torch::optim::AdamParamState>();
      st->step(v.toInt());
      torch::Tensor t;
      if (!sub.try_read(pp + ".exp_avg", t) || !t.sizes().equals(params[i].sizes())) throw mismatch(pp + ".exp_avg");
      st->exp_avg(t.clone());
      if (!sub.try_read(pp + ".exp_avg_sq", t) || !t.sizes().equals(params[i].sizes())) {
        throw mismatch(pp + ".exp_avg_sq");
      }
      st->exp_avg_sq(t.clone());
      if (sub.try_read(pp + ".max_exp_avg_sq", t)) st->max_exp_avg_sq(t.clone());
      optimizer.state()[params[i].unsafeGetTensorImpl()] = std::move(st);
    }
  }
}

std::string CheckpointReader::read_text(const std::string& name) {
  c10::IValue value;
  if (!archive_.try_read("text." + name, value) || !value.isString()) {
    throw FormatError(path_.string() + ": checkpoint has no text block '" + name + "'");
  }
  return value.toStringRef();
}

std::map<std::string, std::string> read_checkpoint_meta(const std::filesystem::path& path) {
  torch::serialize::InputArchive archive;
  load_archive(archive, path);
  auto h = read_header(archive, path);
  h.meta["kind"] = h.kind;
  h.meta["format_version"] = std::to_string(h.version);
  return h.meta;
}

}  // namespace demask
