#pragma once

// In-process driver for the command line plus byte-level directory comparison.

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "demask/cli.hpp"

namespace harness {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

inline Run cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"demask"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = demask::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

inline std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

/// Relative path -> file bytes for every regular file below `dir`.
inline std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[std::filesystem::relative(e.path(), dir).string()] = read_bytes(e.path());
  }
  return files;
}

/// Names of files that differ (or exist on one side only); empty when identical.
inline std::vector<std::string> differing(const std::filesystem::path& a, const std::filesystem::path& b) {
  const auto sa = snapshot(a);
  const auto sb = snapshot(b);
  std::vector<std::string> diff;
  for (const auto& [k, v] : sa) {
    const auto it = sb.find(k);
    if (it == sb.end() || it->second != v) diff.push_back(k);
  }
  for (const auto& [k, v] : sb) {
    if (!sa.count(k)) diff.push_back(k);
  }
  return diff;
}

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

}  // namespace harness
