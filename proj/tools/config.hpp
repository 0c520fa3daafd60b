#pragma once

// Strict JSON config access. Every lookup records the key it consumed so that
// leftover (unknown) keys can be rejected with their full path.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsb/error.hpp"

namespace dsb::cli {

class ConfigNode {
 public:
  ConfigNode(const nlohmann::json& j, std::string path);

  const std::string& path() const noexcept { return path_; }
  bool has(const std::string& key) const { return j_.contains(key); }

  double number(const std::string& key) const;
  double number(const std::string& key, double fallback) const;
  std::size_t count(const std::string& key) const;
  std::size_t count(const std::string& key, std::size_t fallback) const;
  std::uint64_t seed(const std::string& key, std::uint64_t fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  std::string text(const std::string& key) const;
  std::string text(const std::string& key, const std::string& fallback) const;
  std::vector<double> numbers(const std::string& key) const;
  std::vector<std::string> texts(const std::string& key) const;
  ConfigNode child(const std::string& key) const;
  const nlohmann::json& raw(const std::string& key) const;

  /// Throws on any key that no accessor touched.
  void finish() const;

  [[noreturn]] void error(const std::string& key, const std::string& what) const;

 private:
  const nlohmann::json& at(const std::string& key) const;

  const nlohmann::json& j_;
  std::string path_;
  mutable std::set<std::string> used_;
};

/// Parsed config file; relative paths inside it resolve against its directory.
struct ConfigFile {
  nlohmann::json json;
  std::filesystem::path dir;

  static ConfigFile load(const std::filesystem::path& file);
  std::filesystem::path resolve(const std::string& p) const;
};

nlohmann::json load_json(const std::filesystem::path& file);

}  // namespace dsb::cli
