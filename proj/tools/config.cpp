#include "config.hpp"

#include <cmath>
#include <fstream>

namespace dsb::cli {

ConfigNode::ConfigNode(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
  if (!j_.is_object()) fail(ErrorKind::validation, path_ + ": expected an object");
}

void ConfigNode::error(const std::string& key, const std::string& what) const {
  fail(ErrorKind::validation, path_ + "." + key + ": " + what);
}

const nlohmann::json& ConfigNode::at(const std::string& key) const {
  used_.insert(key);
  if (!j_.contains(key)) error(key, "required field is missing");
  return j_.at(key);
}

double ConfigNode::number(const std::string& key) const {
  const auto& v = at(key);
  if (!v.is_number()) error(key, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) error(key, "expected a finite number");
  return d;
}

double ConfigNode::number(const std::string& key, double fallback) const {
  used_.insert(key);
  return has(key) ? number(key) : fallback;
}

std::size_t ConfigNode::count(const std::string& key) const {
  const auto& v = at(key);
  if (!v.is_number_unsigned()) error(key, "expected a non-negative integer");
  return v.get<std::size_t>();
}

std::size_t ConfigNode::count(const std::string& key, std::size_t fallback) const {
  used_.insert(key);
  return has(key) ? count(key) : fallback;
}

std::uint64_t ConfigNode::seed(const std::string& key, std::uint64_t fallback) const {
  used_.insert(key);
  if (!has(key)) return fallback;
  const auto& v = j_.at(key);
  if (!v.is_number_unsigned()) error(key, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

bool ConfigNode::flag(const std::string& key, bool fallback) const {
  used_.insert(key);
  if (!has(key)) return fallback;
  const auto& v = j_.at(key);
  if (!v.is_boolean()) error(key, "expected true or false");
  return v.get<bool>();
}

std::string ConfigNode::text(const std::string& key) const {
  const auto& v = at(key);
  if (!v.is_string()) error(key, "expected a string");
  return v.get<std::string>();
}

std::string ConfigNode::text(const std::string& key, const std::string& fallback) const {
  used_.insert(key);
  return has(key) ? text(key) : fallback;
}

std::vector<double> ConfigNode::numbers(const std::string& key) const {
  const auto& v = at(key);
  if (!v.is_array()) error(key, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) error(key + "[" + std::to_string(i) + "]", "expected a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

std::vector<std::string> ConfigNode::texts(const std::string& key) const {
  const auto& v = at(key);
  if (!v.is_array()) error(key, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_string()) error(key + "[" + std::to_string(i) + "]", "expected a string");
    out.push_back(v[i].get<std::string>());
  }
  return out;
}

ConfigNode ConfigNode::child(const std::string& key) const {
  const auto& v = at(key);
  if (!v.is_object()) error(key, "expected an object");
  return ConfigNode(v, path_ + "." + key);
}

const nlohmann::json& ConfigNode::raw(const std::string& key) const { return at(key); }

void ConfigNode::finish() const {
  for (const auto& [key, _] : j_.items()) {
    if (!used_.count(key)) error(key, "unknown field");
  }
}

nlohmann::json load_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) fail(ErrorKind::validation, "cannot open '" + file.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::parse, file.string() + ": " + e.what());
  }
}

ConfigFile ConfigFile::load(const std::filesystem::path& file) {
  return {load_json(file), file.has_parent_path() ? file.parent_path() : std::filesystem::path(".")};
}

std::filesystem::path ConfigFile::resolve(const std::string& p) const {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : dir / path;
}

}  // namespace dsb::cli
