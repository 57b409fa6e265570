#pragma once

#include "slim/common.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace slim {

/// Flat "section.key" -> value store read from INI-style text. Later writes
/// win, so defaults, file values and command-line flags layer naturally.
class Config {
 public:
  static Config from_ini_file(const std::filesystem::path& path);
  static Config from_ini_text(const std::string& text);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void merge(const Config& other);
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string str(const std::string& key) const;
  double num(const std::string& key) const;
  long long integer(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<std::string> list(const std::string& key) const;
  std::vector<double> num_list(const std::string& key) const;
  std::vector<long long> int_list(const std::string& key) const;

  /// Canonical INI rendering (sorted sections and keys).
  std::string to_ini() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::vector<std::string> split_list(const std::string& text, char sep = ',');

/// Version string compiled into the artifact.
std::string artifact_version();

}  // namespace slim
