#include "slim/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cctype>
#include <sstream>

#ifndef SLIM_VERSION
#define SLIM_VERSION "0.1.0"
#endif
#ifndef SLIM_GIT_REV
#define SLIM_GIT_REV "unknown"
#endif

namespace slim {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

Config from_tree(const boost::property_tree::ptree& tree) {
  Config c;
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      c.set(section, trim(body.data()));
      continue;
    }
    for (const auto& [key, value] : body) c.set(section + "." + key, trim(value.data()));
  }
  return c;
}

}  // namespace

Config Config::from_ini_file(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw SchemaError("config file " + path.string() + ": " + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }
  return from_tree(tree);
}

Config Config::from_ini_text(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw SchemaError("config: " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  return from_tree(tree);
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string Config::str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw SchemaError("missing config key '" + key + "'");
  return it->second;
}

double Config::num(const std::string& key) const {
  const auto s = str(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw SchemaError("config key '" + key + "' is not a number: '" + s + "'");
}

long long Config::integer(const std::string& key) const {
  const auto s = str(key);
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw SchemaError("config key '" + key + "' is not an integer: '" + s + "'");
}

bool Config::flag(const std::string& key) const {
  auto s = str(key);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return false;
  throw SchemaError("config key '" + key + "' is not a boolean: '" + s + "'");
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, sep)) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> Config::list(const std::string& key) const { return split_list(str(key)); }

std::vector<double> Config::num_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : list(key)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw SchemaError("config key '" + key + "' has a non-numeric entry '" + s + "'");
    }
  }
  return out;
}

std::vector<long long> Config::int_list(const std::string& key) const {
  std::vector<long long> out;
  for (const auto& s : list(key)) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoll(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw SchemaError("config key '" + key + "' has a non-integer entry '" + s + "'");
    }
  }
  return out;
}

std::string Config::to_ini() const {
  std::map<std::string, std::map<std::string, std::string>> sections;
  for (const auto& [k, v] : values_) {
    const auto dot = k.find('.');
    if (dot == std::string::npos)
      sections[""][k] = v;
    else
      sections[k.substr(0, dot)][k.substr(dot + 1)] = v;
  }
  std::ostringstream os;
  for (const auto& [section, kv] : sections) {
    if (!section.empty()) os << '[' << section << "]\n";
    for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
    os << '\n';
  }
  return os.str();
}

std::string artifact_version() { return std::string(SLIM_VERSION) + "+" + SLIM_GIT_REV; }

}  // namespace slim
