#include "coeffrec/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

namespace coeffrec {

namespace {

double to_double(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw ConfigError(what + ": expected a number, got '" + s + "'");
  }
  if (pos != s.size() || !std::isfinite(v)) throw ConfigError(what + ": expected a number, got '" + s + "'");
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<double> parse_doubles(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  for (std::string tok; std::getline(ss, tok, ',');) out.push_back(to_double(trim(tok), what));
  return out;
}

ConfigFile ConfigFile::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), file.string());
}

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
  ConfigFile c;
  c.origin_ = origin;
  std::istringstream in(text);
  try {
    boost::property_tree::read_ini(in, c.tree_);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(origin + ": line " + std::to_string(e.line()) + ": " + e.message());
  }
  return c;
}

bool ConfigFile::has(const std::string& key) const { return tree_.get_optional<std::string>(key).has_value(); }

std::string ConfigFile::get_string(const std::string& key) const {
  const auto v = tree_.get_optional<std::string>(key);
  if (!v) throw ConfigError(origin_ + ": missing key '" + key + "'");
  return *v;
}

std::string ConfigFile::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double ConfigFile::get_double(const std::string& key) const {
  return to_double(get_string(key), origin_ + ": " + key);
}

double ConfigFile::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

long ConfigFile::get_int(const std::string& key) const {
  const double v = get_double(key);
  if (v != std::floor(v)) throw ConfigError(origin_ + ": " + key + ": expected an integer");
  return long(v);
}

long ConfigFile::get_int(const std::string& key, long fallback) const { return has(key) ? get_int(key) : fallback; }

std::vector<double> ConfigFile::get_doubles(const std::string& key) const {
  return parse_doubles(get_string(key), origin_ + ": " + key);
}

std::vector<int> ConfigFile::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (double v : get_doubles(key)) {
    if (v != std::floor(v)) throw ConfigError(origin_ + ": " + key + ": expected integers");
    out.push_back(int(v));
  }
  return out;
}

std::vector<std::string> ConfigFile::keys(const std::string& section) const {
  std::vector<std::string> out;
  const auto child = tree_.get_child_optional(section);
  if (!child) return out;
  for (const auto& kv : *child) out.push_back(kv.first);
  return out;
}

}  // namespace coeffrec
