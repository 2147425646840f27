#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>

namespace coeffrec {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sectioned key = value file; lines starting with ';' or '#' are comments.
class ConfigFile {
 public:
  static ConfigFile load(const std::filesystem::path& file);
  static ConfigFile parse(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const;  // "section.key"
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long get_int(const std::string& key) const;
  long get_int(const std::string& key, long fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;
  std::vector<int> get_ints(const std::string& key) const;
  /// Keys of a section in file order.
  std::vector<std::string> keys(const std::string& section) const;
  const std::string& origin() const { return origin_; }

 private:
  boost::property_tree::ptree tree_;
  std::string origin_;
};

std::vector<double> parse_doubles(const std::string& text, const std::string& what);

}  // namespace coeffrec
