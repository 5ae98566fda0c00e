#pragma once

#include <map>
#include <string>
#include <vector>

#include "safeil/common.hpp"

namespace safeil {

/// Value model for the TOML subset used by run configs: tables, bare keys,
/// strings, numbers, booleans and (nested) arrays. Errors carry the source
/// line and the dotted key path.
struct TomlValue {
  enum class Kind { String, Float, Integer, Boolean, Array };
  Kind kind = Kind::String;
  std::string str;
  double num = 0.0;
  long long inum = 0;
  bool boolean = false;
  std::vector<TomlValue> array;

  double as_double(const std::string& path) const;
  long long as_int(const std::string& path) const;
  const std::string& as_string(const std::string& path) const;
  bool as_bool(const std::string& path) const;
};

class TomlTable {
 public:
  static TomlTable parse_file(const std::string& path);
  static TomlTable parse_string(const std::string& text, const std::string& source = "<string>");

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  const TomlValue& at(const std::string& key) const;

  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int_or(const std::string& key, long long fallback) const;
  std::string get_string(const std::string& key) const;
  std::string get_string_or(const std::string& key, const std::string& fallback) const;
  bool get_bool_or(const std::string& key, bool fallback) const;
  std::vector<double> get_double_array(const std::string& key) const;
  std::vector<long long> get_int_array(const std::string& key) const;
  Vector get_vector(const std::string& key) const;
  Matrix get_matrix(const std::string& key) const;

  std::vector<std::string> keys() const;

 private:
  std::map<std::string, TomlValue> values_;
};

}  // namespace safeil
