#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hetcoef {

// Flat key-value configuration with dotted section keys:
//
//   # comment
//   technology.family = affine
//   technology.beta_m1 = 0.2 0.1
//   simulation.n_firms = 1000
//
// Keys are kept sorted so that dumps are byte-stable.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text, std::string_view source = "<string>");
  static KeyValueConfig load_file(const std::string& path);

  void set(const std::string& key, const std::string& value);
  bool contains(const std::string& key) const;
  std::optional<std::string> find(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

  // Keys with the given prefix (e.g. "technology.").
  std::vector<std::string> keys_with_prefix(std::string_view prefix) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

  void merge(const KeyValueConfig& other);
  std::string dump() const;

 private:
  std::map<std::string, std::string> entries_;
};

std::string format_double(double v);
std::string format_doubles(const std::vector<double>& v);

}  // namespace hetcoef
