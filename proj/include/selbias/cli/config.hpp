#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "selbias/distributions.hpp"
#include "selbias/matching.hpp"
#include "selbias/parametric.hpp"
#include "selbias/synthpop.hpp"

namespace selbias::cli {

struct KeyInfo {
  std::string name;
  std::string default_value;
  std::string help;
  bool path = false;  // excluded from the config hash
};

// Every recognized key with its default.
const std::vector<KeyInfo>& known_keys();

// Resolved configuration. Raw values are validated on every typed read and
// once up front by `validate()`.
class RunConfig {
 public:
  RunConfig();

  // Flat "key = value" lines; '#' starts a comment. Unknown keys are errors.
  void load_file(const std::string& path);
  void load_text(const std::string& text, const std::string& origin);
  // SELBIAS_<KEY> with the key upper-cased.
  void load_environment();
  void set(const std::string& key, const std::string& value);

  const std::string& raw(const std::string& key) const;
  bool is_set(const std::string& key) const;

  // Throws Error{kInvalidConfig} naming the first offending key.
  void validate() const;

  // "key=value\n" for every non-path key in name order.
  std::string canonical() const;
  // Lower-case hex SHA-256 of canonical().
  std::string hash() const;

  std::uint64_t seed() const;
  int annotators() const;
  std::size_t count(DatasetTag tag) const;
  BetaMixture mixture(DatasetTag tag) const;
  bool keep_draws() const;
  std::vector<std::string> models() const;
  // One curve per model.
  std::vector<AccuracyCurve> curves() const;
  EmConfig em() const;
  SplineConfig spline() const;
  int grid_panels() const;
  int resamples() const;
  double ci_level() const;
  HistogramSpec histogram_spec() const;
  std::size_t sample_size() const;
  MatchMethod match_method() const;
  ExhaustionPolicy exhaustion() const;
  DatasetTag match_source() const;
  DatasetTag match_target() const;
  std::vector<int> int_list(const std::string& key) const;
  std::string path(const std::string& key) const;

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> explicit_;

  double real(const std::string& key, double lo, double hi) const;
  long long integer(const std::string& key, long long lo, long long hi) const;
};

// Parses "a,b" or "w:a,b;w:a,b".
BetaMixture parse_mixture(const std::string& text);

std::string sha256_hex(const std::string& data);

}  // namespace selbias::cli
