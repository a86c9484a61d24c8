#include "selbias/cli/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "selbias/error.hpp"

namespace selbias::cli {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

[[noreturn]] void bad(const std::string& key, const std::string& why) {
  throw Error(ErrorKind::kInvalidConfig, "config key '" + key + "': " + why);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  return res.ec == std::errc() && res.ptr == t.data() + t.size() && std::isfinite(out);
}

bool parse_ll(const std::string& s, long long& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), out);
  return res.ec == std::errc() && res.ptr == t.data() + t.size();
}

std::string key_for(DatasetTag tag) { return to_string(tag); }

}  // namespace

const std::vector<KeyInfo>& known_keys() {
  static const std::vector<KeyInfo> keys{
      {"seed", "1", "master seed (unsigned 64-bit)"},
      {"annotators", "40", "annotators per item, 1..100000"},
      {"count_v1", "10000", "v1 items"},
      {"count_v2", "10000", "v2 (replica) items"},
      {"count_candidate", "0", "unfiltered candidate items"},
      {"mixture_v1", "3,2", "true selection-frequency mixture of v1"},
      {"mixture_v2", "2,2", "true selection-frequency mixture of v2"},
      {"mixture_candidate", "2,2", "true selection-frequency mixture of candidates"},
      {"keep_draws", "true", "write per-annotator draw bitstrings"},
      {"models", "model", "comma-separated model names"},
      {"curve", "logistic:10,0.5", "accuracy curve, or one per model separated by ';'"},
      {"em_components", "3", "beta mixture components, 1..20"},
      {"em_restarts", "20", "EM random restarts, 1..1000"},
      {"em_tol", "1e-7", "relative log-likelihood tolerance"},
      {"em_max_iter", "500", "EM iterations per restart"},
      {"spline_knots", "8", "interior spline knots, 0..100"},
      {"spline_max_condition", "1e12", "largest accepted design condition number"},
      {"grid_size", "128", "Gauss-Legendre panels on [0,1]"},
      {"resamples", "450", "bootstrap resamples, 2..100000"},
      {"ci_level", "0.95", "bootstrap interval level"},
      {"bin_edges", "0,0.2,0.4,0.6,0.8,1", "matching histogram edges"},
      {"sample_size", "10000", "matched sample size"},
      {"match_method", "histogram", "histogram or rejection"},
      {"exhaustion", "renormalize", "renormalize or fail when a bin runs dry"},
      {"match_source", "candidate", "dataset matched from"},
      {"match_target", "v1", "dataset matched to"},
      {"subsample_counts", "5,10,20,40", "annotator counts for subsample_curve"},
      {"linearity_counts", "5,8,10,20,40", "annotator counts for jackknife_linearity"},
      {"annotations", "", "annotations.csv path", true},
      {"correctness", "", "correctness.csv path", true},
      {"truth", "", "truth.csv path", true},
      {"report", "", "report.json path", true},
      {"out", ".", "output directory", true},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& k : known_keys()) values_[k.name] = k.default_value;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kInvalidConfig, "cannot read config file " + path);
  std::ostringstream os;
  os << in.rdbuf();
  load_text(os.str(), path);
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::kInvalidConfig,
                  origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::load_environment() {
  for (const auto& k : known_keys()) {
    std::string env = "SELBIAS_" + k.name;
    std::transform(env.begin(), env.end(), env.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    if (const char* v = std::getenv(env.c_str())) set(k.name, v);
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!values_.count(key)) {
    throw Error(ErrorKind::kInvalidConfig, "unknown config key '" + key + "'");
  }
  values_[key] = value;
  explicit_[key] = true;
}

const std::string& RunConfig::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) bad(key, "unknown key");
  return it->second;
}

bool RunConfig::is_set(const std::string& key) const {
  return explicit_.count(key) > 0 && !raw(key).empty();
}

double RunConfig::real(const std::string& key, double lo, double hi) const {
  double v = 0.0;
  if (!parse_double(raw(key), v)) bad(key, "expected a number, got '" + raw(key) + "'");
  if (v < lo || v > hi) {
    std::ostringstream os;
    os << "value " << v << " outside [" << lo << ", " << hi << "]";
    bad(key, os.str());
  }
  return v;
}

long long RunConfig::integer(const std::string& key, long long lo, long long hi) const {
  long long v = 0;
  if (!parse_ll(raw(key), v)) bad(key, "expected an integer, got '" + raw(key) + "'");
  if (v < lo || v > hi) {
    bad(key, "value " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
                 std::to_string(hi) + "]");
  }
  return v;
}

void RunConfig::validate() const {
  seed();
  annotators();
  for (auto tag : {DatasetTag::kV1, DatasetTag::kV2, DatasetTag::kCandidate}) {
    count(tag);
    mixture(tag);
  }
  keep_draws();
  curves();
  em();
  spline();
  grid_panels();
  resamples();
  ci_level();
  histogram_spec();
  sample_size();
  match_method();
  exhaustion();
  if (match_source() == match_target()) bad("match_source", "must differ from match_target");
  int_list("subsample_counts");
  int_list("linearity_counts");
}

std::string RunConfig::canonical() const {
  std::map<std::string, bool> is_path;
  for (const auto& k : known_keys()) is_path[k.name] = k.path;
  std::string out;
  for (const auto& [k, v] : values_) {
    if (is_path[k]) continue;
    out += k + "=" + v + "\n";
  }
  return out;
}

std::string RunConfig::hash() const { return sha256_hex(canonical()); }

std::uint64_t RunConfig::seed() const {
  const std::string t = trim(raw("seed"));
  std::uint64_t v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
    bad("seed", "expected an unsigned 64-bit integer, got '" + t + "'");
  }
  return v;
}

int RunConfig::annotators() const { return static_cast<int>(integer("annotators", 1, 100000)); }

std::size_t RunConfig::count(DatasetTag tag) const {
  return static_cast<std::size_t>(integer("count_" + key_for(tag), 0, 100000000));
}

BetaMixture RunConfig::mixture(DatasetTag tag) const {
  const std::string key = "mixture_" + key_for(tag);
  try {
    return parse_mixture(raw(key));
  } catch (const Error& e) {
    bad(key, e.what());
  }
}

bool RunConfig::keep_draws() const {
  const std::string v = trim(raw("keep_draws"));
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  bad("keep_draws", "expected true or false");
}

std::vector<std::string> RunConfig::models() const {
  auto names = split(raw("models"), ',');
  if (names.empty()) bad("models", "need at least one model name");
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].empty()) bad("models", "empty model name");
    for (std::size_t j = 0; j < i; ++j) {
      if (names[i] == names[j]) bad("models", "duplicate model name '" + names[i] + "'");
    }
  }
  return names;
}

std::vector<AccuracyCurve> RunConfig::curves() const {
  const auto names = models();
  const auto parts = split(raw("curve"), ';');
  if (parts.size() != 1 && parts.size() != names.size()) {
    bad("curve", "give one curve or one per model");
  }
  std::vector<AccuracyCurve> out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    try {
      out.push_back(AccuracyCurve::parse(parts[parts.size() == 1 ? 0 : i]));
    } catch (const Error& e) {
      bad("curve", e.what());
    }
  }
  return out;
}

EmConfig RunConfig::em() const {
  EmConfig c;
  c.components = static_cast<int>(integer("em_components", 1, 20));
  c.restarts = static_cast<int>(integer("em_restarts", 1, 1000));
  c.tol = real("em_tol", 0.0, 1.0);
  c.max_iter = static_cast<int>(integer("em_max_iter", 1, 1000000));
  return c;
}

SplineConfig RunConfig::spline() const {
  SplineConfig c;
  c.interior_knots = static_cast<int>(integer("spline_knots", 0, 100));
  c.max_condition = real("spline_max_condition", 1.0, 1e300);
  return c;
}

int RunConfig::grid_panels() const { return static_cast<int>(integer("grid_size", 1, 100000)); }

int RunConfig::resamples() const { return static_cast<int>(integer("resamples", 2, 100000)); }

double RunConfig::ci_level() const {
  const double v = real("ci_level", 0.0, 1.0);
  if (v <= 0.0 || v >= 1.0) bad("ci_level", "must lie strictly between 0 and 1");
  return v;
}

HistogramSpec RunConfig::histogram_spec() const {
  HistogramSpec spec;
  spec.edges.clear();
  for (const auto& part : split(raw("bin_edges"), ',')) {
    double v = 0.0;
    if (!parse_double(part, v)) bad("bin_edges", "expected comma-separated numbers");
    spec.edges.push_back(v);
  }
  try {
    spec.validate();
  } catch (const Error& e) {
    bad("bin_edges", e.what());
  }
  return spec;
}

std::size_t RunConfig::sample_size() const {
  return static_cast<std::size_t>(integer("sample_size", 0, 100000000));
}

MatchMethod RunConfig::match_method() const {
  const std::string v = trim(raw("match_method"));
  if (v == "histogram") return MatchMethod::kHistogram;
  if (v == "rejection") return MatchMethod::kRejection;
  bad("match_method", "expected histogram or rejection");
}

ExhaustionPolicy RunConfig::exhaustion() const {
  const std::string v = trim(raw("exhaustion"));
  if (v == "renormalize") return ExhaustionPolicy::kRenormalize;
  if (v == "fail") return ExhaustionPolicy::kFail;
  bad("exhaustion", "expected renormalize or fail");
}

DatasetTag RunConfig::match_source() const {
  try {
    return parse_dataset_tag(trim(raw("match_source")));
  } catch (const Error& e) {
    bad("match_source", e.what());
  }
}

DatasetTag RunConfig::match_target() const {
  try {
    return parse_dataset_tag(trim(raw("match_target")));
  } catch (const Error& e) {
    bad("match_target", e.what());
  }
}

std::vector<int> RunConfig::int_list(const std::string& key) const {
  std::vector<int> out;
  for (const auto& part : split(raw(key), ',')) {
    long long v = 0;
    if (!parse_ll(part, v) || v < 1 || v > 100000) {
      bad(key, "expected comma-separated positive integers");
    }
    out.push_back(static_cast<int>(v));
  }
  if (out.empty()) bad(key, "empty list");
  return out;
}

std::string RunConfig::path(const std::string& key) const { return trim(raw(key)); }

BetaMixture parse_mixture(const std::string& text) {
  std::vector<MixtureComponent> comps;
  const auto parts = split(text, ';');
  for (const auto& part : parts) {
    MixtureComponent c;
    std::string shapes = part;
    const auto colon = part.find(':');
    if (colon != std::string::npos) {
      if (!parse_double(part.substr(0, colon), c.weight)) {
        throw Error(ErrorKind::kInvalidMixture, "bad weight in '" + part + "'");
      }
      shapes = part.substr(colon + 1);
    } else if (parts.size() != 1) {
      throw Error(ErrorKind::kInvalidMixture, "components need weights: '" + part + "'");
    }
    const auto ab = split(shapes, ',');
    if (ab.size() != 2 || !parse_double(ab[0], c.params.alpha) ||
        !parse_double(ab[1], c.params.beta)) {
      throw Error(ErrorKind::kInvalidMixture, "expected alpha,beta in '" + part + "'");
    }
    c.params.validate();
    comps.push_back(c);
  }
  return BetaMixture(comps);
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::kIoError, "sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

}  // namespace selbias::cli
