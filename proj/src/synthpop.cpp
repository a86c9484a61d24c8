#include "selbias/synthpop.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "selbias/error.hpp"
#include "selbias/quadrature.hpp"

namespace selbias {

namespace {

constexpr std::uint64_t kTagSalt[] = {0x7631, 0x7632, 0x63616e64};

std::uint64_t tag_salt(DatasetTag tag) {
  return kTagSalt[static_cast<int>(tag)];
}

std::vector<double> parse_numbers(std::string_view text) {
  std::vector<double> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    std::string field(text.substr(0, comma));
    std::size_t used = 0;
    double value = 0.0;
    try {
      value = std::stod(field, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != field.size()) {
      throw Error(ErrorKind::kInvalidConfig,
                  "malformed number '" + field + "' in curve description");
    }
    out.push_back(value);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

}  // namespace

const char* to_string(DatasetTag tag) {
  switch (tag) {
    case DatasetTag::kV1: return "v1";
    case DatasetTag::kV2: return "v2";
    case DatasetTag::kCandidate: return "candidate";
  }
  return "unknown";
}

DatasetTag parse_dataset_tag(std::string_view name) {
  if (name == "v1") return DatasetTag::kV1;
  if (name == "v2") return DatasetTag::kV2;
  if (name == "candidate") return DatasetTag::kCandidate;
  throw Error(ErrorKind::kSchemaViolation,
              "unknown dataset tag '" + std::string(name) + "'");
}

void AnnotationRecord::validate() const {
  if (n_annotators < 0 || n_selected < 0 || n_selected > n_annotators) {
    throw Error(ErrorKind::kSchemaViolation,
                "item " + item_id + ": need 0 <= n_selected <= n_annotators");
  }
  if (!draws.empty()) {
    if (draws.size() != static_cast<std::size_t>(n_annotators)) {
      throw Error(ErrorKind::kSchemaViolation,
                  "item " + item_id + ": draws length differs from n");
    }
    const auto ones = std::count(draws.begin(), draws.end(), 1);
    if (ones != n_selected ||
        std::any_of(draws.begin(), draws.end(),
                    [](std::uint8_t d) { return d > 1; })) {
      throw Error(ErrorKind::kSchemaViolation,
                  "item " + item_id + ": draws disagree with n_selected");
    }
  }
}

AccuracyCurve AccuracyCurve::constant(double value) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw Error(ErrorKind::kInvalidParams, "constant curve outside [0,1]");
  }
  return AccuracyCurve(Kind::kConstant, {value});
}

AccuracyCurve AccuracyCurve::linear(double intercept, double slope) {
  if (!(slope >= 0.0) || !std::isfinite(intercept) || !std::isfinite(slope)) {
    throw Error(ErrorKind::kInvalidParams, "linear curve needs slope >= 0");
  }
  return AccuracyCurve(Kind::kLinear, {intercept, slope});
}

AccuracyCurve AccuracyCurve::logistic(double steepness, double midpoint) {
  if (!(steepness >= 0.0) || !std::isfinite(steepness) ||
      !std::isfinite(midpoint)) {
    throw Error(ErrorKind::kInvalidParams,
                "logistic curve needs finite steepness >= 0");
  }
  return AccuracyCurve(Kind::kLogistic, {steepness, midpoint});
}

AccuracyCurve AccuracyCurve::table(std::vector<double> s,
                                   std::vector<double> g) {
  if (s.size() < 2 || s.size() != g.size() || s.front() > 0.0 ||
      s.back() < 1.0) {
    throw Error(ErrorKind::kInvalidParams,
                "table curve needs >= 2 points spanning [0,1]");
  }
  for (std::size_t i = 0; i < s.size(); ++i) {
    if ((i > 0 && !(s[i] > s[i - 1])) || !(g[i] >= 0.0 && g[i] <= 1.0)) {
      throw Error(ErrorKind::kInvalidParams,
                  "table curve needs increasing s and g in [0,1]");
    }
  }
  return AccuracyCurve(Kind::kTable, std::move(g), std::move(s));
}

AccuracyCurve AccuracyCurve::parse(std::string_view text) {
  const auto colon = text.find(':');
  const std::string_view kind = text.substr(0, colon);
  const std::vector<double> p =
      colon == std::string_view::npos ? std::vector<double>{}
                                      : parse_numbers(text.substr(colon + 1));
  auto need = [&](std::size_t count) {
    if (p.size() != count) {
      throw Error(ErrorKind::kInvalidConfig,
                  "curve '" + std::string(text) + "' has wrong arity");
    }
  };
  if (kind == "constant") {
    need(1);
    return constant(p[0]);
  }
  if (kind == "linear") {
    need(2);
    return linear(p[0], p[1]);
  }
  if (kind == "logistic") {
    need(2);
    return logistic(p[0], p[1]);
  }
  if (kind == "table") {
    // s0,g0,s1,g1,...
    if (p.size() < 4 || p.size() % 2 != 0) need(4);
    std::vector<double> s, g;
    for (std::size_t i = 0; i < p.size(); i += 2) {
      s.push_back(p[i]);
      g.push_back(p[i + 1]);
    }
    return table(std::move(s), std::move(g));
  }
  throw Error(ErrorKind::kInvalidConfig,
              "unknown curve kind '" + std::string(kind) + "'");
}

double AccuracyCurve::operator()(double s) const {
  switch (kind_) {
    case Kind::kConstant:
      return params_[0];
    case Kind::kLinear:
      return std::clamp(params_[0] + params_[1] * s, 0.0, 1.0);
    case Kind::kLogistic:
      return 1.0 / (1.0 + std::exp(-params_[0] * (s - params_[1])));
    case Kind::kTable: {
      const auto it = std::upper_bound(table_s_.begin(), table_s_.end(), s);
      if (it == table_s_.begin()) return params_.front();
      if (it == table_s_.end()) return params_.back();
      const auto hi = static_cast<std::size_t>(it - table_s_.begin());
      const double t = (s - table_s_[hi - 1]) / (table_s_[hi] - table_s_[hi - 1]);
      return params_[hi - 1] + t * (params_[hi] - params_[hi - 1]);
    }
  }
  return 0.0;
}

std::string AccuracyCurve::describe() const {
  std::ostringstream os;
  os.precision(17);
  switch (kind_) {
    case Kind::kConstant: os << "constant:" << params_[0]; break;
    case Kind::kLinear: os << "linear:" << params_[0] << ',' << params_[1]; break;
    case Kind::kLogistic:
      os << "logistic:" << params_[0] << ',' << params_[1];
      break;
    case Kind::kTable:
      os << "table:";
      for (std::size_t i = 0; i < params_.size(); ++i) {
        os << (i ? "," : "") << table_s_[i] << ',' << params_[i];
      }
      break;
  }
  return os.str();
}

std::vector<ImageItem> generate_population(
    const std::map<DatasetTag, BetaMixture>& mixtures,
    const std::map<DatasetTag, std::size_t>& counts, std::uint64_t seed) {
  std::vector<ImageItem> items;
  for (const auto& [tag, count] : counts) {
    if (count == 0) continue;
    const auto mix = mixtures.find(tag);
    if (mix == mixtures.end()) {
      throw Error(ErrorKind::kInvalidMixture,
                  std::string("no mixture for dataset ") + to_string(tag));
    }
    const std::uint64_t tag_seed = stream_key(seed, tag_salt(tag));
    for (std::size_t i = 0; i < count; ++i) {
      Rng rng(tag_seed, i);
      items.push_back({std::string(to_string(tag)) + "-" + std::to_string(i),
                       tag, sample_mixture_one(mix->second, rng)});
    }
  }
  return items;
}

std::vector<AnnotationRecord> annotate(std::span<const ImageItem> items,
                                       const BinomialNoiseModel& noise,
                                       std::uint64_t seed, bool keep_draws) {
  noise.validate();
  const int n = noise.annotators;
  std::vector<AnnotationRecord> out;
  out.reserve(items.size());
  std::vector<std::uint8_t> draws(n);
  for (std::size_t i = 0; i < items.size(); ++i) {
    const ImageItem& item = items[i];
    Rng rng(stream_key(seed, 0xA0000000ULL + tag_salt(item.tag)), i);
    int k = 0;
    for (int a = 0; a < n; ++a) {
      draws[a] = rng.uniform() < item.true_s ? 1 : 0;
      k += draws[a];
    }
    AnnotationRecord rec;
    rec.item_id = item.item_id;
    rec.dataset = item.tag;
    rec.n_annotators = n;
    rec.n_selected = k;
    if (keep_draws) rec.draws = draws;
    out.push_back(std::move(rec));
  }
  return out;
}

AnnotationSplit split_annotations(std::span<const AnnotationRecord> records,
                                  int in_sample, std::uint64_t seed) {
  AnnotationSplit split;
  split.train.reserve(records.size());
  split.heldout.reserve(records.size());
  std::vector<int> order;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const AnnotationRecord& rec = records[i];
    if (in_sample < 1 || in_sample >= rec.n_annotators) {
      throw Error(ErrorKind::kInsufficientAnnotations,
                  "item " + rec.item_id + " has " +
                      std::to_string(rec.n_annotators) +
                      " annotators; cannot hold in " +
                      std::to_string(in_sample));
    }
    if (!rec.has_draws()) {
      throw Error(ErrorKind::kInsufficientAnnotations,
                  "item " + rec.item_id + " has no per-annotator draws");
    }
    order.resize(rec.n_annotators);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed, i);
    // Partial Fisher-Yates: the first `in_sample` slots form the train set.
    for (int a = 0; a < in_sample; ++a) {
      const auto span = static_cast<std::uint64_t>(rec.n_annotators - a);
      const int pick = a + static_cast<int>(rng() % span);
      std::swap(order[a], order[pick]);
    }
    std::sort(order.begin(), order.begin() + in_sample);
    std::sort(order.begin() + in_sample, order.end());
    auto take = [&](auto first, auto last) {
      AnnotationRecord part;
      part.item_id = rec.item_id;
      part.dataset = rec.dataset;
      part.class_label = rec.class_label;
      for (auto it = first; it != last; ++it) {
        part.draws.push_back(rec.draws[*it]);
        part.n_selected += rec.draws[*it];
      }
      part.n_annotators = static_cast<int>(part.draws.size());
      return part;
    };
    split.train.push_back(take(order.begin(), order.begin() + in_sample));
    split.heldout.push_back(take(order.begin() + in_sample, order.end()));
  }
  return split;
}

std::vector<AnnotationRecord> select_annotators(
    std::span<const AnnotationRecord> records, std::span<const int> columns) {
  std::vector<AnnotationRecord> out;
  out.reserve(records.size());
  for (const AnnotationRecord& rec : records) {
    if (!rec.has_draws()) {
      throw Error(ErrorKind::kInsufficientAnnotations,
                  "item " + rec.item_id + " has no per-annotator draws");
    }
    AnnotationRecord sub;
    sub.item_id = rec.item_id;
    sub.dataset = rec.dataset;
    sub.class_label = rec.class_label;
    sub.draws.reserve(columns.size());
    for (int c : columns) {
      if (c < 0 || c >= rec.n_annotators) {
        throw Error(ErrorKind::kInsufficientAnnotations,
                    "annotator column " + std::to_string(c) +
                        " not available for item " + rec.item_id);
      }
      sub.draws.push_back(rec.draws[c]);
      sub.n_selected += rec.draws[c];
    }
    sub.n_annotators = static_cast<int>(columns.size());
    out.push_back(std::move(sub));
  }
  return out;
}

std::vector<AnnotationRecord> first_annotators(
    std::span<const AnnotationRecord> records, int count) {
  std::vector<int> columns(std::max(count, 0));
  std::iota(columns.begin(), columns.end(), 0);
  return select_annotators(records, columns);
}

std::vector<CorrectnessRecord> simulate_correctness(
    std::span<const ImageItem> items, const AccuracyCurve& curve,
    std::span<const std::string> model_names, std::uint64_t seed) {
  std::vector<std::pair<std::string, AccuracyCurve>> models;
  for (const auto& name : model_names) models.emplace_back(name, curve);
  return simulate_correctness(items, models, seed);
}

std::vector<CorrectnessRecord> simulate_correctness(
    std::span<const ImageItem> items,
    std::span<const std::pair<std::string, AccuracyCurve>> models,
    std::uint64_t seed) {
  std::vector<CorrectnessRecord> out;
  out.reserve(items.size() * models.size());
  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto& [name, curve] = models[m];
    for (std::size_t i = 0; i < items.size(); ++i) {
      Rng rng(stream_key(seed, 0xC0DE0000ULL + m), i);
      const double p = curve(items[i].true_s);
      out.push_back({items[i].item_id, name, rng.uniform() < p});
    }
  }
  return out;
}

double true_adjusted_accuracy(const AccuracyCurve& curve,
                              const BetaMixture& target) {
  return true_adjusted_accuracy(
      std::function<double(double)>([&curve](double s) { return curve(s); }),
      target);
}

double true_adjusted_accuracy(const std::function<double(double)>& curve,
                              const BetaMixture& target) {
  double total = 0.0;
  for (const auto& c : target.components()) {
    if (c.weight == 0.0) continue;
    const double a = c.params.alpha;
    const double b = c.params.beta;
    const double log_norm = log_beta_function(a, b);
    const double part = integrate_adaptive(
        [&](double s) {
          return curve(s) * std::exp((a - 1.0) * std::log(s) +
                                     (b - 1.0) * std::log1p(-s) - log_norm);
        },
        1e-8);
    total += c.weight * part;
  }
  return total;
}

}  // namespace selbias
