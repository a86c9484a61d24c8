#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "selbias/distributions.hpp"

namespace selbias {

enum class DatasetTag { kV1, kV2, kCandidate };

const char* to_string(DatasetTag tag);
// Throws Error{kSchemaViolation} on an unknown name.
DatasetTag parse_dataset_tag(std::string_view name);

// Ground-truth item. `true_s` exists only in synthetic populations and is
// never consumed by estimators.
struct ImageItem {
  std::string item_id;
  DatasetTag tag = DatasetTag::kCandidate;
  double true_s = 0.0;
};

struct AnnotationRecord {
  std::string item_id;
  DatasetTag dataset = DatasetTag::kCandidate;
  std::string class_label;
  int n_annotators = 0;
  int n_selected = 0;
  // One 0/1 entry per annotator when retained, else empty.
  std::vector<std::uint8_t> draws;

  bool has_draws() const {
    return !draws.empty() &&
           draws.size() == static_cast<std::size_t>(n_annotators);
  }
  double observed_frequency() const {
    return n_annotators == 0 ? 0.0
                             : static_cast<double>(n_selected) / n_annotators;
  }
  // Throws Error{kSchemaViolation} if counts or draws are inconsistent.
  void validate() const;
};

struct CorrectnessRecord {
  std::string item_id;
  std::string model_name;
  bool correct = false;
};

// g(s) = P(correct | true selection frequency s).
class AccuracyCurve {
 public:
  enum class Kind { kConstant, kLinear, kLogistic, kTable };

  static AccuracyCurve constant(double value);
  // clamp(intercept + slope * s, 0, 1); slope must be >= 0.
  static AccuracyCurve linear(double intercept, double slope);
  // 1 / (1 + exp(-steepness * (s - midpoint))); steepness must be >= 0.
  static AccuracyCurve logistic(double steepness, double midpoint);
  // Piecewise-linear through (s_i, g_i); s strictly increasing and covering
  // [0, 1], g in [0, 1].
  static AccuracyCurve table(std::vector<double> s, std::vector<double> g);
  // Parses the `describe()` form, e.g. "logistic:10,0.5".
  static AccuracyCurve parse(std::string_view text);

  double operator()(double s) const;
  Kind kind() const { return kind_; }
  const std::vector<double>& parameters() const { return params_; }
  std::string describe() const;

 private:
  AccuracyCurve(Kind kind, std::vector<double> params,
                std::vector<double> table_s = {})
      : kind_(kind), params_(std::move(params)), table_s_(std::move(table_s)) {}

  Kind kind_;
  std::vector<double> params_;
  std::vector<double> table_s_;
};

struct PopulationGenerators {
  std::map<DatasetTag, BetaMixture> mixtures;
  AccuracyCurve curve = AccuracyCurve::logistic(10.0, 0.5);
  BinomialNoiseModel noise{40};
};

struct SyntheticPopulation {
  std::vector<ImageItem> items;
  std::vector<AnnotationRecord> annotations;
  std::vector<CorrectnessRecord> correctness;
  PopulationGenerators generators;
};

// Items are ordered by tag (v1, v2, candidate) then index; ids are
// "<tag>-<index>". true_s for item i of a tag comes from stream (seed, tag, i).
std::vector<ImageItem> generate_population(
    const std::map<DatasetTag, BetaMixture>& mixtures,
    const std::map<DatasetTag, std::size_t>& counts, std::uint64_t seed);

// k ~ Binomial(n, true_s), realised as n Bernoulli draws so the counts do not
// depend on whether the individual draws are kept.
std::vector<AnnotationRecord> annotate(std::span<const ImageItem> items,
                                       const BinomialNoiseModel& noise,
                                       std::uint64_t seed,
                                       bool keep_draws = false);

struct AnnotationSplit {
  std::vector<AnnotationRecord> train;
  std::vector<AnnotationRecord> heldout;
};

// Random disjoint split of each item's annotators into `in_sample` train
// draws and n - in_sample held-out draws.
AnnotationSplit split_annotations(std::span<const AnnotationRecord> records,
                                  int in_sample, std::uint64_t seed);

// Keeps the listed annotator columns of every record (rectangular data).
std::vector<AnnotationRecord> select_annotators(
    std::span<const AnnotationRecord> records, std::span<const int> columns);
// Keeps the first `count` annotator columns.
std::vector<AnnotationRecord> first_annotators(
    std::span<const AnnotationRecord> records, int count);

std::vector<CorrectnessRecord> simulate_correctness(
    std::span<const ImageItem> items, const AccuracyCurve& curve,
    std::span<const std::string> model_names, std::uint64_t seed);

// Per-model curves; model order fixes the stream assignment.
std::vector<CorrectnessRecord> simulate_correctness(
    std::span<const ImageItem> items,
    std::span<const std::pair<std::string, AccuracyCurve>> models,
    std::uint64_t seed);

// Ground-truth selection-adjusted accuracy: integral of g(s) p1(s) over [0,1]
// to absolute error 1e-8.
double true_adjusted_accuracy(const AccuracyCurve& curve,
                              const BetaMixture& target);
double true_adjusted_accuracy(const std::function<double(double)>& curve,
                              const BetaMixture& target);

}  // namespace selbias
