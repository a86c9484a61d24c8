#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "selbias/error.hpp"
#include "selbias/synthpop.hpp"

namespace selbias {

// Bins over observed selection frequency. Bin i is [e_i, e_{i+1}); the last
// bin is closed at 1.
struct HistogramSpec {
  std::vector<double> edges{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};

  static HistogramSpec standard() { return {}; }
  // One bin per attainable k/n, edges halfway between levels.
  static HistogramSpec per_level(int n);

  // Throws Error{kInvalidParams} unless edges run strictly from 0 to 1.
  void validate() const;
  std::size_t bins() const { return edges.size() - 1; }
  std::size_t bin_of(double s) const;
};

enum class MatchMethod { kHistogram, kRejection };
const char* to_string(MatchMethod method);

enum class ExhaustionPolicy {
  kFail,         // throw BinExhausted
  kRenormalize,  // take the whole bin, spread the deficit over other bins
};

class BinExhausted : public Error {
 public:
  BinExhausted(std::size_t bin, std::size_t deficit);
  std::size_t bin() const { return bin_; }
  std::size_t deficit() const { return deficit_; }

 private:
  std::size_t bin_;
  std::size_t deficit_;
};

struct MatchedDataset {
  // Indices into the source records, ascending.
  std::vector<std::size_t> selected;
  std::vector<std::string> selected_item_ids;
  DatasetTag source_tag = DatasetTag::kCandidate;
  DatasetTag target_tag = DatasetTag::kV1;
  MatchMethod method = MatchMethod::kHistogram;
  int annotators_used = 0;
  // Histogram matching only.
  std::vector<std::size_t> requested_per_bin;
  std::vector<std::size_t> selected_per_bin;
};

// Largest-remainder apportionment of `total` by `weights`.
std::vector<std::size_t> apportion(std::span<const double> weights,
                                   std::size_t total);

// Selection counts per k, normalized; records must share n.
std::vector<double> empirical_pmf(std::span<const AnnotationRecord> records);

// Samples `sample_size` source items without replacement so the selected
// observed-frequency histogram follows the target's.
MatchedDataset histogram_match(
    std::span<const AnnotationRecord> target,
    std::span<const AnnotationRecord> source, const HistogramSpec& spec,
    std::size_t sample_size, std::uint64_t seed,
    ExhaustionPolicy policy = ExhaustionPolicy::kRenormalize);

using PmfFunction = std::function<double(int k)>;

// Accepts each source item independently with probability
// (target_pmf(k)/source_pmf(k)) / max over observed k of the same ratio.
MatchedDataset rejection_match(std::span<const AnnotationRecord> source,
                               const PmfFunction& target_pmf,
                               const PmfFunction& source_pmf,
                               std::uint64_t seed);

// Acceptance probability per k used by rejection_match (0 for unobserved k).
std::vector<double> rejection_acceptance(
    std::span<const AnnotationRecord> source, const PmfFunction& target_pmf,
    const PmfFunction& source_pmf);

struct HeldoutGapReport {
  double in_sample_mean = 0.0;  // matched set, train annotators
  double heldout_mean = 0.0;    // matched set, held-out annotators
  double target_mean = 0.0;     // v1, all annotators
  double target_in_sample_mean = 0.0;
  double target_heldout_mean = 0.0;
  std::size_t matched = 0;
};

// Splits annotators of v1 and candidate items, matches candidates to v1 on
// the train split and measures both splits on the matched set.
HeldoutGapReport heldout_gap_experiment(const SyntheticPopulation& population,
                                        int in_sample_annotators,
                                        const HistogramSpec& spec,
                                        std::size_t sample_size,
                                        std::uint64_t seed);

struct FilteredSourceReport {
  double matched_accuracy_raw_source = 0.0;
  double matched_accuracy_filtered_source = 0.0;
  double mean_insample_sf_raw = 0.0;
  double mean_insample_sf_filtered = 0.0;
  int min_heldout_selected = 0;  // the j of the j-of-m rule
  std::size_t filtered_pool_size = 0;
};

// Builds a filtered candidate pool keeping items selected by at least
// ceil(heldout_threshold * m) of their m held-out annotators, then runs the
// same matching from the raw and filtered pools. Accuracy is the expected
// accuracy under `curve` on each matched set.
FilteredSourceReport filtered_source_experiment(
    const SyntheticPopulation& population, double heldout_threshold,
    int in_sample_annotators, const HistogramSpec& spec,
    std::size_t sample_size, const AccuracyCurve& curve, std::uint64_t seed);

// Accuracy over a set of population item indices.
using AccuracyHook = std::function<double(std::span<const std::size_t>)>;

// Mean g(true_s) over the given items.
AccuracyHook expected_accuracy_hook(const SyntheticPopulation& population,
                                    const AccuracyCurve& curve);

struct SubsamplePoint {
  int annotators = 0;
  double gap = 0.0;  // hook(v1) - hook(matched candidates)
};

// For each annotator count n, rebuilds observed frequencies from the first n
// annotators, reruns histogram matching and reports the v1-to-replication
// accuracy gap.
std::vector<SubsamplePoint> annotator_subsample_curve(
    const SyntheticPopulation& population, std::span<const int> counts,
    const AccuracyHook& hook, const HistogramSpec& spec,
    std::size_t sample_size, std::uint64_t seed);

}  // namespace selbias
