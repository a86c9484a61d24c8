#include "selbias/matching.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace selbias {

namespace {

int common_annotators(std::span<const AnnotationRecord> records) {
  if (records.empty()) return 0;
  const int n = records.front().n_annotators;
  for (const auto& r : records) {
    if (r.n_annotators != n) {
      throw Error(ErrorKind::kInvalidParams,
                  "records mix annotator counts " + std::to_string(n) +
                      " and " + std::to_string(r.n_annotators));
    }
  }
  return n;
}

// Indices of population items carrying `tag`; annotations must be aligned.
std::vector<std::size_t> indices_with_tag(const SyntheticPopulation& pop,
                                          DatasetTag tag) {
  if (pop.annotations.size() != pop.items.size()) {
    throw Error(ErrorKind::kInvalidParams,
                "population annotations are not aligned with items");
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < pop.items.size(); ++i) {
    if (pop.items[i].tag == tag) out.push_back(i);
  }
  return out;
}

std::vector<AnnotationRecord> gather(const std::vector<AnnotationRecord>& all,
                                     std::span<const std::size_t> idx) {
  std::vector<AnnotationRecord> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(all[i]);
  return out;
}

double mean_observed(std::span<const AnnotationRecord> records,
                     std::span<const std::size_t> which) {
  if (which.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i : which) total += records[i].observed_frequency();
  return total / static_cast<double>(which.size());
}

double mean_observed(std::span<const AnnotationRecord> records) {
  double total = 0.0;
  for (const auto& r : records) total += r.observed_frequency();
  return records.empty() ? 0.0 : total / static_cast<double>(records.size());
}

}  // namespace

HistogramSpec HistogramSpec::per_level(int n) {
  if (n < 1) throw Error(ErrorKind::kInvalidParams, "per-level bins need n>=1");
  HistogramSpec spec;
  spec.edges = {0.0};
  for (int k = 0; k < n; ++k) spec.edges.push_back((k + 0.5) / n);
  spec.edges.push_back(1.0);
  return spec;
}

void HistogramSpec::validate() const {
  bool ok = edges.size() >= 2 && edges.front() == 0.0 && edges.back() == 1.0;
  for (std::size_t i = 1; ok && i < edges.size(); ++i) {
    ok = edges[i] > edges[i - 1];
  }
  if (!ok) {
    throw Error(ErrorKind::kInvalidParams,
                "histogram edges must increase strictly from 0 to 1");
  }
}

std::size_t HistogramSpec::bin_of(double s) const {
  // k/n and decimal edges can differ by an ulp; resolve ties upward.
  const auto it = std::upper_bound(edges.begin(), edges.end(), s + 1e-12);
  const auto pos = static_cast<std::size_t>(it - edges.begin());
  if (pos == 0) return 0;
  return std::min(pos - 1, bins() - 1);
}

const char* to_string(MatchMethod method) {
  return method == MatchMethod::kHistogram ? "histogram" : "rejection";
}

BinExhausted::BinExhausted(std::size_t bin, std::size_t deficit)
    : Error(ErrorKind::kBinExhausted,
            "source bin " + std::to_string(bin) + " is short by " +
                std::to_string(deficit) + " items"),
      bin_(bin),
      deficit_(deficit) {}

std::vector<std::size_t> apportion(std::span<const double> weights,
                                   std::size_t total) {
  std::vector<std::size_t> out(weights.size(), 0);
  const double mass = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (weights.empty() || !(mass > 0.0)) return out;
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double quota = static_cast<double>(total) * weights[i] / mass;
    out[i] = static_cast<std::size_t>(std::floor(quota));
    assigned += out[i];
    remainders.emplace_back(quota - std::floor(quota), i);
  }
  // Ties go to the lower bin index.
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < total && r < remainders.size(); ++r) {
    if (weights[remainders[r].second] <= 0.0) continue;
    ++out[remainders[r].second];
    ++assigned;
  }
  return out;
}

std::vector<double> empirical_pmf(std::span<const AnnotationRecord> records) {
  const int n = common_annotators(records);
  std::vector<double> pmf(static_cast<std::size_t>(n) + 1, 0.0);
  if (records.empty()) return pmf;
  for (const auto& r : records) pmf[r.n_selected] += 1.0;
  for (double& p : pmf) p /= static_cast<double>(records.size());
  return pmf;
}

MatchedDataset histogram_match(std::span<const AnnotationRecord> target,
                               std::span<const AnnotationRecord> source,
                               const HistogramSpec& spec,
                               std::size_t sample_size, std::uint64_t seed,
                               ExhaustionPolicy policy) {
  spec.validate();
  if (target.empty() || source.empty()) {
    throw Error(ErrorKind::kEmptyDataset, "histogram matching needs data");
  }
  const int n = common_annotators(target);
  if (common_annotators(source) != n) {
    throw Error(ErrorKind::kInvalidParams,
                "target and source use different annotator counts");
  }
  const std::size_t bins = spec.bins();
  std::vector<double> target_mass(bins, 0.0);
  for (const auto& r : target) target_mass[spec.bin_of(r.observed_frequency())] += 1.0;

  std::vector<std::vector<std::size_t>> members(bins);
  for (std::size_t i = 0; i < source.size(); ++i) {
    members[spec.bin_of(source[i].observed_frequency())].push_back(i);
  }

  std::vector<std::size_t> demand = apportion(target_mass, sample_size);
  MatchedDataset out;
  out.requested_per_bin = demand;
  out.source_tag = source.front().dataset;
  out.target_tag = target.front().dataset;
  out.method = MatchMethod::kHistogram;
  out.annotators_used = n;

  std::vector<bool> exhausted(bins, false);
  for (;;) {
    std::size_t deficit = 0;
    for (std::size_t b = 0; b < bins; ++b) {
      if (demand[b] > members[b].size()) {
        if (policy == ExhaustionPolicy::kFail) {
          throw BinExhausted(b, demand[b] - members[b].size());
        }
        deficit += demand[b] - members[b].size();
        demand[b] = members[b].size();
        exhausted[b] = true;
      }
    }
    if (deficit == 0) break;
    std::vector<double> open_mass(bins, 0.0);
    for (std::size_t b = 0; b < bins; ++b) {
      if (!exhausted[b]) open_mass[b] = target_mass[b];
    }
    if (std::accumulate(open_mass.begin(), open_mass.end(), 0.0) <= 0.0) break;
    const auto extra = apportion(open_mass, deficit);
    for (std::size_t b = 0; b < bins; ++b) demand[b] += extra[b];
  }

  out.selected_per_bin.assign(bins, 0);
  for (std::size_t b = 0; b < bins; ++b) {
    auto& pool = members[b];
    Rng rng(seed, b);
    for (std::size_t j = 0; j < demand[b]; ++j) {
      const std::size_t pick =
          j + static_cast<std::size_t>(rng() % (pool.size() - j));
      std::swap(pool[j], pool[pick]);
      out.selected.push_back(pool[j]);
    }
    out.selected_per_bin[b] = demand[b];
  }
  std::sort(out.selected.begin(), out.selected.end());
  out.selected_item_ids.reserve(out.selected.size());
  for (std::size_t i : out.selected) out.selected_item_ids.push_back(source[i].item_id);
  return out;
}

std::vector<double> rejection_acceptance(
    std::span<const AnnotationRecord> source, const PmfFunction& target_pmf,
    const PmfFunction& source_pmf) {
  const int n = common_annotators(source);
  std::vector<double> ratio(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<bool> seen(ratio.size(), false);
  for (const auto& r : source) seen[r.n_selected] = true;
  double best = 0.0;
  for (int k = 0; k <= n; ++k) {
    if (!seen[k]) continue;
    const double denom = source_pmf(k);
    if (!(denom > 0.0)) {
      throw Error(ErrorKind::kZeroDensity,
                  "source pmf is zero at observed k=" + std::to_string(k));
    }
    ratio[k] = std::max(target_pmf(k), 0.0) / denom;
    best = std::max(best, ratio[k]);
  }
  if (!(best > 0.0)) {
    throw Error(ErrorKind::kZeroDensity,
                "target pmf is zero on every observed k");
  }
  // ratio/best is exactly 1 at the maximizing k.
  for (double& r : ratio) r /= best;
  return ratio;
}

MatchedDataset rejection_match(std::span<const AnnotationRecord> source,
                               const PmfFunction& target_pmf,
                               const PmfFunction& source_pmf,
                               std::uint64_t seed) {
  MatchedDataset out;
  out.method = MatchMethod::kRejection;
  if (source.empty()) return out;
  const auto accept = rejection_acceptance(source, target_pmf, source_pmf);
  out.source_tag = source.front().dataset;
  out.annotators_used = source.front().n_annotators;
  for (std::size_t i = 0; i < source.size(); ++i) {
    Rng rng(seed, i);
    if (rng.uniform() < accept[source[i].n_selected]) {
      out.selected.push_back(i);
      out.selected_item_ids.push_back(source[i].item_id);
    }
  }
  return out;
}

HeldoutGapReport heldout_gap_experiment(const SyntheticPopulation& population,
                                        int in_sample_annotators,
                                        const HistogramSpec& spec,
                                        std::size_t sample_size,
                                        std::uint64_t seed) {
  const auto v1_idx = indices_with_tag(population, DatasetTag::kV1);
  const auto cand_idx = indices_with_tag(population, DatasetTag::kCandidate);
  const auto v1 = gather(population.annotations, v1_idx);
  const auto cand = gather(population.annotations, cand_idx);

  const auto v1_split =
      split_annotations(v1, in_sample_annotators, stream_key(seed, 1));
  const auto cand_split =
      split_annotations(cand, in_sample_annotators, stream_key(seed, 2));
  const auto matched = histogram_match(v1_split.train, cand_split.train, spec,
                                       sample_size, stream_key(seed, 3));

  HeldoutGapReport report;
  report.in_sample_mean = mean_observed(cand_split.train, matched.selected);
  report.heldout_mean = mean_observed(cand_split.heldout, matched.selected);
  report.target_mean = mean_observed(v1);
  report.target_in_sample_mean = mean_observed(v1_split.train);
  report.target_heldout_mean = mean_observed(v1_split.heldout);
  report.matched = matched.selected.size();
  return report;
}

FilteredSourceReport filtered_source_experiment(
    const SyntheticPopulation& population, double heldout_threshold,
    int in_sample_annotators, const HistogramSpec& spec,
    std::size_t sample_size, const AccuracyCurve& curve, std::uint64_t seed) {
  if (!(heldout_threshold >= 0.0 && heldout_threshold <= 1.0)) {
    throw Error(ErrorKind::kInvalidParams,
                "held-out threshold must be a fraction in [0,1]");
  }
  const auto v1_idx = indices_with_tag(population, DatasetTag::kV1);
  const auto cand_idx = indices_with_tag(population, DatasetTag::kCandidate);
  const auto v1 = gather(population.annotations, v1_idx);
  const auto cand = gather(population.annotations, cand_idx);
  if (cand.empty()) {
    throw Error(ErrorKind::kEmptyDataset, "population has no candidates");
  }

  const auto v1_split =
      split_annotations(v1, in_sample_annotators, stream_key(seed, 1));
  const auto cand_split =
      split_annotations(cand, in_sample_annotators, stream_key(seed, 2));
  const int heldout_n = cand_split.heldout.front().n_annotators;
  const int min_selected = static_cast<int>(
      std::ceil(heldout_threshold * heldout_n - 1e-9));

  // Filtered pool: positions into cand_split.
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < cand_split.heldout.size(); ++i) {
    if (cand_split.heldout[i].n_selected >= min_selected) keep.push_back(i);
  }
  std::vector<AnnotationRecord> filtered_train;
  filtered_train.reserve(keep.size());
  for (std::size_t i : keep) filtered_train.push_back(cand_split.train[i]);

  const std::uint64_t match_seed = stream_key(seed, 3);
  const auto raw =
      histogram_match(v1_split.train, cand_split.train, spec, sample_size,
                      match_seed);
  const auto filt = histogram_match(v1_split.train, filtered_train, spec,
                                    sample_size, match_seed);

  auto accuracy = [&](const MatchedDataset& m, auto&& to_candidate) {
    double total = 0.0;
    for (std::size_t i : m.selected) {
      total += curve(population.items[cand_idx[to_candidate(i)]].true_s);
    }
    return m.selected.empty() ? 0.0 : total / m.selected.size();
  };

  FilteredSourceReport report;
  report.min_heldout_selected = min_selected;
  report.filtered_pool_size = keep.size();
  report.matched_accuracy_raw_source =
      accuracy(raw, [](std::size_t i) { return i; });
  report.matched_accuracy_filtered_source =
      accuracy(filt, [&](std::size_t i) { return keep[i]; });
  report.mean_insample_sf_raw = mean_observed(cand_split.train, raw.selected);
  report.mean_insample_sf_filtered =
      mean_observed(filtered_train, filt.selected);
  return report;
}

AccuracyHook expected_accuracy_hook(const SyntheticPopulation& population,
                                    const AccuracyCurve& curve) {
  return [&population, curve](std::span<const std::size_t> items) {
    if (items.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t i : items) total += curve(population.items[i].true_s);
    return total / static_cast<double>(items.size());
  };
}

std::vector<SubsamplePoint> annotator_subsample_curve(
    const SyntheticPopulation& population, std::span<const int> counts,
    const AccuracyHook& hook, const HistogramSpec& spec,
    std::size_t sample_size, std::uint64_t seed) {
  const auto v1_idx = indices_with_tag(population, DatasetTag::kV1);
  const auto cand_idx = indices_with_tag(population, DatasetTag::kCandidate);
  const auto v1 = gather(population.annotations, v1_idx);
  const auto cand = gather(population.annotations, cand_idx);
  const double v1_accuracy = hook(v1_idx);

  std::vector<SubsamplePoint> out;
  for (int n : counts) {
    const auto v1_sub = first_annotators(v1, n);
    const auto cand_sub = first_annotators(cand, n);
    const auto matched =
        histogram_match(v1_sub, cand_sub, spec, sample_size, seed);
    std::vector<std::size_t> chosen;
    chosen.reserve(matched.selected.size());
    for (std::size_t i : matched.selected) chosen.push_back(cand_idx[i]);
    out.push_back({n, v1_accuracy - hook(chosen)});
  }
  return out;
}

}  // namespace selbias
