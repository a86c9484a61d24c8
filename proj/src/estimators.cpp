#include "selbias/estimators.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "selbias/error.hpp"

namespace selbias {

namespace {

void require_annotators(std::span<const AnnotationRecord> records, int n,
                        const char* what) {
  for (const auto& r : records) {
    if (r.n_annotators != n) {
      throw Error(ErrorKind::kInvalidParams,
                  std::string(what) + " item " + r.item_id + " has " +
                      std::to_string(r.n_annotators) + " annotators, expected " +
                      std::to_string(n));
    }
  }
}

std::vector<int> counts_of(std::span<const AnnotationRecord> records) {
  std::vector<int> k(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) k[i] = records[i].n_selected;
  return k;
}

int rectangular_annotators(std::span<const AnnotationRecord> target,
                           std::span<const AnnotationRecord> source) {
  if (target.empty() || source.empty()) {
    throw Error(ErrorKind::kEmptyDataset, "jackknife needs both datasets");
  }
  const int n = target.front().n_annotators;
  for (auto records : {target, source}) {
    for (const auto& r : records) {
      if (r.n_annotators != n || !r.has_draws()) {
        throw Error(ErrorKind::kInsufficientAnnotations,
                    "jackknife needs rectangular per-annotator draws (item " +
                        r.item_id + ")");
      }
    }
  }
  return n;
}

}  // namespace

const char* to_string(EstimateMethod method) {
  switch (method) {
    case EstimateMethod::kRaw: return "raw";
    case EstimateMethod::kNaiveAdjusted: return "naive_adjusted";
    case EstimateMethod::kJackknifeAdjusted: return "jackknife_adjusted";
    case EstimateMethod::kParametricAdjusted: return "parametric_adjusted";
  }
  return "unknown";
}

AccuracyEstimate raw_accuracy(std::span<const std::uint8_t> correct) {
  if (correct.empty()) {
    throw Error(ErrorKind::kEmptyDataset, "accuracy of an empty dataset");
  }
  const auto hits = std::count_if(correct.begin(), correct.end(),
                                  [](std::uint8_t c) { return c != 0; });
  AccuracyEstimate est;
  est.value = static_cast<double>(hits) / static_cast<double>(correct.size());
  est.method = EstimateMethod::kRaw;
  return est;
}

std::pair<double, double> naive_from_counts(std::span<const int> target_k,
                                            std::span<const int> source_k,
                                            std::span<const std::uint8_t> correct,
                                            int n) {
  if (target_k.empty() || source_k.empty()) {
    throw Error(ErrorKind::kEmptyDataset, "naive estimator needs both datasets");
  }
  if (correct.size() != source_k.size()) {
    throw Error(ErrorKind::kInvalidParams,
                "correctness bits are not aligned with source records");
  }
  const auto levels = static_cast<std::size_t>(n) + 1;
  std::vector<double> target_mass(levels, 0.0);
  std::vector<double> source_count(levels, 0.0);
  std::vector<double> source_hits(levels, 0.0);
  for (int k : target_k) target_mass[k] += 1.0;
  for (std::size_t i = 0; i < source_k.size(); ++i) {
    source_count[source_k[i]] += 1.0;
    source_hits[source_k[i]] += correct[i] ? 1.0 : 0.0;
  }
  double kept = 0.0;
  double dropped = 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < levels; ++k) {
    if (target_mass[k] == 0.0) continue;
    if (source_count[k] == 0.0) {
      dropped += target_mass[k];
      continue;
    }
    kept += target_mass[k];
    total += source_hits[k] / source_count[k] * target_mass[k];
  }
  if (kept == 0.0) {
    throw Error(ErrorKind::kEmptyBucket,
                "no target bucket has a source item to estimate from");
  }
  const double all = kept + dropped;
  return {total / kept, dropped / all};
}

AccuracyEstimate naive_adjusted_accuracy(
    std::span<const AnnotationRecord> target,
    std::span<const AnnotationRecord> source,
    std::span<const std::uint8_t> source_correct, int n) {
  if (target.empty() || source.empty()) {
    throw Error(ErrorKind::kEmptyDataset, "naive estimator needs both datasets");
  }
  require_annotators(target, n, "target");
  require_annotators(source, n, "source");
  const auto tk = counts_of(target);
  const auto sk = counts_of(source);
  const auto [value, dropped] = naive_from_counts(tk, sk, source_correct, n);

  AccuracyEstimate est;
  est.value = value;
  est.method = EstimateMethod::kNaiveAdjusted;
  est.annotators_used = n;
  est.dropped_mass = dropped;
  if (dropped > 0.0) {
    std::vector<bool> has_source(static_cast<std::size_t>(n) + 1, false);
    for (int k : sk) has_source[k] = true;
    std::vector<bool> seen(has_source.size(), false);
    for (int k : tk) seen[k] = true;
    for (int k = 0; k <= n; ++k) {
      if (seen[k] && !has_source[k]) est.dropped_buckets.push_back(k);
    }
  }
  return est;
}

AccuracyEstimate flickr_reweighted_accuracy(
    std::span<const AnnotationRecord> target,
    std::span<const AnnotationRecord> candidates,
    std::span<const std::uint8_t> candidate_correct, int n) {
  return naive_adjusted_accuracy(target, candidates, candidate_correct, n);
}

GapDecomposition gap_decomposition(double acc_s1, double acc_s2,
                                   double adjusted) {
  GapDecomposition gap;
  gap.bias_corrected_gap = acc_s1 - adjusted;
  gap.selection_gap = adjusted - acc_s2;
  gap.finite_sample_gap = 0.0;
  gap.total_gap =
      gap.bias_corrected_gap + gap.selection_gap + gap.finite_sample_gap;
  gap.finite_sample_note =
      "finite-sample gap treated as zero: test-set accuracy stands in for "
      "distributional accuracy";
  return gap;
}

JackknifeResult jackknife_from_estimates(double full,
                                         std::span<const double> loo) {
  const auto n = static_cast<double>(loo.size());
  if (loo.size() < 2) {
    throw Error(ErrorKind::kInsufficientAnnotations,
                "jackknife needs at least two samples");
  }
  const double mean = std::accumulate(loo.begin(), loo.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : loo) ss += (v - mean) * (v - mean);
  JackknifeResult out;
  out.original = full;
  out.bias_estimate = (n - 1.0) * (mean - full);
  out.corrected = full - out.bias_estimate;
  out.standard_error = std::sqrt((n - 1.0) / n * ss);
  out.leave_one_out.assign(loo.begin(), loo.end());
  return out;
}

JackknifeResult jackknife_correct(
    const std::function<double(std::span<const int>)>& estimator, int n) {
  if (n < 2) {
    throw Error(ErrorKind::kInsufficientAnnotations,
                "jackknife needs at least two annotators");
  }
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  const double full = estimator(all);
  std::vector<double> loo(n);
  std::vector<int> kept(n - 1);
  for (int i = 0; i < n; ++i) {
    std::copy(all.begin(), all.begin() + i, kept.begin());
    std::copy(all.begin() + i + 1, all.end(), kept.begin() + i);
    loo[i] = estimator(kept);
  }
  return jackknife_from_estimates(full, loo);
}

JackknifeResult jackknife_samples(
    std::span<const double> samples,
    const std::function<double(std::span<const double>)>& estimator) {
  const int n = static_cast<int>(samples.size());
  std::vector<double> subset;
  return jackknife_correct(
      [&](std::span<const int> kept) {
        subset.clear();
        for (int i : kept) subset.push_back(samples[i]);
        return estimator(subset);
      },
      n);
}

JackknifeResult jackknife_naive(std::span<const AnnotationRecord> target,
                                std::span<const AnnotationRecord> source,
                                std::span<const std::uint8_t> source_correct) {
  const int n = rectangular_annotators(target, source);
  if (n < 2) {
    throw Error(ErrorKind::kInsufficientAnnotations,
                "jackknife needs at least two annotators");
  }
  const auto tk = counts_of(target);
  const auto sk = counts_of(source);
  const double full = naive_from_counts(tk, sk, source_correct, n).first;

  std::vector<double> loo(n);
  std::vector<int> tk_loo(tk.size());
  std::vector<int> sk_loo(sk.size());
  for (int a = 0; a < n; ++a) {
    for (std::size_t i = 0; i < tk.size(); ++i) tk_loo[i] = tk[i] - target[i].draws[a];
    for (std::size_t i = 0; i < sk.size(); ++i) sk_loo[i] = sk[i] - source[i].draws[a];
    loo[a] = naive_from_counts(tk_loo, sk_loo, source_correct, n - 1).first;
  }
  return jackknife_from_estimates(full, loo);
}

AccuracyEstimate jackknife_adjusted_accuracy(
    std::span<const AnnotationRecord> target,
    std::span<const AnnotationRecord> source,
    std::span<const std::uint8_t> source_correct) {
  const JackknifeResult jk = jackknife_naive(target, source, source_correct);
  AccuracyEstimate est;
  est.value = jk.corrected;
  est.method = EstimateMethod::kJackknifeAdjusted;
  est.annotators_used = target.front().n_annotators;
  est.ci = ConfidenceInterval{jk.corrected - 1.96 * jk.standard_error,
                              jk.corrected + 1.96 * jk.standard_error};
  return est;
}

LinearitySeries jackknife_linearity_series(
    std::span<const AnnotationRecord> target,
    std::span<const AnnotationRecord> source,
    std::span<const std::uint8_t> source_correct, std::span<const int> counts,
    std::uint64_t seed) {
  const int available = rectangular_annotators(target, source);
  std::vector<int> columns(available);
  std::iota(columns.begin(), columns.end(), 0);
  Rng rng(seed);
  for (int i = available - 1; i > 0; --i) {
    const int j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(columns[i], columns[j]);
  }

  LinearitySeries series;
  std::vector<int> tk(target.size());
  std::vector<int> sk(source.size());
  for (int n : counts) {
    if (n < 1 || n > available) {
      throw Error(ErrorKind::kInsufficientAnnotations,
                  "requested " + std::to_string(n) + " of " +
                      std::to_string(available) + " annotators");
    }
    for (std::size_t i = 0; i < target.size(); ++i) {
      tk[i] = 0;
      for (int c = 0; c < n; ++c) tk[i] += target[i].draws[columns[c]];
    }
    for (std::size_t i = 0; i < source.size(); ++i) {
      sk[i] = 0;
      for (int c = 0; c < n; ++c) sk[i] += source[i].draws[columns[c]];
    }
    series.points.push_back(
        {n, 1.0 / n, naive_from_counts(tk, sk, source_correct, n).first});
  }
  std::vector<double> x, y;
  for (const auto& p : series.points) {
    x.push_back(p.inverse_n);
    y.push_back(p.estimate);
  }
  series.fit = fit_line(x, y);
  if (series.points.size() >= 3) series.quadratic_term = fit_quadratic(x, y)[2];
  return series;
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorKind::kDegenerateFit, "line fit needs >= 2 points");
  }
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) {
    throw Error(ErrorKind::kDegenerateFit, "all x values are equal");
  }
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

std::vector<double> fit_quadratic(std::span<const double> x,
                                  std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3) {
    throw Error(ErrorKind::kDegenerateFit, "quadratic fit needs >= 3 points");
  }
  Eigen::MatrixXd design(x.size(), 3);
  Eigen::VectorXd rhs(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = x[i];
    design(i, 2) = x[i] * x[i];
    rhs(i) = y[i];
  }
  const Eigen::VectorXd c = design.colPivHouseholderQr().solve(rhs);
  return {c(0), c(1), c(2)};
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) {
    throw Error(ErrorKind::kEmptyDataset, "quantile of empty data");
  }
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return values[lo] + t * (values[hi] - values[lo]);
}

std::vector<double> bootstrap_replicates(const ResampleEstimator& estimator,
                                         std::size_t items, int resamples,
                                         std::uint64_t seed) {
  if (resamples < 2) {
    throw Error(ErrorKind::kInvalidParams, "bootstrap needs >= 2 resamples");
  }
  if (items == 0) {
    throw Error(ErrorKind::kEmptyDataset, "bootstrap over zero items");
  }
  std::vector<double> reps(resamples);
  std::vector<std::size_t> idx(items);
  for (int r = 0; r < resamples; ++r) {
    Rng rng(seed, static_cast<std::uint64_t>(r));
    for (auto& i : idx) i = static_cast<std::size_t>(rng() % items);
    reps[r] = estimator(idx);
  }
  return reps;
}

ConfidenceInterval bootstrap_ci(const ResampleEstimator& estimator,
                                std::size_t items, int resamples,
                                std::uint64_t seed, double level) {
  const auto reps = bootstrap_replicates(estimator, items, resamples, seed);
  const double tail = (1.0 - level) / 2.0;
  return {quantile(reps, tail), quantile(reps, 1.0 - tail)};
}

SlopeFit slope_fit(std::span<const std::pair<double, double>> pairs,
                   int resamples, std::uint64_t seed) {
  if (pairs.size() < 2) {
    throw Error(ErrorKind::kDegenerateFit, "slope fit needs >= 2 models");
  }
  auto fit_subset = [&](std::span<const std::size_t> idx) {
    std::vector<double> x, y;
    for (std::size_t i : idx) {
      x.push_back(pairs[i].first);
      y.push_back(pairs[i].second);
    }
    return fit_line(x, y);
  };
  std::vector<std::size_t> all(pairs.size());
  std::iota(all.begin(), all.end(), 0);
  const LinearFit full = fit_subset(all);

  std::vector<double> slopes, intercepts;
  std::vector<std::size_t> idx(pairs.size());
  for (int r = 0; r < resamples; ++r) {
    Rng rng(seed, static_cast<std::uint64_t>(r));
    for (auto& i : idx) i = static_cast<std::size_t>(rng() % pairs.size());
    try {
      const LinearFit f = fit_subset(idx);
      slopes.push_back(f.slope);
      intercepts.push_back(f.intercept);
    } catch (const Error&) {
      // A resample that repeats a single model has no slope; skip it.
    }
  }
  SlopeFit out;
  out.slope = full.slope;
  out.intercept = full.intercept;
  if (slopes.empty()) {
    out.slope_ci = {full.slope, full.slope};
    out.intercept_ci = {full.intercept, full.intercept};
  } else {
    out.slope_ci = {quantile(slopes, 0.025), quantile(slopes, 0.975)};
    out.intercept_ci = {quantile(intercepts, 0.025), quantile(intercepts, 0.975)};
  }
  return out;
}

}  // namespace selbias
