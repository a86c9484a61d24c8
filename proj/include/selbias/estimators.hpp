#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "selbias/synthpop.hpp"

namespace selbias {

enum class EstimateMethod {
  kRaw,
  kNaiveAdjusted,
  kJackknifeAdjusted,
  kParametricAdjusted,
};
const char* to_string(EstimateMethod method);

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 0.0;
};

struct AccuracyEstimate {
  double value = 0.0;
  EstimateMethod method = EstimateMethod::kRaw;
  std::optional<ConfidenceInterval> ci;
  int annotators_used = 0;
  // Target mass in buckets without source items, dropped and renormalized.
  double dropped_mass = 0.0;
  std::vector<int> dropped_buckets;
};

struct GapDecomposition {
  double total_gap = 0.0;
  double bias_corrected_gap = 0.0;
  double selection_gap = 0.0;
  double finite_sample_gap = 0.0;
  std::string finite_sample_note;
};

struct JackknifeResult {
  double original = 0.0;
  double bias_estimate = 0.0;
  double corrected = 0.0;
  double standard_error = 0.0;
  std::vector<double> leave_one_out;
};

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 1.0;
};

// Fraction of correct bits. Throws Error{kEmptyDataset} on empty input.
AccuracyEstimate raw_accuracy(std::span<const std::uint8_t> correct);

// Sum over k of mean(correct | source k) * target share of k. All records
// must have exactly n annotators; `source_correct` is aligned with `source`.
// Target buckets with no source items are dropped and the remaining target
// mass renormalized. Throws Error{kEmptyBucket} when nothing remains.
AccuracyEstimate naive_adjusted_accuracy(
    std::span<const AnnotationRecord> target,
    std::span<const AnnotationRecord> source,
    std::span<const std::uint8_t> source_correct, int n);

// Same estimator with the unfiltered candidate pool as the source.
AccuracyEstimate flickr_reweighted_accuracy(
    std::span<const AnnotationRecord> target,
    std::span<const AnnotationRecord> candidates,
    std::span<const std::uint8_t> candidate_correct, int n);

// Count-level form: k values per item. Returns the estimate and dropped mass.
std::pair<double, double> naive_from_counts(std::span<const int> target_k,
                                            std::span<const int> source_k,
                                            std::span<const std::uint8_t> correct,
                                            int n);

// total = bias_corrected + selection + finite_sample holds bitwise; the
// finite-sample term is pinned to zero.
GapDecomposition gap_decomposition(double acc_s1, double acc_s2,
                                   double adjusted);

// bias = (n - 1) * (mean(loo) - full); corrected = full - bias;
// se = sqrt((n - 1) / n * sum (loo_i - mean)^2).
JackknifeResult jackknife_from_estimates(double full,
                                         std::span<const double> leave_one_out);

// `estimator` is evaluated on the kept annotator columns; n >= 2.
JackknifeResult jackknife_correct(
    const std::function<double(std::span<const int>)>& estimator, int n);

// Leave-one-out over a plain sample.
JackknifeResult jackknife_samples(
    std::span<const double> samples,
    const std::function<double(std::span<const double>)>& estimator);

// Jackknife of the naive estimator, leaving out one annotator column at a
// time from both datasets. Records need per-annotator draws.
JackknifeResult jackknife_naive(std::span<const AnnotationRecord> target,
                                std::span<const AnnotationRecord> source,
                                std::span<const std::uint8_t> source_correct);

// Jackknife-corrected estimate with a +/-1.96 se interval.
AccuracyEstimate jackknife_adjusted_accuracy(
    std::span<const AnnotationRecord> target,
    std::span<const AnnotationRecord> source,
    std::span<const std::uint8_t> source_correct);

struct LinearityPoint {
  int annotators = 0;
  double inverse_n = 0.0;
  double estimate = 0.0;
};

struct LinearitySeries {
  std::vector<LinearityPoint> points;
  LinearFit fit;               // estimate ~ intercept + slope / n
  double quadratic_term = 0;   // curvature of estimate in 1/n
};

// Naive estimate using n of the available annotator columns for each n in
// `counts`; columns are a seeded random permutation prefix, so smaller sets
// nest inside larger ones.
LinearitySeries jackknife_linearity_series(
    std::span<const AnnotationRecord> target,
    std::span<const AnnotationRecord> source,
    std::span<const std::uint8_t> source_correct, std::span<const int> counts,
    std::uint64_t seed);

// Ordinary least squares. Throws Error{kDegenerateFit} if all x are equal.
LinearFit fit_line(std::span<const double> x, std::span<const double> y);
// Coefficients (c0, c1, c2) of y ~ c0 + c1 x + c2 x^2.
std::vector<double> fit_quadratic(std::span<const double> x,
                                  std::span<const double> y);

// Linear-interpolated quantile of unsorted data, q in [0, 1].
double quantile(std::vector<double> values, double q);

using ResampleEstimator = std::function<double(std::span<const std::size_t>)>;

// Percentile interval (2.5%, 97.5% for level 0.95) over `resamples` item-level
// bootstrap resamples. Resample r draws from stream (seed, r).
ConfidenceInterval bootstrap_ci(const ResampleEstimator& estimator,
                                std::size_t items, int resamples,
                                std::uint64_t seed, double level = 0.95);

// Bootstrap replicates themselves, in resample order.
std::vector<double> bootstrap_replicates(const ResampleEstimator& estimator,
                                         std::size_t items, int resamples,
                                         std::uint64_t seed);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  ConfidenceInterval slope_ci;
  ConfidenceInterval intercept_ci;
};

// OLS of y on x across models with a model-level bootstrap interval.
SlopeFit slope_fit(std::span<const std::pair<double, double>> pairs,
                   int resamples, std::uint64_t seed);

}  // namespace selbias
