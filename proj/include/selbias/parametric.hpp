#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "selbias/distributions.hpp"
#include "selbias/estimators.hpp"
#include "selbias/quadrature.hpp"
#include "selbias/synthpop.hpp"

namespace selbias {

struct EmConfig {
  int components = 3;
  int restarts = 20;
  double tol = 1e-7;  // relative log-likelihood improvement
  int max_iter = 500;
  double shape_cap = 1e4;
  double shape_floor = 1e-3;
  // Random initial shapes are log-uniform on this range.
  double init_lo = 0.5;
  double init_hi = 50.0;
};

struct MixtureFitResult {
  BetaMixture mixture;  // components sorted by mean
  double log_likelihood = 0.0;
  int iterations = 0;
  bool converged = false;
  int restarts_used = 0;
  int best_restart = 0;
  // Some shape reached the cap (point-mass collapse).
  bool degenerate = false;
  // Log-likelihood after every iteration of the selected restart.
  std::vector<double> likelihood_trace;
};

// Histogram of selection counts (size n + 1); records must share n.
std::vector<double> selection_counts(std::span<const AnnotationRecord> records);

// Beta-binomial mixture log-likelihood of count data.
double mixture_log_likelihood(const BetaMixture& mix,
                              std::span<const double> counts, int n);

// Weighted beta-binomial log-likelihood up to the k-dependent binomial
// coefficient, evaluated through log-sums so it is exact for real shapes.
class WeightedBetaBinomialObjective {
 public:
  WeightedBetaBinomialObjective(std::span<const double> weights, int n);

  double total_weight() const { return total_; }
  double value(double alpha, double beta) const;
  // d/d(log alpha), d/d(log beta) and the 2x2 Hessian in log coordinates.
  void derivatives(double alpha, double beta, double grad[2],
                   double hess[3]) const;

 private:
  int n_;
  double total_;
  std::vector<double> above_;  // sum of weights with k > i
  std::vector<double> below_;  // sum of weights with n - k > i
};

// Maximizes the weighted objective over [floor, cap]^2 starting from `start`.
// The returned point never scores below the start.
BetaParams maximize_weighted(const WeightedBetaBinomialObjective& objective,
                             BetaParams start, double floor, double cap);

// EM over beta-binomial mixtures with random restarts; restart r uses stream
// (seed, r) and the best final log-likelihood wins (earliest on ties).
MixtureFitResult em_fit(std::span<const AnnotationRecord> annotations,
                        const EmConfig& config, std::uint64_t seed);
MixtureFitResult em_fit_counts(std::span<const double> counts, int n,
                               const EmConfig& config, std::uint64_t seed);

struct SplineConfig {
  int interior_knots = 8;
  double max_condition = 1e12;
};

// Natural cubic spline g(s; w) on knots in [0, 1].
class SplineModel {
 public:
  SplineModel() = default;
  SplineModel(std::vector<double> knots, std::vector<double> coefficients);

  static std::vector<double> equally_spaced_knots(int interior);
  // Value of every basis function at s.
  static std::vector<double> basis(std::span<const double> knots, double s);

  double raw(double s) const;
  // Fitted value projected into [0, 1].
  double operator()(double s) const;

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& coefficients() const { return coefficients_; }

  // Set when the unprojected fit leaves [0, 1] on the 1001-point grid.
  bool clamped = false;
  double condition_number = 0.0;

 private:
  std::vector<double> knots_;
  std::vector<double> coefficients_;
};

// p(f = 1, s_hat = k/n) per k from aligned annotations and correctness bits,
// normalized by the number of items.
std::vector<double> joint_probabilities(
    std::span<const AnnotationRecord> annotations,
    std::span<const std::uint8_t> correct);

// Least-squares fit of the spline so that, for every k,
//   sum_i g(s_i) Binom(k; n, s_i) p2(s_i) w_i  ~  joint[k].
// Throws Error{kIllConditioned} if the design's condition number exceeds
// config.max_condition.
SplineModel spline_fit(std::span<const double> joint, const BetaMixture& p2,
                       int n, const SplineConfig& config,
                       const QuadratureGrid& grid);

// Integral of g(s) p1(s) on the grid.
AccuracyEstimate parametric_adjusted_accuracy(const SplineModel& g,
                                              const BetaMixture& p1,
                                              const QuadratureGrid& grid);

struct FitSeries {
  std::vector<double> levels;    // k / n
  std::vector<double> observed;  // empirical pmf of k
  std::vector<double> induced;   // fitted beta-binomial mixture pmf
  std::vector<double> grid;      // s values for the density
  std::vector<double> density;   // fitted p(s)
};

// Plot-ready overlay of one dataset's fit against its observed counts.
FitSeries fit_report(const MixtureFitResult& fit,
                     std::span<const double> observed_counts, int n,
                     int density_points = 200);

}  // namespace selbias
