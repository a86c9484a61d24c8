#include "selbias/parametric.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "selbias/error.hpp"

namespace selbias {

namespace {

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

BetaMixture normalized_mixture(const std::vector<double>& weights,
                               const std::vector<BetaParams>& params) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<MixtureComponent> comps;
  for (std::size_t j = 0; j < weights.size(); ++j) {
    comps.push_back({weights[j] / total, params[j]});
  }
  // Absorb the rounding residue so the weights sum to one.
  double sum = 0.0;
  for (const auto& c : comps) sum += c.weight;
  auto largest = std::max_element(
      comps.begin(), comps.end(),
      [](const auto& a, const auto& b) { return a.weight < b.weight; });
  largest->weight += 1.0 - sum;
  return BetaMixture(std::move(comps));
}

BetaMixture sorted_by_mean(const BetaMixture& mix) {
  auto comps = mix.components();
  std::stable_sort(comps.begin(), comps.end(), [](const auto& a, const auto& b) {
    if (a.params.mean() != b.params.mean()) {
      return a.params.mean() < b.params.mean();
    }
    return a.params.alpha < b.params.alpha;
  });
  return BetaMixture(std::move(comps));
}

struct EmRun {
  BetaMixture mixture;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

EmRun run_em(std::span<const double> counts, int n, const EmConfig& cfg,
             std::vector<double> weights, std::vector<BetaParams> params) {
  const int comps = static_cast<int>(params.size());
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  std::vector<int> present;
  for (int k = 0; k <= n; ++k) {
    if (counts[k] > 0.0) present.push_back(k);
  }

  std::vector<double> log_joint(present.size() * comps);
  std::vector<double> row(comps);
  // Fills log_joint and returns the log-likelihood of the current state.
  auto evaluate = [&]() {
    double ll = 0.0;
    for (std::size_t p = 0; p < present.size(); ++p) {
      for (int j = 0; j < comps; ++j) {
        row[j] = weights[j] > 0.0
                     ? std::log(weights[j]) +
                           beta_binomial_log_pmf(params[j], n, present[p])
                     : -std::numeric_limits<double>::infinity();
        log_joint[p * comps + j] = row[j];
      }
      ll += counts[present[p]] * log_sum_exp(row);
    }
    return ll;
  };

  EmRun run;
  double ll = evaluate();
  std::vector<double> member(static_cast<std::size_t>(n) + 1);
  for (int it = 1; it <= cfg.max_iter; ++it) {
    // E-step: membership-weighted counts per component.
    std::vector<std::vector<double>> w(comps,
                                       std::vector<double>(n + 1, 0.0));
    for (std::size_t p = 0; p < present.size(); ++p) {
      const std::span<const double> lj(&log_joint[p * comps], comps);
      const double norm = log_sum_exp(lj);
      for (int j = 0; j < comps; ++j) {
        w[j][present[p]] = counts[present[p]] * std::exp(lj[j] - norm);
      }
    }
    // M-step.
    for (int j = 0; j < comps; ++j) {
      const WeightedBetaBinomialObjective objective(w[j], n);
      weights[j] = objective.total_weight() / total;
      if (objective.total_weight() <= 1e-12 * total) continue;
      params[j] = maximize_weighted(objective, params[j], cfg.shape_floor,
                                    cfg.shape_cap);
    }
    const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
    for (double& g : weights) g /= wsum;

    const double next = evaluate();
    run.trace.push_back(next);
    run.iterations = it;
    const double gain = next - ll;
    ll = next;
    if (gain < cfg.tol * std::abs(ll)) {
      run.converged = true;
      break;
    }
  }
  run.log_likelihood = ll;
  run.mixture = normalized_mixture(weights, params);
  return run;
}

}  // namespace

std::vector<double> selection_counts(std::span<const AnnotationRecord> records) {
  if (records.empty()) {
    throw Error(ErrorKind::kEmptyDataset, "no annotation records");
  }
  const int n = records.front().n_annotators;
  std::vector<double> counts(static_cast<std::size_t>(n) + 1, 0.0);
  for (const auto& r : records) {
    if (r.n_annotators != n) {
      throw Error(ErrorKind::kInvalidParams,
                  "mixture fitting needs one annotator count for all records");
    }
    counts[r.n_selected] += 1.0;
  }
  return counts;
}

double mixture_log_likelihood(const BetaMixture& mix,
                              std::span<const double> counts, int n) {
  double ll = 0.0;
  std::vector<double> row;
  for (int k = 0; k <= n; ++k) {
    if (counts[k] <= 0.0) continue;
    row.clear();
    for (const auto& c : mix.components()) {
      row.push_back(c.weight > 0.0 ? std::log(c.weight) +
                                         beta_binomial_log_pmf(c.params, n, k)
                                   : -std::numeric_limits<double>::infinity());
    }
    ll += counts[k] * log_sum_exp(row);
  }
  return ll;
}

WeightedBetaBinomialObjective::WeightedBetaBinomialObjective(
    std::span<const double> weights, int n)
    : n_(n), total_(0.0), above_(n, 0.0), below_(n, 0.0) {
  for (int k = 0; k <= n; ++k) total_ += weights[k];
  // above_[i] = sum_{k > i} w_k ; below_[i] = sum_{k < n - i} w_k.
  double running = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    running += weights[i + 1];
    above_[i] = running;
  }
  running = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    running += weights[n - 1 - i];
    below_[i] = running;
  }
}

double WeightedBetaBinomialObjective::value(double alpha, double beta) const {
  double f = 0.0;
  for (int i = 0; i < n_; ++i) {
    f += above_[i] * std::log(alpha + i) + below_[i] * std::log(beta + i) -
         total_ * std::log(alpha + beta + i);
  }
  return f;
}

void WeightedBetaBinomialObjective::derivatives(double alpha, double beta,
                                                double grad[2],
                                                double hess[3]) const {
  double fa = 0.0, fb = 0.0, faa = 0.0, fbb = 0.0, fab = 0.0;
  for (int i = 0; i < n_; ++i) {
    const double ra = 1.0 / (alpha + i);
    const double rb = 1.0 / (beta + i);
    const double rs = 1.0 / (alpha + beta + i);
    fa += above_[i] * ra - total_ * rs;
    fb += below_[i] * rb - total_ * rs;
    faa += -above_[i] * ra * ra + total_ * rs * rs;
    fbb += -below_[i] * rb * rb + total_ * rs * rs;
    fab += total_ * rs * rs;
  }
  grad[0] = alpha * fa;
  grad[1] = beta * fb;
  hess[0] = alpha * alpha * faa + alpha * fa;
  hess[1] = alpha * beta * fab;
  hess[2] = beta * beta * fbb + beta * fb;
}

BetaParams maximize_weighted(const WeightedBetaBinomialObjective& objective,
                             BetaParams start, double floor, double cap) {
  const double lo = std::log(floor);
  const double hi = std::log(cap);
  double u = std::clamp(std::log(start.alpha), lo, hi);
  double v = std::clamp(std::log(start.beta), lo, hi);
  auto score = [&](double uu, double vv) {
    return objective.value(std::exp(uu), std::exp(vv));
  };
  const double start_score =
      objective.value(start.alpha, start.beta);  // unclamped start
  double f = score(u, v);
  if (!(f >= start_score)) {
    // Clamping made the start worse; keep the caller's point unless we beat it.
    f = start_score;
    u = std::log(start.alpha);
    v = std::log(start.beta);
  }

  for (int iter = 0; iter < 100; ++iter) {
    double g[2], h[3];
    objective.derivatives(std::exp(u), std::exp(v), g, h);
    const double scale = 1.0 + objective.total_weight();
    if (std::max(std::abs(g[0]), std::abs(g[1])) < 1e-11 * scale) break;

    double directions[2][2];
    int count = 0;
    const double det = h[0] * h[2] - h[1] * h[1];
    if (h[0] < 0.0 && det > 0.0) {
      // Newton step: solve (-H) d = g.
      directions[count][0] = (-h[2] * g[0] + h[1] * g[1]) / det;
      directions[count][1] = (h[1] * g[0] - h[0] * g[1]) / det;
      ++count;
    }
    const double gnorm = std::hypot(g[0], g[1]);
    directions[count][0] = g[0] / gnorm;
    directions[count][1] = g[1] / gnorm;
    ++count;

    bool moved = false;
    for (int d = 0; d < count && !moved; ++d) {
      double t = 1.0;
      for (int bt = 0; bt < 60; ++bt, t *= 0.5) {
        const double nu = std::clamp(u + t * directions[d][0], lo, hi);
        const double nv = std::clamp(v + t * directions[d][1], lo, hi);
        if (nu == u && nv == v) break;
        const double nf = score(nu, nv);
        if (nf > f) {
          moved = true;
          const double step = std::max(std::abs(nu - u), std::abs(nv - v));
          const double gain = nf - f;
          u = nu;
          v = nv;
          f = nf;
          if (step < 1e-12 || gain <= 1e-15 * std::abs(f)) iter = 1000;
          break;
        }
      }
    }
    if (!moved) break;
  }
  return BetaParams{std::exp(u), std::exp(v)};
}

MixtureFitResult em_fit(std::span<const AnnotationRecord> annotations,
                        const EmConfig& config, std::uint64_t seed) {
  const auto counts = selection_counts(annotations);
  return em_fit_counts(counts, annotations.front().n_annotators, config, seed);
}

MixtureFitResult em_fit_counts(std::span<const double> counts, int n,
                               const EmConfig& config, std::uint64_t seed) {
  if (config.components < 1 || config.restarts < 1 || config.max_iter < 1) {
    throw Error(ErrorKind::kInvalidParams,
                "EM needs components, restarts and max_iter >= 1");
  }
  if (n < 1 || counts.size() != static_cast<std::size_t>(n) + 1) {
    throw Error(ErrorKind::kInvalidParams, "count histogram must have n+1 bins");
  }
  if (!(std::accumulate(counts.begin(), counts.end(), 0.0) > 0.0)) {
    throw Error(ErrorKind::kEmptyDataset, "EM on empty data");
  }

  MixtureFitResult best;
  best.log_likelihood = -std::numeric_limits<double>::infinity();
  const double log_lo = std::log(config.init_lo);
  const double log_hi = std::log(config.init_hi);
  for (int r = 0; r < config.restarts; ++r) {
    Rng rng(seed, static_cast<std::uint64_t>(r));
    std::vector<BetaParams> params(config.components);
    for (auto& p : params) {
      p.alpha = std::exp(log_lo + (log_hi - log_lo) * rng.uniform());
      p.beta = std::exp(log_lo + (log_hi - log_lo) * rng.uniform());
    }
    std::vector<double> weights(config.components, 1.0 / config.components);
    EmRun run = run_em(counts, n, config, std::move(weights), std::move(params));
    if (run.log_likelihood > best.log_likelihood) {
      best.mixture = sorted_by_mean(run.mixture);
      best.log_likelihood = run.log_likelihood;
      best.iterations = run.iterations;
      best.converged = run.converged;
      best.best_restart = r;
      best.likelihood_trace = std::move(run.trace);
    }
  }
  best.restarts_used = config.restarts;
  for (const auto& c : best.mixture.components()) {
    if (c.params.alpha >= config.shape_cap * (1.0 - 1e-9) ||
        c.params.beta >= config.shape_cap * (1.0 - 1e-9)) {
      best.degenerate = true;
    }
  }
  return best;
}

SplineModel::SplineModel(std::vector<double> knots,
                         std::vector<double> coefficients)
    : knots_(std::move(knots)), coefficients_(std::move(coefficients)) {
  if (knots_.size() < 2 || coefficients_.size() != knots_.size()) {
    throw Error(ErrorKind::kInvalidParams,
                "natural spline needs one coefficient per knot");
  }
}

std::vector<double> SplineModel::equally_spaced_knots(int interior) {
  if (interior < 0) {
    throw Error(ErrorKind::kInvalidParams, "negative knot count");
  }
  std::vector<double> knots;
  for (int i = 0; i <= interior + 1; ++i) {
    knots.push_back(static_cast<double>(i) / (interior + 1));
  }
  return knots;
}

std::vector<double> SplineModel::basis(std::span<const double> knots,
                                       double s) {
  // Truncated-power basis of natural cubic splines: 1, s, and
  // d_j(s) - d_{K-1}(s) with d_j = ((s-k_j)^3_+ - (s-k_K)^3_+) / (k_K - k_j).
  const std::size_t K = knots.size();
  auto cube_plus = [](double x) { return x > 0.0 ? x * x * x : 0.0; };
  auto d = [&](std::size_t j) {
    return (cube_plus(s - knots[j]) - cube_plus(s - knots[K - 1])) /
           (knots[K - 1] - knots[j]);
  };
  std::vector<double> out(K);
  out[0] = 1.0;
  out[1] = s;
  const double last = K >= 2 ? d(K - 2) : 0.0;
  for (std::size_t j = 0; j + 2 < K; ++j) out[j + 2] = d(j) - last;
  return out;
}

double SplineModel::raw(double s) const {
  const auto b = basis(knots_, s);
  double v = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) v += coefficients_[j] * b[j];
  return v;
}

double SplineModel::operator()(double s) const {
  return std::clamp(raw(s), 0.0, 1.0);
}

std::vector<double> joint_probabilities(
    std::span<const AnnotationRecord> annotations,
    std::span<const std::uint8_t> correct) {
  if (annotations.empty()) {
    throw Error(ErrorKind::kEmptyDataset, "no annotation records");
  }
  if (annotations.size() != correct.size()) {
    throw Error(ErrorKind::kInvalidParams,
                "correctness bits are not aligned with annotations");
  }
  const int n = annotations.front().n_annotators;
  std::vector<double> joint(static_cast<std::size_t>(n) + 1, 0.0);
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    if (annotations[i].n_annotators != n) {
      throw Error(ErrorKind::kInvalidParams,
                  "joint probabilities need one annotator count");
    }
    if (correct[i]) joint[annotations[i].n_selected] += 1.0;
  }
  for (double& j : joint) j /= static_cast<double>(annotations.size());
  return joint;
}

namespace {

// Density times weight at every node, rescaled to unit total. Shapes below one
// put integrable spikes at the ends that a fixed grid undercounts; rescaling
// keeps the mass right so a constant g integrates exactly.
std::vector<double> density_masses(const BetaMixture& mix,
                                   const QuadratureGrid& grid) {
  std::vector<double> m(grid.size());
  double total = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    m[i] = mixture_pdf(mix, grid.nodes[i]) * grid.weights[i];
    total += m[i];
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw Error(ErrorKind::kQuadratureFailure, "mixture has no mass on the grid");
  }
  for (double& x : m) x /= total;
  return m;
}

}  // namespace

SplineModel spline_fit(std::span<const double> joint, const BetaMixture& p2,
                       int n, const SplineConfig& config,
                       const QuadratureGrid& grid) {
  if (n < 1 || joint.size() != static_cast<std::size_t>(n) + 1) {
    throw Error(ErrorKind::kInvalidParams, "joint table must have n+1 entries");
  }
  const auto knots = SplineModel::equally_spaced_knots(config.interior_knots);
  const auto K = static_cast<Eigen::Index>(knots.size());
  const auto rows = static_cast<Eigen::Index>(n) + 1;

  const auto masses = density_masses(p2, grid);
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(rows, K);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double s = grid.nodes[i];
    const double mass = masses[i];
    if (mass == 0.0) continue;
    const auto b = SplineModel::basis(knots, s);
    const double ls = std::log(s);
    const double l1s = std::log1p(-s);
    for (int k = 0; k <= n; ++k) {
      const double binom =
          std::exp(log_binomial_coefficient(n, k) + k * ls + (n - k) * l1s);
      const double m = binom * mass;
      for (Eigen::Index j = 0; j < K; ++j) design(k, j) += m * b[j];
    }
  }
  Eigen::VectorXd rhs(rows);
  for (Eigen::Index k = 0; k < rows; ++k) rhs(k) = joint[k];

  // Condition number of the column-equilibrated design.
  Eigen::VectorXd norms = design.colwise().norm();
  for (Eigen::Index j = 0; j < K; ++j) {
    if (norms(j) == 0.0) norms(j) = 1.0;
  }
  const Eigen::MatrixXd scaled = design * norms.cwiseInverse().asDiagonal();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled);
  const auto& sv = svd.singularValues();
  // Fewer observable levels than basis functions leaves a null space.
  const double cond = rows >= K && sv(sv.size() - 1) > 0.0
                          ? sv(0) / sv(sv.size() - 1)
                          : std::numeric_limits<double>::infinity();
  if (!(cond <= config.max_condition)) {
    throw Error(ErrorKind::kIllConditioned,
                "spline design condition number " + std::to_string(cond) +
                    " exceeds limit");
  }
  const Eigen::VectorXd scaled_coef = scaled.colPivHouseholderQr().solve(rhs);
  const Eigen::VectorXd coef = scaled_coef.cwiseQuotient(norms);

  SplineModel model(knots, std::vector<double>(coef.data(), coef.data() + K));
  model.condition_number = cond;
  for (int i = 0; i <= 1000; ++i) {
    const double v = model.raw(i / 1000.0);
    if (v < 0.0 || v > 1.0) {
      model.clamped = true;
      break;
    }
  }
  return model;
}

AccuracyEstimate parametric_adjusted_accuracy(const SplineModel& g,
                                              const BetaMixture& p1,
                                              const QuadratureGrid& grid) {
  AccuracyEstimate est;
  est.method = EstimateMethod::kParametricAdjusted;
  // Same normalization as density_masses, applied last so a constant g
  // returns exactly itself.
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double m = mixture_pdf(p1, grid.nodes[i]) * grid.weights[i];
    num += g(grid.nodes[i]) * m;
    den += m;
  }
  if (!(den > 0.0) || !std::isfinite(den)) {
    throw Error(ErrorKind::kQuadratureFailure, "mixture has no mass on the grid");
  }
  est.value = num / den;
  return est;
}

FitSeries fit_report(const MixtureFitResult& fit,
                     std::span<const double> observed_counts, int n,
                     int density_points) {
  FitSeries out;
  const double total =
      std::accumulate(observed_counts.begin(), observed_counts.end(), 0.0);
  const auto induced = mixture_induced_pmf(fit.mixture, n);
  for (int k = 0; k <= n; ++k) {
    out.levels.push_back(static_cast<double>(k) / n);
    out.observed.push_back(total > 0.0 ? observed_counts[k] / total : 0.0);
    out.induced.push_back(induced[k]);
  }
  for (int i = 0; i < density_points; ++i) {
    const double s = (i + 0.5) / density_points;
    out.grid.push_back(s);
    out.density.push_back(mixture_pdf(fit.mixture, s));
  }
  return out;
}

}  // namespace selbias
