#include "selbias/distributions.hpp"

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "selbias/error.hpp"

namespace selbias {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double lgam(double x) { return boost::math::lgamma(x); }

bool is_integral(double x) {
  return std::floor(x) == x && x < 1e9;
}

void check_k(int n, int k) {
  if (n < 0 || k < 0 || k > n) {
    std::ostringstream os;
    os << "selection count k=" << k << " outside [0, n=" << n << "]";
    throw Error(ErrorKind::kOutOfRange, os.str());
  }
}

}  // namespace

void BetaParams::validate() const {
  if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) ||
      !std::isfinite(beta)) {
    std::ostringstream os;
    os << "beta shapes must be positive and finite (alpha=" << alpha
       << ", beta=" << beta << ")";
    throw Error(ErrorKind::kInvalidParams, os.str());
  }
}

BetaMixture::BetaMixture(BetaParams single) {
  single.validate();
  components_ = {{1.0, single}};
}

BetaMixture::BetaMixture(std::vector<MixtureComponent> components)
    : components_(std::move(components)) {
  if (components_.empty()) {
    throw Error(ErrorKind::kInvalidMixture, "mixture has no components");
  }
  double total = 0.0;
  for (const auto& c : components_) {
    if (!(c.weight >= 0.0)) {
      throw Error(ErrorKind::kInvalidMixture, "mixture weight is negative");
    }
    try {
      c.params.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::kInvalidMixture, e.what());
    }
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12) {
    std::ostringstream os;
    os.precision(17);
    os << "mixture weights sum to " << total << ", expected 1";
    throw Error(ErrorKind::kInvalidMixture, os.str());
  }
}

double BetaMixture::mean() const {
  double m = 0.0;
  for (const auto& c : components_) m += c.weight * c.params.mean();
  return m;
}

void BinomialNoiseModel::validate() const {
  if (annotators < 1) {
    throw Error(ErrorKind::kInvalidParams,
                "binomial noise model needs at least one annotator");
  }
}

BetaMixture ToyModelSolution::as_mixture() const {
  return BetaMixture({{v1_weight, v1_params}, {flickr_weight, flickr_params}});
}

double log_beta_function(double a, double b) {
  return lgam(a) + lgam(b) - lgam(a + b);
}

double log_binomial_coefficient(int n, int k) {
  return lgam(n + 1.0) - lgam(k + 1.0) - lgam(n - k + 1.0);
}

double beta_log_pdf(const BetaParams& params, double s) {
  params.validate();
  if (!(s >= 0.0 && s <= 1.0)) {
    throw Error(ErrorKind::kOutOfRange, "beta density evaluated outside [0,1]");
  }
  const double a = params.alpha;
  const double b = params.beta;
  // The (shape - 1) * log(0) terms are resolved by hand at the endpoints.
  auto edge_term = [](double shape_minus_one, double log_x, bool at_zero) {
    if (!at_zero) return shape_minus_one * log_x;
    if (shape_minus_one == 0.0) return 0.0;
    return shape_minus_one < 0.0 ? kInf : -kInf;
  };
  const double left = edge_term(a - 1.0, std::log(s), s == 0.0);
  const double right = edge_term(b - 1.0, std::log1p(-s), s == 1.0);
  return left + right - log_beta_function(a, b);
}

double beta_pdf(const BetaParams& params, double s) {
  return std::exp(beta_log_pdf(params, s));
}

double beta_binomial_log_pmf(const BetaParams& params, int n, int k) {
  params.validate();
  check_k(n, k);
  return log_binomial_coefficient(n, k) +
         log_beta_function(k + params.alpha, n - k + params.beta) -
         log_beta_function(params.alpha, params.beta);
}

double beta_binomial_pmf(const BetaParams& params, int n, int k) {
  return std::exp(beta_binomial_log_pmf(params, n, k));
}

double mixture_pdf(const BetaMixture& mix, double s) {
  double total = 0.0;
  for (const auto& c : mix.components()) {
    if (c.weight == 0.0) continue;
    total += c.weight * beta_pdf(c.params, s);
  }
  return total;
}

double mixture_induced_pmf(const BetaMixture& mix, int n, int k) {
  check_k(n, k);
  double total = 0.0;
  for (const auto& c : mix.components()) {
    total += c.weight * beta_binomial_pmf(c.params, n, k);
  }
  return total;
}

std::vector<double> mixture_induced_pmf(const BetaMixture& mix, int n) {
  std::vector<double> pmf(static_cast<std::size_t>(n) + 1);
  for (int k = 0; k <= n; ++k) pmf[k] = mixture_induced_pmf(mix, n, k);
  return pmf;
}

double binomial_pmf(int n, int k, double s) {
  check_k(n, k);
  if (s <= 0.0) return k == 0 ? 1.0 : 0.0;
  if (s >= 1.0) return k == n ? 1.0 : 0.0;
  return std::exp(log_binomial_coefficient(n, k) + k * std::log(s) +
                  (n - k) * std::log1p(-s));
}

ToyModelSolution toy_model_matched_density(double alpha, double beta, int n) {
  BetaParams flickr{alpha, beta};
  flickr.validate();
  if (n < 0) {
    throw Error(ErrorKind::kInvalidParams, "annotator count must be >= 0");
  }
  ToyModelSolution out;
  out.flickr_params = flickr;
  out.v1_params = BetaParams{alpha + 1.0, beta};
  const double total = n + alpha + beta;
  out.v1_weight = n / total;
  out.flickr_weight = (alpha + beta) / total;
  if (is_integral(alpha) && is_integral(beta)) {
    const auto a = static_cast<std::int64_t>(alpha);
    const auto b = static_cast<std::int64_t>(beta);
    out.exact = RationalWeights{n, a + b, n + a + b};
  }
  return out;
}

double sample_beta(const BetaParams& params, Rng& rng) {
  std::gamma_distribution<double> ga(params.alpha, 1.0);
  std::gamma_distribution<double> gb(params.beta, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  const double sum = x + y;
  if (sum > 0.0) return x / sum;
  // Both gammas underflowed (tiny shapes): the mass sits at the endpoints.
  return rng.uniform() < params.mean() ? 1.0 : 0.0;
}

double sample_mixture_one(const BetaMixture& mix, Rng& rng) {
  const auto& comps = mix.components();
  std::size_t pick = comps.size() - 1;
  if (comps.size() > 1) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t j = 0; j < comps.size(); ++j) {
      acc += comps[j].weight;
      if (u < acc) {
        pick = j;
        break;
      }
    }
  }
  return sample_beta(comps[pick].params, rng);
}

std::vector<double> sample_mixture(const BetaMixture& mix, std::size_t count,
                                   std::uint64_t seed) {
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(seed, i);
    out[i] = sample_mixture_one(mix, rng);
  }
  return out;
}

}  // namespace selbias
