#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "selbias/error.hpp"
#include "selbias/rng.hpp"

namespace selbias {

struct BetaParams {
  double alpha = 1.0;
  double beta = 1.0;

  // Throws Error{kInvalidParams} unless both shapes are finite and positive.
  void validate() const;
  double mean() const { return alpha / (alpha + beta); }
};

struct MixtureComponent {
  double weight = 1.0;
  BetaParams params;
};

// Finite mixture of beta densities on [0, 1].
class BetaMixture {
 public:
  BetaMixture() = default;
  explicit BetaMixture(BetaParams single);
  // Throws Error{kInvalidMixture} when empty, any weight is negative, or the
  // weights do not sum to one within 1e-12.
  explicit BetaMixture(std::vector<MixtureComponent> components);

  const std::vector<MixtureComponent>& components() const {
    return components_;
  }
  std::size_t size() const { return components_.size(); }
  double mean() const;

 private:
  std::vector<MixtureComponent> components_{{1.0, BetaParams{}}};
};

// Observed selection counts are Binomial(n, s).
struct BinomialNoiseModel {
  int annotators = 1;
  void validate() const;
};

// Exact rational weights, present when the generating shapes are integers.
struct RationalWeights {
  std::int64_t v1_numerator = 0;
  std::int64_t flickr_numerator = 0;
  std::int64_t denominator = 1;
};

// Density of true selection frequency among candidates accepted by
// rejection matching a Beta(a, b) pool toward Beta(a + 1, b) with n
// annotators: n/(n+a+b) Beta(a+1, b) + (a+b)/(n+a+b) Beta(a, b).
struct ToyModelSolution {
  double v1_weight = 0.0;
  double flickr_weight = 1.0;
  BetaParams v1_params;
  BetaParams flickr_params;
  std::optional<RationalWeights> exact;

  BetaMixture as_mixture() const;
};

double log_beta_function(double a, double b);
double log_binomial_coefficient(int n, int k);

// +infinity at an endpoint where the matching shape is below one.
double beta_pdf(const BetaParams& params, double s);
double beta_log_pdf(const BetaParams& params, double s);

double beta_binomial_log_pmf(const BetaParams& params, int n, int k);
double beta_binomial_pmf(const BetaParams& params, int n, int k);

double mixture_pdf(const BetaMixture& mix, double s);
double mixture_induced_pmf(const BetaMixture& mix, int n, int k);
// Full pmf over k = 0..n.
std::vector<double> mixture_induced_pmf(const BetaMixture& mix, int n);

double binomial_pmf(int n, int k, double s);

ToyModelSolution toy_model_matched_density(double alpha, double beta, int n);

double sample_beta(const BetaParams& params, Rng& rng);
double sample_mixture_one(const BetaMixture& mix, Rng& rng);
// Draw i comes from stream (seed, i), so any prefix of a longer request is
// identical to a shorter one.
std::vector<double> sample_mixture(const BetaMixture& mix, std::size_t count,
                                   std::uint64_t seed);

}  // namespace selbias
