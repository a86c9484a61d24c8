#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "selbias/synthpop.hpp"

namespace testing {

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Closed-form Beta(a, b) raw moment E[s^j].
inline double beta_moment(double a, double b, int j) {
  double m = 1.0;
  for (int i = 0; i < j; ++i) m *= (a + i) / (a + b + i);
  return m;
}

// Beta function through tgamma; independent of the library's log-gamma path.
inline double beta_fn(double a, double b) {
  return std::tgamma(a) * std::tgamma(b) / std::tgamma(a + b);
}

inline double choose(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * (n - k + i) / i;
  return c;
}

// Two-tag population with per-annotator draws retained.
inline selbias::SyntheticPopulation two_tag_population(
    const selbias::BetaMixture& v1, const selbias::BetaMixture& other,
    selbias::DatasetTag other_tag, std::size_t n_v1, std::size_t n_other,
    int annotators, std::uint64_t seed) {
  using selbias::DatasetTag;
  selbias::SyntheticPopulation pop;
  pop.generators.mixtures = {{DatasetTag::kV1, v1}, {other_tag, other}};
  pop.generators.noise = {annotators};
  pop.items = selbias::generate_population(
      pop.generators.mixtures, {{DatasetTag::kV1, n_v1}, {other_tag, n_other}},
      seed);
  pop.annotations = selbias::annotate(pop.items, pop.generators.noise,
                                      seed, true);
  return pop;
}

inline std::vector<selbias::AnnotationRecord> records_with_tag(
    const selbias::SyntheticPopulation& pop, selbias::DatasetTag tag) {
  std::vector<selbias::AnnotationRecord> out;
  for (const auto& r : pop.annotations) {
    if (r.dataset == tag) out.push_back(r);
  }
  return out;
}

}  // namespace testing
