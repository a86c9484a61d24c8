#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "selbias/distributions.hpp"
#include "selbias/error.hpp"
#include "selbias/quadrature.hpp"
#include "support.hpp"

using namespace selbias;
using testing::beta_fn;
using testing::beta_moment;
using testing::choose;

TEST_CASE("beta_pdf matches closed-form values") {
  CHECK(beta_pdf({1, 1}, 0.3) == doctest::Approx(1.0).epsilon(1e-14));
  // s(1-s)/B(2,2) with B(2,2) = 1/6
  const double b22 = beta_fn(2, 2);
  CHECK(b22 == doctest::Approx(1.0 / 6.0));
  CHECK(beta_pdf({2, 2}, 0.5) == doctest::Approx(0.25 / b22).epsilon(1e-13));
  CHECK(beta_pdf({2, 2}, 0.5) == doctest::Approx(1.5).epsilon(1e-13));
  // s^2(1-s)/B(3,2) with B(3,2) = 1/12
  CHECK(beta_pdf({3, 2}, 0.5) == doctest::Approx(0.125 / beta_fn(3, 2)).epsilon(1e-13));
  CHECK(beta_pdf({3, 2}, 0.5) == doctest::Approx(1.5).epsilon(1e-13));
}

TEST_CASE("beta_pdf endpoints") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(beta_pdf({0.5, 2}, 0.0) == inf);
  CHECK(beta_pdf({2, 0.5}, 1.0) == inf);
  CHECK(beta_pdf({2, 2}, 0.0) == 0.0);
  CHECK(beta_pdf({2, 2}, 1.0) == 0.0);
  CHECK(beta_pdf({1, 1}, 0.0) == doctest::Approx(1.0));
  CHECK(beta_pdf({1, 3}, 0.0) == doctest::Approx(3.0));
}

TEST_CASE("invalid shapes and arguments are rejected") {
  auto kind_of = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::kIoError;
  };
  CHECK(kind_of([] { beta_pdf({0, 1}, 0.5); }) == ErrorKind::kInvalidParams);
  CHECK(kind_of([] { beta_pdf({1, -2}, 0.5); }) == ErrorKind::kInvalidParams);
  CHECK(kind_of([] { beta_pdf({1, 1}, 1.5); }) == ErrorKind::kOutOfRange);
  CHECK(kind_of([] { beta_binomial_pmf({1, 1}, 5, 6); }) == ErrorKind::kOutOfRange);
  CHECK(kind_of([] { beta_binomial_pmf({1, 1}, 5, -1); }) == ErrorKind::kOutOfRange);
  CHECK(kind_of([] { beta_binomial_pmf({0, 1}, 5, 1); }) == ErrorKind::kInvalidParams);
  CHECK(kind_of([] { toy_model_matched_density(2, 2, -1); }) == ErrorKind::kInvalidParams);
  CHECK(kind_of([] { toy_model_matched_density(0, 2, 3); }) == ErrorKind::kInvalidParams);
  CHECK(kind_of([] { BinomialNoiseModel{0}.validate(); }) == ErrorKind::kInvalidParams);
}

TEST_CASE("beta_binomial_pmf examples") {
  CHECK(beta_binomial_pmf({1, 1}, 40, 7) == doctest::Approx(1.0 / 41.0).epsilon(1e-12));
  // C(2,1) B(3,3)/B(2,2)
  const double direct = choose(2, 1) * beta_fn(3, 3) / beta_fn(2, 2);
  CHECK(direct == doctest::Approx(0.4));
  CHECK(beta_binomial_pmf({2, 2}, 2, 1) == doctest::Approx(direct).epsilon(1e-12));
  CHECK(beta_binomial_pmf({5, 1}, 1, 1) == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("beta_binomial_pmf agrees with the tgamma closed form") {
  for (double a : {0.3, 1.0, 2.5, 7.0}) {
    for (double b : {0.7, 1.0, 3.0}) {
      for (int n : {1, 5, 12}) {
        for (int k = 0; k <= n; ++k) {
          const double direct = choose(n, k) * beta_fn(k + a, n - k + b) / beta_fn(a, b);
          CHECK(beta_binomial_pmf({a, b}, n, k) == doctest::Approx(direct).epsilon(1e-10));
        }
      }
    }
  }
}

TEST_CASE("beta_binomial_pmf sums to one for n up to 100") {
  Rng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const double a = std::exp(std::log(0.01) + (std::log(1e3) - std::log(0.01)) * rng.uniform());
    const double b = std::exp(std::log(0.01) + (std::log(1e3) - std::log(0.01)) * rng.uniform());
    const int n = 1 + static_cast<int>(rng() % 100);
    double total = 0.0;
    for (int k = 0; k <= n; ++k) total += beta_binomial_pmf({a, b}, n, k);
    CHECK(total >= 1.0 - 1e-10);
    CHECK(total <= 1.0 + 1e-10);
  }
  double total = 0.0;
  for (int k = 0; k <= 100; ++k) total += beta_binomial_pmf({1e4, 1e4}, 100, k);
  CHECK(std::abs(total - 1.0) < 1e-10);
}

TEST_CASE("mixture_pdf") {
  const BetaMixture single(BetaParams{3, 2});
  for (double s : {0.0, 0.1, 0.37, 0.9, 1.0}) {
    CHECK(mixture_pdf(single, s) == beta_pdf({3, 2}, s));
  }
  const BetaMixture same({{0.5, {2, 2}}, {0.5, {2, 2}}});
  CHECK(mixture_pdf(same, 0.5) == doctest::Approx(1.5).epsilon(1e-13));
  const BetaMixture mixed({{0.6, {3, 2}}, {0.4, {2, 2}}});
  CHECK(mixture_pdf(mixed, 0.5) == doctest::Approx(1.5).epsilon(1e-13));
}

TEST_CASE("mixture weights must be normalized") {
  CHECK_THROWS_AS(BetaMixture({{0.5, {2, 2}}, {0.4, {2, 2}}}), Error);
  CHECK_THROWS_AS(BetaMixture({{1.2, {2, 2}}, {-0.2, {2, 2}}}), Error);
  CHECK_THROWS_AS(BetaMixture(std::vector<MixtureComponent>{}), Error);
  try {
    BetaMixture({{0.5, {2, 2}}, {0.4, {2, 2}}});
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kInvalidMixture);
  }
  CHECK_NOTHROW(BetaMixture({{0.3, {2, 2}}, {0.7 + 5e-13, {2, 2}}}));
}

TEST_CASE("mixture_induced_pmf") {
  const BetaMixture uniform(BetaParams{1, 1});
  for (int k = 0; k <= 10; ++k) {
    CHECK(mixture_induced_pmf(uniform, 10, k) == doctest::Approx(1.0 / 11.0).epsilon(1e-12));
  }
  const BetaMixture half({{0.5, {1, 1}}, {0.5, {1, 1}}});
  CHECK(mixture_induced_pmf(half, 10, 3) == doctest::Approx(1.0 / 11.0).epsilon(1e-12));

  // For n = 2, P(k = 1) = 2 E[s(1-s)] = 2ab / ((a+b)(a+b+1)).
  auto middle = [](double a, double b) { return 2 * a * b / ((a + b) * (a + b + 1)); };
  const BetaMixture two({{0.5, {2, 2}}, {0.5, {4, 4}}});
  const double expected = 0.5 * middle(2, 2) + 0.5 * middle(4, 4);
  CHECK(expected == doctest::Approx(0.4 * 0.5 + 0.5 * 4.0 / 9.0));
  CHECK(mixture_induced_pmf(two, 2, 1) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("single-component induced pmf is bitwise the beta-binomial pmf") {
  for (const BetaParams p : {BetaParams{2, 2}, BetaParams{0.4, 7.5}, BetaParams{30, 3}}) {
    const BetaMixture mix(p);
    const auto full = mixture_induced_pmf(mix, 40);
    for (int k = 0; k <= 40; ++k) {
      CHECK(mixture_induced_pmf(mix, 40, k) == beta_binomial_pmf(p, 40, k));
      CHECK(full[k] == beta_binomial_pmf(p, 40, k));
    }
  }
}

TEST_CASE("toy model matched density") {
  SUBCASE("no annotators reproduces the candidate density") {
    const auto sol = toy_model_matched_density(2, 2, 0);
    CHECK(sol.flickr_weight == 1.0);
    CHECK(sol.v1_weight == 0.0);
    CHECK(sol.flickr_params.alpha == 2.0);
    CHECK(sol.flickr_params.beta == 2.0);
    for (double s : {0.1, 0.5, 0.8}) {
      CHECK(mixture_pdf(sol.as_mixture(), s) == doctest::Approx(beta_pdf({2, 2}, s)));
    }
  }
  SUBCASE("ten annotators") {
    const auto sol = toy_model_matched_density(2, 2, 10);
    CHECK(sol.v1_weight == doctest::Approx(10.0 / 14.0).epsilon(1e-15));
    CHECK(sol.flickr_weight == doctest::Approx(4.0 / 14.0).epsilon(1e-15));
    CHECK(sol.v1_params.alpha == 3.0);
    CHECK(sol.v1_params.beta == 2.0);
    REQUIRE(sol.exact.has_value());
    CHECK(sol.exact->v1_numerator == 10);
    CHECK(sol.exact->flickr_numerator == 4);
    CHECK(sol.exact->denominator == 14);
  }
  SUBCASE("large n converges to the shifted density") {
    double previous = 1.0;
    for (int n : {1, 10, 100, 1000, 1000000}) {
      const auto sol = toy_model_matched_density(2, 2, n);
      CHECK(sol.flickr_weight < previous);
      previous = sol.flickr_weight;
    }
    CHECK(previous < 1e-5);
    const auto sol = toy_model_matched_density(2, 2, 1000000);
    CHECK(mixture_pdf(sol.as_mixture(), 0.7) == doctest::Approx(beta_pdf({3, 2}, 0.7)).epsilon(1e-5));
  }
}

TEST_CASE("toy model weights are exact for integer shapes") {
  for (int a = 1; a <= 6; ++a) {
    for (int b = 1; b <= 6; ++b) {
      for (int n : {0, 1, 3, 10, 40, 977}) {
        const auto sol = toy_model_matched_density(a, b, n);
        REQUIRE(sol.exact.has_value());
        CHECK(sol.exact->v1_numerator + sol.exact->flickr_numerator == sol.exact->denominator);
        CHECK(sol.exact->v1_numerator == n);
        CHECK(sol.exact->flickr_numerator == a + b);
        CHECK(sol.v1_weight >= 0.0);
        CHECK(sol.flickr_weight >= 0.0);
        CHECK(std::abs(sol.v1_weight + sol.flickr_weight - 1.0) <= 1e-12);
      }
    }
  }
  const auto real = toy_model_matched_density(2.5, 1.5, 10);
  CHECK_FALSE(real.exact.has_value());
  CHECK(real.flickr_weight == doctest::Approx(4.0 / 14.0));
}

TEST_CASE("sample_mixture") {
  CHECK(sample_mixture(BetaMixture(BetaParams{1, 1}), 0, 5).empty());
  const auto u = sample_mixture(BetaMixture(BetaParams{1, 1}), 1000000, 11);
  CHECK(std::abs(testing::mean_of(u) - 0.5) < 0.002);
  const auto b = sample_mixture(BetaMixture(BetaParams{3, 2}), 1000000, 12);
  CHECK(std::abs(testing::mean_of(b) - 0.6) < 0.002);
  for (double x : b) {
    REQUIRE(x >= 0.0);
    REQUIRE(x <= 1.0);
  }
}

TEST_CASE("sampling is deterministic and order independent") {
  const BetaMixture mix({{0.3, {2, 9}}, {0.7, {8, 1.5}}});
  const auto a = sample_mixture(mix, 500, 77);
  const auto b = sample_mixture(mix, 500, 77);
  CHECK(a == b);
  const auto prefix = sample_mixture(mix, 100, 77);
  CHECK(std::equal(prefix.begin(), prefix.end(), a.begin()));
  CHECK(sample_mixture(mix, 500, 78) != a);
  // Draw i depends only on (seed, i): evaluate streams in reverse.
  for (std::size_t i = 500; i-- > 0;) {
    Rng rng(77, i);
    REQUIRE(sample_mixture_one(mix, rng) == a[i]);
  }
}

TEST_CASE("mixture sampler matches component weights") {
  const BetaMixture mix({{0.25, {2, 2}}, {0.75, {9, 1}}});
  const auto draws = sample_mixture(mix, 200000, 3);
  CHECK(std::abs(testing::mean_of(draws) - mix.mean()) < 0.003);
}

TEST_CASE("default quadrature grid") {
  const auto grid = QuadratureGrid::standard();
  CHECK(grid.size() == 512);
  double total = 0.0;
  for (double w : grid.weights) {
    CHECK(w > 0.0);
    total += w;
  }
  CHECK(std::abs(total - 1.0) < 1e-12);
  CHECK(grid.nodes.front() > 0.0);
  CHECK(grid.nodes.back() < 1.0);
  CHECK(std::is_sorted(grid.nodes.begin(), grid.nodes.end()));
}

TEST_CASE("default grid integrates degree <= 5 against Beta(2,2) to 1e-8") {
  const auto grid = QuadratureGrid::standard();
  const BetaParams p{2, 2};
  for (int j = 0; j <= 5; ++j) {
    const double q = grid.integrate([&](double s) { return std::pow(s, j) * beta_pdf(p, s); });
    CHECK(std::abs(q - beta_moment(2, 2, j)) < 1e-8);
  }
  // A mixed polynomial with all degrees present.
  const double poly = grid.integrate([&](double s) {
    return (1 - 2 * s + 3 * s * s - s * s * s + 0.5 * std::pow(s, 4) - 2 * std::pow(s, 5)) *
           beta_pdf(p, s);
  });
  const double exact = 1 - 2 * beta_moment(2, 2, 1) + 3 * beta_moment(2, 2, 2) -
                       beta_moment(2, 2, 3) + 0.5 * beta_moment(2, 2, 4) -
                       2 * beta_moment(2, 2, 5);
  CHECK(std::abs(poly - exact) < 1e-8);
}

TEST_CASE("midpoint grid and adaptive integration") {
  const auto mid = QuadratureGrid::midpoint(512);
  CHECK(mid.size() == 512);
  CHECK(mid.integrate([](double) { return 1.0; }) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(integrate_adaptive([](double s) { return s * s; }) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  const double m = integrate_adaptive([](double s) { return s * beta_pdf({3, 2}, s); });
  CHECK(std::abs(m - 0.6) < 1e-8);
  CHECK_THROWS_AS(QuadratureGrid::composite_gauss_legendre(4, 9), Error);
}
