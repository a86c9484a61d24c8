#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "selbias/distributions.hpp"
#include "selbias/estimators.hpp"
#include "support.hpp"

using namespace selbias;

namespace {

std::vector<AnnotationRecord> records_from_counts(const std::vector<int>& ks, int n) {
  std::vector<AnnotationRecord> out;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    out.push_back({"r" + std::to_string(i), DatasetTag::kV2, "", n, ks[i], {}});
  }
  return out;
}

struct Scenario {
  std::vector<AnnotationRecord> target;
  std::vector<AnnotationRecord> source;
  std::vector<std::uint8_t> correct;
  std::vector<ImageItem> source_items;
};

// v1 from `p1`, replica from `p2`, correctness bits on the replica only.
Scenario make_scenario(const BetaParams& p1, const BetaParams& p2, const AccuracyCurve& g,
                       std::size_t count, int annotators, std::uint64_t seed) {
  const auto items = generate_population(
      {{DatasetTag::kV1, BetaMixture(p1)}, {DatasetTag::kV2, BetaMixture(p2)}},
      {{DatasetTag::kV1, count}, {DatasetTag::kV2, count}}, seed);
  const auto ann = annotate(items, {annotators}, stream_key(seed, 1), true);
  Scenario sc;
  sc.target.assign(ann.begin(), ann.begin() + count);
  sc.source.assign(ann.begin() + count, ann.end());
  sc.source_items.assign(items.begin() + count, items.end());
  const std::vector<std::string> names{"model"};
  for (const auto& c : simulate_correctness(sc.source_items, g, names, stream_key(seed, 2))) {
    sc.correct.push_back(c.correct);
  }
  return sc;
}

// Infinite-item limit of the naive estimator with n annotators.
double naive_limit(const AccuracyCurve& g, const BetaParams& p1, const BetaParams& p2, int n) {
  using boost::math::quadrature::gauss_kronrod;
  double total = 0.0;
  for (int k = 0; k <= n; ++k) {
    auto weight = [&](double s) {
      return testing::choose(n, k) * std::pow(s, k) * std::pow(1 - s, n - k) * beta_pdf(p2, s);
    };
    const double num = gauss_kronrod<double, 61>::integrate([&](double s) { return g(s) * weight(s); }, 0.0, 1.0, 15, 1e-13);
    const double den = gauss_kronrod<double, 61>::integrate(weight, 0.0, 1.0, 15, 1e-13);
    const double p1k = testing::choose(n, k) * testing::beta_fn(k + p1.alpha, n - k + p1.beta) /
                       testing::beta_fn(p1.alpha, p1.beta);
    total += num / den * p1k;
  }
  return total;
}

}  // namespace

TEST_CASE("raw accuracy") {
  CHECK(raw_accuracy(std::vector<std::uint8_t>{1, 1, 1}).value == 1.0);
  const auto half = raw_accuracy(std::vector<std::uint8_t>{1, 0, 1, 0});
  CHECK(half.value == 0.5);
  CHECK(half.method == EstimateMethod::kRaw);
  try {
    raw_accuracy(std::vector<std::uint8_t>{});
    FAIL("expected empty-dataset");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kEmptyDataset);
  }
  CHECK(std::string(to_string(EstimateMethod::kParametricAdjusted)) == "parametric_adjusted");
}

TEST_CASE("naive estimator hand cases") {
  SUBCASE("matching buckets with constant accuracy") {
    const auto target = records_from_counts({0, 1, 2, 2, 3}, 3);
    const auto source = records_from_counts({0, 0, 1, 1, 2, 2, 2, 2, 3, 3}, 3);
    const std::vector<std::uint8_t> correct{1, 0, 1, 0, 1, 0, 1, 0, 0, 1};
    CHECK(naive_adjusted_accuracy(target, source, correct, 3).value == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("all correct") {
    const auto target = records_from_counts({0, 0, 4, 4, 4}, 4);
    const auto source = records_from_counts({0, 1, 2, 3, 4}, 4);
    const std::vector<std::uint8_t> correct(5, 1);
    CHECK(naive_adjusted_accuracy(target, source, correct, 4).value == 1.0);
  }
  SUBCASE("two buckets") {
    const auto target = records_from_counts({0, 1}, 1);
    const auto source = records_from_counts({0, 0, 0, 0, 0, 1, 1, 1, 1, 1}, 1);
    const std::vector<std::uint8_t> correct{1, 0, 0, 0, 0, 1, 1, 1, 1, 0};
    const auto est = naive_adjusted_accuracy(target, source, correct, 1);
    CHECK(est.value == doctest::Approx(0.5 * 0.2 + 0.5 * 0.8).epsilon(1e-15));
    CHECK(est.method == EstimateMethod::kNaiveAdjusted);
    CHECK(est.annotators_used == 1);
    CHECK(est.dropped_mass == 0.0);
  }
  SUBCASE("empty buckets are dropped and renormalized") {
    const auto target = records_from_counts({0, 1, 2, 2}, 2);
    const auto source = records_from_counts({0, 0, 2}, 2);
    const std::vector<std::uint8_t> correct{1, 0, 1};
    const auto est = naive_adjusted_accuracy(target, source, correct, 2);
    CHECK(est.dropped_mass == doctest::Approx(0.25));
    CHECK(est.dropped_buckets == std::vector<int>{1});
    CHECK(est.value == doctest::Approx((0.25 * 0.5 + 0.5 * 1.0) / 0.75));
  }
  SUBCASE("nothing left") {
    const auto target = records_from_counts({1, 1}, 2);
    const auto source = records_from_counts({0, 2}, 2);
    const std::vector<std::uint8_t> correct{1, 1};
    try {
      naive_adjusted_accuracy(target, source, correct, 2);
      FAIL("expected empty-bucket");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kEmptyBucket);
    }
  }
  SUBCASE("annotator counts must agree") {
    const auto target = records_from_counts({1}, 2);
    const auto source = records_from_counts({1}, 3);
    const std::vector<std::uint8_t> correct{1};
    CHECK_THROWS_AS(naive_adjusted_accuracy(target, source, correct, 2), Error);
  }
}

TEST_CASE("candidate reweighting") {
  const auto g = AccuracyCurve::logistic(10, 0.5);
  const auto sc = make_scenario({3, 2}, {2, 2}, g, 20000, 10, 4);
  SUBCASE("candidate equals target gives its raw accuracy") {
    const auto est = flickr_reweighted_accuracy(sc.source, sc.source, sc.correct, 10);
    CHECK(est.value == doctest::Approx(raw_accuracy(sc.correct).value).epsilon(1e-12));
  }
  SUBCASE("constant accuracy pool is unchanged") {
    const std::vector<std::uint8_t> ones(sc.source.size(), 1);
    CHECK(flickr_reweighted_accuracy(sc.target, sc.source, ones, 10).value == 1.0);
  }
  SUBCASE("gap to target shrinks with more annotators") {
    const double oracle = true_adjusted_accuracy(g, BetaMixture(BetaParams{3, 2}));
    const double e5 = oracle - flickr_reweighted_accuracy(first_annotators(sc.target, 5),
                                                         first_annotators(sc.source, 5), sc.correct, 5).value;
    const double e10 = oracle - flickr_reweighted_accuracy(sc.target, sc.source, sc.correct, 10).value;
    CHECK(e5 > e10);
    CHECK(e10 > 0.0);
  }
}

TEST_CASE("gap decomposition") {
  const auto zero = gap_decomposition(0.7, 0.7, 0.7);
  CHECK(zero.total_gap == 0.0);
  CHECK(zero.bias_corrected_gap == 0.0);
  CHECK(zero.selection_gap == 0.0);
  CHECK(zero.finite_sample_gap == 0.0);

  const auto ref = gap_decomposition(0.852, 0.735, 0.816);
  CHECK(ref.bias_corrected_gap == doctest::Approx(0.036).epsilon(1e-9));
  CHECK(ref.selection_gap == doctest::Approx(0.081).epsilon(1e-9));
  CHECK(ref.finite_sample_gap == 0.0);
  CHECK(ref.total_gap == doctest::Approx(0.117).epsilon(1e-9));
  CHECK_FALSE(ref.finite_sample_note.empty());

  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const auto d = gap_decomposition(rng.uniform(), rng.uniform(), rng.uniform());
    REQUIRE(d.bias_corrected_gap + d.selection_gap + d.finite_sample_gap == d.total_gap);
  }
}

TEST_CASE("jackknife exactness") {
  SUBCASE("biased variance on {0, 2}") {
    const std::vector<double> draws{0.0, 2.0};
    auto biased_var = [](std::span<const double> x) {
      double m = 0.0;
      for (double v : x) m += v;
      m /= x.size();
      double ss = 0.0;
      for (double v : x) ss += (v - m) * (v - m);
      return ss / x.size();
    };
    const auto jk = jackknife_samples(draws, biased_var);
    CHECK(jk.original == 1.0);
    CHECK(jk.leave_one_out == std::vector<double>{0.0, 0.0});
    CHECK(jk.bias_estimate == -1.0);
    CHECK(std::abs(jk.corrected - 2.0) < 1e-10);
    CHECK(jk.corrected == jk.original - jk.bias_estimate);
  }
  SUBCASE("biased variance becomes the unbiased one") {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> x(3 + trial);
      for (double& v : x) v = rng.uniform() * 10 - 5;
      const auto jk = jackknife_samples(x, [](std::span<const double> s) {
        double m = 0.0;
        for (double v : s) m += v;
        m /= s.size();
        double ss = 0.0;
        for (double v : s) ss += (v - m) * (v - m);
        return ss / s.size();
      });
      double m = testing::mean_of(x), ss = 0.0;
      for (double v : x) ss += (v - m) * (v - m);
      CHECK(std::abs(jk.corrected - ss / (x.size() - 1)) < 1e-10);
    }
  }
  SUBCASE("mean of observed frequency has zero bias") {
    const auto items = generate_population({{DatasetTag::kV1, BetaMixture(BetaParams{3, 2})}},
                                           {{DatasetTag::kV1, 2000}}, 3);
    const auto recs = annotate(items, {10}, 3, true);
    auto mean_sf = [&](std::span<const int> cols) {
      double total = 0.0;
      for (const auto& r : recs) {
        int k = 0;
        for (int c : cols) k += r.draws[c];
        total += static_cast<double>(k) / cols.size();
      }
      return total / recs.size();
    };
    const auto jk = jackknife_correct(mean_sf, 10);
    CHECK(std::abs(jk.bias_estimate) < 1e-12);
    CHECK(jk.standard_error >= 0.0);
  }
  SUBCASE("needs two annotators") {
    try {
      jackknife_correct([](std::span<const int>) { return 0.0; }, 1);
      FAIL("expected insufficient annotators");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kInsufficientAnnotations);
    }
  }
}

TEST_CASE("jackknife of the naive estimator") {
  const auto g = AccuracyCurve::logistic(10, 0.5);
  const double oracle = true_adjusted_accuracy(g, BetaMixture(BetaParams{3, 2}));
  const auto sc = make_scenario({3, 2}, {2, 2}, g, 100000, 40, 17);

  const auto naive = naive_adjusted_accuracy(sc.target, sc.source, sc.correct, 40);
  const auto jk = jackknife_naive(sc.target, sc.source, sc.correct);
  CHECK(jk.original == naive.value);
  CHECK(jk.leave_one_out.size() == 40);
  CHECK(jk.corrected == jk.original - jk.bias_estimate);
  CHECK(std::abs(jk.corrected - oracle) < std::abs(naive.value - oracle));

  // Leave-one-out through the generic interface agrees.
  auto by_columns = [&](std::span<const int> cols) {
    const auto t = select_annotators(sc.target, cols);
    const auto s = select_annotators(sc.source, cols);
    return naive_adjusted_accuracy(t, s, sc.correct, static_cast<int>(cols.size())).value;
  };
  const auto generic = jackknife_correct(by_columns, 40);
  CHECK(generic.corrected == doctest::Approx(jk.corrected).epsilon(1e-12));

  const auto est = jackknife_adjusted_accuracy(sc.target, sc.source, sc.correct);
  REQUIRE(est.ci.has_value());
  CHECK(est.ci->lo <= est.value);
  CHECK(est.value <= est.ci->hi);
  CHECK(est.method == EstimateMethod::kJackknifeAdjusted);

  std::vector<AnnotationRecord> compact = sc.target;
  compact[3].draws.clear();
  CHECK_THROWS_AS(jackknife_naive(compact, sc.source, sc.correct), Error);
}

TEST_CASE("naive estimator consistency in n") {
  const auto g = AccuracyCurve::logistic(10, 0.5);
  const double oracle = true_adjusted_accuracy(g, BetaMixture(BetaParams{3, 2}));
  const auto sc = make_scenario({3, 2}, {2, 2}, g, 100000, 80, 23);
  std::vector<double> errors;
  for (int n : {5, 10, 20, 40, 80}) {
    const auto t = first_annotators(sc.target, n);
    const auto s = first_annotators(sc.source, n);
    errors.push_back(std::abs(naive_adjusted_accuracy(t, s, sc.correct, n).value - oracle));
  }
  for (std::size_t i = 1; i < errors.size(); ++i) CHECK(errors[i] <= errors[i - 1] + 0.003);
  CHECK(errors.back() < errors.front() / 3.0);
}

TEST_CASE("naive estimator underestimates under dominance") {
  struct Pair {
    BetaParams p1, p2;
    AccuracyCurve g;
  };
  const std::vector<Pair> pairs{{{3, 2}, {2, 2}, AccuracyCurve::logistic(10, 0.5)},
                                {{5, 1}, {1, 1}, AccuracyCurve::linear(0.1, 0.8)},
                                {{4, 2}, {2, 3}, AccuracyCurve::logistic(6, 0.4)}};
  std::uint64_t seed = 40;
  for (const auto& p : pairs) {
    const auto sc = make_scenario(p.p1, p.p2, p.g, 100000, 10, ++seed);
    const double oracle = true_adjusted_accuracy(p.g, BetaMixture(p.p1));
    CHECK(naive_adjusted_accuracy(sc.target, sc.source, sc.correct, 10).value < oracle);
    CHECK(naive_limit(p.g, p.p1, p.p2, 10) < oracle);
  }
}

TEST_CASE("jackknife linearity series") {
  const std::vector<int> counts{5, 8, 10, 20, 40};
  SUBCASE("constant accuracy is flat") {
    const auto sc = make_scenario({3, 2}, {2, 2}, AccuracyCurve::constant(1.0), 3000, 40, 2);
    const auto series = jackknife_linearity_series(sc.target, sc.source, sc.correct, counts, 1);
    CHECK(series.fit.slope == doctest::Approx(0.0));
    for (const auto& p : series.points) CHECK(p.estimate == 1.0);
  }
  SUBCASE("default scenario") {
    const auto g = AccuracyCurve::logistic(10, 0.5);
    const auto sc = make_scenario({3, 2}, {2, 2}, g, 10000, 40, 5);
    const auto series = jackknife_linearity_series(sc.target, sc.source, sc.correct, counts, 6);
    REQUIRE(series.points.size() == 5);
    CHECK(series.points[2].annotators == 10);
    CHECK(series.points[2].inverse_n == 0.1);
    CHECK(series.fit.r_squared > 0.95);
    CHECK(series.fit.slope < 0.0);
    // Curvature agrees in sign with the infinite-item naive estimator.
    std::vector<double> x, y;
    for (int n : counts) {
      x.push_back(1.0 / n);
      y.push_back(naive_limit(g, {3, 2}, {2, 2}, n));
    }
    const double limit_curvature = fit_quadratic(x, y)[2];
    CHECK(limit_curvature != 0.0);
    CHECK((series.quadratic_term > 0.0) == (limit_curvature > 0.0));
    // Nested prefixes are reproducible.
    const auto again = jackknife_linearity_series(sc.target, sc.source, sc.correct, counts, 6);
    CHECK(again.points.back().estimate == series.points.back().estimate);
  }
  SUBCASE("too many annotators") {
    const auto sc = make_scenario({3, 2}, {2, 2}, AccuracyCurve::constant(1.0), 100, 10, 2);
    const std::vector<int> big{20};
    CHECK_THROWS_AS(jackknife_linearity_series(sc.target, sc.source, sc.correct, big, 1), Error);
  }
}

TEST_CASE("line and quadratic fits") {
  const std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
  const auto f = fit_line(x, y);
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r_squared == doctest::Approx(1.0));
  const std::vector<double> flat{2, 2, 2};
  try {
    fit_line(flat, flat);
    FAIL("expected degenerate fit");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kDegenerateFit);
  }
  const std::vector<double> qx{0, 1, 2, 3}, qy{1, 2, 5, 10};
  const auto q = fit_quadratic(qx, qy);
  CHECK(q[0] == doctest::Approx(1.0));
  CHECK(q[1] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(q[2] == doctest::Approx(1.0));
  CHECK(quantile({3, 1, 2, 4}, 0.5) == 2.5);
  CHECK(quantile({3, 1, 2, 4}, 0.0) == 1.0);
  CHECK(quantile({3, 1, 2, 4}, 1.0) == 4.0);
}

TEST_CASE("bootstrap intervals") {
  SUBCASE("constant estimator") {
    const auto ci = bootstrap_ci([](std::span<const std::size_t>) { return 0.42; }, 100, 50, 1);
    CHECK(ci.lo == 0.42);
    CHECK(ci.hi == 0.42);
  }
  SUBCASE("width for Bernoulli(0.7) raw accuracy") {
    std::vector<std::uint8_t> bits(10000);
    Rng rng(3);
    for (auto& b : bits) b = rng.uniform() < 0.7;
    auto acc = [&](std::span<const std::size_t> idx) {
      double hits = 0.0;
      for (std::size_t i : idx) hits += bits[i];
      return hits / idx.size();
    };
    const auto ci = bootstrap_ci(acc, bits.size(), 450, 4);
    CHECK(ci.hi - ci.lo >= 0.015);
    CHECK(ci.hi - ci.lo <= 0.022);
    const auto again = bootstrap_ci(acc, bits.size(), 450, 4);
    CHECK(again.lo == ci.lo);
    CHECK(again.hi == ci.hi);
    const auto reps = bootstrap_replicates(acc, bits.size(), 450, 4);
    CHECK(reps.size() == 450);
    CHECK(quantile(reps, 0.025) == ci.lo);
  }
  SUBCASE("coverage over 200 trials") {
    int covered = 0;
    for (int t = 0; t < 200; ++t) {
      std::vector<std::uint8_t> bits(1000);
      Rng rng(1000 + t);
      for (auto& b : bits) b = rng.uniform() < 0.7;
      auto acc = [&](std::span<const std::size_t> idx) {
        double hits = 0.0;
        for (std::size_t i : idx) hits += bits[i];
        return hits / idx.size();
      };
      const auto ci = bootstrap_ci(acc, bits.size(), 450, 5000 + t);
      covered += (ci.lo <= 0.7 && 0.7 <= ci.hi);
    }
    CHECK(covered >= 180);
    CHECK(covered <= 198);
  }
  SUBCASE("argument checks") {
    CHECK_THROWS_AS(bootstrap_ci([](std::span<const std::size_t>) { return 0.0; }, 10, 1, 1), Error);
  }
}

TEST_CASE("slope fit") {
  SUBCASE("identity") {
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < 10; ++i) pairs.push_back({0.5 + 0.04 * i, 0.5 + 0.04 * i});
    const auto f = slope_fit(pairs, 200, 1);
    CHECK(f.slope == doctest::Approx(1.0));
    CHECK(f.intercept == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(f.slope_ci.lo == doctest::Approx(1.0));
    CHECK(f.slope_ci.hi == doctest::Approx(1.0));
  }
  SUBCASE("recovers a generating slope from simulated models") {
    // g_m(s) = c_m s: accuracy is c_m E1[s] on v1 and c_m E2[s] on v2, so the
    // generating line has slope E2[s] / E1[s] = 0.5 / 0.6 and intercept 0.
    const auto items = generate_population(
        {{DatasetTag::kV1, BetaMixture(BetaParams{3, 2})}, {DatasetTag::kV2, BetaMixture(BetaParams{2, 2})}},
        {{DatasetTag::kV1, 5000}, {DatasetTag::kV2, 5000}}, 9);
    std::vector<std::pair<std::string, AccuracyCurve>> models;
    for (int m = 0; m < 25; ++m) models.push_back({"m" + std::to_string(m), AccuracyCurve::linear(0.0, 0.5 + 0.02 * m)});
    const auto recs = simulate_correctness(items, models, 10);
    std::vector<std::pair<double, double>> pairs(models.size(), {0.0, 0.0});
    for (std::size_t r = 0; r < recs.size(); ++r) {
      const std::size_t model = r / items.size();
      const std::size_t item = r % items.size();
      REQUIRE(recs[r].model_name == models[model].first);
      (item < 5000 ? pairs[model].first : pairs[model].second) += recs[r].correct / 5000.0;
    }
    const auto f = slope_fit(pairs, 450, 11);
    CHECK(f.slope_ci.lo <= 0.5 / 0.6);
    CHECK(0.5 / 0.6 <= f.slope_ci.hi);
    CHECK(f.intercept_ci.lo <= 0.0);
    CHECK(0.0 <= f.intercept_ci.hi);
  }
  SUBCASE("degenerate") {
    const std::vector<std::pair<double, double>> same{{0.5, 0.1}, {0.5, 0.2}};
    CHECK_THROWS_AS(slope_fit(same, 10, 1), Error);
    const std::vector<std::pair<double, double>> one{{0.5, 0.1}};
    CHECK_THROWS_AS(slope_fit(one, 10, 1), Error);
  }
}
