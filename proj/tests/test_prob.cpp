#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "ccl/prob.hpp"
#include "ccl/rng.hpp"
#include "test_support.hpp"

using namespace ccl;

TEST_CASE("normalized weights") {
  const auto p = ProbDist::normalized({1.0, 1.0});
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));

  const auto q = ProbDist::normalized({2.0, 0.0, 0.0});
  CHECK(q[0] == doctest::Approx(1.0));
  CHECK(q[1] == doctest::Approx(0.0));

  const auto r = ProbDist::normalized({0.3, 0.3, 0.4});
  CHECK(r[0] == doctest::Approx(0.3));
  CHECK(r[2] == doctest::Approx(0.4));
}

TEST_CASE("normalized rejects bad input") {
  CHECK_THROWS_WITH_AS(ProbDist::normalized({0.5, -0.1, 0.6}),
                       doctest::Contains("index 1"), std::invalid_argument);
  CHECK_THROWS_AS(ProbDist::normalized({0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(ProbDist::normalized({1.0}), std::invalid_argument);
}

TEST_CASE("degenerate distributions") {
  const auto p = ProbDist::degenerate(0, 3);
  CHECK(p[0] == 1.0);
  CHECK(p[1] == 0.0);
  CHECK(p[2] == 0.0);

  const auto q = ProbDist::degenerate(2, 3);
  CHECK(q[2] == 1.0);

  CHECK_THROWS_AS(ProbDist::degenerate(3, 3), std::invalid_argument);
}

TEST_CASE("kl divergence closed forms") {
  const auto half = ProbDist::normalized({0.5, 0.5});
  CHECK(kl_divergence(half, half) == doctest::Approx(0.0));

  const auto point = ProbDist::degenerate(0, 2);
  CHECK(kl_divergence(point, half) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Frozen from the summation oracle below.
  const auto p = ProbDist::normalized({0.7, 0.3});
  const double expected = testing::kl_reference({0.7, 0.3}, {0.5, 0.5});
  CHECK(expected == doctest::Approx(0.0822828785).epsilon(1e-7));
  CHECK(kl_divergence(p, half) == doctest::Approx(expected).epsilon(1e-12));

  CHECK_THROWS_AS(kl_divergence(p, ProbDist::uniform(3)), std::invalid_argument);
}

TEST_CASE("kl divergence is non-negative with equality only at equal inputs") {
  Rng rng(101);
  for (int it = 0; it < 2000; ++it) {
    const std::size_t k = 2 + rng.uniform_int(9);
    const auto p = testing::random_simplex_point(k, rng);
    const auto q = testing::random_simplex_point(k, rng);
    const double d = kl_divergence(p, q);
    CHECK(d >= -1e-12);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < k; ++i) max_diff = std::max(max_diff, std::abs(p[i] - q[i]));
    if (max_diff > 1e-6) CHECK(d > 0.0);
    if (d <= 1e-15) CHECK(max_diff <= 1e-6);
  }
}

TEST_CASE("possibility measure") {
  const PossDist pi({1.0, 0.4, 0.2});
  const std::vector<ClassIndex> a{1, 2};
  CHECK(possibility_measure(pi, a) == doctest::Approx(0.4));
  const std::vector<ClassIndex> all{0, 1, 2};
  CHECK(possibility_measure(pi, all) == doctest::Approx(1.0));
  CHECK(possibility_measure(pi, {}) == 0.0);
  const std::vector<ClassIndex> bad{3};
  CHECK_THROWS_AS(possibility_measure(pi, bad), std::invalid_argument);
}

TEST_CASE("possibility measure is monotone in the set") {
  Rng rng(77);
  for (int it = 0; it < 500; ++it) {
    const std::size_t k = 2 + rng.uniform_int(7);
    const auto pi = testing::random_possibility(k, rng);
    std::vector<ClassIndex> b;
    for (std::size_t i = 0; i < k; ++i) {
      if (rng.uniform01() < 0.6) b.push_back(i);
    }
    std::vector<ClassIndex> a;
    for (auto y : b) {
      if (rng.uniform01() < 0.5) a.push_back(y);
    }
    CHECK(possibility_measure(pi, a) <= possibility_measure(pi, b) + 1e-15);
  }
}

TEST_CASE("credal membership examples") {
  const CredalSet set(PossDist({1.0, 0.3}));
  CHECK(set.contains(ProbDist::normalized({0.7, 0.3})));
  CHECK_FALSE(set.contains(ProbDist::normalized({0.6, 0.4})));

  const CredalSet full(PossDist({1.0, 1.0, 1.0}));
  Rng rng(5);
  for (int it = 0; it < 50; ++it) {
    CHECK(full.contains(testing::random_simplex_point(3, rng)));
  }

  CHECK_THROWS_AS(set.contains(ProbDist::uniform(3)), std::invalid_argument);
}

TEST_CASE("credal set bounds are sorted and end at one") {
  Rng rng(42);
  for (int it = 0; it < 200; ++it) {
    const std::size_t k = 2 + rng.uniform_int(9);
    const CredalSet set(testing::random_possibility(k, rng));
    const auto bounds = set.cumulative_bounds();
    CHECK(std::is_sorted(bounds.begin(), bounds.end()));
    CHECK(bounds.back() == doctest::Approx(1.0));
    const auto order = set.sorted_order();
    std::vector<ClassIndex> sorted(order.begin(), order.end());
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < k; ++i) CHECK(sorted[i] == i);
  }
}

TEST_CASE("membership agrees with exhaustive subset enumeration") {
  Rng rng(2024);
  for (std::size_t k = 2; k <= 10; ++k) {
    const int trials = 400;
    for (int it = 0; it < trials; ++it) {
      const auto pi = testing::random_possibility(k, rng);
      ProbDist p = testing::random_simplex_point(k, rng);
      if (rng.uniform01() < 0.3) {
        // Bias the draw towards the polytope so both outcomes appear.
        std::vector<double> blend(k);
        const CredalSet set(pi);
        const auto order = set.sorted_order();
        const auto bounds = set.cumulative_bounds();
        double prev = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
          blend[order[i]] = bounds[i] - prev;
          prev = bounds[i];
        }
        for (std::size_t i = 0; i < k; ++i) blend[i] = 0.5 * blend[i] + 0.5 * p[i];
        p = ProbDist::normalized(std::move(blend));
      }
      const CredalSet set(pi);
      CHECK(set.contains(p, 1e-9) == testing::member_by_subset_enumeration(pi, p, 1e-9));
    }
  }
}

TEST_CASE("membership commutes with class relabeling") {
  Rng rng(99);
  for (int it = 0; it < 300; ++it) {
    const std::size_t k = 2 + rng.uniform_int(7);
    const auto pi = testing::random_possibility(k, rng);
    const auto p = testing::random_simplex_point(k, rng);

    std::vector<std::size_t> perm(k);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(perm);

    std::vector<double> pi_permuted(k), p_permuted(k);
    for (std::size_t i = 0; i < k; ++i) {
      pi_permuted[perm[i]] = pi[i];
      p_permuted[perm[i]] = p[i];
    }
    const CredalSet original(pi);
    const CredalSet relabeled{PossDist(pi_permuted)};
    CHECK(original.contains(p) == relabeled.contains(ProbDist::normalized(p_permuted)));
  }
}
