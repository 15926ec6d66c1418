#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ccl/conformal.hpp"
#include "ccl/credal_loss.hpp"
#include "ccl/prob.hpp"
#include "ccl/rng.hpp"
#include "test_support.hpp"

using namespace ccl;

namespace {

ConformalCalibrator make_calibrator(std::vector<ProbDist> preds, std::vector<ClassIndex> labels,
                                    NonConformityMeasure m = {}) {
  return ConformalCalibrator::calibrate(preds, labels, m);
}

}  // namespace

TEST_CASE("diff and prop scores") {
  const auto p = ProbDist::normalized({0.7, 0.2, 0.1});
  NonConformityMeasure diff;
  CHECK(nonconformity(diff, p, 0) == doctest::Approx(-0.5));
  CHECK(nonconformity(diff, p, 1) == doctest::Approx(0.5));

  NonConformityMeasure prop{ScoreKind::prop, 0.1, false};
  CHECK(nonconformity(prop, p, 0) == doctest::Approx(0.25));

  NonConformityMeasure prop_small{ScoreKind::prop, 0.01, false};
  const auto q = ProbDist::normalized({1.0, 0.0});
  CHECK(nonconformity(prop_small, q, 1) == doctest::Approx(100.0));
}

TEST_CASE("prop with gamma zero on zero probability") {
  NonConformityMeasure prop{ScoreKind::prop, 0.0, false};
  const auto q = ProbDist::normalized({1.0, 0.0});
  CHECK_THROWS_AS(nonconformity(prop, q, 1), std::invalid_argument);

  prop.inf_on_zero_div = true;
  CHECK(std::isinf(nonconformity(prop, q, 1)));
}

TEST_CASE("calibration scores") {
  const auto cal1 = make_calibrator({ProbDist::normalized({1.0, 0.0}),
                                     ProbDist::normalized({0.0, 1.0})},
                                    {0, 1});
  CHECK(cal1.scores()[0] == doctest::Approx(-1.0));
  CHECK(cal1.scores()[1] == doctest::Approx(-1.0));

  const auto cal2 = make_calibrator({ProbDist::normalized({1.0, 0.0}),
                                     ProbDist::normalized({0.0, 1.0})},
                                    {1, 0});
  CHECK(cal2.scores()[0] == doctest::Approx(1.0));
  CHECK(cal2.scores()[1] == doctest::Approx(1.0));

  const auto cal3 = make_calibrator({ProbDist::normalized({0.6, 0.4})}, {0});
  CHECK(cal3.scores()[0] == doctest::Approx(-0.2));

  CHECK_THROWS_AS(make_calibrator({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(make_calibrator({ProbDist::uniform(2)}, {0, 1}), std::invalid_argument);
}

TEST_CASE("p-value counting is inclusive and grid-valued") {
  // Calibrator with scores {0.1, 0.2, 0.5, 0.8} built from diff scores:
  // p_hat = (x, 1-x) with label 0 gives score 1 - 2x.
  const auto from_score = [](double s) {
    return ProbDist::normalized({(1.0 - s) / 2.0, (1.0 + s) / 2.0});
  };
  const auto cal = make_calibrator(
      {from_score(0.1), from_score(0.2), from_score(0.5), from_score(0.8)}, {0, 0, 0, 0});
  REQUIRE(cal.scores()[0] == doctest::Approx(0.1));
  REQUIRE(cal.scores()[3] == doctest::Approx(0.8));

  const auto count_for = [&](double s) {
    const auto raw = cal.p_values(from_score(s));
    return raw[0];
  };
  CHECK(count_for(0.3) == doctest::Approx(0.4));   // {0.5, 0.8}
  CHECK(count_for(0.9) == doctest::Approx(0.0));
  CHECK(count_for(0.1) == doctest::Approx(0.8));   // inclusive tie counts all four

  Rng rng(1);
  for (int it = 0; it < 100; ++it) {
    const auto raw = cal.p_values(testing::random_simplex_point(2, rng, false));
    for (std::size_t y = 0; y < 2; ++y) {
      const double scaled = raw[y] * 5.0;
      CHECK(scaled == doctest::Approx(std::round(scaled)).epsilon(1e-12));
    }
  }
}

TEST_CASE("p-values are invariant to calibration storage order") {
  Rng rng(17);
  std::vector<ProbDist> preds;
  std::vector<ClassIndex> labels;
  for (int i = 0; i < 50; ++i) {
    preds.push_back(testing::random_simplex_point(4, rng, false));
    labels.push_back(rng.uniform_int(4));
  }
  const auto cal_a = make_calibrator(preds, labels);

  std::vector<std::size_t> perm(preds.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(perm);
  std::vector<ProbDist> preds_b;
  std::vector<ClassIndex> labels_b;
  for (auto i : perm) {
    preds_b.push_back(preds[i]);
    labels_b.push_back(labels[i]);
  }
  const auto cal_b = make_calibrator(preds_b, labels_b);

  for (int it = 0; it < 50; ++it) {
    const auto q = testing::random_simplex_point(4, rng, false);
    const auto ra = cal_a.p_values(q);
    const auto rb = cal_b.p_values(q);
    for (std::size_t y = 0; y < 4; ++y) CHECK(ra[y] == rb[y]);
  }
}

TEST_CASE("max-ratio normalization") {
  CHECK(normalize_max_ratio(RawPValues({0.8, 0.4, 0.2})).degrees()[0] == doctest::Approx(1.0));
  const auto n = normalize_max_ratio(RawPValues({0.8, 0.4, 0.2}));
  CHECK(n[1] == doctest::Approx(0.5));
  CHECK(n[2] == doctest::Approx(0.25));

  const auto tie = normalize_max_ratio(RawPValues({0.4, 0.4}));
  CHECK(tie[0] == doctest::Approx(1.0));
  CHECK(tie[1] == doctest::Approx(1.0));

  const auto single = normalize_max_ratio(RawPValues({0.0, 0.0, 0.5}));
  CHECK(single[0] == 0.0);
  CHECK(single[1] == 0.0);
  CHECK(single[2] == doctest::Approx(1.0));
}

TEST_CASE("argmax-one normalization") {
  const auto n = normalize_argmax_one(RawPValues({0.8, 0.4, 0.2}));
  CHECK(n[0] == doctest::Approx(1.0));
  CHECK(n[1] == doctest::Approx(0.4));
  CHECK(n[2] == doctest::Approx(0.2));

  const auto tie = normalize_argmax_one(RawPValues({0.4, 0.4}));
  CHECK(tie[0] == doctest::Approx(1.0));
  CHECK(tie[1] == doctest::Approx(0.4));

  const auto done = normalize_argmax_one(RawPValues({1.0, 0.2}));
  CHECK(done[0] == doctest::Approx(1.0));
  CHECK(done[1] == doctest::Approx(0.2));
}

TEST_CASE("all-zero p-values fall back to the most conforming class") {
  const RawPValues raw({0.0, 0.0, 0.0}, {0.9, 0.2, 0.5});
  const auto n1 = normalize_max_ratio(raw);
  CHECK(n1[0] == 0.0);
  CHECK(n1[1] == doctest::Approx(1.0));
  CHECK(n1[2] == 0.0);
  const auto n2 = normalize_argmax_one(raw);
  CHECK(n2[1] == doctest::Approx(1.0));

  // Without scores the lowest index wins.
  const auto n3 = normalize_max_ratio(RawPValues({0.0, 0.0}));
  CHECK(n3[0] == doctest::Approx(1.0));
}

TEST_CASE("prediction sets") {
  const RawPValues raw({0.4, 0.02, 0.8});
  CHECK(prediction_set(raw, 0.25) == std::vector<ClassIndex>{0, 2});
  CHECK(prediction_set(raw, 0.9).empty());
  CHECK(prediction_set(raw, 0.01) == std::vector<ClassIndex>{0, 1, 2});
  CHECK_THROWS_AS(prediction_set(raw, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(prediction_set(raw, 1.0), std::invalid_argument);
}

TEST_CASE("prediction sets shrink as delta grows") {
  Rng rng(23);
  std::vector<ProbDist> preds;
  std::vector<ClassIndex> labels;
  for (int i = 0; i < 40; ++i) {
    preds.push_back(testing::random_simplex_point(5, rng, false));
    labels.push_back(rng.uniform_int(5));
  }
  const auto cal = make_calibrator(preds, labels);
  for (int it = 0; it < 100; ++it) {
    const auto raw = cal.p_values(testing::random_simplex_point(5, rng, false));
    const auto big = prediction_set(raw, 0.05);
    const auto small = prediction_set(raw, 0.4);
    for (auto y : small) {
      CHECK(std::find(big.begin(), big.end(), y) != big.end());
    }
  }
}

TEST_CASE("argmax-one dominates max-ratio pointwise and by inclusion") {
  Rng rng(31);
  for (int it = 0; it < 2000; ++it) {
    const std::size_t k = 2 + rng.uniform_int(7);
    const std::size_t L = 1 + rng.uniform_int(40);
    std::vector<double> vals(k);
    for (auto& v : vals) {
      v = static_cast<double>(rng.uniform_int(L + 1)) / static_cast<double>(L + 1);
    }
    if (*std::max_element(vals.begin(), vals.end()) == 0.0) vals[0] = 1.0 / (L + 1.0);
    const RawPValues raw(vals);
    const auto n1 = normalize_max_ratio(raw);
    const auto n2 = normalize_argmax_one(raw);
    for (std::size_t y = 0; y < k; ++y) {
      CHECK(n2[y] <= n1[y] + 1e-12);
    }

    // Any member of the smaller set, found by projecting a random point,
    // must belong to the larger set.
    const CredalSet q1{PossDist(std::vector<double>(n1.degrees().begin(), n1.degrees().end()))};
    const auto member = credal_projection(n2, testing::random_simplex_point(k, rng)).p_r;
    CHECK(q1.contains(member, 1e-7));
  }
}

TEST_CASE("calibrator serialization round-trips") {
  Rng rng(47);
  std::vector<ProbDist> preds;
  std::vector<ClassIndex> labels;
  for (int i = 0; i < 25; ++i) {
    preds.push_back(testing::random_simplex_point(3, rng, false));
    labels.push_back(rng.uniform_int(3));
  }
  NonConformityMeasure m{ScoreKind::prop, 0.1, false};
  const auto cal = ConformalCalibrator::calibrate(preds, labels, m);
  const std::string text = cal.to_json();
  const auto back = ConformalCalibrator::from_json(text);
  CHECK(back.to_json() == text);
  CHECK(back.size() == cal.size());
  CHECK(back.num_classes() == cal.num_classes());
  for (int it = 0; it < 20; ++it) {
    const auto q = testing::random_simplex_point(3, rng, false);
    const auto ra = cal.p_values(q);
    const auto rb = back.p_values(q);
    for (std::size_t y = 0; y < 3; ++y) CHECK(ra[y] == rb[y]);
  }
}
