#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "ccl/conformal.hpp"
#include "ccl/metrics.hpp"
#include "ccl/rng.hpp"
#include "test_support.hpp"

using namespace ccl;

TEST_CASE("strong validity error rates") {
  const std::vector<PossDist> pis{PossDist({0.8, 1.0}), PossDist({0.03, 1.0}),
                                  PossDist({0.5, 1.0}), PossDist({0.2, 1.0})};
  const std::vector<ClassIndex> labels{0, 0, 0, 0};
  CHECK(strong_validity_error(pis, labels, 0.05) == doctest::Approx(0.25));

  const std::vector<PossDist> ones{PossDist({1.0, 1.0}), PossDist({1.0, 1.0})};
  const std::vector<ClassIndex> l2{0, 1};
  CHECK(strong_validity_error(ones, l2, 0.3) == 0.0);

  const std::vector<PossDist> zero_on_true{PossDist({0.0, 1.0}), PossDist({0.0, 1.0})};
  CHECK(strong_validity_error(zero_on_true, std::vector<ClassIndex>{0, 0}, 0.1) == 1.0);

  CHECK_THROWS_AS(strong_validity_error(pis, l2, 0.1), std::invalid_argument);
}

TEST_CASE("strong validity error is monotone in delta") {
  Rng rng(3);
  std::vector<PossDist> pis;
  std::vector<ClassIndex> labels;
  for (int i = 0; i < 200; ++i) {
    pis.push_back(testing::random_possibility(4, rng));
    labels.push_back(rng.uniform_int(4));
  }
  double prev = 0.0;
  for (double d : {0.05, 0.1, 0.2, 0.4, 0.8}) {
    const double rate = strong_validity_error(pis, labels, d);
    CHECK(rate >= prev);
    prev = rate;
  }
}

TEST_CASE("coverage") {
  const std::vector<std::vector<ClassIndex>> sets{{0}, {0, 1}, {1}};
  const std::vector<ClassIndex> labels{0, 1, 0};
  CHECK(coverage(sets, labels) == doctest::Approx(2.0 / 3.0));

  const std::vector<std::vector<ClassIndex>> full(3, std::vector<ClassIndex>{0, 1});
  CHECK(coverage(full, labels) == 1.0);
  const std::vector<std::vector<ClassIndex>> empty(3);
  CHECK(coverage(empty, labels) == 0.0);
}

TEST_CASE("coverage is consistent with the validity rate on shared p-values") {
  Rng rng(29);
  std::vector<std::vector<double>> raw_rows;
  std::vector<ClassIndex> labels;
  const std::size_t L = 40;
  for (int i = 0; i < 500; ++i) {
    std::vector<double> row(5);
    for (auto& v : row) {
      v = static_cast<double>(rng.uniform_int(L + 1)) / static_cast<double>(L + 1);
    }
    raw_rows.push_back(row);
    labels.push_back(rng.uniform_int(5));
  }
  for (double delta : {0.05, 0.1, 0.25}) {
    std::vector<std::vector<ClassIndex>> sets;
    for (const auto& row : raw_rows) sets.push_back(prediction_set(RawPValues(row), delta));
    const double cov = coverage(sets, labels);
    const double err = strong_validity_error(raw_rows, labels, delta);
    CHECK(cov >= 1.0 - err - 1e-12);
  }
}

TEST_CASE("efficiency profile is rank aligned") {
  const std::vector<PossDist> pis{PossDist({1.0, 0.2}), PossDist({0.4, 1.0})};
  const auto profile = efficiency_profile(pis);
  CHECK(profile[0] == doctest::Approx(1.0));
  CHECK(profile[1] == doctest::Approx(0.3));

  const std::vector<PossDist> one{PossDist({1.0, 0.5, 0.0})};
  const auto single = efficiency_profile(one);
  CHECK(single[0] == doctest::Approx(1.0));
  CHECK(single[1] == doctest::Approx(0.5));
  CHECK(single[2] == doctest::Approx(0.0));

  const std::vector<PossDist> all_ones{PossDist({1.0, 1.0}), PossDist({1.0, 1.0})};
  const auto ones = efficiency_profile(all_ones);
  CHECK(ones[0] == 1.0);
  CHECK(ones[1] == 1.0);
}

TEST_CASE("ece closed forms") {
  std::vector<ProbDist> sure;
  std::vector<ClassIndex> labels;
  for (int i = 0; i < 10; ++i) {
    sure.push_back(ProbDist::degenerate(0, 2));
    labels.push_back(0);
  }
  CHECK(ece(sure, labels).ece == doctest::Approx(0.0));

  // all confidence 0.8, half correct, single occupied bin
  std::vector<ProbDist> mid;
  std::vector<ClassIndex> half;
  for (int i = 0; i < 10; ++i) {
    mid.push_back(ProbDist::normalized({0.8, 0.2}));
    half.push_back(i < 5 ? 0 : 1);
  }
  const auto report = ece(mid, half);
  CHECK(report.ece == doctest::Approx(0.3));
  std::size_t occupied = 0;
  for (auto c : report.bin_counts) occupied += c > 0 ? 1 : 0;
  CHECK(occupied == 1);
  CHECK(std::accumulate(report.bin_counts.begin(), report.bin_counts.end(), std::size_t{0}) ==
        10);

  // perfectly calibrated within one bin: conf 0.75, 3 of 4 correct
  std::vector<ProbDist> calib;
  std::vector<ClassIndex> lab;
  for (int i = 0; i < 4; ++i) {
    calib.push_back(ProbDist::normalized({0.75, 0.25}));
    lab.push_back(i < 3 ? 0 : 1);
  }
  CHECK(ece(calib, lab).ece == doctest::Approx(0.0));
}

TEST_CASE("ece is invariant to sample order") {
  Rng rng(59);
  std::vector<ProbDist> preds;
  std::vector<ClassIndex> labels;
  for (int i = 0; i < 300; ++i) {
    preds.push_back(testing::random_simplex_point(3, rng, false));
    labels.push_back(rng.uniform_int(3));
  }
  const double base = ece(preds, labels).ece;

  std::vector<std::size_t> perm(preds.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(perm);
  std::vector<ProbDist> p2;
  std::vector<ClassIndex> l2;
  for (auto i : perm) {
    p2.push_back(preds[i]);
    l2.push_back(labels[i]);
  }
  CHECK(ece(p2, l2).ece == doctest::Approx(base).epsilon(1e-15));
}

TEST_CASE("accuracy with the lowest-index tie rule") {
  std::vector<ProbDist> preds{ProbDist::degenerate(1, 2), ProbDist::degenerate(0, 2)};
  std::vector<ClassIndex> labels{1, 0};
  CHECK(accuracy(preds, labels) == 1.0);
  CHECK(accuracy(preds, std::vector<ClassIndex>{0, 1}) == 0.0);

  std::vector<ProbDist> tie{ProbDist::normalized({0.5, 0.5})};
  CHECK(accuracy(tie, std::vector<ClassIndex>{0}) == 1.0);
  CHECK(accuracy(tie, std::vector<ClassIndex>{1}) == 0.0);
}

TEST_CASE("reports serialize to json and csv") {
  ValidityReport v;
  v.deltas = {0.05, 0.1};
  v.error_rates = {0.02, 0.04};
  v.sample_count = 100;
  CHECK(v.to_json().find("\"pi-kind\"") != std::string::npos);
  CHECK(v.to_csv().find("# schema-version: 1\n") == 0);
  CHECK(v.to_csv().find("delta,error_rate") != std::string::npos);

  std::vector<ProbDist> preds{ProbDist::normalized({0.9, 0.1}), ProbDist::normalized({0.6, 0.4})};
  std::vector<ClassIndex> labels{0, 1};
  const auto e = ece(preds, labels, 15);
  CHECK(e.to_json().find("\"bin-count\": 15") != std::string::npos);
  const auto csv = e.to_csv();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 17);  // version + header + 15 bins
}
