#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "builders.hpp"
#include "soh/metrics.hpp"

using namespace soh;
using namespace soh::metrics;
using build::error_of;

namespace {

void expect_same(const MetricSet& a, const MetricSet& b, double tol) {
  EXPECT_NEAR(a.rmse, b.rmse, tol);
  EXPECT_NEAR(a.rmse_norm, b.rmse_norm, tol);
  EXPECT_NEAR(a.mae, b.mae, tol);
  EXPECT_NEAR(a.mae_norm, b.mae_norm, tol);
  EXPECT_NEAR(a.maxe_norm, b.maxe_norm, tol);
}

}  // namespace

TEST(Evaluate, PerfectPrediction) {
  const std::vector<double> c{2.0, 1.9, 1.7, 1.5};
  const EvalReport r = evaluate(c, c, 2.0);
  expect_same(r.full, MetricSet{}, 0.0);
  expect_same(r.eol, MetricSet{}, 0.0);
}

TEST(Evaluate, TwoPointHandCase) {
  const std::vector<double> obs{2.0, 2.0};
  const std::vector<double> pred{1.9, 2.1};
  const EvalReport r = evaluate(pred, obs, 2.0);
  EXPECT_NEAR(r.full.rmse, 0.1, 1e-15);
  EXPECT_NEAR(r.full.rmse_norm, 0.05, 1e-15);
  EXPECT_NEAR(r.full.mae, 0.1, 1e-15);
  EXPECT_NEAR(r.full.mae_norm, 0.05, 1e-15);
  EXPECT_NEAR(r.full.maxe_norm, 0.05, 1e-15);
  EXPECT_EQ(r.n_eol, 2u);
  expect_same(r.eol, r.full, 0.0);
}

TEST(Evaluate, EolPrefixIncludesCrossingCycle) {
  const std::vector<double> obs{2.0, 1.7, 1.5};
  EXPECT_EQ(eol_prefix_length(obs, 2.0, 0.8), 3u);
  const std::vector<double> longer{2.0, 1.7, 1.5, 1.4, 1.3};
  const std::vector<double> pred{2.0, 1.7, 1.5, 1.0, 1.0};
  const EvalReport r = evaluate(pred, longer, 2.0);
  EXPECT_DOUBLE_EQ(r.eol_threshold, 1.6);
  EXPECT_EQ(r.n_total, 5u);
  EXPECT_EQ(r.n_eol, 3u);
  expect_same(r.eol, MetricSet{}, 0.0);
  EXPECT_GT(r.full.rmse, 0.0);
  // Boundary: exactly at the threshold is not below it.
  const std::vector<double> at{2.0, 1.6, 1.59};
  EXPECT_EQ(eol_prefix_length(at, 2.0, 0.8), 3u);
  const std::vector<double> never{2.0, 1.9};
  EXPECT_EQ(eol_prefix_length(never, 2.0, 0.8), 2u);
}

TEST(Evaluate, OrderingInequalitiesOnRandomVectors) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> cap(0.8, 2.2);
  std::normal_distribution<double> err(0.0, 0.1);
  std::uniform_int_distribution<int> len(1, 40);
  for (int rep = 0; rep < 1000; ++rep) {
    const int n = len(rng);
    std::vector<double> obs(static_cast<std::size_t>(n));
    std::vector<double> pred(obs.size());
    for (std::size_t i = 0; i < obs.size(); ++i) {
      obs[i] = cap(rng);
      pred[i] = obs[i] + err(rng);
    }
    const EvalReport r = evaluate(pred, obs, 2.1);
    for (const MetricSet* m : {&r.full, &r.eol}) {
      EXPECT_GE(m->rmse, m->mae - 1e-15);
      EXPECT_GE(m->rmse_norm, m->mae_norm - 1e-15);
      EXPECT_GE(m->maxe_norm, m->rmse_norm - 1e-15);
      EXPECT_GE(m->mae, 0.0);
    }
    EXPECT_LE(r.n_eol, r.n_total);
  }
}

TEST(Evaluate, PermutationInvarianceOfFullMetricsOnly) {
  std::mt19937_64 rng(2);
  std::vector<double> obs{2.0, 1.9, 1.55, 1.8, 1.5, 1.7};
  std::vector<double> pred{2.02, 1.85, 1.6, 1.75, 1.45, 1.72};
  const EvalReport base = evaluate(pred, obs, 2.0);
  std::vector<std::size_t> idx{0, 1, 2, 3, 4, 5};
  bool eol_changed = false;
  for (int rep = 0; rep < 50; ++rep) {
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<double> o;
    std::vector<double> p;
    for (std::size_t i : idx) {
      o.push_back(obs[i]);
      p.push_back(pred[i]);
    }
    const EvalReport r = evaluate(p, o, 2.0);
    expect_same(r.full, base.full, 1e-15);
    eol_changed = eol_changed || r.n_eol != base.n_eol;
  }
  EXPECT_TRUE(eol_changed);
}

TEST(Evaluate, ScaleInvariance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> cap(1.2, 2.1);
  std::normal_distribution<double> err(0.0, 0.05);
  std::vector<double> obs(30);
  std::vector<double> pred(30);
  for (std::size_t i = 0; i < obs.size(); ++i) {
    obs[i] = cap(rng);
    pred[i] = obs[i] + err(rng);
  }
  const EvalReport base = evaluate(pred, obs, 2.1);
  for (double c : {0.5, 3.0, 1000.0}) {
    std::vector<double> o;
    std::vector<double> p;
    for (std::size_t i = 0; i < obs.size(); ++i) {
      o.push_back(c * obs[i]);
      p.push_back(c * pred[i]);
    }
    const EvalReport r = evaluate(p, o, c * 2.1);
    EXPECT_NEAR(r.full.rmse, c * base.full.rmse, 1e-12 * c);
    EXPECT_NEAR(r.full.mae, c * base.full.mae, 1e-12 * c);
    EXPECT_NEAR(r.full.rmse_norm, base.full.rmse_norm, 1e-14);
    EXPECT_NEAR(r.full.mae_norm, base.full.mae_norm, 1e-14);
    EXPECT_NEAR(r.full.maxe_norm, base.full.maxe_norm, 1e-14);
    EXPECT_EQ(r.n_eol, base.n_eol);
  }
}

TEST(Evaluate, Errors) {
  const std::vector<double> two{1.0, 2.0};
  const std::vector<double> three{1.0, 2.0, 3.0};
  const std::vector<double> empty;
  const std::vector<double> zero{1.0, 0.0};
  EXPECT_EQ(error_of([&] { evaluate(two, three, 2.0); }), Errc::LengthMismatch);
  EXPECT_EQ(error_of([&] { evaluate(empty, empty, 2.0); }), Errc::LengthMismatch);
  EXPECT_EQ(error_of([&] { evaluate(two, zero, 2.0); }), Errc::NonPositiveObserved);
  EXPECT_EQ(error_of([&] { evaluate(two, two, 2.0, 1.2); }), Errc::InvalidArgument);
}

TEST(Evaluate, RowMatchesHeader) {
  const std::vector<double> obs{2.0, 2.0};
  const std::vector<double> pred{1.9, 2.1};
  const std::string row = to_row(evaluate(pred, obs, 2.0));
  const auto commas = [](const std::string& s) { return std::count(s.begin(), s.end(), ','); };
  EXPECT_EQ(commas(row), commas(kReportHeader));
  EXPECT_EQ(row.substr(0, 8), "2,2,1.6,");
}
