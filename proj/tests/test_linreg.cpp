#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "soh/linreg.hpp"

using namespace soh;
using namespace soh::linreg;

namespace {

Matrix with_intercept(std::initializer_list<double> xs) {
  Matrix x(static_cast<Index>(xs.size()), 2);
  Index i = 0;
  for (double v : xs) {
    x(i, 0) = 1.0;
    x(i, 1) = v;
    ++i;
  }
  return x;
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

Matrix random_design(std::mt19937_64& rng, Index n, Index q) {
  std::normal_distribution<double> z(0.0, 1.0);
  Matrix x(n, q + 1);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (Index j = 1; j <= q; ++j) x(i, j) = z(rng);
  }
  return x;
}

}  // namespace

TEST(FitOls, MeanOnlyModel) {
  const FitResult f = fit_ols(Matrix::Ones(3, 1), vec({1, 2, 3}));
  EXPECT_NEAR(f.coefficients(0), 2.0, 1e-14);
  EXPECT_NEAR(f.rss, 2.0, 1e-13);
  EXPECT_EQ(f.r2, 0.0);
  EXPECT_EQ(f.r2_adj, f.r2);
  EXPECT_EQ(f.df_residual, 2);
}

TEST(FitOls, ExactLine) {
  const FitResult f = fit_ols(with_intercept({0, 1, 2}), vec({1, 3, 5}));
  EXPECT_NEAR(f.coefficients(0), 1.0, 1e-13);
  EXPECT_NEAR(f.coefficients(1), 2.0, 1e-13);
  EXPECT_NEAR(f.rss, 0.0, 1e-24);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
}

TEST(FitOls, SimpleRegressionMatchesHandFormulas) {
  // sxy = 8.5, sxx = 5 -> slope 1.7; intercept ybar - slope * xbar = 4.25 - 4.25 = 0.
  const FitResult f = fit_ols(with_intercept({1, 2, 3, 4}), vec({2, 3, 5, 7}));
  EXPECT_NEAR(f.coefficients(1), 1.7, 1e-13);
  EXPECT_NEAR(f.coefficients(0), 0.0, 1e-13);
  // Residuals 0.3, -0.4, -0.1, 0.2 -> RSS 0.3; sigma2 = 0.15; se(slope) = sqrt(0.15 / 5).
  EXPECT_NEAR(f.rss, 0.3, 1e-13);
  EXPECT_NEAR(f.sigma2_hat, 0.15, 1e-13);
  EXPECT_NEAR(f.std_errors(1), std::sqrt(0.03), 1e-13);
  // se(intercept) = sqrt(sigma2 (1/n + xbar^2/sxx)).
  EXPECT_NEAR(f.std_errors(0), std::sqrt(0.15 * (0.25 + 6.25 / 5.0)), 1e-13);
  EXPECT_NEAR(f.r2, 1.0 - 0.3 / 14.75, 1e-13);
  EXPECT_NEAR(f.r2_adj, 1.0 - (0.3 / 2.0) / (14.75 / 3.0), 1e-13);
}

TEST(FitOls, MatchesLongDoubleNormalEquations) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix x = random_design(rng, 40, 4);
    Vector y(40);
    for (Index i = 0; i < 40; ++i) y(i) = 1.0 + 0.5 * x(i, 1) - 2.0 * x(i, 3) + z(rng);
    const FitResult f = fit_ols(x, y);
    const auto beta = oracle::normal_equations(x, y);
    for (Index j = 0; j < 5; ++j) EXPECT_NEAR(f.coefficients(j), static_cast<double>(beta[static_cast<std::size_t>(j)]), 1e-11);
    const double rss = static_cast<double>(oracle::rss(x, y, beta));
    EXPECT_NEAR(f.rss, rss, 1e-10 * rss);
    EXPECT_NEAR(f.deviance, oracle::deviance_from_rss(rss, 40.0), 1e-9);
  }
}

TEST(FitOls, DevianceIsMinusTwoLogLikelihood) {
  std::mt19937_64 rng(3);
  const Matrix x = random_design(rng, 25, 2);
  std::normal_distribution<double> z(0.0, 1.0);
  Vector y(25);
  for (Index i = 0; i < 25; ++i) y(i) = z(rng);
  const FitResult f = fit_ols(x, y);
  EXPECT_EQ(f.deviance, -2.0 * f.log_likelihood);
}

TEST(FitOls, ResidualsOrthogonalToColumns) {
  std::mt19937_64 rng(5);
  const Matrix x = random_design(rng, 60, 5);
  std::normal_distribution<double> z(0.0, 3.0);
  Vector y(60);
  for (Index i = 0; i < 60; ++i) y(i) = 10.0 + z(rng);
  const FitResult f = fit_ols(x, y);
  const double scale = x.cwiseAbs().maxCoeff();
  EXPECT_LT((x.transpose() * f.residuals).cwiseAbs().maxCoeff(), 1e-8 * scale);
}

TEST(FitOls, RankDeficientDesign) {
  Matrix x(5, 3);
  x << 1, 1, 2, 1, 2, 4, 1, 3, 6, 1, 4, 8, 1, 5, 10;
  try {
    fit_ols(x, vec({1, 2, 3, 4, 6}));
    FAIL() << "expected RankDeficient";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::RankDeficient);
  }
}

TEST(FitOls, TooFewObservations) {
  try {
    fit_ols(with_intercept({1, 2}), vec({1, 2}));
    FAIL() << "expected InsufficientData";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InsufficientData);
  }
}

TEST(FitOls, NestingNeverIncreasesRss) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix x = random_design(rng, 30, 4);
    Vector y(30);
    for (Index i = 0; i < 30; ++i) y(i) = z(rng);
    double prev_rss = std::numeric_limits<double>::infinity();
    double prev_dev = std::numeric_limits<double>::infinity();
    for (Index k = 1; k <= 5; ++k) {
      const FitResult f = fit_ols(Matrix(x.leftCols(k)), y);
      EXPECT_LE(f.rss, prev_rss * (1.0 + 1e-12));
      EXPECT_LE(f.deviance, prev_dev + 1e-9);
      if (k > 1) {
        EXPECT_LT(f.r2_adj, f.r2);
      }
      prev_rss = f.rss;
      prev_dev = f.deviance;
    }
  }
}

TEST(FitOls, PValuesMatchTabulatedCriticalValue) {
  // t_{0.975, 10} = 2.228138851986: a statistic at the critical value has p = 0.05.
  EXPECT_NEAR(detail::two_sided_t_pvalue(2.228138851986, 10.0), 0.05, 1e-10);
  EXPECT_EQ(detail::two_sided_t_pvalue(0.0, 10.0), 1.0);
}

TEST(FitOls, PValueCalibrationUnderTheNull) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> z(0.0, 1.0);
  int rejections = 0;
  const int reps = 2000;
  for (int rep = 0; rep < reps; ++rep) {
    const Matrix x = random_design(rng, 30, 2);
    Vector y(30);
    for (Index i = 0; i < 30; ++i) y(i) = 1.0 + 2.0 * x(i, 1) + z(rng);
    const FitResult f = fit_ols(x, y);
    for (Index j = 0; j < 3; ++j) {
      EXPECT_GE(f.p_values(j), 0.0);
      EXPECT_LE(f.p_values(j), 1.0);
    }
    if (f.p_values(2) < 0.05) ++rejections;
  }
  const double rate = static_cast<double>(rejections) / reps;
  EXPECT_NEAR(rate, 0.05, 0.02);
}

TEST(FitOls, BitIdenticalOnRepeat) {
  std::mt19937_64 rng(1);
  const Matrix x = random_design(rng, 20, 3);
  const Vector y = Vector::LinSpaced(20, 0.0, 1.0);
  const FitResult a = fit_ols(x, y);
  const FitResult b = fit_ols(x, y);
  EXPECT_EQ(a.coefficients, b.coefficients);
  EXPECT_EQ(a.xtx_inverse, b.xtx_inverse);
  EXPECT_EQ(a.deviance, b.deviance);
}

TEST(Aic, StatedDefinition) {
  FitResult f;
  f.coefficients = Vector::Zero(2);
  f.deviance = 10.0;
  EXPECT_EQ(aic(f), 16.0);

  // q = 0: one coefficient plus the variance.
  const FitResult mean_only = fit_ols(Matrix::Ones(3, 1), vec({1, 2, 3}));
  EXPECT_EQ(aic(mean_only), mean_only.deviance + 4.0);
  EXPECT_EQ(mean_only.aic, aic(mean_only));
}

TEST(Aic, ColumnWithoutGainCostsTwo) {
  // A column orthogonal to both the intercept and the residual leaves RSS unchanged.
  const Vector y = vec({1, 3, 2, 5, 4, 6});
  const Matrix base = Matrix::Ones(6, 1);
  const FitResult f0 = fit_ols(base, y);
  Matrix x(6, 2);
  x.col(0).setOnes();
  // Orthogonal to ones and to y - mean(y) = (-2.5, -0.5, -1.5, 1.5, 0.5, 2.5).
  x.col(1) << 1, -1, -1, 0, 1, 0;
  ASSERT_NEAR(x.col(1).sum(), 0.0, 1e-15);
  ASSERT_NEAR(x.col(1).dot(y), 0.0, 1e-12);
  const FitResult f1 = fit_ols(x, y);
  EXPECT_NEAR(aic(f1) - aic(f0), 2.0, 1e-10);
}

TEST(Aic, NoiseColumnChangesAicByTwoMinusGain) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> z(0.0, 1.0);
  const Matrix x = random_design(rng, 50, 2);
  Vector y(50);
  for (Index i = 0; i < 50; ++i) y(i) = x(i, 1) + z(rng);
  const FitResult small = fit_ols(Matrix(x.leftCols(2)), y);
  const FitResult big = fit_ols(x, y);
  const double gain = small.deviance - big.deviance;
  EXPECT_NEAR(aic(big) - aic(small), 2.0 - gain, 1e-9);
}

TEST(Predict, PointArithmetic) {
  FitResult f;
  f.coefficients = vec({1, 2});
  EXPECT_EQ(predict_point(f, vec({1, 0})), 1.0);
  EXPECT_EQ(predict_point(f, vec({1, 3})), 7.0);
  try {
    predict_point(f, vec({1, 2, 3}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::DimensionMismatch);
  }
}

TEST(Predict, TrainingRowsGiveFittedValues) {
  std::mt19937_64 rng(9);
  const Matrix x = random_design(rng, 15, 2);
  const Vector y = Vector::LinSpaced(15, -1.0, 4.0) + x.col(2);
  const FitResult f = fit_ols(x, y);
  for (Index i = 0; i < 15; ++i) {
    EXPECT_NEAR(predict_point(f, x.row(i).transpose()), y(i) - f.residuals(i), 1e-12);
  }
}

TEST(PredictionInterval, SymmetricAndContainsPoint) {
  const FitResult f = fit_ols(with_intercept({1, 2, 3, 4}), vec({2, 3, 5, 7}));
  const Vector row = vec({1, 2.5});
  const Interval iv = prediction_interval(f, row, 0.90);
  const double yhat = predict_point(f, row);
  EXPECT_LT(iv.lower, yhat);
  EXPECT_GT(iv.upper, yhat);
  EXPECT_NEAR(yhat - iv.lower, iv.upper - yhat, 1e-12);
  // Closed form: t_{0.95,2} = 2.919985580 and leverage 1/n at the mean.
  const double half = 2.919985580353725 * std::sqrt(0.15 * (1.0 + 0.25));
  EXPECT_NEAR(iv.upper - yhat, half, 1e-9);
}

TEST(PredictionInterval, ZeroWidthForExactFit) {
  const FitResult f = fit_ols(with_intercept({0, 1, 2, 3}), vec({1, 3, 5, 7}));
  const Interval iv = prediction_interval(f, vec({1, 1.5}), 0.9);
  EXPECT_NEAR(iv.upper - iv.lower, 0.0, 1e-6);
}

TEST(PredictionInterval, RejectsBadLevel) {
  const FitResult f = fit_ols(with_intercept({1, 2, 3, 4}), vec({2, 3, 5, 7}));
  for (double level : {0.0, 1.0, -0.5, 1.5}) {
    try {
      prediction_interval(f, vec({1, 1}), level);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::InvalidLevel);
    }
  }
}

TEST(Stepback, NoOpWhenEverythingProtected) {
  std::mt19937_64 rng(4);
  DesignMatrix d = DesignMatrix::intercept_only(30);
  std::normal_distribution<double> z(0.0, 1.0);
  Vector a(30), b(30), y(30);
  for (Index i = 0; i < 30; ++i) {
    a(i) = z(rng);
    b(i) = z(rng);
    y(i) = z(rng);
  }
  d.add_column(a, "a", "a");
  d.add_column(b, "b", "b");
  const StepbackResult r = stepback_aic(d, y, {"a", "b"});
  EXPECT_TRUE(r.removed.empty());
  EXPECT_EQ(r.design.labels, d.labels);
}

TEST(Stepback, KeepsStrongColumns) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z(0.0, 1.0);
  DesignMatrix d = DesignMatrix::intercept_only(80);
  Vector y = Vector::Zero(80);
  for (int k = 0; k < 4; ++k) {
    Vector c(80);
    for (Index i = 0; i < 80; ++i) c(i) = z(rng);
    y += c;
    d.add_column(c, "x" + std::to_string(k), "x" + std::to_string(k));
  }
  for (Index i = 0; i < 80; ++i) y(i) += 0.01 * z(rng);
  const StepbackResult r = stepback_aic(d, y, {});
  EXPECT_TRUE(r.removed.empty());
}

TEST(Stepback, RemovesGroupsTogetherAndEndsAtLocalOptimum) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    DesignMatrix d = DesignMatrix::intercept_only(60);
    Vector x(60), w(60), u(60), y(60);
    for (Index i = 0; i < 60; ++i) {
      x(i) = z(rng);
      w(i) = 1.0 + std::abs(z(rng));
      u(i) = z(rng);
      y(i) = 2.0 * x(i) + z(rng);
    }
    d.add_column(x, "x", "x");
    d.add_column(w, "w^1", "w");
    d.add_column(Vector(w.array().log()), "log(w)", "w");
    d.add_column(u, "u", "u");
    const StepbackResult r = stepback_aic(d, y, {});
    // Columns of a group leave together.
    const auto count = std::count(r.design.groups.begin(), r.design.groups.end(), "w");
    EXPECT_TRUE(count == 0 || count == 2);
    // Local optimum: no single removal lowers AIC further.
    const double final_aic = aic(r.fit);
    for (const auto& g : r.design.feature_groups()) {
      EXPECT_GE(aic(fit_ols(r.design.without_group(g), y)), final_aic);
    }
  }
}

TEST(Stepback, NoiseColumnRemovalRate) {
  // Expected keep rate of a pure-noise column is P(chi2_1 > 2) ~ 0.157.
  std::mt19937_64 rng(31);
  std::normal_distribution<double> z(0.0, 1.0);
  int removed = 0;
  for (int rep = 0; rep < 400; ++rep) {
    DesignMatrix d = DesignMatrix::intercept_only(100);
    Vector x(100), u(100), y(100);
    for (Index i = 0; i < 100; ++i) {
      x(i) = z(rng);
      u(i) = z(rng);
      y(i) = 1.0 + x(i) + z(rng);
    }
    d.add_column(x, "x", "x");
    d.add_column(u, "u", "u");
    const StepbackResult r = stepback_aic(d, y, {});
    if (std::find(r.removed.begin(), r.removed.end(), "u") != r.removed.end()) ++removed;
  }
  EXPECT_NEAR(removed / 400.0, 0.843, 0.05);
}
