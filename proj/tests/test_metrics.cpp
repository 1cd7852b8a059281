#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "scube/errors.hpp"
#include "scube/metrics.hpp"
#include "support.hpp"

using namespace scube;

namespace {

Eigen::MatrixXd random_grid(Eigen::Index v, Eigen::Index s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd m(v, s);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

std::vector<std::string> seed_names(std::size_t s) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < s; ++i) out.push_back("s" + std::to_string(i));
  return out;
}

}  // namespace

TEST(Heaviside, Convention) {
  EXPECT_EQ(heaviside(0.3), 1);
  EXPECT_EQ(heaviside(-0.1), 0);
  EXPECT_EQ(heaviside(0.0), 0);
  EXPECT_THROW(heaviside(std::numeric_limits<double>::quiet_NaN()), ArgumentError);
  EXPECT_THROW(heaviside(std::numeric_limits<double>::infinity()), ArgumentError);
}

TEST(Mse, Examples) {
  Eigen::MatrixXd t(1, 2), p(1, 2);
  t << 0.0, 0.2;
  p << 0.1, 0.2;
  EXPECT_EQ(mse_metric(t, t), 0.0);
  EXPECT_NEAR(mse_metric(t, p), 0.005, 1e-15);
  EXPECT_THROW(mse_metric(t, Eigen::MatrixXd(2, 1)), ArgumentError);
}

TEST(Accuracy, Examples) {
  Eigen::MatrixXd t(1, 2), p(1, 2);
  t << 0.05, 0.3;
  p << 0.1, -0.2;
  EXPECT_EQ(accuracy_metric(t, t), 1.0);
  EXPECT_EQ(accuracy_metric(t, p), 0.5);
  EXPECT_EQ(accuracy_metric(t, -t), 0.0);
  EXPECT_THROW(accuracy_metric(t, Eigen::MatrixXd(1, 3)), ArgumentError);
}

TEST(Metrics, MatchBruteForceOnRandomGrid) {
  std::mt19937_64 rng(1);
  const auto t = random_grid(7, 13, rng), p = random_grid(7, 13, rng);
  double se = 0.0;
  int agree = 0;
  for (int v = 0; v < 7; ++v) {
    for (int s = 0; s < 13; ++s) {
      se += (t(v, s) - p(v, s)) * (t(v, s) - p(v, s));
      agree += ((t(v, s) > 0) == (p(v, s) > 0)) ? 1 : 0;
    }
  }
  EXPECT_NEAR(mse_metric(t, p), se / 91.0, 1e-12);
  EXPECT_NEAR(accuracy_metric(t, p), agree / 91.0, 1e-12);
}

TEST(Metrics, SymmetricUnderJointPermutation) {
  std::mt19937_64 rng(2);
  const auto t = random_grid(6, 9, rng), p = random_grid(6, 9, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> rows(6), cols(9);
  rows.setIdentity();
  cols.setIdentity();
  std::shuffle(rows.indices().data(), rows.indices().data() + 6, rng);
  std::shuffle(cols.indices().data(), cols.indices().data() + 9, rng);
  const Eigen::MatrixXd tp = rows * t * cols, pp = rows * p * cols;
  EXPECT_NEAR(mse_metric(tp, pp), mse_metric(t, p), 1e-15);
  EXPECT_EQ(accuracy_metric(tp, pp), accuracy_metric(t, p));
}

TEST(TopN, Examples) {
  Eigen::MatrixXd g(1, 3);
  g << 0.3, 0.1, -0.2;
  const auto ids = seed_names(3);
  const std::vector<SeedRanking> r = {rank_seeds(std::vector{0.3, 0.1, -0.2}, ids)};
  const std::vector<std::size_t> ns = {1, 3};
  const auto c = topn_curve(r, g, ns);
  EXPECT_NEAR(c.mean_gaps[0], 0.3, 1e-15);
  EXPECT_NEAR(c.mean_gaps[1], 0.2 / 3.0, 1e-15);
  EXPECT_EQ(c.seeds, 3u);
  const std::vector<std::size_t> too_many = {4};
  EXPECT_THROW(topn_curve(r, g, too_many), ArgumentError);
}

TEST(TopN, MatchesSortAndAverageOracle) {
  std::mt19937_64 rng(3);
  const auto truth = random_grid(5, 10, rng), pred = random_grid(5, 10, rng);
  const auto ids = seed_names(10);
  std::vector<SeedRanking> rankings;
  for (int v = 0; v < 5; ++v) {
    std::vector<double> row(10);
    for (int s = 0; s < 10; ++s) row[s] = pred(v, s);
    rankings.push_back(rank_seeds(row, ids));
  }
  const std::vector<std::size_t> ns = {1, 3, 10};
  const auto c = topn_curve(rankings, truth, ns);
  for (std::size_t k = 0; k < ns.size(); ++k) {
    double total = 0.0;
    for (int v = 0; v < 5; ++v) {
      std::vector<int> order(10);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return pred(v, a) > pred(v, b); });
      double sum = 0.0;
      for (std::size_t i = 0; i < ns[k]; ++i) sum += truth(v, order[i]);
      total += sum / static_cast<double>(ns[k]);
    }
    EXPECT_NEAR(c.mean_gaps[k], total / 5.0, 1e-12);
  }
}

TEST(TopN, MeanPredictedGapNonIncreasingInN) {
  std::mt19937_64 rng(4);
  const auto ids = seed_names(20);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = random_grid(1, 20, rng);
    const auto r = rank_seeds(std::vector<double>(p.data(), p.data() + 20), ids);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t n = 1; n <= 20; ++n) {
      const double m = mean_top_predicted(r, n);
      EXPECT_LE(m, prev + 1e-15);
      prev = m;
    }
  }
}

TEST(TopN, RejectsNonPermutationRanking) {
  Eigen::MatrixXd g(1, 2);
  g << 0.1, 0.2;
  SeedRanking r;
  r.entries = {{"a", 0.1, 0}, {"a", 0.1, 0}};
  const std::vector<SeedRanking> rs = {r};
  const std::vector<std::size_t> ns = {1};
  EXPECT_THROW(topn_curve(rs, g, ns), ArgumentError);
}

TEST(EvalReport, JsonCarriesAllFields) {
  EvalReport r{0.75, 0.01, "M", "scube", 2.0, 0.5, 20, "cnn-s"};
  const nlohmann::json j = r;
  for (const char* k : {"accuracy", "mse", "scorer", "method", "alpha", "omega_bar", "seeds", "backbone"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
  EXPECT_EQ(j["accuracy"].get<double>(), 0.75);
}
