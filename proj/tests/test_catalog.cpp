#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "scube/catalog.hpp"
#include "scube/errors.hpp"
#include "scube/scorer.hpp"
#include "support.hpp"

using namespace scube;
using scube::testing::gray;
using scube::testing::TempDir;

namespace {

std::vector<ImageTensor> grays(const std::vector<double>& levels) {
  std::vector<ImageTensor> out;
  for (double v : levels) out.push_back(gray({4, 4}, v));
  return out;
}

std::vector<double> scores(const SeedCatalog& c) {
  std::vector<double> out;
  for (const auto& s : c.seeds()) out.push_back(s.memorability);
  return out;
}

}  // namespace

TEST(SeedPool, PicksMaxAndMin) {
  const auto c = select_seed_pool(grays({0.9, 0.1, 0.5, 0.7}), ScorerModel::oracle(OracleKind::kBrightness), 1);
  ASSERT_EQ(c.size(), 2u);
  EXPECT_NEAR(c.at(0).memorability, 0.9, 1e-12);
  EXPECT_NEAR(c.at(1).memorability, 0.1, 1e-12);
  EXPECT_EQ(c.at(0).seed_id, "seed-000");
  EXPECT_EQ(c.at(1).seed_id, "seed-001");
}

TEST(SeedPool, EqualScoresFallBackToIndexOrder) {
  const auto c = select_seed_pool(grays({0.4, 0.4, 0.4, 0.4}), ScorerModel::oracle(OracleKind::kBrightness), 2);
  ASSERT_EQ(c.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(c.at(i).seed_id, "seed-00" + std::to_string(i));
  const auto again = select_seed_pool(grays({0.4, 0.4, 0.4, 0.4}), ScorerModel::oracle(OracleKind::kBrightness), 2);
  EXPECT_EQ(c.seed_ids(), again.seed_ids());
}

TEST(SeedPool, MatchesFullSortOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> levels(10);
  for (double& v : levels) v = u(rng);
  const auto scorer = ScorerModel::oracle(OracleKind::kBrightness);
  const auto c = select_seed_pool(grays(levels), scorer, 3);

  std::vector<std::size_t> order(10);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return levels[a] > levels[b]; });
  std::vector<double> expected;
  for (int i = 0; i < 3; ++i) expected.push_back(levels[order[i]]);
  for (int i = 7; i < 10; ++i) expected.push_back(levels[order[i]]);
  const auto got = scores(c);
  ASSERT_EQ(got.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(got[i], expected[i], 1e-12);
}

TEST(SeedPool, InvariantUnderCandidatePermutation) {
  const std::vector<double> levels = {0.31, 0.72, 0.05, 0.96, 0.44, 0.58, 0.13, 0.87};
  auto permuted = levels;
  std::reverse(permuted.begin(), permuted.end());
  const auto scorer = ScorerModel::oracle(OracleKind::kBrightness);
  EXPECT_EQ(scores(select_seed_pool(grays(levels), scorer, 2)), scores(select_seed_pool(grays(permuted), scorer, 2)));
}

TEST(SeedPool, Errors) {
  const auto scorer = ScorerModel::oracle(OracleKind::kBrightness);
  EXPECT_THROW(select_seed_pool(grays({0.1, 0.2, 0.3}), scorer, 2), ArgumentError);
  EXPECT_THROW(select_seed_pool(grays({0.1, 0.2}), scorer, 0), ArgumentError);
}

TEST(SeedCatalog, ValidatesIdsAndScores) {
  EXPECT_THROW(SeedCatalog({{"a", gray({2, 2}, 0.1), 0.1, {}}, {"a", gray({2, 2}, 0.2), 0.2, {}}}), ArgumentError);
  EXPECT_THROW(SeedCatalog({{"a", gray({2, 2}, 0.1), 1.5, {}}}), ArgumentError);
  const SeedCatalog c({{"a", gray({2, 2}, 0.1), 0.1, {}}, {"b", gray({2, 2}, 0.2), 0.2, {}}});
  EXPECT_EQ(c.index_of("b"), 1u);
  EXPECT_FALSE(c.index_of("z"));
}

TEST(SeedCatalog, SaveLoadRoundTrip) {
  TempDir dir;
  std::mt19937_64 rng(5);
  SeedCatalog c({{"s1", scube::testing::random_image({6, 5}, rng), 0.25, {}},
                 {"s2", gray({6, 5}, 0.8), 0.75, std::string("models/s2.bin")}});
  save_catalog(c, dir.path());
  EXPECT_EQ(c.root(), dir.path());
  const auto back = load_catalog(dir.path());
  ASSERT_EQ(back.seed_ids(), c.seed_ids());
  EXPECT_EQ(back.at(0).memorability, 0.25);
  EXPECT_EQ(back.at(1).model_ref, std::optional<std::string>("models/s2.bin"));
  EXPECT_FALSE(back.at(0).model_ref);
  EXPECT_EQ(back.at(1).image, c.at(1).image);
  EXPECT_EQ(back.model_path(1), dir.path() / "models/s2.bin");
  const auto resized = load_catalog(dir.path(), Size{3, 3});
  EXPECT_EQ(resized.at(0).image.size(), (Size{3, 3}));
  EXPECT_THROW(load_catalog(dir / "nope"), NotFoundError);
}
