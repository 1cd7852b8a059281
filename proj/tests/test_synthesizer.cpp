#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include "scube/errors.hpp"
#include "scube/synthesizer.hpp"
#include "support.hpp"

using namespace scube;
using scube::testing::random_image;
using scube::testing::TempDir;

namespace {

constexpr Size kSize{24, 24};

/// Smooth content so that stylization has structure to trade against.
ImageTensor smooth_image(Size size, double phase) {
  std::vector<double> px(3u * size.height * size.width);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < size.height; ++y) {
      for (int x = 0; x < size.width; ++x) {
        px[(static_cast<std::size_t>(c) * size.height + y) * size.width + x] =
            0.5 + 0.3 * std::sin(0.3 * x + phase * (c + 1)) * std::cos(0.2 * y - phase);
      }
    }
  }
  return ImageTensor(size, px);
}

StyleSeed seed_from(const ImageTensor& img) { return {"s", img, 0.5, {}}; }

SynthesisConfig config(double alpha, std::size_t iterations = 40) {
  SynthesisConfig c;
  c.alpha = alpha;
  c.iterations = iterations;
  return c;
}

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(Synthesize, ZeroAlphaKeepsContent) {
  std::mt19937_64 rng(1);
  const FeatureExtractor fx(1);
  const auto content = smooth_image(kSize, 0.3);
  const auto out = synthesize(content, seed_from(random_image(kSize, rng)), fx, config(0.0));
  EXPECT_GE(psnr(out, content), 40.0);
}

TEST(Synthesize, SelfStyleIsFixedPoint) {
  const FeatureExtractor fx(1);
  const auto content = smooth_image(kSize, 0.7);
  SynthesisTrace trace;
  const auto out = synthesize(content, seed_from(content), fx, config(10.0), &trace);
  EXPECT_EQ(trace.initial.total, 0.0);
  EXPECT_EQ(out, content);
}

TEST(Synthesize, AlphaTradesContentForStyle) {
  std::mt19937_64 rng(2);
  const FeatureExtractor fx(2);
  const auto content = smooth_image(kSize, 0.1);
  const auto seed = seed_from(random_image(kSize, rng));
  double prev_style = std::numeric_limits<double>::infinity(), prev_content = -1.0;
  for (double alpha : {0.5, 2.0, 10.0}) {
    SynthesisTrace trace;
    synthesize(content, seed, fx, config(alpha, 60), &trace);
    EXPECT_LE(trace.final.style, prev_style) << "alpha " << alpha;
    EXPECT_GE(trace.final.content, prev_content) << "alpha " << alpha;
    prev_style = trace.final.style;
    prev_content = trace.final.content;
  }
}

TEST(Synthesize, ObjectiveNeverIncreasesAndOutputIsClamped) {
  std::mt19937_64 rng(3);
  const FeatureExtractor fx(3);
  SynthesisTrace trace;
  auto cfg = config(10.0, 40);
  cfg.step_size = 0.5;
  const auto out = synthesize(random_image(kSize, rng), seed_from(random_image({40, 40}, rng)), fx, cfg, &trace);
  ASSERT_GE(trace.objective.size(), 2u);
  for (std::size_t i = 1; i < trace.objective.size(); ++i) EXPECT_LE(trace.objective[i], trace.objective[i - 1]);
  EXPECT_LT(trace.final.total, trace.initial.total);
  for (double v : out.pixels()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(out.size(), kSize);
}

TEST(Synthesize, Deterministic) {
  std::mt19937_64 rng(4);
  const FeatureExtractor fx(4);
  const auto content = random_image(kSize, rng), style = random_image(kSize, rng);
  EXPECT_EQ(synthesize(content, seed_from(style), fx, config(2.0, 15)),
            synthesize(content, seed_from(style), fx, config(2.0, 15)));
}

TEST(Synthesize, RejectsNegativeAlpha) {
  const FeatureExtractor fx(1);
  const auto img = smooth_image(kSize, 0.0);
  EXPECT_THROW(synthesize(img, seed_from(img), fx, config(-1.0)), ArgumentError);
}

TEST(SeedNetwork, StartsAsIdentityAndKeepsShape) {
  SeedNetwork net;
  net.initialize(3);
  std::mt19937_64 rng(5);
  const auto img = random_image({9, 11}, rng);
  const auto out = net.apply(img);
  EXPECT_EQ(out.size(), img.size());
  EXPECT_EQ(out, img);
  EXPECT_EQ(net.apply(img), out);
}

TEST(SeedNetwork, ContentOnlyTrainingPreservesInput) {
  TempDir dir;
  std::mt19937_64 rng(6);
  const FeatureExtractor fx(5);
  std::vector<ImageTensor> train;
  for (int i = 0; i < 4; ++i) train.push_back(smooth_image({16, 16}, 0.2 * i));
  auto cfg = config(0.0, 60);
  const auto ref = train_seed_network(seed_from(random_image({16, 16}, rng)), train, fx, cfg, dir / "a0.bin");
  const auto held_out = smooth_image({16, 16}, 2.5);
  const auto out = apply_seed_network(ref, held_out);
  EXPECT_EQ(out.size(), held_out.size());
  EXPECT_GE(psnr(out, held_out), 30.0);
}

TEST(SeedNetwork, TrainingBeatsIdentityOnHeldOutImages) {
  std::mt19937_64 rng(7);
  const FeatureExtractor fx(6);
  const auto style = random_image({16, 16}, rng);
  std::vector<ImageTensor> train, held_out;
  for (int i = 0; i < 6; ++i) train.push_back(smooth_image({16, 16}, 0.4 * i));
  for (int i = 0; i < 3; ++i) held_out.push_back(smooth_image({16, 16}, 0.4 * i + 0.2));
  auto cfg = config(2.0, 200);
  // The objective is tiny at 16x16; a smaller Adam step keeps the short run stable.
  cfg.network_learning_rate = 1e-3;
  const auto net = train_seed_network(seed_from(style), train, fx, cfg);
  const auto target = make_style_target(style, fx);
  double trained = 0.0, identity = 0.0;
  for (const auto& img : held_out) {
    const StyleObjective obj(fx, img, target, cfg.alpha);
    trained += obj.value(net.apply(img).pixels()).total;
    identity += obj.value(img.pixels()).total;
  }
  EXPECT_LT(trained, identity);
}

TEST(SeedNetwork, DeterministicCheckpoints) {
  TempDir dir;
  std::mt19937_64 rng(8);
  const FeatureExtractor fx(7);
  const auto style = random_image({12, 12}, rng);
  std::vector<ImageTensor> train = {smooth_image({12, 12}, 0.1), smooth_image({12, 12}, 0.9)};
  const auto cfg = config(2.0, 20);
  train_seed_network(seed_from(style), train, fx, cfg, dir / "a.bin");
  train_seed_network(seed_from(style), train, fx, cfg, dir / "b.bin");
  EXPECT_FALSE(file_bytes(dir / "a.bin").empty());
  EXPECT_EQ(file_bytes(dir / "a.bin"), file_bytes(dir / "b.bin"));
}

TEST(SeedNetwork, Errors) {
  TempDir dir;
  const FeatureExtractor fx(1);
  const auto img = smooth_image({8, 8}, 0.0);
  EXPECT_THROW(train_seed_network(seed_from(img), {}, fx, config(1.0)), ArgumentError);
  EXPECT_THROW(apply_seed_network(dir / "nope.bin", img), NotFoundError);
}
