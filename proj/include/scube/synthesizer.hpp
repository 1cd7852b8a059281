#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "scube/catalog.hpp"
#include "scube/features.hpp"
#include "scube/image.hpp"

namespace scube {

struct SynthesisConfig {
  /// Style weight; 0 keeps the content image.
  double alpha = 2.0;
  std::size_t iterations = 100;
  /// Largest per-pixel change of the first trial step of the pixel optimizer.
  double step_size = 0.05;
  /// Adam learning rate for per-seed network training.
  double network_learning_rate = 1e-2;
  std::uint64_t rng_seed = 0;
};

void to_json(nlohmann::json& j, const SynthesisConfig& c);
void from_json(const nlohmann::json& j, SynthesisConfig& c);

struct SynthesisTrace {
  /// Objective at the start and after every accepted step.
  std::vector<double> objective;
  LossBreakdown initial;
  LossBreakdown final;
  std::size_t rejected_steps = 0;
};

/// Minimizes content_loss + alpha * style_loss over pixels by projected
/// gradient descent with backtracking, starting from the content image. The
/// seed image is resized to the content resolution. Throws NumericalError on a
/// non-finite objective.
ImageTensor synthesize(const ImageTensor& content, const StyleSeed& seed, const FeatureExtractor& fx,
                       const SynthesisConfig& config, SynthesisTrace* trace = nullptr);

/// Per-seed image-to-image network: residual three-layer conv net whose output
/// is clamped to [0, 1].
class SeedNetwork {
 public:
  SeedNetwork();

  ImageTensor apply(const ImageTensor& image) const;

  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }
  void set_parameters(std::vector<double> params);

  void initialize(std::uint64_t rng_seed);

  /// Backpropagates dL/d(output) through the clamp and residual into parameter gradients.
  ImageTensor forward_backward(const ImageTensor& image,
                               const std::function<std::vector<double>(const ImageTensor&)>& output_grad,
                               std::span<double> grads) const;

 private:
  std::array<nn::Conv3x3, 3> conv_;
  std::vector<double> params_;
};

/// Trains a network minimizing the synthesis objective averaged over the
/// training images (Adam, one image per iteration).
SeedNetwork train_seed_network(const StyleSeed& seed, std::span<const ImageTensor> training_images,
                               const FeatureExtractor& fx, const SynthesisConfig& config);

/// Trains, writes the checkpoint to `checkpoint`, and returns the model reference
/// (the checkpoint path as given).
std::string train_seed_network(const StyleSeed& seed, std::span<const ImageTensor> training_images,
                               const FeatureExtractor& fx, const SynthesisConfig& config,
                               const std::filesystem::path& checkpoint);

void save_seed_network(const SeedNetwork& net, const std::filesystem::path& path);
/// Throws NotFoundError for a dangling reference.
SeedNetwork load_seed_network(const std::filesystem::path& path);

ImageTensor apply_seed_network(const std::filesystem::path& model_ref, const ImageTensor& image);

}  // namespace scube
