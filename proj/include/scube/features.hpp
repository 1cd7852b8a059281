#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "scube/image.hpp"
#include "scube/nn.hpp"

namespace scube {

/// Fixed random-weight convolutional stack used as the descriptor network for
/// style and content losses. Four 3x3 conv + ReLU layers with strides 1,2,1,2
/// and zero biases. Layer ids are 1-based.
class FeatureExtractor {
 public:
  static constexpr int kLayers = 4;

  explicit FeatureExtractor(std::uint64_t rng_seed = 0, std::array<int, kLayers> widths = {8, 16, 16, 32});

  std::uint64_t rng_seed() const noexcept { return rng_seed_; }
  int content_layer() const noexcept { return 2; }
  std::span<const int> style_layers() const noexcept { return style_layers_; }
  std::span<const double> parameters() const noexcept { return params_; }

  struct Activations {
    nn::Tensor input;
    std::array<nn::Tensor, kLayers> layers;
    std::array<nn::RowMatrix, kLayers> columns;
  };

  Activations forward(const nn::Tensor& input, bool keep_columns = false) const;
  Activations forward(const ImageTensor& image, bool keep_columns = false) const {
    return forward(nn::to_tensor(image), keep_columns);
  }

  /// Input gradient given dL/d(activation) per layer; empty tensors mean no
  /// loss attached to that layer. Requires forward(..., keep_columns=true).
  nn::Tensor backward(const Activations& acts, std::array<nn::Tensor, kLayers> layer_grads) const;

 private:
  std::uint64_t rng_seed_;
  std::array<nn::Conv3x3, kLayers> conv_;
  std::vector<int> style_layers_{1, 2, 3, 4};
  std::vector<double> params_;
};

/// G[i][j] = sum_{h,w} F[i][h][w] F[j][h][w] / (C*H*W).
Eigen::MatrixXd gram_matrix(const nn::Tensor& features);

struct StyleTarget {
  std::vector<int> layers;
  std::vector<Eigen::MatrixXd> grams;
};

StyleTarget make_style_target(const ImageTensor& style, const FeatureExtractor& fx);

/// Sum over style layers of the mean squared Gram difference.
double style_loss(const ImageTensor& candidate, const StyleTarget& target, const FeatureExtractor& fx);

/// Mean squared difference of content-layer features.
double content_loss(const ImageTensor& candidate, const ImageTensor& content, const FeatureExtractor& fx);

struct LossBreakdown {
  double content = 0.0;
  double style = 0.0;
  double total = 0.0;
};

/// content_loss + alpha * style_loss as a function of raw planar pixels, with
/// its analytic gradient. Pixels are not clamped here.
class StyleObjective {
 public:
  StyleObjective(const FeatureExtractor& fx, const ImageTensor& content, StyleTarget target, double alpha);

  Size size() const noexcept { return size_; }
  double alpha() const noexcept { return alpha_; }

  LossBreakdown value(std::span<const double> pixels) const;
  /// Writes dL/dpixels into `grad` (same planar layout).
  LossBreakdown value_and_gradient(std::span<const double> pixels, std::span<double> grad) const;

 private:
  LossBreakdown evaluate(const FeatureExtractor::Activations& acts,
                         std::array<nn::Tensor, FeatureExtractor::kLayers>* grads) const;
  nn::Tensor as_tensor(std::span<const double> pixels) const;

  const FeatureExtractor& fx_;
  Size size_;
  nn::Tensor content_features_;
  StyleTarget target_;
  double alpha_;
};

}  // namespace scube
