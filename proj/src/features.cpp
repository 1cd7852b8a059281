#include "scube/features.hpp"

#include <algorithm>

#include "scube/errors.hpp"

namespace scube {
namespace {

constexpr int kStrides[FeatureExtractor::kLayers] = {1, 2, 1, 2};

void check_target(const StyleTarget& target, const FeatureExtractor& fx) {
  const auto layers = fx.style_layers();
  if (target.layers.size() != layers.size() || !std::equal(layers.begin(), layers.end(), target.layers.begin()) ||
      target.grams.size() != target.layers.size()) {
    throw ArgumentError("style target layers do not match the feature extractor");
  }
}

double mean_squared(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

}  // namespace

FeatureExtractor::FeatureExtractor(std::uint64_t rng_seed, std::array<int, kLayers> widths) : rng_seed_(rng_seed) {
  nn::ParameterLayout layout;
  int in = ImageTensor::kChannels;
  for (int l = 0; l < kLayers; ++l) {
    if (widths[l] < 1) throw ArgumentError("feature extractor widths must be positive");
    conv_[l] = layout.conv(in, widths[l], kStrides[l]);
    in = widths[l];
  }
  params_.assign(layout.size(), 0.0);
  std::mt19937_64 rng(rng_seed);
  for (const auto& c : conv_) nn::init_conv(c, params_, rng);
}

FeatureExtractor::Activations FeatureExtractor::forward(const nn::Tensor& input, bool keep_columns) const {
  Activations acts;
  acts.input = input;
  const nn::Tensor* x = &acts.input;
  for (int l = 0; l < kLayers; ++l) {
    acts.layers[l] = nn::conv_forward(conv_[l], params_, *x, keep_columns ? &acts.columns[l] : nullptr);
    nn::relu_inplace(acts.layers[l]);
    x = &acts.layers[l];
  }
  return acts;
}

nn::Tensor FeatureExtractor::backward(const Activations& acts, std::array<nn::Tensor, kLayers> layer_grads) const {
  nn::Tensor g;
  for (int l = kLayers - 1; l >= 0; --l) {
    if (!layer_grads[l].data.empty()) {
      if (g.data.empty()) {
        g = std::move(layer_grads[l]);
      } else {
        for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += layer_grads[l].data[i];
      }
    }
    if (g.data.empty()) continue;
    nn::relu_backward_inplace(acts.layers[l], g);
    const nn::Tensor& below = l == 0 ? acts.input : acts.layers[l - 1];
    if (acts.columns[l].size() == 0) throw ArgumentError("backward needs forward(..., keep_columns=true)");
    g = nn::conv_backward(conv_[l], params_, below, acts.columns[l], g, {}, true);
  }
  if (g.data.empty()) g = nn::Tensor(acts.input.channels, acts.input.height, acts.input.width);
  return g;
}

Eigen::MatrixXd gram_matrix(const nn::Tensor& features) {
  if (features.channels < 1 || features.height < 1 || features.width < 1) {
    throw ArgumentError("gram_matrix: empty feature map");
  }
  const auto f = features.matrix();
  const double norm = static_cast<double>(features.channels) * static_cast<double>(features.plane());
  Eigen::MatrixXd g = (f * f.transpose()) / norm;
  // Exact symmetry regardless of GEMM summation order.
  return (g + g.transpose()) * 0.5;
}

StyleTarget make_style_target(const ImageTensor& style, const FeatureExtractor& fx) {
  const auto acts = fx.forward(style);
  StyleTarget t;
  for (int layer : fx.style_layers()) {
    t.layers.push_back(layer);
    t.grams.push_back(gram_matrix(acts.layers[layer - 1]));
  }
  return t;
}

double style_loss(const ImageTensor& candidate, const StyleTarget& target, const FeatureExtractor& fx) {
  check_target(target, fx);
  const auto acts = fx.forward(candidate);
  double loss = 0.0;
  for (std::size_t i = 0; i < target.layers.size(); ++i) {
    const Eigen::MatrixXd g = gram_matrix(acts.layers[target.layers[i] - 1]);
    if (g.rows() != target.grams[i].rows() || g.cols() != target.grams[i].cols()) {
      throw ArgumentError("style target Gram shape mismatch");
    }
    loss += mean_squared(g, target.grams[i]);
  }
  return loss;
}

double content_loss(const ImageTensor& candidate, const ImageTensor& content, const FeatureExtractor& fx) {
  if (candidate.size() != content.size()) throw ArgumentError("content_loss: resolution mismatch");
  const int l = fx.content_layer() - 1;
  const auto a = fx.forward(candidate), b = fx.forward(content);
  return (a.layers[l].matrix() - b.layers[l].matrix()).squaredNorm() / static_cast<double>(a.layers[l].size());
}

StyleObjective::StyleObjective(const FeatureExtractor& fx, const ImageTensor& content, StyleTarget target,
                               double alpha)
    : fx_(fx), size_(content.size()), target_(std::move(target)), alpha_(alpha) {
  if (!(alpha >= 0.0)) throw ArgumentError("alpha must be non-negative");
  check_target(target_, fx_);
  content_features_ = fx_.forward(content).layers[fx_.content_layer() - 1];
}

nn::Tensor StyleObjective::as_tensor(std::span<const double> pixels) const {
  nn::Tensor t(ImageTensor::kChannels, size_.height, size_.width);
  if (pixels.size() != t.size()) throw ArgumentError("objective: pixel buffer size mismatch");
  std::copy(pixels.begin(), pixels.end(), t.data.begin());
  return t;
}

LossBreakdown StyleObjective::evaluate(const FeatureExtractor::Activations& acts,
                                       std::array<nn::Tensor, FeatureExtractor::kLayers>* grads) const {
  LossBreakdown out;
  const int cl = fx_.content_layer() - 1;
  {
    const auto f = acts.layers[cl].matrix();
    const auto f0 = content_features_.matrix();
    const double n = static_cast<double>(f.size());
    out.content = (f - f0).squaredNorm() / n;
    if (grads) {
      (*grads)[cl] = nn::Tensor(acts.layers[cl].channels, acts.layers[cl].height, acts.layers[cl].width);
      (*grads)[cl].matrix() = (f - f0) * (2.0 / n);
    }
  }
  for (std::size_t i = 0; i < target_.layers.size(); ++i) {
    const int l = target_.layers[i] - 1;
    const nn::Tensor& feat = acts.layers[l];
    const Eigen::MatrixXd g = gram_matrix(feat);
    const Eigen::MatrixXd diff = g - target_.grams[i];
    out.style += diff.squaredNorm() / static_cast<double>(diff.size());
    if (grads && alpha_ != 0.0) {
      // dL/dG = 2 (G - T) / C^2; dL/dF = 2 dL/dG F / (C H W) since dL/dG is symmetric.
      const double c = feat.channels;
      const double norm = c * static_cast<double>(feat.plane());
      nn::Tensor gf(feat.channels, feat.height, feat.width);
      gf.matrix() = (diff * (2.0 / (c * c))) * feat.matrix() * (2.0 * alpha_ / norm);
      auto& slot = (*grads)[l];
      if (slot.data.empty()) {
        slot = std::move(gf);
      } else {
        for (std::size_t k = 0; k < slot.data.size(); ++k) slot.data[k] += gf.data[k];
      }
    }
  }
  out.total = out.content + alpha_ * out.style;
  return out;
}

LossBreakdown StyleObjective::value(std::span<const double> pixels) const {
  return evaluate(fx_.forward(as_tensor(pixels)), nullptr);
}

LossBreakdown StyleObjective::value_and_gradient(std::span<const double> pixels, std::span<double> grad) const {
  const auto acts = fx_.forward(as_tensor(pixels), true);
  std::array<nn::Tensor, FeatureExtractor::kLayers> layer_grads;
  const LossBreakdown out = evaluate(acts, &layer_grads);
  const nn::Tensor g = fx_.backward(acts, std::move(layer_grads));
  if (grad.size() != g.data.size()) throw ArgumentError("objective: gradient buffer size mismatch");
  std::copy(g.data.begin(), g.data.end(), grad.begin());
  return out;
}

}  // namespace scube
