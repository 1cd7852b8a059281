#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "scube/image.hpp"
#include "scube/nn.hpp"

namespace scube {

/// Mini-batch SGD settings shared by scorer and selector training.
struct TrainConfig {
  std::size_t iterations = 2000;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::uint64_t rng_seed = 0;
  /// Selector only: validation check cadence (iterations) and early-stopping patience (checks).
  std::size_t eval_interval = 50;
  std::size_t patience = 10;
  std::string backbone = "cnn-s";
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

/// Convolutional trunk shape: three stride-2 3x3 convolutions, global average
/// pooling, one hidden dense layer.
struct Backbone {
  std::string name;
  int widths[3];
  int hidden;
};

/// "cnn-s" (16/32/64, hidden 32) or "cnn-l" (32/64/128, hidden 64).
Backbone backbone_by_name(const std::string& name);

enum class Head { kSigmoid, kLinear };

class ConvRegressor {
 public:
  ConvRegressor(Backbone backbone, Size input_size, int outputs, Head head);

  void initialize(std::uint64_t rng_seed);

  const Backbone& backbone() const noexcept { return backbone_; }
  Size input_size() const noexcept { return input_size_; }
  int outputs() const noexcept { return outputs_; }
  Head head() const noexcept { return head_; }
  std::string architecture() const;

  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }
  void set_parameters(std::vector<double> params);

  /// Resize to the input size and center pixel values.
  nn::Tensor prepare(const ImageTensor& image) const;

  Eigen::VectorXd forward(const nn::Tensor& input) const;
  Eigen::VectorXd predict(const ImageTensor& image) const { return forward(prepare(image)); }

  /// Forward pass, then backpropagates loss_grad(outputs) (dL/d output) and
  /// accumulates parameter gradients into `grads`. Returns the outputs.
  Eigen::VectorXd forward_backward(const nn::Tensor& input,
                                   const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& loss_grad,
                                   std::span<double> grads) const;

 private:
  Backbone backbone_;
  Size input_size_;
  int outputs_;
  Head head_;
  nn::Conv3x3 conv_[3];
  nn::Dense hidden_;
  nn::Dense out_;
  std::vector<double> params_;
};

}  // namespace scube
