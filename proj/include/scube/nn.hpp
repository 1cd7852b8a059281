#pragma once

// Minimal CPU building blocks for the small convolutional models used across
// the pipeline. All parameters of a model live in one flat vector so that
// checkpoints, optimizers and determinism checks operate on plain buffers.

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "scube/image.hpp"

namespace scube::nn {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Planar feature map (channel, row, column).
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const noexcept { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const noexcept { return data.size(); }

  double& operator()(int c, int y, int x) { return data[(c * plane()) + static_cast<std::size_t>(y) * width + x]; }
  double operator()(int c, int y, int x) const {
    return data[(c * plane()) + static_cast<std::size_t>(y) * width + x];
  }

  Eigen::Map<RowMatrix> matrix() { return {data.data(), channels, static_cast<Eigen::Index>(plane())}; }
  Eigen::Map<const RowMatrix> matrix() const {
    return {data.data(), channels, static_cast<Eigen::Index>(plane())};
  }
};

/// Image pixels as a 3-channel tensor, optionally shifted by `offset`.
Tensor to_tensor(const ImageTensor& image, double offset = 0.0);

/// 3x3 convolution, zero padding 1. Weight layout: out x (in*9), row-major.
struct Conv3x3 {
  int in = 0;
  int out = 0;
  int stride = 1;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;

  std::size_t parameter_count() const { return static_cast<std::size_t>(out) * in * 9 + out; }
  int output_extent(int extent) const { return (extent - 1) / stride + 1; }
};

struct Dense {
  int in = 0;
  int out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;

  std::size_t parameter_count() const { return static_cast<std::size_t>(out) * in + out; }
};

/// Assigns consecutive offsets within a flat parameter vector.
class ParameterLayout {
 public:
  Conv3x3 conv(int in, int out, int stride);
  Dense dense(int in, int out);
  std::size_t size() const noexcept { return size_; }

 private:
  std::size_t size_ = 0;
};

/// He-normal weights, zero biases.
void init_conv(const Conv3x3& layer, std::span<double> params, std::mt19937_64& rng, double gain = 2.0);
void init_dense(const Dense& layer, std::span<double> params, std::mt19937_64& rng, double gain = 2.0);

/// Column buffer for a convolution: (in*9) x (out_h*out_w).
RowMatrix im2col(const Conv3x3& layer, const Tensor& x);

Tensor conv_forward(const Conv3x3& layer, std::span<const double> params, const Tensor& x,
                    RowMatrix* columns = nullptr);

/// Accumulates parameter gradients into `grads` (same layout as params) when
/// non-empty; returns the input gradient when `input_grad` is true, else an empty tensor.
Tensor conv_backward(const Conv3x3& layer, std::span<const double> params, const Tensor& input,
                     const RowMatrix& columns, const Tensor& grad_out, std::span<double> grads, bool input_grad);

void relu_inplace(Tensor& t);
/// Zeroes grad where the post-activation value is not positive.
void relu_backward_inplace(const Tensor& activated, Tensor& grad);

Eigen::VectorXd dense_forward(const Dense& layer, std::span<const double> params, const Eigen::VectorXd& x);
Eigen::VectorXd dense_backward(const Dense& layer, std::span<const double> params, const Eigen::VectorXd& input,
                               const Eigen::VectorXd& grad_out, std::span<double> grads);

/// SGD with classical momentum: v = m*v - lr*g; p += v.
class SgdMomentum {
 public:
  SgdMomentum(std::size_t n, double learning_rate, double momentum)
      : lr_(learning_rate), momentum_(momentum), velocity_(n, 0.0) {}
  void step(std::span<double> params, std::span<const double> grads);

 private:
  double lr_;
  double momentum_;
  std::vector<double> velocity_;
};

class Adam {
 public:
  Adam(std::size_t n, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}
  void step(std::span<double> params, std::span<const double> grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

/// Raw little-endian float64 blob with a magic header and element count.
void save_blob(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> load_blob(const std::filesystem::path& path);

}  // namespace scube::nn
