#include "scube/regressor.hpp"

#include <cmath>

#include "scube/errors.hpp"

namespace scube {

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"iterations", c.iterations}, {"learning_rate", c.learning_rate}, {"momentum", c.momentum},
       {"batch_size", c.batch_size}, {"rng_seed", c.rng_seed},           {"eval_interval", c.eval_interval},
       {"patience", c.patience},     {"backbone", c.backbone}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  const TrainConfig d;
  c.iterations = j.value("iterations", d.iterations);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.momentum = j.value("momentum", d.momentum);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.rng_seed = j.value("rng_seed", d.rng_seed);
  c.eval_interval = j.value("eval_interval", d.eval_interval);
  c.patience = j.value("patience", d.patience);
  c.backbone = j.value("backbone", d.backbone);
}

Backbone backbone_by_name(const std::string& name) {
  if (name == "cnn-s") return {"cnn-s", {16, 32, 64}, 32};
  if (name == "cnn-l") return {"cnn-l", {32, 64, 128}, 64};
  throw ArgumentError("unknown backbone '" + name + "' (expected cnn-s or cnn-l)");
}

ConvRegressor::ConvRegressor(Backbone backbone, Size input_size, int outputs, Head head)
    : backbone_(std::move(backbone)), input_size_(input_size), outputs_(outputs), head_(head) {
  if (input_size.height < 8 || input_size.width < 8) throw ArgumentError("regressor input must be at least 8x8");
  if (outputs < 1) throw ArgumentError("regressor needs at least one output");
  nn::ParameterLayout layout;
  conv_[0] = layout.conv(ImageTensor::kChannels, backbone_.widths[0], 2);
  conv_[1] = layout.conv(backbone_.widths[0], backbone_.widths[1], 2);
  conv_[2] = layout.conv(backbone_.widths[1], backbone_.widths[2], 2);
  hidden_ = layout.dense(backbone_.widths[2], backbone_.hidden);
  out_ = layout.dense(backbone_.hidden, outputs);
  params_.assign(layout.size(), 0.0);
}

void ConvRegressor::initialize(std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  for (const auto& c : conv_) nn::init_conv(c, params_, rng);
  nn::init_dense(hidden_, params_, rng);
  nn::init_dense(out_, params_, rng, 1.0);
}

std::string ConvRegressor::architecture() const {
  return backbone_.name + "/" + (head_ == Head::kSigmoid ? "sigmoid" : "linear") + "/" + std::to_string(outputs_);
}

void ConvRegressor::set_parameters(std::vector<double> params) {
  if (params.size() != params_.size()) {
    throw ArgumentError("parameter count mismatch: expected " + std::to_string(params_.size()) + ", got " +
                        std::to_string(params.size()));
  }
  params_ = std::move(params);
}

nn::Tensor ConvRegressor::prepare(const ImageTensor& image) const {
  return nn::to_tensor(resize_bilinear(image, input_size_), -0.5);
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Eigen::VectorXd global_average(const nn::Tensor& t) {
  return t.matrix().rowwise().mean();
}

}  // namespace

Eigen::VectorXd ConvRegressor::forward(const nn::Tensor& input) const {
  nn::Tensor x = input;
  for (const auto& c : conv_) {
    x = nn::conv_forward(c, params_, x);
    nn::relu_inplace(x);
  }
  Eigen::VectorXd h = nn::dense_forward(hidden_, params_, global_average(x)).cwiseMax(0.0);
  Eigen::VectorXd z = nn::dense_forward(out_, params_, h);
  if (head_ == Head::kSigmoid) z = z.unaryExpr(&sigmoid);
  return z;
}

Eigen::VectorXd ConvRegressor::forward_backward(const nn::Tensor& input,
                                                const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& loss_grad,
                                                std::span<double> grads) const {
  nn::Tensor acts[4];
  nn::RowMatrix cols[3];
  acts[0] = input;
  for (int i = 0; i < 3; ++i) {
    acts[i + 1] = nn::conv_forward(conv_[i], params_, acts[i], &cols[i]);
    nn::relu_inplace(acts[i + 1]);
  }
  const Eigen::VectorXd pooled = global_average(acts[3]);
  const Eigen::VectorXd h = nn::dense_forward(hidden_, params_, pooled).cwiseMax(0.0);
  Eigen::VectorXd y = nn::dense_forward(out_, params_, h);
  if (head_ == Head::kSigmoid) y = y.unaryExpr(&sigmoid);

  Eigen::VectorXd g = loss_grad(y);
  if (head_ == Head::kSigmoid) g = g.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
  Eigen::VectorXd gh = nn::dense_backward(out_, params_, h, g, grads);
  for (Eigen::Index i = 0; i < gh.size(); ++i) {
    if (!(h[i] > 0.0)) gh[i] = 0.0;
  }
  const Eigen::VectorXd gp = nn::dense_backward(hidden_, params_, pooled, gh, grads);

  nn::Tensor ga(acts[3].channels, acts[3].height, acts[3].width);
  const double inv_area = 1.0 / static_cast<double>(acts[3].plane());
  ga.matrix() = (gp * inv_area).replicate(1, static_cast<Eigen::Index>(acts[3].plane()));
  for (int i = 2; i >= 0; --i) {
    nn::relu_backward_inplace(acts[i + 1], ga);
    ga = nn::conv_backward(conv_[i], params_, acts[i], cols[i], ga, grads, i > 0);
  }
  return y;
}

}  // namespace scube
