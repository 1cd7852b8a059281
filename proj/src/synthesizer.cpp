#include "scube/synthesizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "scube/errors.hpp"

namespace scube {

void to_json(nlohmann::json& j, const SynthesisConfig& c) {
  j = {{"alpha", c.alpha},
       {"iterations", c.iterations},
       {"step_size", c.step_size},
       {"network_learning_rate", c.network_learning_rate},
       {"rng_seed", c.rng_seed}};
}

void from_json(const nlohmann::json& j, SynthesisConfig& c) {
  const SynthesisConfig d;
  c.alpha = j.value("alpha", d.alpha);
  c.iterations = j.value("iterations", d.iterations);
  c.step_size = j.value("step_size", d.step_size);
  c.network_learning_rate = j.value("network_learning_rate", d.network_learning_rate);
  c.rng_seed = j.value("rng_seed", d.rng_seed);
}

ImageTensor synthesize(const ImageTensor& content, const StyleSeed& seed, const FeatureExtractor& fx,
                       const SynthesisConfig& config, SynthesisTrace* trace) {
  if (!(config.alpha >= 0.0)) throw ArgumentError("synthesize: alpha must be non-negative");
  if (!(config.step_size > 0.0)) throw ArgumentError("synthesize: step size must be positive");
  if (content.empty() || seed.image.empty()) throw ArgumentError("synthesize: empty image");

  const ImageTensor style = resize_bilinear(seed.image, content.size());
  const StyleObjective objective(fx, content, make_style_target(style, fx), config.alpha);

  std::vector<double> x(content.pixels().begin(), content.pixels().end());
  std::vector<double> grad(x.size());
  std::vector<double> trial(x.size());
  std::vector<double> trial_grad(x.size());

  LossBreakdown current = objective.value_and_gradient(x, grad);
  if (!std::isfinite(current.total)) throw NumericalError("synthesize: non-finite objective", 0);
  if (trace) {
    *trace = {};
    trace->initial = current;
    trace->objective.push_back(current.total);
  }

  auto max_abs = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double e : v) m = std::max(m, std::abs(e));
    return m;
  };

  double gmax = max_abs(grad);
  double step = gmax > 0.0 ? config.step_size / gmax : 0.0;
  constexpr int kMaxBacktracks = 30;

  for (std::size_t iter = 1; iter <= config.iterations && gmax > 0.0; ++iter) {
    bool accepted = false;
    LossBreakdown next;
    for (int attempt = 0; attempt < kMaxBacktracks; ++attempt) {
      for (std::size_t i = 0; i < x.size(); ++i) trial[i] = std::clamp(x[i] - step * grad[i], 0.0, 1.0);
      next = objective.value_and_gradient(trial, trial_grad);
      if (!std::isfinite(next.total)) throw NumericalError("synthesize: non-finite objective", iter);
      if (next.total < current.total) {
        accepted = true;
        break;
      }
      step *= 0.5;
      if (trace) ++trace->rejected_steps;
    }
    if (!accepted) break;
    x.swap(trial);
    grad.swap(trial_grad);
    current = next;
    gmax = max_abs(grad);
    step *= 1.5;
    if (trace) trace->objective.push_back(current.total);
  }

  if (trace) trace->final = current;
  return ImageTensor(content.size(), std::move(x));
}

SeedNetwork::SeedNetwork() {
  nn::ParameterLayout layout;
  conv_[0] = layout.conv(ImageTensor::kChannels, 16, 1);
  conv_[1] = layout.conv(16, 16, 1);
  conv_[2] = layout.conv(16, ImageTensor::kChannels, 1);
  params_.assign(layout.size(), 0.0);
}

void SeedNetwork::initialize(std::uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  nn::init_conv(conv_[0], params_, rng);
  nn::init_conv(conv_[1], params_, rng);
  // Zero residual branch: the untrained network is the identity.
  std::fill(params_.begin() + static_cast<std::ptrdiff_t>(conv_[2].weight_offset), params_.end(), 0.0);
}

void SeedNetwork::set_parameters(std::vector<double> params) {
  if (params.size() != params_.size()) throw ArgumentError("seed network parameter count mismatch");
  params_ = std::move(params);
}

ImageTensor SeedNetwork::apply(const ImageTensor& image) const {
  const nn::Tensor x = nn::to_tensor(image, -0.5);
  nn::Tensor h = nn::conv_forward(conv_[0], params_, x);
  nn::relu_inplace(h);
  h = nn::conv_forward(conv_[1], params_, h);
  nn::relu_inplace(h);
  const nn::Tensor r = nn::conv_forward(conv_[2], params_, h);
  std::vector<double> out(image.pixels().begin(), image.pixels().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += r.data[i];
  return ImageTensor::clamped(image.size(), std::move(out));
}

ImageTensor SeedNetwork::forward_backward(const ImageTensor& image,
                                          const std::function<std::vector<double>(const ImageTensor&)>& output_grad,
                                          std::span<double> grads) const {
  nn::Tensor acts[3];
  nn::RowMatrix cols[3];
  acts[0] = nn::to_tensor(image, -0.5);
  acts[1] = nn::conv_forward(conv_[0], params_, acts[0], &cols[0]);
  nn::relu_inplace(acts[1]);
  acts[2] = nn::conv_forward(conv_[1], params_, acts[1], &cols[1]);
  nn::relu_inplace(acts[2]);
  const nn::Tensor r = nn::conv_forward(conv_[2], params_, acts[2], &cols[2]);

  std::vector<double> raw(image.pixels().begin(), image.pixels().end());
  for (std::size_t i = 0; i < raw.size(); ++i) raw[i] += r.data[i];
  const ImageTensor out = ImageTensor::clamped(image.size(), raw);

  const std::vector<double> g_out = output_grad(out);
  nn::Tensor g(r.channels, r.height, r.width);
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    g.data[i] = (raw[i] > 0.0 && raw[i] < 1.0) ? g_out[i] : 0.0;
  }
  g = nn::conv_backward(conv_[2], params_, acts[2], cols[2], g, grads, true);
  nn::relu_backward_inplace(acts[2], g);
  g = nn::conv_backward(conv_[1], params_, acts[1], cols[1], g, grads, true);
  nn::relu_backward_inplace(acts[1], g);
  nn::conv_backward(conv_[0], params_, acts[0], cols[0], g, grads, false);
  return out;
}

SeedNetwork train_seed_network(const StyleSeed& seed, std::span<const ImageTensor> training_images,
                               const FeatureExtractor& fx, const SynthesisConfig& config) {
  if (training_images.empty()) throw ArgumentError("train_seed_network: empty training set");
  if (!(config.alpha >= 0.0)) throw ArgumentError("train_seed_network: alpha must be non-negative");

  SeedNetwork net;
  net.initialize(config.rng_seed);
  if (config.alpha == 0.0) return net;  // identity already minimizes the content-only objective

  // One style target per distinct working resolution; training images normally share one.
  std::vector<std::pair<Size, StyleTarget>> targets;
  auto target_for = [&](Size size) -> const StyleTarget& {
    for (const auto& [s, t] : targets) {
      if (s == size) return t;
    }
    targets.emplace_back(size, make_style_target(resize_bilinear(seed.image, size), fx));
    return targets.back().second;
  };

  nn::Adam opt(net.parameters().size(), config.network_learning_rate);
  std::vector<double> grads(net.parameters().size());
  std::vector<std::size_t> order(training_images.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.rng_seed);
  std::size_t cursor = order.size();

  for (std::size_t iter = 0; iter < config.iterations; ++iter) {
    if (cursor == order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const ImageTensor& image = training_images[order[cursor++]];
    const StyleObjective objective(fx, image, target_for(image.size()), config.alpha);
    std::fill(grads.begin(), grads.end(), 0.0);
    double loss = 0.0;
    net.forward_backward(
        image,
        [&](const ImageTensor& out) {
          std::vector<double> g(out.pixels().size());
          loss = objective.value_and_gradient(out.pixels(), g).total;
          return g;
        },
        grads);
    if (!std::isfinite(loss)) throw NumericalError("train_seed_network: non-finite objective", iter);
    opt.step(net.parameters(), grads);
  }
  return net;
}

std::string train_seed_network(const StyleSeed& seed, std::span<const ImageTensor> training_images,
                               const FeatureExtractor& fx, const SynthesisConfig& config,
                               const std::filesystem::path& checkpoint) {
  save_seed_network(train_seed_network(seed, training_images, fx, config), checkpoint);
  return checkpoint.string();
}

void save_seed_network(const SeedNetwork& net, const std::filesystem::path& path) {
  nn::save_blob(path, net.parameters());
}

SeedNetwork load_seed_network(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw NotFoundError("seed network checkpoint not found: " + path.string());
  SeedNetwork net;
  net.set_parameters(nn::load_blob(path));
  return net;
}

ImageTensor apply_seed_network(const std::filesystem::path& model_ref, const ImageTensor& image) {
  return load_seed_network(model_ref).apply(image);
}

}  // namespace scube
