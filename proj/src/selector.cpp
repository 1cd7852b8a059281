#include "scube/selector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

#include "scube/errors.hpp"

namespace scube {
namespace {

std::filesystem::path manifest_path(const std::filesystem::path& path) { return path.string() + ".json"; }

void check_lengths(std::size_t a, std::size_t b, std::size_t c) {
  if (a != b || a != c) throw ArgumentError("masked loss: length mismatch");
}

}  // namespace

SelectorModel::SelectorModel(ConvRegressor net, std::vector<std::string> seed_ids)
    : net_(std::move(net)), seed_ids_(std::move(seed_ids)) {
  if (net_.head() != Head::kLinear) throw ArgumentError("selector needs a linear output head");
  if (static_cast<std::size_t>(net_.outputs()) != seed_ids_.size()) {
    throw ArgumentError("selector output dimension does not match the seed binding");
  }
}

SelectorModel SelectorModel::create(const std::string& backbone, Size input_size, std::vector<std::string> seed_ids,
                                    std::uint64_t rng_seed) {
  ConvRegressor net(backbone_by_name(backbone), input_size, static_cast<int>(seed_ids.size()), Head::kLinear);
  net.initialize(rng_seed);
  return SelectorModel(std::move(net), std::move(seed_ids));
}

std::vector<double> SelectorModel::predict(const ImageTensor& image) const {
  const Eigen::VectorXd y = net_.predict(image);
  return {y.data(), y.data() + y.size()};
}

double masked_loss(std::span<const double> predicted, std::span<const double> target, std::span<const double> mask) {
  check_lengths(predicted.size(), target.size(), mask.size());
  double loss = 0.0;
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    if (mask[s] == 0.0) continue;
    if (mask[s] != 1.0) throw ArgumentError("masked loss: mask entries must be 0 or 1");
    const double d = predicted[s] - target[s];
    loss += d * d;
  }
  return loss;
}

void masked_loss_gradient(std::span<const double> predicted, std::span<const double> target,
                          std::span<const double> mask, std::span<double> grad) {
  check_lengths(predicted.size(), target.size(), mask.size());
  if (grad.size() != predicted.size()) throw ArgumentError("masked loss: gradient buffer length mismatch");
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    if (mask[s] == 0.0) {
      grad[s] = 0.0;
      continue;
    }
    if (mask[s] != 1.0) throw ArgumentError("masked loss: mask entries must be 0 or 1");
    grad[s] = 2.0 * (predicted[s] - target[s]);
  }
}

double validation_loss(const SelectorModel& model, const GapMatrix& gaps, const ImageStore& images) {
  std::vector<double> target(gaps.cols()), mask(gaps.cols());
  double loss = 0.0;
  std::size_t observed = 0;
  for (std::size_t g = 0; g < gaps.rows(); ++g) {
    gaps.row(g, target, mask);
    const auto n = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1.0));
    if (n == 0) continue;
    loss += masked_loss(model.predict(images.at(gaps.image_ids()[g])), target, mask);
    observed += n;
  }
  return observed == 0 ? 0.0 : loss / static_cast<double>(observed);
}

SelectorModel train_selector(const GapMatrix& gaps, const ImageStore& images, const TrainConfig& config,
                             Size input_size, const GapMatrix* validation) {
  if (gaps.observed_count() == 0) throw ArgumentError("train_selector: gap matrix has no observed entries");
  if (config.batch_size == 0) throw ArgumentError("train_selector: batch size must be positive");
  if (validation && validation->seed_ids() != gaps.seed_ids()) {
    throw ArgumentError("train_selector: validation seed binding differs from training");
  }

  SelectorModel model = SelectorModel::create(config.backbone, input_size, gaps.seed_ids(), config.rng_seed);
  model.training = config;
  ConvRegressor& net = model.net();

  const std::size_t S = gaps.cols();
  std::vector<nn::Tensor> inputs(gaps.rows());
  std::vector<std::vector<double>> targets(gaps.rows(), std::vector<double>(S));
  std::vector<std::vector<double>> masks(gaps.rows(), std::vector<double>(S));
  std::vector<bool> has_observation(gaps.rows());
  for (std::size_t g = 0; g < gaps.rows(); ++g) {
    gaps.row(g, targets[g], masks[g]);
    has_observation[g] = std::find(masks[g].begin(), masks[g].end(), 1.0) != masks[g].end();
    // Rows without observations contribute exactly zero gradient; skip their forward pass.
    if (has_observation[g]) inputs[g] = net.prepare(images.at(gaps.image_ids()[g]));
  }

  const bool early_stopping =
      validation != nullptr && validation->observed_count() > 0 && config.eval_interval > 0;
  if (validation) {
    for (const auto& id : validation->image_ids()) images.at(id);
  }

  std::mt19937_64 rng(config.rng_seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(gaps.rows());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  nn::SgdMomentum opt(net.parameters().size(), config.learning_rate, config.momentum);
  std::vector<double> grads(net.parameters().size());
  const std::size_t batch = std::min(config.batch_size, gaps.rows());
  const double scale = 1.0 / static_cast<double>(batch);

  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<double> best_params;
  std::size_t checks_without_improvement = 0;
  auto check = [&] {
    const double loss = validation_loss(model, *validation, images);
    model.validation_history.push_back(loss);
    if (loss < best_loss) {
      best_loss = loss;
      best_params.assign(net.parameters().begin(), net.parameters().end());
      checks_without_improvement = 0;
    } else {
      ++checks_without_improvement;
    }
  };
  if (early_stopping) check();

  std::vector<double> grad_out(S);
  for (std::size_t iter = 1; iter <= config.iterations; ++iter) {
    std::fill(grads.begin(), grads.end(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::size_t g = order[cursor++];
      if (!has_observation[g]) continue;
      net.forward_backward(
          inputs[g],
          [&](const Eigen::VectorXd& y) {
            masked_loss_gradient(std::span<const double>(y.data(), S), targets[g], masks[g], grad_out);
            Eigen::VectorXd gy(S);
            for (std::size_t s = 0; s < S; ++s) gy[s] = grad_out[s] * scale;
            return gy;
          },
          grads);
    }
    opt.step(net.parameters(), grads);
    for (double p : net.parameters()) {
      if (!std::isfinite(p)) throw NumericalError("train_selector: non-finite parameters", iter);
    }

    if (early_stopping && iter % config.eval_interval == 0) {
      check();
      if (checks_without_improvement >= config.patience) break;
    }
  }
  if (early_stopping && !best_params.empty()) net.set_parameters(best_params);
  return model;
}

SeedRanking SeedRanking::top(std::size_t q) const {
  SeedRanking out;
  out.keep_original = keep_original;
  out.entries.assign(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(std::min(q, entries.size())));
  return out;
}

SeedRanking rank_seeds(std::span<const double> predicted, std::span<const std::string> seed_ids) {
  if (predicted.size() != seed_ids.size()) throw ArgumentError("rank_seeds: length mismatch");
  SeedRanking ranking;
  ranking.entries.reserve(predicted.size());
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    if (std::isnan(predicted[s])) throw ArgumentError("rank_seeds: NaN prediction");
    ranking.entries.push_back({seed_ids[s], predicted[s], s});
  }
  std::stable_sort(ranking.entries.begin(), ranking.entries.end(),
                   [](const RankedSeed& a, const RankedSeed& b) { return a.predicted_gap > b.predicted_gap; });
  ranking.keep_original =
      std::all_of(predicted.begin(), predicted.end(), [](double v) { return v <= 0.0; });
  return ranking;
}

BaselineVector baseline_vector(const GapMatrix& gaps, std::optional<double> empty_column_value) {
  BaselineVector b;
  b.seed_ids = gaps.seed_ids();
  b.mean_gaps.resize(gaps.cols());
  for (std::size_t s = 0; s < gaps.cols(); ++s) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t g = 0; g < gaps.rows(); ++g) {
      if (const auto v = gaps.gap(g, s)) {
        sum += *v;
        ++n;
      }
    }
    if (n == 0 && empty_column_value) {
      b.mean_gaps[s] = *empty_column_value;
      continue;
    }
    if (n == 0) throw ArgumentError("baseline_vector: seed '" + gaps.seed_ids()[s] + "' has no observed gap");
    b.mean_gaps[s] = sum / static_cast<double>(n);
  }
  return b;
}

void save_selector(const SelectorModel& model, const std::filesystem::path& path) {
  const auto& net = model.net();
  nn::save_blob(path, net.parameters());
  nlohmann::json manifest = {{"kind", "selector"},
                             {"tag", "R"},
                             {"architecture", net.architecture()},
                             {"backbone", net.backbone().name},
                             {"input_size", {net.input_size().height, net.input_size().width}},
                             {"seed_ids", model.seed_ids()}};
  if (model.training) {
    manifest["rng_seed"] = model.training->rng_seed;
    manifest["training"] = *model.training;
  }
  std::ofstream out(manifest_path(path), std::ios::trunc);
  if (!out) throw IoError("cannot write " + manifest_path(path).string());
  out << manifest.dump(2) << '\n';
}

SelectorModel load_selector(const std::filesystem::path& path) {
  std::ifstream in(manifest_path(path));
  if (!in) throw NotFoundError("selector manifest not found: " + manifest_path(path).string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed selector manifest: " + std::string(e.what()));
  }
  if (!manifest.contains("seed_ids") || !manifest["seed_ids"].is_array()) {
    throw IoError("selector checkpoint " + path.string() + " has no seed binding");
  }
  auto seed_ids = manifest["seed_ids"].get<std::vector<std::string>>();
  const Size input{manifest.at("input_size").at(0).get<int>(), manifest.at("input_size").at(1).get<int>()};
  ConvRegressor net(backbone_by_name(manifest.at("backbone").get<std::string>()), input,
                    static_cast<int>(seed_ids.size()), Head::kLinear);
  net.set_parameters(nn::load_blob(path));
  SelectorModel model(std::move(net), std::move(seed_ids));
  if (manifest.contains("training")) model.training = manifest["training"].get<TrainConfig>();
  return model;
}

}  // namespace scube
