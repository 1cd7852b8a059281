#include "scube/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "scube/errors.hpp"

namespace scube {
namespace {

constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;
// Largest per-pixel population std over three channels in [0,1], e.g. (1,0,0).
const double kMaxChannelStd = std::sqrt(2.0) / 3.0;

std::filesystem::path manifest_path(const std::filesystem::path& path) {
  return path.string() + ".json";
}

}  // namespace

double brightness(const ImageTensor& image) {
  const auto px = image.pixels();
  const std::size_t plane = px.size() / 3;
  double sum = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    sum += kLumaR * px[i] + kLumaG * px[plane + i] + kLumaB * px[2 * plane + i];
  }
  return std::clamp(sum / static_cast<double>(plane), 0.0, 1.0);
}

double colorfulness(const ImageTensor& image) {
  const auto px = image.pixels();
  const std::size_t plane = px.size() / 3;
  double sum = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    const double r = px[i], g = px[plane + i], b = px[2 * plane + i];
    const double mean = (r + g + b) / 3.0;
    const double var = ((r - mean) * (r - mean) + (g - mean) * (g - mean) + (b - mean) * (b - mean)) / 3.0;
    sum += std::sqrt(var);
  }
  return std::clamp(sum / static_cast<double>(plane) / kMaxChannelStd, 0.0, 1.0);
}

ScorerModel ScorerModel::oracle(OracleKind kind) {
  ScorerModel m;
  m.oracle_ = kind;
  m.tag_ = kind == OracleKind::kBrightness ? "brightness" : "colorfulness";
  return m;
}

ScorerModel ScorerModel::network(std::string tag, ConvRegressor net) {
  if (net.head() != Head::kSigmoid || net.outputs() != 1) {
    throw ArgumentError("scorer network needs a single sigmoid output");
  }
  ScorerModel m;
  m.tag_ = std::move(tag);
  m.net_.emplace(std::move(net));
  return m;
}

ScorerModel ScorerModel::resolve(const std::string& spec) {
  if (spec == "oracle:brightness") return oracle(OracleKind::kBrightness);
  if (spec == "oracle:colorfulness") return oracle(OracleKind::kColorfulness);
  if (spec.starts_with("oracle:")) throw ArgumentError("unknown oracle scorer '" + spec + "'");
  return load_scorer(spec);
}

Size ScorerModel::input_size() const noexcept {
  return net_ ? net_->input_size() : Size{224, 224};
}

std::string ScorerModel::architecture() const {
  if (oracle_) return "oracle:" + tag_;
  return net_->architecture();
}

double ScorerModel::predict(const ImageTensor& image) const {
  if (image.empty()) throw ArgumentError("cannot score an empty image");
  if (oracle_) {
    return *oracle_ == OracleKind::kBrightness ? brightness(image) : colorfulness(image);
  }
  return net_->predict(image)[0];
}

ScoredDataset::ScoredDataset(std::vector<ScoredItem> items) {
  for (auto& it : items) add(std::move(it.image), it.memorability);
}

void ScoredDataset::add(ImageTensor image, double memorability) {
  if (!(memorability >= 0.0 && memorability <= 1.0)) throw ArgumentError("memorability label outside [0,1]");
  if (image.empty()) throw ArgumentError("empty image in scored dataset");
  items_.push_back({std::move(image), memorability});
}

double mean_squared_error(const ScorerModel& model, const ScoredDataset& data) {
  if (data.empty()) throw ArgumentError("empty dataset");
  double sum = 0.0;
  for (const auto& it : data.items()) {
    const double d = model.predict(it.image) - it.memorability;
    sum += d * d;
  }
  return sum / static_cast<double>(data.size());
}

ScorerModel train_scorer(const ScoredDataset& data, const TrainConfig& config, const ScorerSpec& spec) {
  if (data.empty()) throw ArgumentError("train_scorer: empty dataset");
  if (config.batch_size == 0) throw ArgumentError("train_scorer: batch size must be positive");

  ConvRegressor net(backbone_by_name(config.backbone), spec.input_size, 1, Head::kSigmoid);
  net.initialize(config.rng_seed);

  std::vector<nn::Tensor> inputs;
  std::vector<double> labels;
  inputs.reserve(data.size());
  for (const auto& it : data.items()) {
    inputs.push_back(net.prepare(it.image));
    labels.push_back(it.memorability);
  }
  auto dataset_mse = [&](const ConvRegressor& n) {
    double s = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const double d = n.forward(inputs[i])[0] - labels[i];
      s += d * d;
    }
    return s / static_cast<double>(inputs.size());
  };

  const std::vector<double> initial(net.parameters().begin(), net.parameters().end());
  const double initial_mse = dataset_mse(net);

  std::mt19937_64 rng(config.rng_seed ^ 0x5c0a3e11ULL);
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  nn::SgdMomentum opt(net.parameters().size(), config.learning_rate, config.momentum);
  std::vector<double> grads(net.parameters().size());
  const std::size_t batch = std::min(config.batch_size, inputs.size());

  for (std::size_t iter = 0; iter < config.iterations; ++iter) {
    std::fill(grads.begin(), grads.end(), 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const std::size_t i = order[cursor++];
      const double scale = 2.0 / static_cast<double>(batch);
      net.forward_backward(
          inputs[i],
          [&](const Eigen::VectorXd& y) { return Eigen::VectorXd::Constant(1, scale * (y[0] - labels[i])); }, grads);
    }
    opt.step(net.parameters(), grads);
  }

  if (!(dataset_mse(net) <= initial_mse)) net.set_parameters(initial);

  ScorerModel model = ScorerModel::network(spec.tag, std::move(net));
  model.training = config;
  return model;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_halves_indices(std::size_t n,
                                                                                   std::uint64_t rng_seed) {
  if (n < 2) throw ArgumentError("split_halves needs at least two items");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(rng_seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t half = n / 2;
  return {std::vector<std::size_t>(order.begin(), order.begin() + half),
          std::vector<std::size_t>(order.begin() + half, order.begin() + 2 * half)};
}

std::pair<ScoredDataset, ScoredDataset> split_halves(const ScoredDataset& data, std::uint64_t rng_seed) {
  const auto [a, b] = split_halves_indices(data.size(), rng_seed);
  ScoredDataset first, second;
  for (auto i : a) first.add(data.items()[i].image, data.items()[i].memorability);
  for (auto i : b) second.add(data.items()[i].image, data.items()[i].memorability);
  return {std::move(first), std::move(second)};
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && values[idx[j]] == values[idx[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[idx[k]] = rank;
    i = j;
  }
  return ranks;
}

double rank_correlation(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) throw ArgumentError("rank_correlation: length mismatch");
  if (predicted.size() < 2) throw ArgumentError("rank_correlation: need at least two values");
  for (double v : predicted) {
    if (!std::isfinite(v)) throw ArgumentError("rank_correlation: non-finite value");
  }
  for (double v : actual) {
    if (!std::isfinite(v)) throw ArgumentError("rank_correlation: non-finite value");
  }
  const auto rp = average_ranks(predicted);
  const auto ra = average_ranks(actual);
  const double n = static_cast<double>(rp.size());
  const double mean = (n + 1.0) / 2.0;
  double cov = 0.0, vp = 0.0, va = 0.0;
  for (std::size_t i = 0; i < rp.size(); ++i) {
    cov += (rp[i] - mean) * (ra[i] - mean);
    vp += (rp[i] - mean) * (rp[i] - mean);
    va += (ra[i] - mean) * (ra[i] - mean);
  }
  if (vp == 0.0 || va == 0.0) return 0.0;
  return std::clamp(cov / std::sqrt(vp * va), -1.0, 1.0);
}

void save_scorer(const ScorerModel& model, const std::filesystem::path& path) {
  nlohmann::json manifest = {{"kind", "scorer"}, {"tag", model.tag()}, {"architecture", model.architecture()}};
  if (const auto* net = model.net()) {
    manifest["input_size"] = {net->input_size().height, net->input_size().width};
    manifest["backbone"] = net->backbone().name;
    nn::save_blob(path, net->parameters());
  }
  if (model.training) {
    manifest["rng_seed"] = model.training->rng_seed;
    manifest["training"] = *model.training;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(manifest_path(path), std::ios::trunc);
  if (!out) throw IoError("cannot write " + manifest_path(path).string());
  out << manifest.dump(2) << '\n';
}

ScorerModel load_scorer(const std::filesystem::path& path) {
  std::ifstream in(manifest_path(path));
  if (!in) throw NotFoundError("scorer manifest not found: " + manifest_path(path).string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed scorer manifest " + manifest_path(path).string() + ": " + e.what());
  }
  const std::string arch = manifest.at("architecture").get<std::string>();
  if (arch.starts_with("oracle:")) return ScorerModel::resolve(arch);

  const Size input{manifest.at("input_size").at(0).get<int>(), manifest.at("input_size").at(1).get<int>()};
  ConvRegressor net(backbone_by_name(manifest.at("backbone").get<std::string>()), input, 1, Head::kSigmoid);
  net.set_parameters(nn::load_blob(path));
  ScorerModel model = ScorerModel::network(manifest.at("tag").get<std::string>(), std::move(net));
  if (manifest.contains("training")) model.training = manifest["training"].get<TrainConfig>();
  return model;
}

}  // namespace scube
