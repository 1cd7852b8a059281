#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scube/gapgen.hpp"
#include "scube/image.hpp"
#include "scube/regressor.hpp"

namespace scube {

/// Image -> S-vector of predicted memorability gaps. Output component s is
/// bound to seed_ids()[s], the catalog order the training gaps were built with.
class SelectorModel {
 public:
  SelectorModel(ConvRegressor net, std::vector<std::string> seed_ids);

  /// Freshly initialized (untrained) model.
  static SelectorModel create(const std::string& backbone, Size input_size, std::vector<std::string> seed_ids,
                              std::uint64_t rng_seed);

  const std::vector<std::string>& seed_ids() const noexcept { return seed_ids_; }
  std::size_t output_dim() const noexcept { return seed_ids_.size(); }
  Size input_size() const noexcept { return net_.input_size(); }
  const ConvRegressor& net() const noexcept { return net_; }
  ConvRegressor& net() noexcept { return net_; }

  std::vector<double> predict(const ImageTensor& image) const;

  std::optional<TrainConfig> training;
  /// Validation loss at each check during training (empty without validation data).
  std::vector<double> validation_history;

 private:
  ConvRegressor net_;
  std::vector<std::string> seed_ids_;
};

inline std::vector<double> predict_gaps(const SelectorModel& model, const ImageTensor& image) {
  return model.predict(image);
}

/// sum_s mask[s] * (predicted[s] - target[s])^2. Mask entries must be 0 or 1.
double masked_loss(std::span<const double> predicted, std::span<const double> target, std::span<const double> mask);

/// d masked_loss / d predicted = 2 * mask * (predicted - target); exactly 0 where mask is 0.
void masked_loss_gradient(std::span<const double> predicted, std::span<const double> target,
                          std::span<const double> mask, std::span<double> grad);

/// Mean squared error per observed entry of `gaps` (0 when nothing is observed).
double validation_loss(const SelectorModel& model, const GapMatrix& gaps, const ImageStore& images);

/// Mini-batch SGD with momentum on the masked loss averaged over the batch.
/// With validation data, keeps the parameters of the best validation check and
/// stops after `patience` checks without improvement.
SelectorModel train_selector(const GapMatrix& gaps, const ImageStore& images, const TrainConfig& config,
                             Size input_size, const GapMatrix* validation = nullptr);

struct RankedSeed {
  std::string seed_id;
  double predicted_gap = 0.0;
  std::size_t catalog_index = 0;

  friend bool operator==(const RankedSeed&, const RankedSeed&) = default;
};

struct SeedRanking {
  std::vector<RankedSeed> entries;
  /// True iff every predicted gap is <= 0.
  bool keep_original = false;

  /// First q entries; keep_original is unchanged.
  SeedRanking top(std::size_t q) const;
};

/// Descending by predicted gap, ties by catalog index ascending.
SeedRanking rank_seeds(std::span<const double> predicted, std::span<const std::string> seed_ids);

struct BaselineVector {
  std::vector<double> mean_gaps;
  std::vector<std::string> seed_ids;
};

/// Column means over observed entries. A column with no observed entry takes
/// `empty_column_value` when given; otherwise ArgumentError names the seed.
BaselineVector baseline_vector(const GapMatrix& gaps, std::optional<double> empty_column_value = std::nullopt);

/// The baseline is image-independent: it returns the mean gaps as is.
inline std::vector<double> baseline_predict(const BaselineVector& baseline) { return baseline.mean_gaps; }

void save_selector(const SelectorModel& model, const std::filesystem::path& path);
/// Throws IoError when the manifest has no seed binding.
SelectorModel load_selector(const std::filesystem::path& path);

}  // namespace scube
