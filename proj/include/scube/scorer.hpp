#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scube/image.hpp"
#include "scube/regressor.hpp"

namespace scube {

/// Mean Rec.601 luma, in [0, 1].
double brightness(const ImageTensor& image);

/// Mean per-pixel standard deviation across R, G, B, divided by its maximum
/// attainable value sqrt(2)/3 so the result spans [0, 1].
double colorfulness(const ImageTensor& image);

enum class OracleKind { kBrightness, kColorfulness };

/// Memorability regressor: either a trained convolutional model with a sigmoid
/// output or one of the analytic oracles. Immutable once trained.
class ScorerModel {
 public:
  static ScorerModel oracle(OracleKind kind);
  static ScorerModel network(std::string tag, ConvRegressor net);

  /// Parses "oracle:brightness", "oracle:colorfulness", or a checkpoint path.
  static ScorerModel resolve(const std::string& spec);

  const std::string& tag() const noexcept { return tag_; }
  Size input_size() const noexcept;
  std::string architecture() const;
  bool is_oracle() const noexcept { return oracle_.has_value(); }

  /// In [0, 1]; a pure function of (model, image).
  double predict(const ImageTensor& image) const;

  const ConvRegressor* net() const noexcept { return net_ ? &*net_ : nullptr; }

  /// Provenance written to the checkpoint manifest.
  std::optional<TrainConfig> training;

 private:
  ScorerModel() = default;

  std::string tag_;
  std::optional<OracleKind> oracle_;
  std::optional<ConvRegressor> net_;
};

inline double predict_score(const ScorerModel& model, const ImageTensor& image) { return model.predict(image); }

struct ScoredItem {
  ImageTensor image;
  double memorability = 0.0;
};

/// Images annotated with memorability labels in [0, 1].
class ScoredDataset {
 public:
  ScoredDataset() = default;
  explicit ScoredDataset(std::vector<ScoredItem> items);

  void add(ImageTensor image, double memorability);
  const std::vector<ScoredItem>& items() const noexcept { return items_; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }

 private:
  std::vector<ScoredItem> items_;
};

struct ScorerSpec {
  std::string tag = "M";
  Size input_size{224, 224};
};

/// Mini-batch SGD with momentum on mean squared error. If the final training
/// error is above the error at initialization, the initial weights are kept.
ScorerModel train_scorer(const ScoredDataset& data, const TrainConfig& config, const ScorerSpec& spec = {});

double mean_squared_error(const ScorerModel& model, const ScoredDataset& data);

/// Seeded shuffle into two equal, disjoint halves (the internal/external
/// scorer protocol). With an odd count the last shuffled item is left out.
std::pair<ScoredDataset, ScoredDataset> split_halves(const ScoredDataset& data, std::uint64_t rng_seed);

/// Index form of split_halves, for datasets kept on disk.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_halves_indices(std::size_t n,
                                                                                   std::uint64_t rng_seed);

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman correlation computed as Pearson correlation of average ranks.
/// Returns 0 when either input is constant.
double rank_correlation(std::span<const double> predicted, std::span<const double> actual);

/// Writes `<path>` (parameter blob) and `<path>.json` (manifest). Oracle
/// scorers write only the manifest.
void save_scorer(const ScorerModel& model, const std::filesystem::path& path);
ScorerModel load_scorer(const std::filesystem::path& path);

}  // namespace scube
