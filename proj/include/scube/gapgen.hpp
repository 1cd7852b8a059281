#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scube/catalog.hpp"
#include "scube/image.hpp"
#include "scube/scorer.hpp"

namespace scube {

/// Row-major binary matrix: rows are images, columns are seeds.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t rows, std::size_t cols, bool value = false)
      : rows_(rows), cols_(cols), bits_(rows * cols, value ? 1 : 0) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool at(std::size_t r, std::size_t c) const { return bits_.at(r * cols_ + c) != 0; }
  void set(std::size_t r, std::size_t c, bool v) { bits_.at(r * cols_ + c) = v ? 1 : 0; }
  std::size_t count() const;
  double density() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Provenance recorded in the gap dataset header.
struct GapProvenance {
  double omega_target = 1.0;
  std::uint64_t rng_seed = 0;
  std::string scorer_tag;
  double alpha = 0.0;

  friend bool operator==(const GapProvenance&, const GapProvenance&) = default;
};

/// G x S memorability gaps with explicit absence for unobserved pairs.
class GapMatrix {
 public:
  GapMatrix() = default;
  GapMatrix(std::vector<std::string> image_ids, std::vector<std::string> seed_ids);

  std::size_t rows() const noexcept { return image_ids_.size(); }
  std::size_t cols() const noexcept { return seed_ids_.size(); }
  const std::vector<std::string>& image_ids() const noexcept { return image_ids_; }
  const std::vector<std::string>& seed_ids() const noexcept { return seed_ids_; }

  std::optional<double> gap(std::size_t g, std::size_t s) const { return cells_.at(g * cols() + s); }
  bool observed(std::size_t g, std::size_t s) const { return cells_.at(g * cols() + s).has_value(); }

  /// Gap must lie in [-1, 1].
  void set(std::size_t g, std::size_t s, double gap);
  void erase(std::size_t g, std::size_t s) { cells_.at(g * cols() + s).reset(); }

  std::size_t observed_count() const;
  /// Realized density: observed / (G * S).
  double omega_bar() const;
  BinaryMask mask() const;

  /// Matrix restricted to the given rows / columns, in the given order.
  GapMatrix select_rows(std::span<const std::size_t> rows) const;
  GapMatrix select_cols(std::span<const std::size_t> cols) const;

  /// Observed gap values of row g with a parallel 0/1 mask (zeros where unobserved).
  void row(std::size_t g, std::span<double> gaps, std::span<double> mask) const;

  GapProvenance provenance;

  friend bool operator==(const GapMatrix&, const GapMatrix&) = default;

 private:
  std::vector<std::string> image_ids_;
  std::vector<std::string> seed_ids_;
  std::vector<std::optional<double>> cells_;
};

/// scorer(synthesized) - scorer(original).
double compute_gap(const ImageTensor& original, const ImageTensor& synthesized, const ScorerModel& scorer);

/// i.i.d. Bernoulli(omega_target) entries from a seeded generator; rows may be empty.
BinaryMask sample_mask(std::size_t rows, std::size_t cols, double omega_target, std::uint64_t rng_seed);

using SynthesisFn = std::function<ImageTensor(const ImageTensor& image, const StyleSeed& seed)>;

struct GapBuildOptions {
  /// Line-delimited gap file; empty disables persistence. An existing file with
  /// an identical header is resumed.
  std::filesystem::path output;
  std::size_t workers = 1;
  GapProvenance provenance;
  /// Receives warnings (failed pairs) and progress lines.
  std::function<void(const std::string&)> log;
};

/// Synthesizes and scores exactly the masked pairs. A pair whose synthesis
/// throws is left unobserved and reported through options.log.
GapMatrix build_gap_dataset(std::span<const ImageTensor> images, std::span<const std::string> image_ids,
                            const SeedCatalog& catalog, const ScorerModel& scorer, const SynthesisFn& synth,
                            const BinaryMask& mask, const GapBuildOptions& options = {});

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Seeded shuffle of [0, n) then contiguous 8:1:1 slicing (validation and test
/// take floor(n/10) each, train the rest). Requires n >= 10.
DatasetSplit split_dataset(std::size_t n, std::uint64_t rng_seed);

template <typename T>
std::vector<T> take(std::span<const T> items, std::span<const std::size_t> indices) {
  std::vector<T> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(items[i]);
  return out;
}

void save_gap_matrix(const GapMatrix& gaps, const std::filesystem::path& path);
GapMatrix load_gap_matrix(const std::filesystem::path& path);

/// Analytic synthesizers for reproducible pipelines. `shift` adds
/// (brightness(seed) - 0.5) to every channel; `pull` adds
/// strength * (brightness(seed) - brightness(image)). Results are clamped.
SynthesisFn brightness_shift_synthesizer();
SynthesisFn brightness_pull_synthesizer(double strength = 0.5);

}  // namespace scube
