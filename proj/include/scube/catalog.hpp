#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scube/image.hpp"

namespace scube {

class ScorerModel;

struct StyleSeed {
  std::string seed_id;
  ImageTensor image;
  double memorability = 0.0;
  /// Checkpoint of a trained per-seed network, relative to the catalog directory.
  std::optional<std::string> model_ref;
};

/// Ordered seed set; the position of a seed is its column in every gap matrix
/// built against this catalog.
class SeedCatalog {
 public:
  SeedCatalog() = default;
  explicit SeedCatalog(std::vector<StyleSeed> seeds, std::filesystem::path root = {});

  std::size_t size() const noexcept { return seeds_.size(); }
  bool empty() const noexcept { return seeds_.empty(); }
  const std::vector<StyleSeed>& seeds() const noexcept { return seeds_; }
  const StyleSeed& at(std::size_t index) const { return seeds_.at(index); }
  std::optional<std::size_t> index_of(const std::string& seed_id) const;
  std::vector<std::string> seed_ids() const;

  /// Directory the catalog was loaded from or saved to; model_ref paths resolve against it.
  const std::filesystem::path& root() const noexcept { return root_; }
  std::optional<std::filesystem::path> model_path(std::size_t index) const;

  void set_model_ref(std::size_t index, std::string model_ref);

  /// Catalog restricted to `indices`, in the given order.
  SeedCatalog subset(std::span<const std::size_t> indices) const;

 private:
  std::vector<StyleSeed> seeds_;
  std::filesystem::path root_;
};

/// Scores every candidate and keeps the k highest and k lowest scoring ones.
/// Candidates are ordered by (score descending, index ascending); the first k
/// and last k of that order form the catalog, in that order. Seed ids come
/// from `ids` when given, else "seed-NNN" from the candidate index.
SeedCatalog select_seed_pool(std::span<const ImageTensor> candidates, const ScorerModel& scorer, std::size_t k,
                             std::span<const std::string> ids = {});

/// Writes `dir/images/<seed_id>.png` and `dir/manifest.jsonl` (one record per seed:
/// seed_id, path, memorability, optional model_ref). Sets the catalog root to `dir`.
void save_catalog(SeedCatalog& catalog, const std::filesystem::path& dir);

/// Loads a catalog directory; images are resized to `size` when given.
SeedCatalog load_catalog(const std::filesystem::path& dir, std::optional<Size> size = std::nullopt);

}  // namespace scube
