#include "scube/catalog.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include <json.hpp>

#include "scube/errors.hpp"
#include "scube/scorer.hpp"

namespace scube {

SeedCatalog::SeedCatalog(std::vector<StyleSeed> seeds, std::filesystem::path root)
    : seeds_(std::move(seeds)), root_(std::move(root)) {
  std::set<std::string> ids;
  for (const auto& s : seeds_) {
    if (s.seed_id.empty()) throw ArgumentError("seed id must not be empty");
    if (!ids.insert(s.seed_id).second) throw ArgumentError("duplicate seed id '" + s.seed_id + "'");
    if (!(s.memorability >= 0.0 && s.memorability <= 1.0)) {
      throw ArgumentError("seed '" + s.seed_id + "' memorability outside [0,1]");
    }
  }
}

std::optional<std::size_t> SeedCatalog::index_of(const std::string& seed_id) const {
  for (std::size_t i = 0; i < seeds_.size(); ++i) {
    if (seeds_[i].seed_id == seed_id) return i;
  }
  return std::nullopt;
}

std::vector<std::string> SeedCatalog::seed_ids() const {
  std::vector<std::string> ids;
  ids.reserve(seeds_.size());
  for (const auto& s : seeds_) ids.push_back(s.seed_id);
  return ids;
}

std::optional<std::filesystem::path> SeedCatalog::model_path(std::size_t index) const {
  const auto& ref = seeds_.at(index).model_ref;
  if (!ref) return std::nullopt;
  return root_ / *ref;
}

void SeedCatalog::set_model_ref(std::size_t index, std::string model_ref) {
  seeds_.at(index).model_ref = std::move(model_ref);
}

SeedCatalog SeedCatalog::subset(std::span<const std::size_t> indices) const {
  std::vector<StyleSeed> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(seeds_.at(i));
  return SeedCatalog(std::move(out), root_);
}

SeedCatalog select_seed_pool(std::span<const ImageTensor> candidates, const ScorerModel& scorer, std::size_t k,
                             std::span<const std::string> ids) {
  if (k < 1) throw ArgumentError("select_seed_pool: k must be at least 1");
  if (candidates.size() < 2 * k) {
    throw ArgumentError("select_seed_pool: need at least " + std::to_string(2 * k) + " candidates, got " +
                        std::to_string(candidates.size()));
  }
  if (!ids.empty() && ids.size() != candidates.size()) throw ArgumentError("select_seed_pool: id count mismatch");

  std::vector<double> scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) scores[i] = scorer.predict(candidates[i]);

  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<std::size_t> picked(order.begin(), order.begin() + k);
  picked.insert(picked.end(), order.end() - k, order.end());

  std::vector<StyleSeed> seeds;
  seeds.reserve(picked.size());
  for (auto i : picked) {
    std::string id;
    if (!ids.empty()) {
      id = ids[i];
    } else {
      char buf[32];
      std::snprintf(buf, sizeof buf, "seed-%03zu", i);
      id = buf;
    }
    seeds.push_back({std::move(id), candidates[i], scores[i], std::nullopt});
  }
  return SeedCatalog(std::move(seeds));
}

void save_catalog(SeedCatalog& catalog, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "images");
  std::ofstream manifest(dir / "manifest.jsonl", std::ios::trunc);
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.jsonl").string());
  for (const auto& s : catalog.seeds()) {
    const std::string rel = "images/" + s.seed_id + ".png";
    save_png(s.image, dir / rel);
    nlohmann::json rec = {{"seed_id", s.seed_id}, {"path", rel}, {"memorability", s.memorability}};
    if (s.model_ref) rec["model_ref"] = *s.model_ref;
    manifest << rec.dump() << '\n';
  }
  catalog = SeedCatalog(catalog.seeds(), dir);
}

SeedCatalog load_catalog(const std::filesystem::path& dir, std::optional<Size> size) {
  std::ifstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw NotFoundError("seed catalog manifest not found in " + dir.string());
  std::vector<StyleSeed> seeds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      StyleSeed s;
      s.seed_id = rec.at("seed_id").get<std::string>();
      const auto path = dir / rec.at("path").get<std::string>();
      s.image = size ? load_image(path, *size) : load_image(path);
      s.memorability = rec.at("memorability").get<double>();
      if (rec.contains("model_ref") && !rec["model_ref"].is_null()) s.model_ref = rec["model_ref"].get<std::string>();
      seeds.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("catalog manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return SeedCatalog(std::move(seeds), dir);
}

}  // namespace scube
