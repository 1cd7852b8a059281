#include "scube/gapgen.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <thread>
#include <unordered_map>

#include <json.hpp>

#include "scube/errors.hpp"

namespace scube {

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

double BinaryMask::density() const {
  if (bits_.empty()) return 0.0;
  return static_cast<double>(count()) / static_cast<double>(bits_.size());
}

GapMatrix::GapMatrix(std::vector<std::string> image_ids, std::vector<std::string> seed_ids)
    : image_ids_(std::move(image_ids)), seed_ids_(std::move(seed_ids)), cells_(image_ids_.size() * seed_ids_.size()) {}

void GapMatrix::set(std::size_t g, std::size_t s, double gap) {
  if (!(gap >= -1.0 && gap <= 1.0)) throw ArgumentError("gap outside [-1,1]");
  cells_.at(g * cols() + s) = gap;
}

std::size_t GapMatrix::observed_count() const {
  return static_cast<std::size_t>(std::count_if(cells_.begin(), cells_.end(), [](const auto& c) { return c.has_value(); }));
}

double GapMatrix::omega_bar() const {
  if (cells_.empty()) return 0.0;
  return static_cast<double>(observed_count()) / static_cast<double>(cells_.size());
}

BinaryMask GapMatrix::mask() const {
  BinaryMask m(rows(), cols());
  for (std::size_t g = 0; g < rows(); ++g) {
    for (std::size_t s = 0; s < cols(); ++s) m.set(g, s, observed(g, s));
  }
  return m;
}

GapMatrix GapMatrix::select_rows(std::span<const std::size_t> rows_idx) const {
  std::vector<std::string> ids;
  for (auto g : rows_idx) ids.push_back(image_ids_.at(g));
  GapMatrix out(std::move(ids), seed_ids_);
  out.provenance = provenance;
  for (std::size_t i = 0; i < rows_idx.size(); ++i) {
    for (std::size_t s = 0; s < cols(); ++s) out.cells_[i * cols() + s] = gap(rows_idx[i], s);
  }
  return out;
}

GapMatrix GapMatrix::select_cols(std::span<const std::size_t> cols_idx) const {
  std::vector<std::string> ids;
  for (auto s : cols_idx) ids.push_back(seed_ids_.at(s));
  GapMatrix out(image_ids_, std::move(ids));
  out.provenance = provenance;
  for (std::size_t g = 0; g < rows(); ++g) {
    for (std::size_t j = 0; j < cols_idx.size(); ++j) out.cells_[g * cols_idx.size() + j] = gap(g, cols_idx[j]);
  }
  return out;
}

void GapMatrix::row(std::size_t g, std::span<double> gaps, std::span<double> mask) const {
  for (std::size_t s = 0; s < cols(); ++s) {
    const auto& c = cells_.at(g * cols() + s);
    gaps[s] = c.value_or(0.0);
    mask[s] = c ? 1.0 : 0.0;
  }
}

double compute_gap(const ImageTensor& original, const ImageTensor& synthesized, const ScorerModel& scorer) {
  return std::clamp(scorer.predict(synthesized) - scorer.predict(original), -1.0, 1.0);
}

BinaryMask sample_mask(std::size_t rows, std::size_t cols, double omega_target, std::uint64_t rng_seed) {
  if (!(omega_target > 0.0 && omega_target <= 1.0)) throw ArgumentError("omega_target must lie in (0, 1]");
  BinaryMask m(rows, cols);
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) m.set(r, c, u(rng) < omega_target);
  }
  return m;
}

namespace {

nlohmann::json header_json(const GapMatrix& gaps) {
  return {{"image_ids", gaps.image_ids()},
          {"seed_ids", gaps.seed_ids()},
          {"omega_target", gaps.provenance.omega_target},
          {"rng_seed", gaps.provenance.rng_seed},
          {"scorer_tag", gaps.provenance.scorer_tag},
          {"alpha", gaps.provenance.alpha}};
}

GapMatrix from_header(const nlohmann::json& h) {
  GapMatrix gaps(h.at("image_ids").get<std::vector<std::string>>(), h.at("seed_ids").get<std::vector<std::string>>());
  gaps.provenance.omega_target = h.at("omega_target").get<double>();
  gaps.provenance.rng_seed = h.at("rng_seed").get<std::uint64_t>();
  gaps.provenance.scorer_tag = h.at("scorer_tag").get<std::string>();
  gaps.provenance.alpha = h.at("alpha").get<double>();
  return gaps;
}

std::string record_line(const GapMatrix& gaps, std::size_t g, std::size_t s) {
  return nlohmann::json{{"image_id", gaps.image_ids()[g]}, {"seed_id", gaps.seed_ids()[s]}, {"gap", *gaps.gap(g, s)}}
      .dump();
}

// Reads header + records; a truncated trailing line (interrupted write) is ignored
// when `tolerate_tail` is set.
GapMatrix read_gap_file(const std::filesystem::path& path, bool tolerate_tail) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("gap dataset not found: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("gap dataset is empty: " + path.string());
  GapMatrix gaps;
  try {
    gaps = from_header(nlohmann::json::parse(line));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed gap dataset header in " + path.string() + ": " + e.what());
  }
  std::unordered_map<std::string, std::size_t> image_index, seed_index;
  for (std::size_t i = 0; i < gaps.rows(); ++i) image_index.emplace(gaps.image_ids()[i], i);
  for (std::size_t i = 0; i < gaps.cols(); ++i) seed_index.emplace(gaps.seed_ids()[i], i);

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      if (tolerate_tail && in.peek() == std::char_traits<char>::eof()) break;
      throw IoError("malformed gap record at line " + std::to_string(line_no) + " of " + path.string());
    }
    const auto gi = image_index.find(rec.at("image_id").get<std::string>());
    const auto si = seed_index.find(rec.at("seed_id").get<std::string>());
    if (gi == image_index.end() || si == seed_index.end()) {
      throw IoError("gap record at line " + std::to_string(line_no) + " names an id missing from the header");
    }
    gaps.set(gi->second, si->second, rec.at("gap").get<double>());
  }
  return gaps;
}

}  // namespace

GapMatrix build_gap_dataset(std::span<const ImageTensor> images, std::span<const std::string> image_ids,
                            const SeedCatalog& catalog, const ScorerModel& scorer, const SynthesisFn& synth,
                            const BinaryMask& mask, const GapBuildOptions& options) {
  if (image_ids.size() != images.size()) throw ArgumentError("build_gap_dataset: image id count mismatch");
  if (mask.rows() != images.size() || mask.cols() != catalog.size()) {
    throw ArgumentError("build_gap_dataset: mask is " + std::to_string(mask.rows()) + "x" +
                        std::to_string(mask.cols()) + ", expected " + std::to_string(images.size()) + "x" +
                        std::to_string(catalog.size()));
  }
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };

  GapMatrix gaps(std::vector<std::string>(image_ids.begin(), image_ids.end()), catalog.seed_ids());
  gaps.provenance = options.provenance;
  if (gaps.provenance.scorer_tag.empty()) gaps.provenance.scorer_tag = scorer.tag();

  std::ofstream out;
  if (!options.output.empty()) {
    if (std::filesystem::exists(options.output)) {
      try {
        GapMatrix previous = read_gap_file(options.output, true);
        if (header_json(previous) == header_json(gaps)) {
          for (std::size_t g = 0; g < gaps.rows(); ++g) {
            for (std::size_t s = 0; s < gaps.cols(); ++s) {
              if (mask.at(g, s) && previous.observed(g, s)) gaps.set(g, s, *previous.gap(g, s));
            }
          }
          log("resuming " + options.output.string() + " with " + std::to_string(gaps.observed_count()) +
              " completed pairs");
        }
      } catch (const std::exception& e) {
        log(std::string("ignoring unreadable partial gap file: ") + e.what());
      }
    }
    if (options.output.has_parent_path()) std::filesystem::create_directories(options.output.parent_path());
    // Rewrite canonically: header followed by the already-completed records.
    save_gap_matrix(gaps, options.output);
    out.open(options.output, std::ios::app);
    if (!out) throw IoError("cannot append to " + options.output.string());
  }

  const std::size_t workers = std::max<std::size_t>(1, options.workers);
  for (std::size_t g = 0; g < gaps.rows(); ++g) {
    std::vector<std::size_t> pending;
    for (std::size_t s = 0; s < gaps.cols(); ++s) {
      if (mask.at(g, s) && !gaps.observed(g, s)) pending.push_back(s);
    }
    if (pending.empty()) continue;

    const double base = scorer.predict(images[g]);
    std::vector<std::optional<double>> results(pending.size());
    std::vector<std::string> errors(pending.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
      for (std::size_t k = next++; k < pending.size(); k = next++) {
        try {
          const ImageTensor synthesized = synth(images[g], catalog.at(pending[k]));
          results[k] = std::clamp(scorer.predict(synthesized) - base, -1.0, 1.0);
        } catch (const std::exception& e) {
          errors[k] = e.what();
        }
      }
    };
    if (workers == 1 || pending.size() == 1) {
      work();
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < std::min(workers, pending.size()); ++w) pool.emplace_back(work);
    }

    for (std::size_t k = 0; k < pending.size(); ++k) {
      if (results[k]) {
        gaps.set(g, pending[k], *results[k]);
        if (out.is_open()) out << record_line(gaps, g, pending[k]) << '\n';
      } else {
        log("warning: synthesis failed for image '" + gaps.image_ids()[g] + "' seed '" +
            gaps.seed_ids()[pending[k]] + "': " + errors[k] + "; pair left unobserved");
      }
    }
    if (out.is_open()) out.flush();
    log("row " + std::to_string(g + 1) + "/" + std::to_string(gaps.rows()) + " done");
  }
  return gaps;
}

DatasetSplit split_dataset(std::size_t n, std::uint64_t rng_seed) {
  if (n < 10) throw ArgumentError("split_dataset needs at least 10 items, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(rng_seed);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t tenth = n / 10;
  const std::size_t n_train = n - 2 * tenth;
  DatasetSplit split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.validation.assign(order.begin() + n_train, order.begin() + n_train + tenth);
  split.test.assign(order.begin() + n_train + tenth, order.end());
  return split;
}

void save_gap_matrix(const GapMatrix& gaps, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << header_json(gaps).dump() << '\n';
  for (std::size_t g = 0; g < gaps.rows(); ++g) {
    for (std::size_t s = 0; s < gaps.cols(); ++s) {
      if (gaps.observed(g, s)) out << record_line(gaps, g, s) << '\n';
    }
  }
  if (!out) throw IoError("short write to " + path.string());
}

GapMatrix load_gap_matrix(const std::filesystem::path& path) { return read_gap_file(path, false); }

SynthesisFn brightness_shift_synthesizer() {
  return [](const ImageTensor& image, const StyleSeed& seed) {
    const double delta = brightness(seed.image) - 0.5;
    std::vector<double> px(image.pixels().begin(), image.pixels().end());
    for (double& v : px) v += delta;
    return ImageTensor::clamped(image.size(), std::move(px));
  };
}

SynthesisFn brightness_pull_synthesizer(double strength) {
  return [strength](const ImageTensor& image, const StyleSeed& seed) {
    const double delta = strength * (brightness(seed.image) - brightness(image));
    std::vector<double> px(image.pixels().begin(), image.pixels().end());
    for (double& v : px) v += delta;
    return ImageTensor::clamped(image.size(), std::move(px));
  };
}

}  // namespace scube
