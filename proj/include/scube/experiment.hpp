#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "scube/catalog.hpp"
#include "scube/gapgen.hpp"
#include "scube/metrics.hpp"
#include "scube/scorer.hpp"
#include "scube/selector.hpp"

namespace scube {

/// One sweep combination.
struct SweepPoint {
  double alpha = 2.0;
  double omega_bar = 1.0;
  std::size_t seeds = 0;
  std::string backbone = "cnn-s";
};

/// Selector training data for one (alpha, omega_bar, S) combination.
struct PreparedGaps {
  GapMatrix train;
  std::optional<GapMatrix> validation;
};

/// Fully observed test-pair gaps under the internal scorer and, optionally, the
/// external one. Rows are test images, columns the S seeds.
struct TestGrid {
  GapMatrix internal;
  std::optional<GapMatrix> external;
};

std::string training_key(double alpha, double omega_bar, std::size_t seeds);
std::string test_key(double alpha, std::size_t seeds);

struct ExperimentData {
  std::map<std::string, PreparedGaps> training;  // by training_key
  std::map<std::string, TestGrid> test;          // by test_key
};

struct SweepSpec {
  std::vector<SweepPoint> points;
  TrainConfig train;
  Size input_size{224, 224};
  /// Line-delimited results table; empty disables persistence.
  std::filesystem::path results_path;
  std::function<void(const std::string&)> log;
};

/// Trains and evaluates the selector and the average baseline for every point.
/// Emits (scube, baseline) reports for the internal scorer and, when the test
/// grid carries external gaps, for the external scorer as well. All datasets are
/// checked before training; a missing one raises ConfigError.
std::vector<EvalReport> run_experiment(const SweepSpec& spec, const ExperimentData& data, const ImageStore& images);

/// Dense V x S matrix from a fully observed gap matrix.
Eigen::MatrixXd dense_gaps(const GapMatrix& gaps);

/// Selector predictions for each row image: V x S.
Eigen::MatrixXd predict_grid(const SelectorModel& model, std::span<const std::string> image_ids,
                             const ImageStore& images);

/// Baseline prediction broadcast to `rows` rows.
Eigen::MatrixXd baseline_grid(const BaselineVector& baseline, std::size_t rows);

std::vector<SeedRanking> rank_grid(const Eigen::MatrixXd& predicted, std::span<const std::string> seed_ids);

/// Synthesizes every test pair once and scores it with the internal and
/// (optionally) external scorer.
TestGrid build_test_grid(std::span<const ImageTensor> images, std::span<const std::string> image_ids,
                         const SeedCatalog& catalog, const SynthesisFn& synth, const ScorerModel& internal,
                         const ScorerModel* external, std::size_t workers = 1);

}  // namespace scube
