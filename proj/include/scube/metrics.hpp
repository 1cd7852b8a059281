#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "scube/selector.hpp"

namespace scube {

/// 1 for x > 0, else 0; a zero gap does not count as an increase.
int heaviside(double x);

/// (1 / (S V)) sum (truth - predicted)^2 over a V x S grid.
double mse_metric(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& predicted);

/// Fraction of image-seed pairs whose Heaviside signs agree.
double accuracy_metric(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& predicted);

struct TopNCurve {
  std::vector<std::size_t> n_values;
  /// Mean over images of the mean true gap of each image's top-N ranked seeds.
  std::vector<double> mean_gaps;
  std::size_t seeds = 0;
};

/// rankings[v] must cover all S seeds of true_gaps' columns (via catalog_index).
TopNCurve topn_curve(std::span<const SeedRanking> rankings, const Eigen::MatrixXd& true_gaps,
                     std::span<const std::size_t> n_values);

/// Mean predicted gap of the first n ranking entries.
double mean_top_predicted(const SeedRanking& ranking, std::size_t n);

struct EvalReport {
  double accuracy = 0.0;
  double mse = 0.0;
  std::string scorer_tag;  // "M" or "E"
  std::string method_tag;  // "scube" or "baseline"
  double alpha = 0.0;
  double omega_bar = 0.0;
  std::size_t seeds = 0;
  std::string backbone;
};

void to_json(nlohmann::json& j, const EvalReport& r);
void to_json(nlohmann::json& j, const TopNCurve& c);

}  // namespace scube
