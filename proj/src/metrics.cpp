#include "scube/metrics.hpp"

#include <cmath>
#include <numeric>

#include "scube/errors.hpp"

namespace scube {
namespace {

void check_dims(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ArgumentError("metric: dimension mismatch");
  if (a.size() == 0) throw ArgumentError("metric: empty grid");
}

}  // namespace

int heaviside(double x) {
  if (!std::isfinite(x)) throw ArgumentError("heaviside: non-finite argument");
  return x > 0.0 ? 1 : 0;
}

double mse_metric(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& predicted) {
  check_dims(truth, predicted);
  double sum = 0.0;
  for (Eigen::Index v = 0; v < truth.rows(); ++v) {
    for (Eigen::Index s = 0; s < truth.cols(); ++s) {
      const double d = truth(v, s) - predicted(v, s);
      sum += d * d;
    }
  }
  return sum / static_cast<double>(truth.size());
}

double accuracy_metric(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& predicted) {
  check_dims(truth, predicted);
  std::size_t agree = 0;
  for (Eigen::Index v = 0; v < truth.rows(); ++v) {
    for (Eigen::Index s = 0; s < truth.cols(); ++s) {
      if (heaviside(truth(v, s)) == heaviside(predicted(v, s))) ++agree;
    }
  }
  return static_cast<double>(agree) / static_cast<double>(truth.size());
}

double mean_top_predicted(const SeedRanking& ranking, std::size_t n) {
  if (n == 0 || n > ranking.entries.size()) throw ArgumentError("top-N: N out of range");
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += ranking.entries[i].predicted_gap;
  return sum / static_cast<double>(n);
}

TopNCurve topn_curve(std::span<const SeedRanking> rankings, const Eigen::MatrixXd& true_gaps,
                     std::span<const std::size_t> n_values) {
  const auto S = static_cast<std::size_t>(true_gaps.cols());
  if (rankings.size() != static_cast<std::size_t>(true_gaps.rows())) throw ArgumentError("topn: one ranking per image");
  if (rankings.empty()) throw ArgumentError("topn: no images");
  for (const auto& r : rankings) {
    if (r.entries.size() != S) throw ArgumentError("topn: ranking does not cover all seeds");
    std::vector<bool> seen(S, false);
    for (const auto& e : r.entries) {
      if (e.catalog_index >= S || seen[e.catalog_index]) throw ArgumentError("topn: ranking is not a permutation");
      seen[e.catalog_index] = true;
    }
  }
  TopNCurve curve;
  curve.seeds = S;
  for (std::size_t n : n_values) {
    if (n == 0 || n > S) throw ArgumentError("topn: N=" + std::to_string(n) + " exceeds S=" + std::to_string(S));
    double total = 0.0;
    for (std::size_t v = 0; v < rankings.size(); ++v) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += true_gaps(static_cast<Eigen::Index>(v), rankings[v].entries[i].catalog_index);
      total += sum / static_cast<double>(n);
    }
    curve.n_values.push_back(n);
    curve.mean_gaps.push_back(total / static_cast<double>(rankings.size()));
  }
  return curve;
}

void to_json(nlohmann::json& j, const EvalReport& r) {
  j = {{"method", r.method_tag}, {"scorer", r.scorer_tag}, {"alpha", r.alpha},    {"omega_bar", r.omega_bar},
       {"seeds", r.seeds},       {"backbone", r.backbone}, {"accuracy", r.accuracy}, {"accuracy_x100", r.accuracy * 100.0},
       {"mse", r.mse}};
}

void to_json(nlohmann::json& j, const TopNCurve& c) {
  j = {{"seeds", c.seeds}, {"n_values", c.n_values}, {"mean_gaps", c.mean_gaps}};
}

}  // namespace scube
