#include "scube/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include "scube/errors.hpp"

namespace scube {
namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

EvalReport make_report(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& predicted, const SweepPoint& point,
                       std::string scorer, std::string method) {
  EvalReport r;
  r.accuracy = accuracy_metric(truth, predicted);
  r.mse = mse_metric(truth, predicted);
  r.scorer_tag = std::move(scorer);
  r.method_tag = std::move(method);
  r.alpha = point.alpha;
  r.omega_bar = point.omega_bar;
  r.seeds = point.seeds;
  r.backbone = point.backbone;
  return r;
}

}  // namespace

std::string training_key(double alpha, double omega_bar, std::size_t seeds) {
  return "alpha=" + fmt(alpha) + ",omega=" + fmt(omega_bar) + ",S=" + std::to_string(seeds);
}

std::string test_key(double alpha, std::size_t seeds) {
  return "alpha=" + fmt(alpha) + ",S=" + std::to_string(seeds);
}

Eigen::MatrixXd dense_gaps(const GapMatrix& gaps) {
  Eigen::MatrixXd m(gaps.rows(), gaps.cols());
  for (std::size_t g = 0; g < gaps.rows(); ++g) {
    for (std::size_t s = 0; s < gaps.cols(); ++s) {
      const auto v = gaps.gap(g, s);
      if (!v) {
        throw ArgumentError("test gaps must be fully observed; missing (" + gaps.image_ids()[g] + ", " +
                            gaps.seed_ids()[s] + ")");
      }
      m(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(s)) = *v;
    }
  }
  return m;
}

Eigen::MatrixXd predict_grid(const SelectorModel& model, std::span<const std::string> image_ids,
                             const ImageStore& images) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(image_ids.size()), static_cast<Eigen::Index>(model.output_dim()));
  for (std::size_t v = 0; v < image_ids.size(); ++v) {
    const auto p = model.predict(images.at(image_ids[v]));
    for (std::size_t s = 0; s < p.size(); ++s) m(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(s)) = p[s];
  }
  return m;
}

Eigen::MatrixXd baseline_grid(const BaselineVector& baseline, std::size_t rows) {
  const auto prediction = baseline_predict(baseline);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(prediction.size()));
  for (std::size_t v = 0; v < rows; ++v) {
    for (std::size_t s = 0; s < prediction.size(); ++s) {
      m(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(s)) = prediction[s];
    }
  }
  return m;
}

std::vector<SeedRanking> rank_grid(const Eigen::MatrixXd& predicted, std::span<const std::string> seed_ids) {
  std::vector<SeedRanking> out;
  out.reserve(static_cast<std::size_t>(predicted.rows()));
  std::vector<double> row(static_cast<std::size_t>(predicted.cols()));
  for (Eigen::Index v = 0; v < predicted.rows(); ++v) {
    for (Eigen::Index s = 0; s < predicted.cols(); ++s) row[static_cast<std::size_t>(s)] = predicted(v, s);
    out.push_back(rank_seeds(row, seed_ids));
  }
  return out;
}

std::vector<EvalReport> run_experiment(const SweepSpec& spec, const ExperimentData& data, const ImageStore& images) {
  auto log = [&](const std::string& m) {
    if (spec.log) spec.log(m);
  };

  std::vector<std::string> missing;
  for (const auto& p : spec.points) {
    const auto tk = training_key(p.alpha, p.omega_bar, p.seeds);
    const auto vk = test_key(p.alpha, p.seeds);
    const auto train = data.training.find(tk);
    if (train == data.training.end()) {
      missing.push_back("training gaps for " + tk);
    } else if (train->second.train.cols() != p.seeds) {
      missing.push_back("training gaps for " + tk + " have " + std::to_string(train->second.train.cols()) + " seeds");
    }
    const auto test = data.test.find(vk);
    if (test == data.test.end()) {
      missing.push_back("test grid for " + vk);
    } else if (train != data.training.end() && test->second.internal.seed_ids() != train->second.train.seed_ids()) {
      missing.push_back("test grid for " + vk + " is bound to different seeds than " + tk);
    }
    backbone_by_name(p.backbone);
  }
  if (!missing.empty()) {
    std::string msg = "sweep configuration incomplete:";
    for (const auto& m : missing) msg += "\n  missing " + m;
    throw ConfigError(msg);
  }

  std::ofstream results;
  if (!spec.results_path.empty()) {
    if (spec.results_path.has_parent_path()) std::filesystem::create_directories(spec.results_path.parent_path());
    results.open(spec.results_path, std::ios::trunc);
    if (!results) throw IoError("cannot write " + spec.results_path.string());
  }

  std::vector<EvalReport> reports;
  for (const auto& p : spec.points) {
    const PreparedGaps& prepared = data.training.at(training_key(p.alpha, p.omega_bar, p.seeds));
    const TestGrid& grid = data.test.at(test_key(p.alpha, p.seeds));
    log("training selector for " + training_key(p.alpha, p.omega_bar, p.seeds) + " backbone=" + p.backbone);

    TrainConfig cfg = spec.train;
    cfg.backbone = p.backbone;
    const SelectorModel model = train_selector(prepared.train, images, cfg, spec.input_size,
                                               prepared.validation ? &*prepared.validation : nullptr);
    // Sparse masks can leave a seed without any observation; such a seed gets a zero mean gap.
    const BaselineVector baseline = baseline_vector(prepared.train, 0.0);

    const auto& test_ids = grid.internal.image_ids();
    const Eigen::MatrixXd scube = predict_grid(model, test_ids, images);
    const Eigen::MatrixXd base = baseline_grid(baseline, test_ids.size());

    std::vector<EvalReport> batch;
    const Eigen::MatrixXd truth_m = dense_gaps(grid.internal);
    batch.push_back(make_report(truth_m, scube, p, "M", "scube"));
    batch.push_back(make_report(truth_m, base, p, "M", "baseline"));
    if (grid.external) {
      if (grid.external->image_ids() != test_ids) throw ConfigError("external test grid rows differ from internal");
      const Eigen::MatrixXd truth_e = dense_gaps(*grid.external);
      batch.push_back(make_report(truth_e, scube, p, "E", "scube"));
      batch.push_back(make_report(truth_e, base, p, "E", "baseline"));
    }
    for (auto& r : batch) {
      if (results.is_open()) results << nlohmann::json(r).dump() << '\n';
      reports.push_back(std::move(r));
    }
    if (results.is_open()) results.flush();
  }
  return reports;
}

TestGrid build_test_grid(std::span<const ImageTensor> images, std::span<const std::string> image_ids,
                         const SeedCatalog& catalog, const SynthesisFn& synth, const ScorerModel& internal,
                         const ScorerModel* external, std::size_t workers) {
  if (images.size() != image_ids.size()) throw ArgumentError("build_test_grid: image id count mismatch");
  TestGrid grid{GapMatrix({image_ids.begin(), image_ids.end()}, catalog.seed_ids()), std::nullopt};
  grid.internal.provenance.scorer_tag = internal.tag();
  if (external) {
    grid.external.emplace(std::vector<std::string>(image_ids.begin(), image_ids.end()), catalog.seed_ids());
    grid.external->provenance.scorer_tag = external->tag();
  }

  const std::size_t S = catalog.size();
  const std::size_t total = images.size() * S;
  std::vector<double> gm(total), ge(total);
  std::vector<double> base_m(images.size()), base_e(images.size());
  for (std::size_t v = 0; v < images.size(); ++v) {
    base_m[v] = internal.predict(images[v]);
    if (external) base_e[v] = external->predict(images[v]);
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t k = next++; k < total; k = next++) {
      try {
        const std::size_t v = k / S, s = k % S;
        const ImageTensor out = synth(images[v], catalog.at(s));
        gm[k] = internal.predict(out) - base_m[v];
        if (external) ge[k] = external->predict(out) - base_e[v];
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < std::max<std::size_t>(1, workers); ++w) pool.emplace_back(work);
    work();
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t k = 0; k < total; ++k) {
    grid.internal.set(k / S, k % S, gm[k]);
    if (external) grid.external->set(k / S, k % S, ge[k]);
  }
  return grid;
}

}  // namespace scube
