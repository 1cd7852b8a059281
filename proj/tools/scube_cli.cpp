#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "scube/catalog.hpp"
#include "scube/errors.hpp"
#include "scube/experiment.hpp"
#include "scube/gapgen.hpp"
#include "scube/metrics.hpp"
#include "scube/scorer.hpp"
#include "scube/selector.hpp"
#include "scube/service.hpp"
#include "scube/synthesizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace scube;

namespace {

bool g_json = false;

void progress(const std::string& line) { std::cerr << line << '\n'; }

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Size parse_size(const std::string& text) {
  int h = 0, w = 0;
  char x = 0;
  std::istringstream in(text);
  if (!(in >> h >> x >> w) || x != 'x' || h <= 0 || w <= 0 || !in.eof()) {
    throw ArgumentError("size must look like HxW, got '" + text + "'");
  }
  return {h, w};
}

struct ImageSet {
  std::vector<std::string> ids;
  std::vector<ImageTensor> images;
};

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

ImageSet load_image_dir(const fs::path& dir, Size size) {
  if (!fs::is_directory(dir)) throw NotFoundError("image directory not found: " + dir.string());
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  ImageSet set;
  for (const auto& p : paths) {
    set.ids.push_back(p.stem().string());
    set.images.push_back(load_image(p, size));
  }
  return set;
}

ImageStore to_store(const ImageSet& set) {
  ImageStore store;
  for (std::size_t i = 0; i < set.ids.size(); ++i) store.add(set.ids[i], set.images[i]);
  return store;
}

/// Line-delimited {"path", "memorability"} records; paths are relative to the file.
ScoredDataset load_scored(const fs::path& manifest, Size size) {
  std::ifstream in(manifest);
  if (!in) throw NotFoundError("dataset manifest not found: " + manifest.string());
  ScoredDataset data;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = json::parse(line);
    fs::path p = j.at("path").get<std::string>();
    if (p.is_relative()) p = manifest.parent_path() / p;
    data.add(load_image(p, size), j.at("memorability").get<double>());
  }
  return data;
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("not found: " + path.string());
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

void write_jsonl(const fs::path& path, const std::vector<json>& records) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& r : records) out << r.dump() << '\n';
}

void print_reports(const std::vector<EvalReport>& reports) {
  if (g_json) {
    for (const auto& r : reports) std::cout << json(r).dump() << '\n';
    return;
  }
  std::printf("%-9s %-6s %6s %6s %4s %-6s %10s %12s\n", "method", "scorer", "alpha", "omega", "S", "net", "acc x100",
              "mse");
  for (const auto& r : reports) {
    std::printf("%-9s %-6s %6g %6g %4zu %-6s %10.2f %12.6g\n", r.method_tag.c_str(), r.scorer_tag.c_str(), r.alpha,
                r.omega_bar, r.seeds, r.backbone.c_str(), r.accuracy * 100.0, r.mse);
  }
}

SynthesisFn make_synth(const std::string& kind, const SeedCatalog& catalog, const SynthesisConfig& cfg) {
  if (kind == "oracle-shift") return brightness_shift_synthesizer();
  if (kind == "oracle-pull") return brightness_pull_synthesizer();
  if (kind == "network") {
    const fs::path root = catalog.root();
    return [root](const ImageTensor& image, const StyleSeed& seed) {
      if (!seed.model_ref) throw NotFoundError("seed '" + seed.seed_id + "' has no trained network");
      return apply_seed_network(root / *seed.model_ref, image);
    };
  }
  auto fx = std::make_shared<const FeatureExtractor>(cfg.rng_seed);
  return [fx, cfg](const ImageTensor& image, const StyleSeed& seed) { return synthesize(image, seed, *fx, cfg); };
}

std::vector<std::size_t> split_indices(const std::string& which, std::size_t n, std::uint64_t split_seed) {
  if (which == "all") {
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    return all;
  }
  const auto split = split_dataset(n, split_seed);
  if (which == "train") return split.train;
  if (which == "val") return split.validation;
  return split.test;
}

TrainConfig train_config(std::size_t iterations, double lr, std::size_t batch, std::uint64_t seed,
                         const std::string& backbone) {
  TrainConfig c;
  c.iterations = iterations;
  c.learning_rate = lr;
  c.batch_size = batch;
  c.rng_seed = seed;
  c.backbone = backbone;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scube: memorability-increasing style transfer pipeline"};
  app.require_subcommand(1);
  app.set_config("--config", "", "defaults file (TOML or INI, one section per subcommand)");
  app.add_flag("--json", g_json, "machine-readable output");

  std::function<void()> run;

  // train-scorer
  auto* ts = app.add_subcommand("train-scorer", "train a memorability regressor");
  struct {
    std::string data, out, size = "224x224", backbone = "cnn-s", tag = "M";
    std::size_t iterations = 70000, batch = 256;
    double lr = 1e-3;
    std::uint64_t seed = 0;
  } tso;
  ts->add_option("--data", tso.data, "jsonl of {path, memorability}")->required();
  ts->add_option("--out", tso.out, "checkpoint path")->required();
  ts->add_option("--size", tso.size, "input size HxW");
  ts->add_option("--backbone", tso.backbone);
  ts->add_option("--tag", tso.tag, "M (internal) or E (external)");
  ts->add_option("--iterations", tso.iterations);
  ts->add_option("--batch", tso.batch);
  ts->add_option("--lr", tso.lr);
  ts->add_option("--rng-seed", tso.seed);
  ts->callback([&] {
    run = [&] {
      const Size size = parse_size(tso.size);
      progress("loading " + tso.data);
      const auto data = load_scored(tso.data, size);
      progress("training on " + std::to_string(data.size()) + " images");
      const auto model =
          train_scorer(data, train_config(tso.iterations, tso.lr, tso.batch, tso.seed, tso.backbone), {tso.tag, size});
      save_scorer(model, tso.out);
      const double mse = mean_squared_error(model, data);
      if (g_json) {
        std::cout << json{{"checkpoint", tso.out}, {"train_mse", mse}}.dump() << '\n';
      } else {
        std::cout << "checkpoint " << tso.out << "\ntrain_mse " << num(mse) << '\n';
      }
    };
  });

  // split-scorer-data
  auto* ss = app.add_subcommand("split-scorer-data", "split a scored dataset into two disjoint halves");
  struct {
    std::string data, out_a, out_b;
    std::uint64_t seed = 0;
  } sso;
  ss->add_option("--data", sso.data)->required();
  ss->add_option("--out-a", sso.out_a, "half for the internal scorer")->required();
  ss->add_option("--out-b", sso.out_b, "half for the external scorer")->required();
  ss->add_option("--rng-seed", sso.seed);
  ss->callback([&] {
    run = [&] {
      auto records = read_jsonl(sso.data);
      for (auto& r : records) {
        fs::path p = r.at("path").get<std::string>();
        if (p.is_relative()) r["path"] = fs::absolute(fs::path(sso.data).parent_path() / p).string();
      }
      const auto [a, b] = split_halves_indices(records.size(), sso.seed);
      std::vector<json> ra, rb;
      for (auto i : a) ra.push_back(records[i]);
      for (auto i : b) rb.push_back(records[i]);
      write_jsonl(sso.out_a, ra);
      write_jsonl(sso.out_b, rb);
      if (g_json) {
        std::cout << json{{"a", ra.size()}, {"b", rb.size()}}.dump() << '\n';
      } else {
        std::cout << sso.out_a << ' ' << ra.size() << '\n' << sso.out_b << ' ' << rb.size() << '\n';
      }
    };
  });

  // build-seeds
  auto* bs = app.add_subcommand("build-seeds", "pick the k most and k least memorable candidates");
  struct {
    std::string candidates, scorer = "oracle:brightness", out, size = "224x224";
    std::size_t k = 50;
  } bso;
  bs->add_option("--candidates", bso.candidates, "directory of candidate paintings")->required();
  bs->add_option("--scorer", bso.scorer, "checkpoint or oracle:<kind>");
  bs->add_option("--k", bso.k);
  bs->add_option("--size", bso.size);
  bs->add_option("--out", bso.out, "catalog directory")->required();
  bs->callback([&] {
    run = [&] {
      const auto set = load_image_dir(bso.candidates, parse_size(bso.size));
      auto catalog = select_seed_pool(set.images, ScorerModel::resolve(bso.scorer), bso.k, set.ids);
      save_catalog(catalog, bso.out);
      for (const auto& s : catalog.seeds()) {
        if (g_json) {
          std::cout << json{{"seed_id", s.seed_id}, {"memorability", s.memorability}}.dump() << '\n';
        } else {
          std::cout << s.seed_id << ' ' << num(s.memorability) << '\n';
        }
      }
    };
  });

  // train-synth
  auto* tsy = app.add_subcommand("train-synth", "train one feed-forward style network per seed");
  struct {
    std::string catalog, images, size = "256x256";
    double alpha = 2.0, lr = 1e-2;
    std::size_t iterations = 10000;
    std::uint64_t seed = 0;
  } tsyo;
  tsy->add_option("--catalog", tsyo.catalog)->required();
  tsy->add_option("--images", tsyo.images, "training images directory")->required();
  tsy->add_option("--alpha", tsyo.alpha);
  tsy->add_option("--lr", tsyo.lr);
  tsy->add_option("--iterations", tsyo.iterations);
  tsy->add_option("--size", tsyo.size);
  tsy->add_option("--rng-seed", tsyo.seed);
  tsy->callback([&] {
    run = [&] {
      auto catalog = load_catalog(tsyo.catalog);
      const auto set = load_image_dir(tsyo.images, parse_size(tsyo.size));
      const FeatureExtractor fx(tsyo.seed);
      SynthesisConfig cfg;
      cfg.alpha = tsyo.alpha;
      cfg.iterations = tsyo.iterations;
      cfg.network_learning_rate = tsyo.lr;
      cfg.rng_seed = tsyo.seed;
      fs::create_directories(fs::path(tsyo.catalog) / "models");
      for (std::size_t i = 0; i < catalog.size(); ++i) {
        const auto& seed = catalog.at(i);
        const std::string ref = "models/" + seed.seed_id + ".bin";
        progress("training network for " + seed.seed_id);
        train_seed_network(seed, set.images, fx, cfg, fs::path(tsyo.catalog) / ref);
        catalog.set_model_ref(i, ref);
        std::cout << seed.seed_id << ' ' << ref << '\n';
      }
      save_catalog(catalog, tsyo.catalog);
    };
  });

  // gen-gaps
  auto* gg = app.add_subcommand("gen-gaps", "synthesize masked pairs and record memorability gaps");
  struct {
    std::string images, catalog, scorer = "oracle:brightness", out, synth = "style", split = "all", size = "256x256";
    double omega = 1.0, alpha = 2.0, step = 0.05;
    std::uint64_t seed = 0, split_seed = 0;
    std::size_t workers = 1, iterations = 100;
  } ggo;
  gg->add_option("--images", ggo.images)->required();
  gg->add_option("--catalog", ggo.catalog)->required();
  gg->add_option("--scorer", ggo.scorer);
  gg->add_option("--out", ggo.out)->required();
  gg->add_option("--omega", ggo.omega, "mask density target")->check(CLI::Range(0.0, 1.0));
  gg->add_option("--alpha", ggo.alpha);
  gg->add_option("--rng-seed", ggo.seed, "mask and synthesis seed");
  gg->add_option("--split-seed", ggo.split_seed);
  gg->add_option("--split", ggo.split)->check(CLI::IsMember({"train", "val", "test", "all"}));
  gg->add_option("--synth", ggo.synth)->check(CLI::IsMember({"style", "network", "oracle-shift", "oracle-pull"}));
  gg->add_option("--workers", ggo.workers);
  gg->add_option("--iterations", ggo.iterations, "pixel optimizer iterations");
  gg->add_option("--step-size", ggo.step);
  gg->add_option("--size", ggo.size);
  gg->callback([&] {
    run = [&] {
      const auto all = load_image_dir(ggo.images, parse_size(ggo.size));
      const auto idx = split_indices(ggo.split, all.ids.size(), ggo.split_seed);
      const auto ids = take<std::string>(all.ids, idx);
      const auto images = take<ImageTensor>(all.images, idx);
      const auto catalog = load_catalog(ggo.catalog);
      const auto scorer = ScorerModel::resolve(ggo.scorer);
      SynthesisConfig cfg;
      cfg.alpha = ggo.alpha;
      cfg.iterations = ggo.iterations;
      cfg.step_size = ggo.step;
      cfg.rng_seed = ggo.seed;
      const auto mask = sample_mask(ids.size(), catalog.size(), ggo.omega, ggo.seed);
      GapBuildOptions opts;
      opts.output = ggo.out;
      opts.workers = ggo.workers;
      opts.provenance = {ggo.omega, ggo.seed, scorer.tag(), ggo.alpha};
      opts.log = progress;
      const auto gaps = build_gap_dataset(images, ids, catalog, scorer, make_synth(ggo.synth, catalog, cfg), mask, opts);
      if (g_json) {
        std::cout << json{{"records", gaps.observed_count()}, {"omega_bar", gaps.omega_bar()}, {"out", ggo.out}}.dump()
                  << '\n';
      } else {
        std::cout << "records " << gaps.observed_count() << "\nomega_bar " << num(gaps.omega_bar()) << '\n';
      }
    };
  });

  // train-selector
  auto* tr = app.add_subcommand("train-selector", "train the seed selector on a gap dataset");
  struct {
    std::string gaps, val_gaps, images, out, backbone = "cnn-s", size = "224x224";
    std::size_t iterations = 2000, batch = 64, eval_interval = 50, patience = 10;
    double lr = 1e-3;
    std::uint64_t seed = 0;
  } tro;
  tr->add_option("--gaps", tro.gaps)->required();
  tr->add_option("--val-gaps", tro.val_gaps);
  tr->add_option("--images", tro.images)->required();
  tr->add_option("--out", tro.out)->required();
  tr->add_option("--backbone", tro.backbone)->check(CLI::IsMember({"cnn-s", "cnn-l"}));
  tr->add_option("--size", tro.size, "selector input size");
  tr->add_option("--iterations", tro.iterations);
  tr->add_option("--batch", tro.batch);
  tr->add_option("--lr", tro.lr);
  tr->add_option("--eval-interval", tro.eval_interval);
  tr->add_option("--patience", tro.patience);
  tr->add_option("--rng-seed", tro.seed);
  tr->callback([&] {
    run = [&] {
      const Size size = parse_size(tro.size);
      const auto store = to_store(load_image_dir(tro.images, size));
      const auto gaps = load_gap_matrix(tro.gaps);
      std::optional<GapMatrix> val;
      if (!tro.val_gaps.empty()) val = load_gap_matrix(tro.val_gaps);
      auto cfg = train_config(tro.iterations, tro.lr, tro.batch, tro.seed, tro.backbone);
      cfg.eval_interval = tro.eval_interval;
      cfg.patience = tro.patience;
      const auto model = train_selector(gaps, store, cfg, size, val ? &*val : nullptr);
      save_selector(model, tro.out);
      if (g_json) {
        std::cout << json{{"checkpoint", tro.out}, {"validation_history", model.validation_history}}.dump() << '\n';
      } else {
        std::cout << "checkpoint " << tro.out << '\n';
      }
    };
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "accuracy and MSE of the selector and the mean-gap baseline");
  struct {
    std::string selector, test_gaps, external_gaps, train_gaps, images, sweep, size = "224x224";
  } evo;
  ev->add_option("--selector", evo.selector);
  ev->add_option("--test-gaps", evo.test_gaps, "fully observed test gaps (internal scorer)");
  ev->add_option("--external-gaps", evo.external_gaps, "fully observed test gaps (external scorer)");
  ev->add_option("--train-gaps", evo.train_gaps, "training gaps the baseline averages");
  ev->add_option("--images", evo.images);
  ev->add_option("--size", evo.size);
  ev->add_option("--sweep", evo.sweep, "sweep description (json)");
  ev->callback([&] {
    run = [&] {
      if (!evo.sweep.empty()) {
        std::ifstream in(evo.sweep);
        if (!in) throw NotFoundError("sweep file not found: " + evo.sweep);
        const json cfg = json::parse(in);
        const fs::path base = fs::path(evo.sweep).parent_path();
        auto resolve = [&](const std::string& p) { return fs::path(p).is_relative() ? base / p : fs::path(p); };
        SweepSpec spec;
        spec.input_size = parse_size(cfg.value("input_size", std::string("224x224")));
        if (cfg.contains("train")) spec.train = cfg["train"].get<TrainConfig>();
        if (cfg.contains("results")) spec.results_path = resolve(cfg["results"].get<std::string>());
        spec.log = progress;
        for (const auto& p : cfg.at("points")) {
          spec.points.push_back({p.at("alpha").get<double>(), p.at("omega_bar").get<double>(),
                                 p.at("seeds").get<std::size_t>(), p.value("backbone", std::string("cnn-s"))});
        }
        ExperimentData data;
        for (const auto& d : cfg.at("training")) {
          PreparedGaps pg{load_gap_matrix(resolve(d.at("train").get<std::string>())), std::nullopt};
          if (d.contains("validation")) pg.validation = load_gap_matrix(resolve(d["validation"].get<std::string>()));
          data.training.emplace(training_key(d.at("alpha").get<double>(), d.at("omega_bar").get<double>(),
                                             d.at("seeds").get<std::size_t>()),
                                std::move(pg));
        }
        for (const auto& t : cfg.at("test")) {
          TestGrid grid{load_gap_matrix(resolve(t.at("internal").get<std::string>())), std::nullopt};
          if (t.contains("external")) grid.external = load_gap_matrix(resolve(t["external"].get<std::string>()));
          data.test.emplace(test_key(t.at("alpha").get<double>(), t.at("seeds").get<std::size_t>()), std::move(grid));
        }
        const auto store = to_store(load_image_dir(resolve(cfg.at("images").get<std::string>()), spec.input_size));
        print_reports(run_experiment(spec, data, store));
        return;
      }
      if (evo.selector.empty() || evo.test_gaps.empty() || evo.train_gaps.empty() || evo.images.empty()) {
        throw ArgumentError("evaluate needs --sweep, or --selector, --test-gaps, --train-gaps and --images");
      }
      const auto model = load_selector(evo.selector);
      const auto train = load_gap_matrix(evo.train_gaps);
      TestGrid grid{load_gap_matrix(evo.test_gaps), std::nullopt};
      if (!evo.external_gaps.empty()) grid.external = load_gap_matrix(evo.external_gaps);
      const auto store = to_store(load_image_dir(evo.images, model.input_size()));
      const SweepPoint point{train.provenance.alpha, train.omega_bar(), train.cols(),
                             model.training ? model.training->backbone : model.net().backbone().name};
      const auto& ids = grid.internal.image_ids();
      const auto scube = predict_grid(model, ids, store);
      const auto base = baseline_grid(baseline_vector(train, 0.0), ids.size());
      std::vector<EvalReport> reports;
      auto add = [&](const GapMatrix& truth, const std::string& scorer) {
        const auto t = dense_gaps(truth);
        for (const auto& [pred, method] : {std::pair{&scube, "scube"}, std::pair{&base, "baseline"}}) {
          EvalReport r;
          r.accuracy = accuracy_metric(t, *pred);
          r.mse = mse_metric(t, *pred);
          r.scorer_tag = scorer;
          r.method_tag = method;
          r.alpha = point.alpha;
          r.omega_bar = point.omega_bar;
          r.seeds = point.seeds;
          r.backbone = point.backbone;
          reports.push_back(r);
        }
      };
      add(grid.internal, "M");
      if (grid.external) add(*grid.external, "E");
      print_reports(reports);
    };
  });

  // topn
  auto* tn = app.add_subcommand("topn", "mean true gap of the top-N recommended seeds");
  struct {
    std::string selector, test_gaps, images;
    std::vector<std::size_t> n;
  } tno;
  tn->add_option("--selector", tno.selector)->required();
  tn->add_option("--test-gaps", tno.test_gaps)->required();
  tn->add_option("--images", tno.images)->required();
  tn->add_option("--n", tno.n, "N values (default 1 3 10 S, capped at S)")->delimiter(',');
  tn->callback([&] {
    run = [&] {
      const auto model = load_selector(tno.selector);
      const auto test = load_gap_matrix(tno.test_gaps);
      const auto store = to_store(load_image_dir(tno.images, model.input_size()));
      const std::size_t S = test.cols();
      std::vector<std::size_t> ns = tno.n;
      if (ns.empty()) {
        for (std::size_t n : {std::size_t{1}, std::size_t{3}, std::size_t{10}, S}) {
          if (n <= S && std::find(ns.begin(), ns.end(), n) == ns.end()) ns.push_back(n);
        }
      }
      const auto rankings = rank_grid(predict_grid(model, test.image_ids(), store), model.seed_ids());
      const auto curve = topn_curve(rankings, dense_gaps(test), ns);
      std::vector<double> predicted;
      for (std::size_t n : ns) {
        double sum = 0.0;
        for (const auto& r : rankings) sum += mean_top_predicted(r, n);
        predicted.push_back(sum / static_cast<double>(rankings.size()));
      }
      if (g_json) {
        json j = curve;
        j["predicted_mean_gaps"] = predicted;
        std::cout << j.dump() << '\n';
      } else {
        std::cout << "N mean_true_gap mean_predicted_gap\n";
        for (std::size_t i = 0; i < ns.size(); ++i) {
          std::cout << ns[i] << ' ' << num(curve.mean_gaps[i]) << ' ' << num(predicted[i]) << '\n';
        }
      }
    };
  });

  // recommend
  auto* rc = app.add_subcommand("recommend", "rank the seeds for one image");
  struct {
    std::string selector, image;
    std::size_t q = 0;
  } rco;
  rc->add_option("--selector", rco.selector)->required();
  rc->add_option("--image", rco.image)->required();
  rc->add_option("--top-q", rco.q, "number of seeds (default all)");
  rc->callback([&] {
    run = [&] {
      const auto model = load_selector(rco.selector);
      const std::size_t q = rco.q == 0 ? model.output_dim() : rco.q;
      if (q > model.output_dim()) throw ArgumentError("--top-q exceeds the number of seeds");
      const auto ranking = rank_seeds(model.predict(load_image(rco.image)), model.seed_ids()).top(q);
      if (g_json) {
        std::cout << recommendation_json(ranking).dump() << '\n';
        return;
      }
      if (ranking.keep_original) progress("no seed is predicted to increase memorability");
      for (const auto& e : ranking.entries) std::cout << e.seed_id << ' ' << num(e.predicted_gap) << '\n';
    };
  });

  // stylize
  auto* st = app.add_subcommand("stylize", "apply one seed to one image");
  struct {
    std::string image, seed, catalog, out, scorer, size = "256x256";
    double alpha = 2.0, step = 0.05;
    std::size_t iterations = 100;
    std::uint64_t rng_seed = 0;
  } sto;
  st->add_option("--image", sto.image)->required();
  st->add_option("--seed", sto.seed, "seed id")->required();
  st->add_option("--catalog", sto.catalog)->required();
  st->add_option("--out", sto.out, "output png")->required();
  st->add_option("--alpha", sto.alpha);
  st->add_option("--iterations", sto.iterations);
  st->add_option("--step-size", sto.step);
  st->add_option("--size", sto.size, "synthesis resolution");
  st->add_option("--scorer", sto.scorer, "report memorability before and after");
  st->add_option("--rng-seed", sto.rng_seed);
  st->callback([&] {
    run = [&] {
      const auto catalog = load_catalog(sto.catalog);
      const auto index = catalog.index_of(sto.seed);
      if (!index) throw NotFoundError("unknown seed id '" + sto.seed + "'");
      const auto content = load_image(sto.image, parse_size(sto.size));
      SynthesisConfig cfg;
      cfg.alpha = sto.alpha;
      cfg.iterations = sto.iterations;
      cfg.step_size = sto.step;
      cfg.rng_seed = sto.rng_seed;
      const FeatureExtractor fx(sto.rng_seed);
      const auto out = synthesize(content, catalog.at(*index), fx, cfg);
      save_png(out, sto.out);
      json j = {{"out", sto.out}};
      if (!sto.scorer.empty()) {
        const auto scorer = ScorerModel::resolve(sto.scorer);
        j["memorability_before"] = scorer.predict(content);
        j["memorability_after"] = scorer.predict(load_image(sto.out));
      }
      if (g_json) {
        std::cout << j.dump() << '\n';
      } else {
        for (const auto& [k, v] : j.items()) std::cout << k << ' ' << (v.is_string() ? v.get<std::string>() : num(v.get<double>())) << '\n';
      }
    };
  });

  // serve
  auto* sv = app.add_subcommand("serve", "run the HTTP service");
  struct {
    std::string config;
    int port = -1;
  } svo;
  sv->add_option("--service-config", svo.config, "service config json");
  sv->add_option("--port", svo.port);
  sv->callback([&] {
    run = [&] {
      ServiceConfig cfg = svo.config.empty() ? ServiceConfig{} : load_service_config(svo.config);
      apply_env_overrides(cfg);
      if (svo.port >= 0) cfg.port = svo.port;
      auto service = Service::from_config(cfg);
      HttpServer server(*service);
      const int port = server.bind(cfg.host, cfg.port);
      progress("listening on " + cfg.host + ":" + std::to_string(port));
      server.listen();
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code == 0) return 0;
    std::cerr << app.help();
    return 2;
  }
  try {
    run();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
