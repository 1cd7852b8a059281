#include "scube/service.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <regex>

#include <httplib.h>

#include "scube/errors.hpp"

namespace scube {
namespace {

constexpr int kThumbnailSide = 128;

bool valid_id(const std::string& id) {
  static const std::regex pattern("[0-9a-f]{32}");
  return std::regex_match(id, pattern);
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("missing " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  const std::string s = j.dump();
  write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("missing " + path.string());
  return nlohmann::json::parse(in);
}

}  // namespace

void to_json(nlohmann::json& j, const ServiceConfig& c) {
  j = {{"host", c.host},
       {"port", c.port},
       {"scorer", c.scorer},
       {"selector", c.selector.string()},
       {"catalog", c.catalog.string()},
       {"store", c.store.string()},
       {"synthesis_size", {c.synthesis_size.height, c.synthesis_size.width}},
       {"synthesis_iterations", c.synthesis_iterations},
       {"synthesis_step_size", c.synthesis_step_size},
       {"rng_seed", c.rng_seed},
       {"max_upload_bytes", c.max_upload_bytes},
       {"threads", c.threads}};
}

void from_json(const nlohmann::json& j, ServiceConfig& c) {
  c.host = j.value("host", c.host);
  c.port = j.value("port", c.port);
  c.scorer = j.value("scorer", c.scorer);
  c.selector = j.value("selector", c.selector.string());
  c.catalog = j.value("catalog", c.catalog.string());
  c.store = j.value("store", c.store.string());
  if (j.contains("synthesis_size")) {
    c.synthesis_size = {j["synthesis_size"].at(0).get<int>(), j["synthesis_size"].at(1).get<int>()};
  }
  c.synthesis_iterations = j.value("synthesis_iterations", c.synthesis_iterations);
  c.synthesis_step_size = j.value("synthesis_step_size", c.synthesis_step_size);
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.max_upload_bytes = j.value("max_upload_bytes", c.max_upload_bytes);
  c.threads = j.value("threads", c.threads);
}

ServiceConfig load_service_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read service config " + path.string());
  try {
    return nlohmann::json::parse(in).get<ServiceConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("invalid service config " + path.string() + ": " + e.what());
  }
}

void apply_env_overrides(ServiceConfig& config, const std::function<const char*(const char*)>& getenv) {
  if (const char* v = getenv("SCUBE_HOST")) config.host = v;
  if (const char* v = getenv("SCUBE_PORT")) {
    try {
      config.port = std::stoi(v);
    } catch (const std::exception&) {
      throw ConfigError(std::string("SCUBE_PORT is not a port number: ") + v);
    }
  }
  if (const char* v = getenv("SCUBE_SCORER")) config.scorer = v;
  if (const char* v = getenv("SCUBE_SELECTOR")) config.selector = v;
  if (const char* v = getenv("SCUBE_CATALOG")) config.catalog = v;
  if (const char* v = getenv("SCUBE_STORE")) config.store = v;
}

ServiceSynthesisFn default_service_synthesizer(const ServiceConfig& config, const SeedCatalog& catalog) {
  auto fx = std::make_shared<const FeatureExtractor>(config.rng_seed);
  SynthesisConfig base;
  base.iterations = config.synthesis_iterations;
  base.step_size = config.synthesis_step_size;
  base.rng_seed = config.rng_seed;
  return [fx, base, root = catalog.root()](const ImageTensor& content, const StyleSeed& seed, double alpha) {
    if (seed.model_ref) return apply_seed_network(root / *seed.model_ref, content);
    SynthesisConfig cfg = base;
    cfg.alpha = alpha;
    return synthesize(content, seed, *fx, cfg);
  };
}

void to_json(nlohmann::json& j, const SynthesisRecord& r) {
  j = {{"result_id", r.result_id},
       {"image_id", r.image_id},
       {"seed_id", r.seed_id},
       {"alpha", r.alpha},
       {"source_memorability", r.source_memorability},
       {"measured_memorability", r.measured_memorability},
       {"measured_gap", r.measured_memorability - r.source_memorability},
       {"predicted_gap", r.predicted_gap},
       {"result_url", "/results/" + r.result_id}};
}

void from_json(const nlohmann::json& j, SynthesisRecord& r) {
  r.result_id = j.at("result_id").get<std::string>();
  r.image_id = j.at("image_id").get<std::string>();
  r.seed_id = j.at("seed_id").get<std::string>();
  r.alpha = j.at("alpha").get<double>();
  r.source_memorability = j.at("source_memorability").get<double>();
  r.measured_memorability = j.at("measured_memorability").get<double>();
  r.predicted_gap = j.at("predicted_gap").get<double>();
}

SessionStore::SessionStore(std::filesystem::path root, std::uint64_t rng_seed) : root_(std::move(root)), rng_(rng_seed) {
  std::filesystem::create_directories(root_ / "images");
  std::filesystem::create_directories(root_ / "results");
}

std::string SessionStore::fresh_id_locked() {
  for (;;) {
    char buf[33];
    std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng_()),
                  static_cast<unsigned long long>(rng_()));
    std::string id(buf);
    if (!std::filesystem::exists(root_ / "images" / (id + ".json")) &&
        !std::filesystem::exists(root_ / "results" / (id + ".json"))) {
      return id;
    }
  }
}

std::string SessionStore::add_image(const ImageTensor& image, double memorability) {
  const auto png = encode_png(image);
  std::lock_guard lock(mutex_);
  const std::string id = fresh_id_locked();
  write_bytes(root_ / "images" / (id + ".png"), png);
  // The json record is written last; its presence marks a complete entry.
  write_json(root_ / "images" / (id + ".json"), {{"image_id", id}, {"memorability", memorability}});
  images_.emplace(id, image);
  return id;
}

std::string SessionStore::add_result(const ImageTensor& image, SynthesisRecord record) {
  const auto png = encode_png(image);
  std::lock_guard lock(mutex_);
  record.result_id = fresh_id_locked();
  write_bytes(root_ / "results" / (record.result_id + ".png"), png);
  write_json(root_ / "results" / (record.result_id + ".json"), record);
  return record.result_id;
}

bool SessionStore::has_image(const std::string& id) const {
  return valid_id(id) && std::filesystem::exists(root_ / "images" / (id + ".json"));
}

bool SessionStore::has_result(const std::string& id) const {
  return valid_id(id) && std::filesystem::exists(root_ / "results" / (id + ".json"));
}

ImageTensor SessionStore::image(const std::string& id) const {
  if (!has_image(id)) throw NotFoundError("unknown image id '" + id + "'");
  std::lock_guard lock(mutex_);
  if (auto it = images_.find(id); it != images_.end()) return it->second;
  auto img = decode_image(read_bytes(root_ / "images" / (id + ".png")));
  images_.emplace(id, img);
  return img;
}

double SessionStore::image_memorability(const std::string& id) const {
  if (!has_image(id)) throw NotFoundError("unknown image id '" + id + "'");
  return read_json(root_ / "images" / (id + ".json")).at("memorability").get<double>();
}

std::vector<std::uint8_t> SessionStore::image_png(const std::string& id) const {
  if (!has_image(id)) throw NotFoundError("unknown image id '" + id + "'");
  return read_bytes(root_ / "images" / (id + ".png"));
}

SynthesisRecord SessionStore::result(const std::string& id) const {
  if (!has_result(id)) throw NotFoundError("unknown result id '" + id + "'");
  return read_json(root_ / "results" / (id + ".json")).get<SynthesisRecord>();
}

std::vector<std::uint8_t> SessionStore::result_png(const std::string& id) const {
  if (!has_result(id)) throw NotFoundError("unknown result id '" + id + "'");
  return read_bytes(root_ / "results" / (id + ".png"));
}

Service::Service(ServiceConfig config, ScorerModel scorer, SelectorModel selector, SeedCatalog catalog,
                 ServiceSynthesisFn synth)
    : config_(std::move(config)),
      scorer_(std::move(scorer)),
      selector_(std::move(selector)),
      catalog_(std::move(catalog)),
      synth_(synth ? std::move(synth) : default_service_synthesizer(config_, catalog_)),
      store_(config_.store, config_.rng_seed) {
  if (selector_.seed_ids() != catalog_.seed_ids()) {
    throw ConfigError("selector seed binding does not match the catalog order");
  }
  thumbnails_.reserve(catalog_.size());
  for (const auto& seed : catalog_.seeds()) {
    thumbnails_.push_back(encode_png(resize_bilinear(seed.image, {kThumbnailSide, kThumbnailSide})));
  }
}

std::unique_ptr<Service> Service::from_config(const ServiceConfig& config) {
  if (config.selector.empty()) throw ConfigError("service config: selector path is required");
  if (config.catalog.empty()) throw ConfigError("service config: catalog path is required");
  return std::make_unique<Service>(config, ScorerModel::resolve(config.scorer), load_selector(config.selector),
                                   load_catalog(config.catalog));
}

UploadResult Service::upload(std::span<const std::uint8_t> bytes) {
  if (bytes.size() > config_.max_upload_bytes) throw PayloadTooLargeError("upload exceeds the size limit");
  const ImageTensor image = decode_image(bytes);
  const double score = scorer_.predict(image);
  return {store_.add_image(image, score), score};
}

SeedRanking Service::recommend(const std::string& image_id, std::size_t q) const {
  const ImageTensor image = store_.image(image_id);
  if (q < 1 || q > catalog_.size()) {
    throw ArgumentError("q must lie in [1, " + std::to_string(catalog_.size()) + "]");
  }
  return rank_seeds(selector_.predict(image), selector_.seed_ids()).top(q);
}

SynthesisRecord Service::synthesize(const std::string& image_id, const std::string& seed_id, double alpha) {
  const ImageTensor image = store_.image(image_id);
  const auto index = catalog_.index_of(seed_id);
  if (!index) throw NotFoundError("unknown seed id '" + seed_id + "'");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ArgumentError("alpha must be positive");

  const ImageTensor content = image.size() == config_.synthesis_size ? image : resize_bilinear(image, config_.synthesis_size);
  const ImageTensor out = synth_(content, catalog_.at(*index), alpha);
  // Scores refer to the stored 8-bit result.
  const ImageTensor stored = decode_image(encode_png(out));

  SynthesisRecord record;
  record.image_id = image_id;
  record.seed_id = seed_id;
  record.alpha = alpha;
  record.source_memorability = store_.image_memorability(image_id);
  record.measured_memorability = scorer_.predict(stored);
  record.predicted_gap = selector_.predict(image)[*index];
  record.result_id = store_.add_result(stored, record);
  return record;
}

std::vector<std::uint8_t> Service::seed_thumbnail(const std::string& seed_id) const {
  const auto index = catalog_.index_of(seed_id);
  if (!index) throw NotFoundError("unknown seed id '" + seed_id + "'");
  return thumbnails_[*index];
}

nlohmann::json recommendation_json(const SeedRanking& ranking) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : ranking.entries) {
    entries.push_back({{"seed_id", e.seed_id},
                       {"predicted_gap", e.predicted_gap},
                       {"thumbnail_url", "/seeds/" + e.seed_id + "/thumbnail"}});
  }
  return {{"entries", entries}, {"keep_original", ranking.keep_original}};
}

nlohmann::json seeds_json(const SeedCatalog& catalog) {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : catalog.seeds()) {
    seeds.push_back({{"seed_id", s.seed_id},
                     {"memorability", s.memorability},
                     {"thumbnail_url", "/seeds/" + s.seed_id + "/thumbnail"}});
  }
  return {{"seeds", seeds}};
}

namespace {

void send_json(httplib::Response& res, const nlohmann::json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_png(httplib::Response& res, const std::vector<std::uint8_t>& png) {
  res.set_content(std::string(png.begin(), png.end()), "image/png");
}

void send_error(httplib::Response& res, int status, const std::string& message,
                std::optional<std::size_t> iteration = std::nullopt) {
  nlohmann::json body = {{"error", message}, {"status", status}};
  if (iteration) body["iteration"] = *iteration;
  send_json(res, body, status);
}

template <typename F>
void guarded(httplib::Response& res, F&& f) {
  try {
    f();
  } catch (const NotFoundError& e) {
    send_error(res, 404, e.what());
  } catch (const PayloadTooLargeError& e) {
    send_error(res, 413, e.what());
  } catch (const DecodeError& e) {
    send_error(res, 400, e.what());
  } catch (const ArgumentError& e) {
    send_error(res, 400, e.what());
  } catch (const nlohmann::json::exception& e) {
    send_error(res, 400, std::string("malformed JSON body: ") + e.what());
  } catch (const NumericalError& e) {
    send_error(res, 500, e.what(), e.iteration());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

}  // namespace

HttpServer::HttpServer(Service& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
  const std::size_t threads = std::max<std::size_t>(2, service_.config().threads);
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  server_->set_payload_max_length(service_.config().max_upload_bytes);
  server_->set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server_->set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    const std::string message = res.status == 413 ? "upload exceeds the size limit"
                                : res.status == 404 ? "no such route"
                                                    : "request failed";
    send_error(res, res.status, message);
  });
  routes();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw IoError("cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void HttpServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

void HttpServer::routes() {
  auto& svc = service_;
  auto& srv = *server_;

  srv.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  srv.Get("/health", [&svc](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"status", "ok"}, {"seeds", svc.catalog().size()}});
  });

  srv.Post("/images", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::string body = req.body;
      if (req.is_multipart_form_data()) {
        if (req.files.empty()) throw ArgumentError("multipart upload carries no file");
        body = req.has_file("image") ? req.get_file_value("image").content : req.files.begin()->second.content;
      }
      const auto up = svc.upload(std::span(reinterpret_cast<const std::uint8_t*>(body.data()), body.size()));
      send_json(res, {{"image_id", up.image_id},
                      {"memorability", up.memorability},
                      {"image_url", "/images/" + up.image_id}});
    });
  });

  srv.Get(R"(/images/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_png(res, svc.store().image_png(req.matches[1])); });
  });

  srv.Get(R"(/images/([^/]+)/recommendations)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      if (!svc.store().has_image(id)) throw NotFoundError("unknown image id '" + id + "'");
      std::size_t q = svc.catalog().size();
      if (req.has_param("q")) {
        const std::string raw = req.get_param_value("q");
        std::size_t used = 0;
        long long v = 0;
        try {
          v = std::stoll(raw, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != raw.size() || raw.empty() || v < 1) throw ArgumentError("q must be a positive integer");
        q = static_cast<std::size_t>(v);
      }
      send_json(res, recommendation_json(svc.recommend(id, q)));
    });
  });

  srv.Post(R"(/images/([^/]+)/synthesize)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string id = req.matches[1];
      if (!svc.store().has_image(id)) throw NotFoundError("unknown image id '" + id + "'");
      const auto body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
      if (!body.contains("seed_id") || !body["seed_id"].is_string()) throw ArgumentError("seed_id is required");
      double alpha = 2.0;
      if (body.contains("alpha")) {
        if (!body["alpha"].is_number()) throw ArgumentError("alpha must be a number");
        alpha = body["alpha"].get<double>();
      }
      send_json(res, svc.synthesize(id, body["seed_id"].get<std::string>(), alpha));
    });
  });

  srv.Get("/seeds", [&svc](const httplib::Request&, httplib::Response& res) {
    send_json(res, seeds_json(svc.catalog()));
  });

  srv.Get(R"(/seeds/([^/]+)/thumbnail)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_png(res, svc.seed_thumbnail(req.matches[1])); });
  });

  srv.Get(R"(/results/([^/]+))", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_png(res, svc.store().result_png(req.matches[1])); });
  });

  srv.Get(R"(/results/([^/]+)/meta)", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, svc.store().result(req.matches[1])); });
  });
}

}  // namespace scube
