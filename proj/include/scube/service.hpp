#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "scube/catalog.hpp"
#include "scube/features.hpp"
#include "scube/image.hpp"
#include "scube/scorer.hpp"
#include "scube/selector.hpp"
#include "scube/synthesizer.hpp"

namespace httplib {
class Server;
}

namespace scube {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string scorer = "oracle:brightness";
  std::filesystem::path selector;
  std::filesystem::path catalog;
  std::filesystem::path store = "scube-store";
  Size synthesis_size{256, 256};
  std::size_t synthesis_iterations = 100;
  double synthesis_step_size = 0.05;
  std::uint64_t rng_seed = 0;
  std::size_t max_upload_bytes = 16u << 20;
  std::size_t threads = 8;
};

void to_json(nlohmann::json& j, const ServiceConfig& c);
void from_json(const nlohmann::json& j, ServiceConfig& c);

/// Reads a JSON config file (keys as in ServiceConfig; missing keys keep defaults).
ServiceConfig load_service_config(const std::filesystem::path& path);

/// Applies SCUBE_HOST, SCUBE_PORT, SCUBE_SCORER, SCUBE_SELECTOR, SCUBE_CATALOG and
/// SCUBE_STORE. `getenv` is injectable for tests.
void apply_env_overrides(ServiceConfig& config,
                         const std::function<const char*(const char*)>& getenv = [](const char* k) {
                           return std::getenv(k);
                         });

/// Synthesis used by the service: (content at synthesis resolution, seed, alpha).
using ServiceSynthesisFn = std::function<ImageTensor(const ImageTensor&, const StyleSeed&, double alpha)>;

/// Seed network when the seed has a model reference, else pixel optimization.
ServiceSynthesisFn default_service_synthesizer(const ServiceConfig& config, const SeedCatalog& catalog);

struct UploadResult {
  std::string image_id;
  double memorability = 0.0;
};

struct SynthesisRecord {
  std::string result_id;
  std::string image_id;
  std::string seed_id;
  double alpha = 0.0;
  double source_memorability = 0.0;
  double measured_memorability = 0.0;
  double predicted_gap = 0.0;
};

void to_json(nlohmann::json& j, const SynthesisRecord& r);
void from_json(const nlohmann::json& j, SynthesisRecord& r);

/// Uploaded images and synthesized results kept under a directory:
/// images/<id>.png, images/<id>.json, results/<id>.png, results/<id>.json.
/// Records survive restarts; lookups fall back to disk.
class SessionStore {
 public:
  SessionStore(std::filesystem::path root, std::uint64_t rng_seed);

  /// Stores the image and its score under a fresh 128-bit hex id.
  std::string add_image(const ImageTensor& image, double memorability);
  std::string add_result(const ImageTensor& image, SynthesisRecord record);

  bool has_image(const std::string& id) const;
  bool has_result(const std::string& id) const;
  /// Throw NotFoundError for unknown ids.
  ImageTensor image(const std::string& id) const;
  double image_memorability(const std::string& id) const;
  std::vector<std::uint8_t> image_png(const std::string& id) const;
  SynthesisRecord result(const std::string& id) const;
  std::vector<std::uint8_t> result_png(const std::string& id) const;

 private:
  std::string fresh_id_locked();

  std::filesystem::path root_;
  mutable std::mutex mutex_;
  std::mt19937_64 rng_;
  mutable std::map<std::string, ImageTensor> images_;
};

/// The pipeline behind the HTTP interface. Models are shared read-only; only
/// the store is mutated, and synthesis runs outside any lock.
class Service {
 public:
  Service(ServiceConfig config, ScorerModel scorer, SelectorModel selector, SeedCatalog catalog,
          ServiceSynthesisFn synth = {});

  /// Loads scorer, selector and catalog from the config paths.
  static std::unique_ptr<Service> from_config(const ServiceConfig& config);

  const ServiceConfig& config() const noexcept { return config_; }
  const SeedCatalog& catalog() const noexcept { return catalog_; }
  const SelectorModel& selector() const noexcept { return selector_; }
  const SessionStore& store() const noexcept { return store_; }

  /// Throws DecodeError for undecodable bytes; nothing is stored then.
  UploadResult upload(std::span<const std::uint8_t> bytes);
  /// Top-q entries of the library ranking. q must lie in [1, S].
  SeedRanking recommend(const std::string& image_id, std::size_t q) const;
  SynthesisRecord synthesize(const std::string& image_id, const std::string& seed_id, double alpha = 2.0);
  std::vector<std::uint8_t> seed_thumbnail(const std::string& seed_id) const;

 private:
  ServiceConfig config_;
  ScorerModel scorer_;
  SelectorModel selector_;
  SeedCatalog catalog_;
  ServiceSynthesisFn synth_;
  SessionStore store_;
  std::vector<std::vector<std::uint8_t>> thumbnails_;
};

/// JSON views returned by the HTTP layer.
nlohmann::json recommendation_json(const SeedRanking& ranking);
nlohmann::json seeds_json(const SeedCatalog& catalog);

/// cpp-httplib server bound to a Service.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds (port 0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Blocks serving requests until stop().
  void listen();
  /// Serves on a background thread.
  void start();
  void stop();

 private:
  void routes();

  Service& service_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace scube
