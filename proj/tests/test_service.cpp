#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <future>

#include "scube/errors.hpp"
#include "scube/gapgen.hpp"
#include "scube/service.hpp"
#include "support.hpp"

#include <httplib.h>

using namespace scube;
using scube::testing::gray;
using scube::testing::TempDir;

namespace {

constexpr Size kSize{16, 16};
const std::vector<double> kShifts = {0.2, 0.1, -0.1, -0.2, 0.05};

SeedCatalog shift_catalog(const std::vector<double>& shifts) {
  std::vector<StyleSeed> seeds;
  for (std::size_t i = 0; i < shifts.size(); ++i) {
    seeds.push_back({"shift-" + std::to_string(i), gray(kSize, 0.5 + shifts[i]), 0.5 + shifts[i], {}});
  }
  return SeedCatalog(seeds);
}

SelectorModel train_on_shifts(const std::vector<double>& shifts) {
  std::mt19937_64 rng(5);
  std::vector<ImageTensor> images;
  std::vector<std::string> ids;
  ImageStore store;
  for (int i = 0; i < 40; ++i) {
    images.push_back(scube::testing::gray_image(kSize, 0.5, 0.05, rng));
    ids.push_back("t" + std::to_string(i));
    store.add(ids.back(), images.back());
  }
  const auto gaps = build_gap_dataset(images, ids, shift_catalog(shifts), ScorerModel::oracle(OracleKind::kBrightness),
                                      brightness_shift_synthesizer(), BinaryMask(40, shifts.size(), true));
  TrainConfig cfg;
  cfg.iterations = 400;
  cfg.learning_rate = 1e-2;
  cfg.batch_size = 16;
  cfg.rng_seed = 1;
  return train_selector(gaps, store, cfg, kSize);
}

const SelectorModel& shift_selector() {
  static const SelectorModel model = train_on_shifts(kShifts);
  return model;
}

ServiceSynthesisFn oracle_synth() {
  return [](const ImageTensor& img, const StyleSeed& seed, double) { return brightness_shift_synthesizer()(img, seed); };
}

ServiceConfig test_config(const std::filesystem::path& store) {
  ServiceConfig c;
  c.store = store;
  c.synthesis_size = kSize;
  c.rng_seed = 7;
  c.max_upload_bytes = 64 * 1024;
  c.threads = 4;
  return c;
}

std::unique_ptr<Service> make_service(const std::filesystem::path& store, ServiceSynthesisFn synth = oracle_synth()) {
  return std::make_unique<Service>(test_config(store), ScorerModel::oracle(OracleKind::kBrightness), shift_selector(),
                                   shift_catalog(kShifts), std::move(synth));
}

std::vector<std::uint8_t> png_of(const ImageTensor& img) { return encode_png(img); }

std::string as_string(const std::vector<std::uint8_t>& b) { return {b.begin(), b.end()}; }

std::size_t file_count(const std::filesystem::path& dir) {
  return static_cast<std::size_t>(std::distance(std::filesystem::directory_iterator(dir), {}));
}

}  // namespace

TEST(Service, UploadReturnsFreshIdAndScore) {
  TempDir dir;
  auto svc = make_service(dir.path());
  const auto bytes = png_of(gray({20, 30}, 0.4));
  const auto a = svc->upload(bytes);
  const auto b = svc->upload(bytes);
  EXPECT_EQ(a.image_id.size(), 32u);
  EXPECT_NE(a.image_id, b.image_id);
  EXPECT_NEAR(a.memorability, 0.4, 1.0 / 255);
  EXPECT_GE(a.memorability, 0.0);
  EXPECT_LE(a.memorability, 1.0);
}

TEST(Service, CorruptUploadStoresNothing) {
  TempDir dir;
  auto svc = make_service(dir.path());
  const std::vector<std::uint8_t> junk = {0x89, 'P', 'N', 'G', 1, 2, 3, 4};
  EXPECT_THROW(svc->upload(junk), DecodeError);
  EXPECT_EQ(file_count(dir / "images"), 0u);
}

TEST(Service, RecommendMatchesLibraryRanking) {
  TempDir dir;
  auto svc = make_service(dir.path());
  std::mt19937_64 rng(3);
  const auto img = scube::testing::random_image(kSize, rng);
  const auto id = svc->upload(png_of(img)).image_id;
  const auto full = svc->recommend(id, kShifts.size());
  const auto lib = rank_seeds(shift_selector().predict(svc->store().image(id)), shift_selector().seed_ids());
  EXPECT_EQ(full.entries, lib.entries);
  EXPECT_EQ(full.keep_original, lib.keep_original);
  EXPECT_EQ(svc->recommend(id, kShifts.size()).entries, full.entries);
  EXPECT_THROW(svc->recommend(id, 0), ArgumentError);
  EXPECT_THROW(svc->recommend(id, kShifts.size() + 1), ArgumentError);
  EXPECT_THROW(svc->recommend("0123456789abcdef0123456789abcdef", 1), NotFoundError);
  EXPECT_THROW(svc->recommend("../etc/passwd", 1), NotFoundError);
}

TEST(Service, TopThreeAreLargestKnownShifts) {
  TempDir dir;
  auto svc = make_service(dir.path());
  const auto id = svc->upload(png_of(gray(kSize, 0.5))).image_id;
  const auto top = svc->recommend(id, 3);
  ASSERT_EQ(top.entries.size(), 3u);
  EXPECT_EQ(top.entries[0].seed_id, "shift-0");
  EXPECT_EQ(top.entries[1].seed_id, "shift-1");
  EXPECT_EQ(top.entries[2].seed_id, "shift-4");
  EXPECT_FALSE(top.keep_original);
}

TEST(Service, KeepOriginalWhenEverySeedHurts) {
  TempDir dir;
  const std::vector<double> shifts = {-0.1, -0.2};
  Service svc(test_config(dir.path()), ScorerModel::oracle(OracleKind::kBrightness), train_on_shifts(shifts),
              shift_catalog(shifts), oracle_synth());
  const auto id = svc.upload(png_of(gray(kSize, 0.5))).image_id;
  const auto r = svc.recommend(id, 2);
  EXPECT_TRUE(r.keep_original);
  ASSERT_EQ(r.entries.size(), 2u);
  EXPECT_EQ(r.entries[0].seed_id, "shift-0");
}

TEST(Service, SynthesizeScoresAndStoresResult) {
  TempDir dir;
  auto svc = make_service(dir.path());
  const auto id = svc->upload(png_of(gray({40, 40}, 0.5))).image_id;
  const auto rec = svc->synthesize(id, "shift-1");
  EXPECT_EQ(rec.alpha, 2.0);
  EXPECT_EQ(rec.image_id, id);
  EXPECT_NEAR(rec.measured_memorability - rec.source_memorability, 0.1, 1.0 / 255);
  EXPECT_NEAR(rec.predicted_gap, 0.1, 0.05);
  const auto png = svc->store().result_png(rec.result_id);
  EXPECT_EQ(decode_image(png).size(), kSize);
  EXPECT_EQ(svc->store().result(rec.result_id).seed_id, "shift-1");

  const auto again = svc->synthesize(id, "shift-1", 2.0);
  EXPECT_NE(again.result_id, rec.result_id);
  EXPECT_EQ(svc->store().result_png(again.result_id), png);
}

TEST(Service, SynthesizeErrors) {
  TempDir dir;
  auto svc = make_service(dir.path());
  const auto id = svc->upload(png_of(gray(kSize, 0.5))).image_id;
  EXPECT_THROW(svc->synthesize(id, "nope"), NotFoundError);
  EXPECT_THROW(svc->synthesize("ffffffffffffffffffffffffffffffff", "shift-0"), NotFoundError);
  EXPECT_THROW(svc->synthesize(id, "shift-0", 0.0), ArgumentError);
}

TEST(Service, DefaultSynthesizerIsDeterministicAcrossServers) {
  TempDir a, b;
  auto cfg = test_config(a.path());
  cfg.synthesis_iterations = 5;
  Service s1(cfg, ScorerModel::oracle(OracleKind::kBrightness), shift_selector(), shift_catalog(kShifts));
  cfg.store = b.path();
  Service s2(cfg, ScorerModel::oracle(OracleKind::kBrightness), shift_selector(), shift_catalog(kShifts));
  std::mt19937_64 rng(8);
  const auto bytes = png_of(scube::testing::random_image({20, 20}, rng));
  const auto i1 = s1.upload(bytes).image_id, i2 = s2.upload(bytes).image_id;
  EXPECT_EQ(i1, i2);
  const auto r1 = s1.synthesize(i1, "shift-3", 3.0), r2 = s2.synthesize(i2, "shift-3", 3.0);
  EXPECT_EQ(s1.store().result_png(r1.result_id), s2.store().result_png(r2.result_id));
}

TEST(Service, SeedListingIsOrderedWithThumbnails) {
  TempDir dir;
  auto svc = make_service(dir.path());
  const auto j = seeds_json(svc->catalog());
  ASSERT_EQ(j["seeds"].size(), kShifts.size());
  for (std::size_t i = 0; i < kShifts.size(); ++i) {
    EXPECT_EQ(j["seeds"][i]["seed_id"], "shift-" + std::to_string(i));
    EXPECT_EQ(j["seeds"][i]["memorability"].get<double>(), 0.5 + kShifts[i]);
  }
  EXPECT_EQ(decode_image(svc->seed_thumbnail("shift-2")).size(), (Size{128, 128}));
  EXPECT_TRUE(seeds_json(SeedCatalog{})["seeds"].empty());
}

TEST(Service, SessionsSurviveRestart) {
  TempDir dir;
  std::string id;
  {
    auto svc = make_service(dir.path());
    id = svc->upload(png_of(gray(kSize, 0.3))).image_id;
  }
  auto svc = make_service(dir.path());
  EXPECT_EQ(svc->recommend(id, 2).entries.size(), 2u);
  EXPECT_NEAR(svc->store().image_memorability(id), 0.3, 1.0 / 255);
  EXPECT_NE(svc->upload(png_of(gray(kSize, 0.3))).image_id, id);
}

TEST(Service, SelectorMustMatchCatalog) {
  TempDir dir;
  EXPECT_THROW(Service(test_config(dir.path()), ScorerModel::oracle(OracleKind::kBrightness), shift_selector(),
                       shift_catalog({0.1, 0.2})),
               ConfigError);
}

TEST(ServiceConfig, FileThenEnvironment) {
  TempDir dir;
  std::ofstream(dir / "svc.json") << R"({"port": 9000, "scorer": "oracle:colorfulness", "synthesis_size": [64, 48]})";
  auto cfg = load_service_config(dir / "svc.json");
  EXPECT_EQ(cfg.port, 9000);
  EXPECT_EQ(cfg.synthesis_size, (Size{64, 48}));
  EXPECT_EQ(cfg.scorer, "oracle:colorfulness");
  EXPECT_EQ(cfg.host, "127.0.0.1");
  apply_env_overrides(cfg, [](const char* k) -> const char* {
    const std::string key = k;
    if (key == "SCUBE_PORT") return "9100";
    if (key == "SCUBE_SELECTOR") return "/models/sel.bin";
    return nullptr;
  });
  EXPECT_EQ(cfg.port, 9100);
  EXPECT_EQ(cfg.selector, "/models/sel.bin");
  EXPECT_THROW(apply_env_overrides(cfg, [](const char*) -> const char* { return "x"; }), ConfigError);
  EXPECT_THROW(load_service_config(dir / "missing.json"), ConfigError);
}

class Http : public ::testing::Test {
 protected:
  void start(ServiceSynthesisFn synth = oracle_synth()) {
    service_ = make_service(dir_.path(), std::move(synth));
    server_ = std::make_unique<HttpServer>(*service_);
    port_ = server_->bind("127.0.0.1", 0);
    server_->start();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(30, 0);
  }
  void TearDown() override {
    if (server_) server_->stop();
  }

  std::string upload(const ImageTensor& img) {
    auto res = client_->Post("/images", as_string(png_of(img)), "image/png");
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    return nlohmann::json::parse(res->body)["image_id"].get<std::string>();
  }

  TempDir dir_;
  std::unique_ptr<Service> service_;
  std::unique_ptr<HttpServer> server_;
  std::unique_ptr<httplib::Client> client_;
  int port_ = 0;
};

TEST_F(Http, HealthAndSeeds) {
  start();
  auto h = client_->Get("/health");
  ASSERT_TRUE(h);
  EXPECT_EQ(h->status, 200);
  auto s = client_->Get("/seeds");
  ASSERT_TRUE(s);
  const auto j = nlohmann::json::parse(s->body);
  EXPECT_EQ(j, seeds_json(service_->catalog()));
  for (const auto& seed : j["seeds"]) {
    auto t = client_->Get(seed["thumbnail_url"].get<std::string>());
    ASSERT_TRUE(t);
    EXPECT_EQ(t->status, 200);
    EXPECT_EQ(t->get_header_value("Content-Type"), "image/png");
  }
}

TEST_F(Http, UploadErrors) {
  start();
  auto bad = client_->Post("/images", "definitely not a png", "image/png");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
  EXPECT_TRUE(nlohmann::json::parse(bad->body).contains("error"));
  EXPECT_EQ(file_count(dir_ / "images"), 0u);

  std::mt19937_64 rng(1);
  const auto big = png_of(scube::testing::random_image({200, 200}, rng));
  ASSERT_GT(big.size(), service_->config().max_upload_bytes);
  auto large = client_->Post("/images", as_string(big), "image/png");
  ASSERT_TRUE(large);
  EXPECT_EQ(large->status, 413);
}

TEST_F(Http, MultipartUpload) {
  start();
  httplib::MultipartFormDataItems items = {{"image", as_string(png_of(gray(kSize, 0.6))), "x.png", "image/png"}};
  auto res = client_->Post("/images", items);
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_NEAR(nlohmann::json::parse(res->body)["memorability"].get<double>(), 0.6, 1.0 / 255);
}

TEST_F(Http, RecommendationOrderingEqualsLibraryOnRandomUploads) {
  start();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> level(0.1, 0.9);
  for (int i = 0; i < 10; ++i) {
    const auto img = scube::testing::gray_image({24, 24}, level(rng), 0.2, rng);
    const auto id = upload(img);
    auto res = client_->Get("/images/" + id + "/recommendations?q=" + std::to_string(kShifts.size()));
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200);
    const auto body = nlohmann::json::parse(res->body);
    const auto lib = rank_seeds(shift_selector().predict(decode_image(png_of(img))), shift_selector().seed_ids());
    ASSERT_EQ(body["entries"].size(), lib.entries.size());
    for (std::size_t k = 0; k < lib.entries.size(); ++k) {
      EXPECT_EQ(body["entries"][k]["seed_id"], lib.entries[k].seed_id);
      EXPECT_EQ(body["entries"][k]["predicted_gap"].get<double>(), lib.entries[k].predicted_gap);
    }
    EXPECT_EQ(body["keep_original"].get<bool>(), lib.keep_original);
  }
}

TEST_F(Http, RecommendationErrors) {
  start();
  const auto id = upload(gray(kSize, 0.5));
  EXPECT_EQ(client_->Get("/images/" + id + "/recommendations?q=0")->status, 400);
  EXPECT_EQ(client_->Get("/images/" + id + "/recommendations?q=abc")->status, 400);
  EXPECT_EQ(client_->Get("/images/" + id + "/recommendations?q=99")->status, 400);
  EXPECT_EQ(client_->Get("/images/0000000000000000000000000000beef/recommendations?q=1")->status, 404);
  auto all = client_->Get("/images/" + id + "/recommendations");
  EXPECT_EQ(nlohmann::json::parse(all->body)["entries"].size(), kShifts.size());
}

TEST_F(Http, SynthesizeAndEveryUrlDereferences) {
  start();
  auto up = client_->Post("/images", as_string(png_of(gray(kSize, 0.5))), "image/png");
  const auto uj = nlohmann::json::parse(up->body);
  const std::string id = uj["image_id"];
  EXPECT_EQ(client_->Get(uj["image_url"].get<std::string>())->status, 200);

  auto rec = client_->Get("/images/" + id + "/recommendations?q=2");
  for (const auto& e : nlohmann::json::parse(rec->body)["entries"]) {
    EXPECT_EQ(client_->Get(e["thumbnail_url"].get<std::string>())->status, 200);
  }

  auto res = client_->Post("/images/" + id + "/synthesize", R"({"seed_id": "shift-0", "alpha": 0.5})", "application/json");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto body = nlohmann::json::parse(res->body);
  EXPECT_EQ(body["alpha"].get<double>(), 0.5);
  EXPECT_NEAR(body["measured_gap"].get<double>(), 0.2, 1.0 / 255);
  auto png = client_->Get(body["result_url"].get<std::string>());
  ASSERT_TRUE(png);
  EXPECT_EQ(png->status, 200);
  EXPECT_EQ(decode_image(std::vector<std::uint8_t>(png->body.begin(), png->body.end())).size(), kSize);
  EXPECT_EQ(client_->Get(body["result_url"].get<std::string>() + "/meta")->status, 200);

  auto def = client_->Post("/images/" + id + "/synthesize", R"({"seed_id": "shift-1"})", "application/json");
  EXPECT_EQ(nlohmann::json::parse(def->body)["alpha"].get<double>(), 2.0);
}

TEST_F(Http, SynthesizeErrors) {
  start([](const ImageTensor&, const StyleSeed&, double) -> ImageTensor {
    throw NumericalError("synthesize: non-finite objective", 17);
  });
  const auto id = upload(gray(kSize, 0.5));
  EXPECT_EQ(client_->Post("/images/" + id + "/synthesize", R"({"seed_id": "zzz"})", "application/json")->status, 404);
  EXPECT_EQ(client_->Post("/images/" + id + "/synthesize", R"({"alpha": 1})", "application/json")->status, 400);
  EXPECT_EQ(client_->Post("/images/" + id + "/synthesize", "{oops", "application/json")->status, 400);
  EXPECT_EQ(client_->Post("/images/" + id + "/synthesize", R"({"seed_id": "shift-0", "alpha": -1})", "application/json")
                ->status,
            400);
  auto res = client_->Post("/images/" + id + "/synthesize", R"({"seed_id": "shift-0"})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 500);
  EXPECT_EQ(nlohmann::json::parse(res->body)["iteration"].get<int>(), 17);
  EXPECT_EQ(client_->Get("/results/00000000000000000000000000000000")->status, 404);
}

TEST_F(Http, LongSynthesisDoesNotBlockRecommendations) {
  std::promise<void> release;
  auto released = release.get_future().share();
  std::atomic<bool> entered{false};
  start([released, &entered](const ImageTensor& img, const StyleSeed& seed, double) {
    entered = true;
    released.wait();
    return brightness_shift_synthesizer()(img, seed);
  });
  const auto id = upload(gray(kSize, 0.5));
  auto pending = std::async(std::launch::async, [&] {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(30, 0);
    return c.Post("/images/" + id + "/synthesize", R"({"seed_id": "shift-0"})", "application/json")->status;
  });
  while (!entered) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  auto rec = client_->Get("/images/" + id + "/recommendations?q=1");
  ASSERT_TRUE(rec);
  EXPECT_EQ(rec->status, 200);
  release.set_value();
  EXPECT_EQ(pending.get(), 200);
}
