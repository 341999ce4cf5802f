#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "cli.hpp"
#include "rimlab/rvol.hpp"
#include "service.hpp"

using namespace rimlab;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string b64(const fs::path& p) { return base64::encode(rvol::read_file(p)); }

class ServiceTest : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        root_ = fs::temp_directory_path() / "rimlab-service-test";
        fs::remove_all(root_);
        sim::DatasetConfig cfg;
        cfg.count_rim_plus = 3;
        cfg.count_rim_minus = 2;
        cfg.seed = 31;
        manifest_ = sim::generate_dataset(cfg, root_ / "data");
        defaults_.max_iters = 25;
        service_ = std::make_unique<service::Service>(
            service::Service::from_manifest(root_ / "data" / "manifest.json", defaults_));
    }

    static void TearDownTestSuite() { service_.reset(); }

    static const sim::ManifestEntry& rim_plus() {
        for (const auto& e : manifest_.entries)
            if (e.rim_file) return e;
        throw std::logic_error("no rim+ lesion");
    }

    static fs::path root_;
    static sim::DatasetManifest manifest_;
    static seg::LevelSetParams defaults_;
    static std::unique_ptr<service::Service> service_;
};

fs::path ServiceTest::root_;
sim::DatasetManifest ServiceTest::manifest_;
seg::LevelSetParams ServiceTest::defaults_;
std::unique_ptr<service::Service> ServiceTest::service_;

bool has_field(const json& body, const std::string& field) {
    for (const auto& d : body.at("details"))
        if (d.at("field") == field) return true;
    return false;
}

} // namespace

TEST_F(ServiceTest, HealthAndListing) {
    const auto h = service_->health();
    EXPECT_EQ(h.status, 200);
    EXPECT_EQ(h.body.at("status"), "ok");
    const auto l = service_->lesions();
    EXPECT_EQ(l.status, 200);
    ASSERT_EQ(l.body.size(), 5u);
    EXPECT_EQ(l.body[0].at("id"), manifest_.entries[0].id);
}

TEST_F(ServiceTest, LesionLookup) {
    const auto& e = rim_plus();
    const auto r = service_->lesion(e.id);
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.body.at("has_ground_truth"), true);
    const auto mask = rvol::decode_mask(base64::decode(r.body.at("mask").get<std::string>()));
    EXPECT_EQ(rvol::encode(mask), rvol::read_file(root_ / "data" / e.mask_file));
    const auto missing = service_->lesion("nope");
    EXPECT_EQ(missing.status, 404);
    EXPECT_EQ(missing.body.at("error"), "not_found");
}

TEST_F(ServiceTest, SegmentByIdMatchesTheCli) {
    const auto& e = rim_plus();
    const auto r = service_->segment(json{{"id", e.id}, {"w", 0.0}}.dump());
    ASSERT_EQ(r.status, 200) << r.body.dump();
    EXPECT_EQ(r.body.at("w"), 0.0);
    EXPECT_TRUE(r.body.at("dice").is_number());

    const auto out = root_ / "cli";
    ASSERT_EQ(cli::run({"segment", "-d", (root_ / "data").string(), "-o", out.string(), "-w", "0", "--max-iters",
                        "25"}),
              cli::kExitOk);
    EXPECT_EQ(base64::decode(r.body.at("high_mask").get<std::string>()), rvol::read_file(out / (e.id + "_high.rvol")));
    EXPECT_EQ(base64::decode(r.body.at("low_mask").get<std::string>()), rvol::read_file(out / (e.id + "_low.rvol")));
    const auto conv = json::parse(slurp(out / (e.id + "_convergence.json")));
    EXPECT_EQ(r.body.at("iterations"), conv.at("iterations"));
    EXPECT_EQ(r.body.at("c1"), conv.at("c1"));
}

TEST_F(ServiceTest, RepeatedRequestsAreIdentical) {
    const auto body = json{{"id", manifest_.entries[1].id}, {"params", {{"max_iters", 10}}}}.dump();
    auto a = service_->segment(body).body;
    auto b = service_->segment(body).body;
    a.erase("solver_ms");
    b.erase("solver_ms");
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.at("iterations"), 10);
}

TEST_F(ServiceTest, InlinePatch) {
    const auto& e = rim_plus();
    const json request{{"volume", b64(root_ / "data" / e.volume_file)},
                       {"mask", b64(root_ / "data" / e.mask_file)},
                       {"rim", b64(root_ / "data" / *e.rim_file)}};
    const auto inline_reply = service_->segment(request.dump());
    ASSERT_EQ(inline_reply.status, 200) << inline_reply.body.dump();
    EXPECT_TRUE(inline_reply.body.at("id").is_null());
    const auto by_id = service_->segment(json{{"id", e.id}}.dump());
    EXPECT_EQ(inline_reply.body.at("high_mask"), by_id.body.at("high_mask"));
    EXPECT_EQ(inline_reply.body.at("dice"), by_id.body.at("dice"));
}

TEST_F(ServiceTest, ValidationErrors) {
    const auto& e = rim_plus();
    auto r = service_->segment(R"({"volume": "!!!not base64", "mask": "AAAA"})");
    EXPECT_EQ(r.status, 422);
    EXPECT_EQ(r.body.at("error"), "invalid_request");
    EXPECT_TRUE(has_field(r.body, "volume"));
    EXPECT_TRUE(has_field(r.body, "mask"));

    r = service_->segment(json{{"id", e.id}, {"w", -1}}.dump());
    EXPECT_EQ(r.status, 422);
    EXPECT_TRUE(has_field(r.body, "w"));

    r = service_->segment(json{{"id", e.id}, {"params", {{"dt", 0}}}}.dump());
    EXPECT_EQ(r.status, 422);
    EXPECT_TRUE(has_field(r.body, "params.dt"));

    r = service_->segment(json{{"id", e.id}, {"params", {{"speed", 1}}}}.dump());
    EXPECT_EQ(r.status, 422);

    r = service_->segment(json{{"id", e.id}, {"colour", "red"}}.dump());
    EXPECT_EQ(r.status, 422);
    EXPECT_TRUE(has_field(r.body, "colour"));

    r = service_->segment(json{{"id", e.id}, {"mask", b64(root_ / "data" / e.mask_file)}}.dump());
    EXPECT_EQ(r.status, 422);

    r = service_->segment(json::object().dump());
    EXPECT_EQ(r.status, 422);

    r = service_->segment(json{{"id", "ghost"}}.dump());
    EXPECT_EQ(r.status, 404);

    r = service_->segment("{ not json");
    EXPECT_EQ(r.status, 400);

    Mask3D small({{2, 2, 2}, {1, 1, 1}}, 1);
    r = service_->segment(json{{"volume", b64(root_ / "data" / e.volume_file)},
                               {"mask", base64::encode(rvol::encode(small))}}
                              .dump());
    EXPECT_EQ(r.status, 422);

    // Still serving afterwards.
    EXPECT_EQ(service_->segment(json{{"id", e.id}}.dump()).status, 200);
}

TEST_F(ServiceTest, HttpRoundTrip) {
    httplib::Server server;
    service_->mount(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread worker([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client client("127.0.0.1", port);
    auto health = client.Get("/v1/health");
    ASSERT_TRUE(health);
    EXPECT_EQ(health->status, 200);
    EXPECT_EQ(json::parse(health->body).at("status"), "ok");

    auto list = client.Get("/v1/lesions");
    ASSERT_TRUE(list);
    EXPECT_EQ(json::parse(list->body).size(), 5u);

    auto one = client.Get("/v1/lesions/" + manifest_.entries[0].id);
    ASSERT_TRUE(one);
    EXPECT_EQ(one->status, 200);

    auto missing = client.Get("/v1/lesions/absent");
    ASSERT_TRUE(missing);
    EXPECT_EQ(missing->status, 404);

    auto unknown_route = client.Get("/v2/anything");
    ASSERT_TRUE(unknown_route);
    EXPECT_EQ(unknown_route->status, 404);
    EXPECT_EQ(json::parse(unknown_route->body).at("error"), "not_found");

    auto bad = client.Post("/v1/segment", R"({"volume": "@@", "mask": "@@"})", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 422);

    auto good = client.Post("/v1/segment", json{{"id", rim_plus().id}}.dump(), "application/json");
    ASSERT_TRUE(good);
    EXPECT_EQ(good->status, 200);
    const auto body = json::parse(good->body);
    EXPECT_GE(body.at("solver_ms").get<double>(), 0.0);
    EXPECT_EQ(body.at("dims").size(), 3u);

    server.stop();
    worker.join();
}
