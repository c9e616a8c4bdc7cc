#include <doctest.h>

#include <set>
#include <thread>

#include "nkca/service.hpp"
#include "support.hpp"

#include <httplib.h>

using namespace nkca;
using nlohmann::json;

namespace {

const LoadedModel& shared_model() {
  static const LoadedModel model = test::tiny_stripes_model(30);
  return model;
}

/// A service on an ephemeral localhost port.
class Fixture {
 public:
  explicit Fixture(const std::filesystem::path& state, ServiceOptions options = {}) {
    options.state_dir = state;
    if (options.seed == 0) options.seed = 11;
    service_ = std::make_unique<Service>(shared_model(), std::move(options));
    service_->bind(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(120, 0);
  }
  ~Fixture() {
    server_.stop();
    thread_.join();
  }

  httplib::Client& http() { return *client_; }
  Service& service() { return *service_; }

  json post(const std::string& path, const json& body, int expect) {
    auto res = client_->Post(path, body.dump(), "application/json");
    REQUIRE(res);
    INFO(res->body);
    CHECK(res->status == expect);
    return res->body.empty() ? json() : json::parse(res->body);
  }

  json get(const std::string& path, int expect = 200) {
    auto res = client_->Get(path);
    REQUIRE(res);
    INFO(res->body);
    CHECK(res->status == expect);
    return json::parse(res->body);
  }

 private:
  httplib::Server server_;
  std::unique_ptr<Service> service_;
  std::thread thread_;
  int port_ = 0;
  std::unique_ptr<httplib::Client> client_;
};

std::string png_base64(const Image& image) { return base64_encode(encode_png(image)); }

std::size_t count_nodes(const json& node) {
  std::size_t n = 1;
  for (const auto& c : node["children"]) n += count_nodes(c);
  return n;
}

std::size_t depth(const json& node) {
  std::size_t d = 0;
  for (const auto& c : node["children"]) d = std::max(d, 1 + depth(c));
  return d;
}

}  // namespace

TEST_SUITE("service") {
  TEST_CASE("base64 round trip") {
    for (std::size_t n = 0; n < 7; ++n) {
      std::vector<std::uint8_t> bytes(n);
      for (std::size_t i = 0; i < n; ++i) bytes[i] = static_cast<std::uint8_t>(250 - 37 * i);
      CHECK(base64_decode(base64_encode(bytes)) == bytes);
    }
    CHECK(base64_encode({'M', 'a'}) == "TWE=");
    CHECK(base64_decode("data:image/png;base64,TWFu") == std::vector<std::uint8_t>{'M', 'a', 'n'});
    CHECK_THROWS_AS(base64_decode("TW$u"), ParseError);
  }

  TEST_CASE("model and openapi documents") {
    test::TempDir dir("svc-doc");
    Fixture f(dir.path());
    const auto m = f.get("/model");
    CHECK(m["kind"] == "continuous");
    CHECK(m["example_shape"] == json::array({8, 8, 1}));
    CHECK(m["defaults"]["variants"]["n"] == 8);
    CHECK(m["defaults"]["variants"]["beta"] == 0.2);
    const auto spec = f.get("/openapi.json");
    CHECK(spec["openapi"].get<std::string>().rfind("3.", 0) == 0);
    for (const char* path : {"/model", "/sessions", "/sessions/{id}", "/sessions/{id}/lineage", "/sessions/{id}/candidates",
                             "/sessions/{id}/inpaint", "/candidates/{id}", "/candidates/{id}/image",
                             "/candidates/{id}/values", "/candidates/{id}/verify", "/jobs/{id}"}) {
      INFO(path);
      CHECK(spec["paths"].contains(path));
    }
  }

  TEST_CASE("CORS headers and preflight") {
    test::TempDir dir("svc-cors");
    ServiceOptions opt;
    opt.cors_origin = "http://localhost:5173";
    Fixture f(dir.path(), opt);
    auto res = f.http().Get("/model");
    REQUIRE(res);
    CHECK(res->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");
    auto pre = f.http().Options("/sessions");
    REQUIRE(pre);
    CHECK(pre->status == 204);
    CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);
  }

  TEST_CASE("session sources and errors") {
    test::TempDir dir("svc-src");
    ServiceOptions opt;
    opt.max_upload_bytes = 4096;
    Fixture f(dir.path(), opt);

    const auto synth = f.post("/sessions", {{"source", "synthesize"}, {"seed", "42"}}, 201);
    CHECK(synth["root_candidate"]["origin"] == "synthesize");
    CHECK(synth["root_candidate"]["sub_seed"] == "42");
    CHECK(synth["root_candidate"]["parent_id"].is_null());

    const auto ds = f.post("/sessions", {{"source", "dataset-index"}, {"index", 3}}, 201);
    CHECK(ds["root_candidate"]["extra"]["index"] == 3);
    f.post("/sessions", {{"source", "dataset-index"}, {"index", 100000}}, 404);

    Image img{8, 8, 1, std::vector<std::uint8_t>(64)};
    for (std::size_t i = 0; i < 64; ++i) img.pixels[i] = (i % 8) < 4 ? 0 : 255;
    const auto up = f.post("/sessions", {{"source", "upload"}, {"image", png_base64(img)}}, 201);
    auto res = f.http().Get(up["root_candidate"]["image_url"].get<std::string>());
    REQUIRE(res);
    CHECK(decode_png(std::vector<std::uint8_t>(res->body.begin(), res->body.end())).pixels == img.pixels);

    f.post("/sessions", {{"source", "upload"}, {"image", "not base64!"}}, 400);
    f.post("/sessions", {{"source", "upload"}, {"image", png_base64(Image{4, 4, 1, std::vector<std::uint8_t>(16)})}}, 400);
    f.post("/sessions", {{"source", "upload"}, {"image", std::string(8000, 'A')}}, 413);
    f.post("/sessions", {{"source", "camera"}}, 400);
    f.post("/sessions", {{"source", "synthesize"}, {"seed", -1}}, 422);
    auto bad = f.http().Post("/sessions", "{not json", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 400);
    CHECK(json::parse(bad->body)["error"]["status"] == 400);

    f.get("/sessions/s999", 404);
    f.get("/candidates/nope", 404);
    f.get("/jobs/j999", 404);
    CHECK(f.get("/sessions")["sessions"].size() == 3);
  }

  TEST_CASE("variants, branching and lineage") {
    test::TempDir dir("svc-lineage");
    Fixture f(dir.path());
    const auto s = f.post("/sessions", {{"source", "synthesize"}}, 201);
    const std::string sid = s["session_id"];
    const std::string root = s["root_candidate"]["id"];

    const auto first = f.post("/sessions/" + sid + "/candidates", {{"parent_id", root}, {"beta", 0.2}}, 201);
    REQUIRE(first["candidates"].size() == 8);
    std::set<std::string> seeds, etags;
    for (const auto& c : first["candidates"]) {
      CHECK(c["parent_id"] == root);
      CHECK(c["beta"] == 0.2);
      seeds.insert(c["sub_seed"].get<std::string>());
      etags.insert(c["etag"].get<std::string>());
    }
    CHECK(seeds.size() == 8);
    CHECK(etags.size() > 1);

    SUBCASE("identical requests are deduplicated") {
      json again = {{"parent_id", root}, {"beta", 0.2}, {"sub_seeds", json::array()}};
      for (const auto& c : first["candidates"]) again["sub_seeds"].push_back(c["sub_seed"]);
      const auto dup = f.post("/sessions/" + sid + "/candidates", again, 201);
      for (std::size_t i = 0; i < 8; ++i) CHECK(dup["candidates"][i]["id"] == first["candidates"][i]["id"]);
      CHECK(f.get("/sessions/" + sid)["candidates"] == 9);
    }

    SUBCASE("branching builds a two-level tree") {
      const std::string picked = first["candidates"][5]["id"];
      const auto second = f.post("/sessions/" + sid + "/candidates", {{"parent_id", picked}}, 201);
      CHECK(second["candidates"].size() == 8);
      const auto tree = f.get("/sessions/" + sid + "/lineage");
      CHECK(tree["count"] == 17);
      CHECK(count_nodes(tree["root"]) == 17);
      CHECK(depth(tree["root"]) == 2);

      for (const auto& c : second["candidates"]) {
        const auto v = f.post("/candidates/" + c["id"].get<std::string>() + "/verify", json::object(), 200);
        CHECK(v["bit_exact"] == true);
      }
    }

    SUBCASE("request validation") {
      f.post("/sessions/" + sid + "/candidates", {{"parent_id", root}, {"beta", 1.0}}, 422);
      f.post("/sessions/" + sid + "/candidates", {{"parent_id", root}, {"n", 0}}, 422);
      f.post("/sessions/" + sid + "/candidates", {{"parent_id", "c-missing"}}, 404);
      f.post("/sessions/" + sid + "/candidates", json::object(), 422);
      f.post("/sessions/s999/candidates", {{"parent_id", root}}, 404);
    }
  }

  TEST_CASE("images are immutable and cacheable") {
    test::TempDir dir("svc-etag");
    Fixture f(dir.path());
    const auto s = f.post("/sessions", {{"source", "synthesize"}}, 201);
    const std::string url = s["root_candidate"]["image_url"];
    auto a = f.http().Get(url);
    REQUIRE(a);
    CHECK(a->status == 200);
    CHECK(a->get_header_value("Content-Type") == "image/png");
    const std::string etag = a->get_header_value("ETag");
    CHECK(etag == s["root_candidate"]["etag"]);
    auto b = f.http().Get(url);
    CHECK(b->body == a->body);
    auto c = f.http().Get(url, {{"If-None-Match", etag}});
    REQUIRE(c);
    CHECK(c->status == 304);
    const auto values = f.get("/candidates/" + s["root_candidate"]["id"].get<std::string>() + "/values");
    CHECK(values["values"].size() == 64);
  }

  TEST_CASE("inpainting preserves unmasked pixels byte for byte") {
    test::TempDir dir("svc-inpaint");
    Fixture f(dir.path());
    const auto s = f.post("/sessions", {{"source", "dataset-index"}, {"index", 0}}, 201);
    const std::string sid = s["session_id"];
    const std::string root = s["root_candidate"]["id"];
    auto parent = f.http().Get("/candidates/" + root + "/image");
    const Image before = decode_png(std::vector<std::uint8_t>(parent->body.begin(), parent->body.end()));

    Image mask{8, 8, 1, std::vector<std::uint8_t>(64, 0)};
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) mask.pixels[r * 8 + c] = 255;
    const auto out = f.post("/sessions/" + sid + "/inpaint", {{"candidate_id", root}, {"mask", png_base64(mask)}}, 201);
    CHECK(out["candidate"]["origin"] == "inpaint");
    CHECK(out["candidate"]["extra"]["masked_elements"] == 16);
    auto img = f.http().Get(out["candidate"]["image_url"].get<std::string>());
    const Image after = decode_png(std::vector<std::uint8_t>(img->body.begin(), img->body.end()));
    for (std::size_t i = 0; i < 64; ++i) {
      if (mask.pixels[i] == 0) CHECK(after.pixels[i] == before.pixels[i]);
    }
    const auto v = f.post("/candidates/" + out["candidate"]["id"].get<std::string>() + "/verify", json::object(), 200);
    CHECK(v["bit_exact"] == true);

    const auto none = f.post("/sessions/" + sid + "/inpaint",
                             {{"candidate_id", root}, {"mask", json(std::vector<int>(64, 0))}}, 201);
    auto same = f.http().Get(none["candidate"]["image_url"].get<std::string>());
    CHECK(same->body == parent->body);

    const auto tiles = f.post("/sessions/" + sid + "/inpaint",
                              {{"candidate_id", root}, {"mask", {{"tiles", 1}, {"size", 4}}}}, 201);
    CHECK(tiles["candidate"]["extra"]["masked_elements"] == 16);

    f.post("/sessions/" + sid + "/inpaint", {{"candidate_id", root}, {"mask", json(std::vector<int>(5, 1))}}, 422);
    f.post("/sessions/" + sid + "/inpaint",
           {{"candidate_id", root}, {"mask", png_base64(Image{4, 4, 1, std::vector<std::uint8_t>(16)})}}, 422);
    f.post("/sessions/" + sid + "/inpaint", {{"candidate_id", root}}, 422);
    f.post("/sessions/" + sid + "/inpaint",
           {{"candidate_id", root}, {"mask", {{"tiles", 1}}}, {"steps", 2}, {"beta_start", 1.0}, {"beta_end", 0.1}},
           422);
  }

  TEST_CASE("slow requests turn into jobs") {
    test::TempDir dir("svc-async");
    ServiceOptions opt;
    opt.async_after = std::chrono::milliseconds(0);
    Fixture f(dir.path(), opt);
    const auto s = f.post("/sessions", {{"source", "synthesize"}}, 201);
    const std::string sid = s["session_id"];
    auto res = f.http().Post("/sessions/" + sid + "/candidates",
                             json{{"parent_id", s["root_candidate"]["id"]}, {"steps", 400}}.dump(), "application/json");
    REQUIRE(res);
    REQUIRE(res->status == 202);
    const auto accepted = json::parse(res->body);
    CHECK(res->get_header_value("Location") == accepted["poll"]);
    json job;
    for (int i = 0; i < 600; ++i) {
      job = f.get(accepted["poll"].get<std::string>());
      if (job["status"] != "running") break;
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    CHECK(job["status"] == "succeeded");
    CHECK(job["code"] == 201);
    CHECK(job["result"]["candidates"].size() == 8);
  }

  TEST_CASE("sessions survive a restart") {
    test::TempDir dir("svc-restart");
    json first, branch;
    {
      Fixture f(dir.path());
      first = f.post("/sessions", {{"source", "synthesize"}}, 201);
      branch = f.post("/sessions/" + first["session_id"].get<std::string>() + "/candidates",
                      {{"parent_id", first["root_candidate"]["id"]}, {"n", 2}}, 201);
    }
    Fixture g(dir.path());
    CHECK(g.service().session_count() == 1);
    const std::string sid = first["session_id"];
    const auto tree = g.get("/sessions/" + sid + "/lineage");
    CHECK(tree["count"] == 3);
    const auto c = g.get("/candidates/" + branch["candidates"][1]["id"].get<std::string>());
    CHECK(c["etag"] == branch["candidates"][1]["etag"]);
    CHECK(c["sub_seed"] == branch["candidates"][1]["sub_seed"]);
    const auto next = g.post("/sessions", {{"source", "synthesize"}}, 201);
    CHECK(next["session_id"] != sid);
    const auto more = g.post("/sessions/" + sid + "/candidates", {{"parent_id", first["root_candidate"]["id"]}, {"n", 1}}, 201);
    CHECK(more["candidates"][0]["id"] != branch["candidates"][0]["id"]);
    CHECK(more["candidates"][0]["id"] != branch["candidates"][1]["id"]);
  }
}
