#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "gaug/gaug.h"

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir = fs::temp_directory_path() / ("gaug_capi_" + std::to_string(::getpid()));
  Scratch() {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() {
    std::error_code ec;
    fs::remove_all(dir, ec);
  }
};

std::string take(char* s) {
  std::string out = s ? s : "";
  gaug_string_free(s);
  return out;
}

}  // namespace

TEST_CASE("null arguments are rejected") {
  CHECK(gaug_graph_synthetic(nullptr, nullptr) == GAUG_ERR_INVALID_ARGUMENT);
  CHECK(std::string(gaug_last_error()).find("null") != std::string::npos);
  CHECK(gaug_graph_load(nullptr, "x", nullptr) == GAUG_ERR_INVALID_ARGUMENT);
  size_t n = 0;
  CHECK(gaug_graph_num_nodes(nullptr, &n) == GAUG_ERR_INVALID_ARGUMENT);
  CHECK(gaug_pipeline_create(nullptr, nullptr) == GAUG_ERR_INVALID_ARGUMENT);
  CHECK(gaug_pipeline_set(nullptr, "a", "b") == GAUG_ERR_INVALID_ARGUMENT);
  CHECK(gaug_pipeline_run(nullptr, "all") == GAUG_ERR_INVALID_ARGUMENT);
  gaug_graph_free(nullptr);
  gaug_pipeline_free(nullptr);
  gaug_string_free(nullptr);
}

TEST_CASE("status names and version") {
  CHECK(std::string(gaug_status_name(GAUG_OK)) == "ok");
  CHECK(std::string(gaug_status_name(GAUG_ERR_VALIDATION)) == "validation error");
  CHECK(std::string(gaug_status_name(static_cast<gaug_status>(99))) == "unknown status");
  CHECK(std::string(gaug_version()).size() > 0);
}

TEST_CASE("graph handles") {
  Scratch s;
  gaug_graph* g = nullptr;
  REQUIRE(gaug_graph_synthetic(R"({"nodes_per_block": 7, "intra_p": 1.0, "inter_p": 0.0})", &g) == GAUG_OK);
  CHECK(std::string(gaug_last_error()).empty());
  size_t n = 0, m = 0, d = 0;
  CHECK(gaug_graph_num_nodes(g, &n) == GAUG_OK);
  CHECK(n == 14);
  CHECK(gaug_graph_num_edges(g, &m) == GAUG_OK);
  CHECK(m == 2 * 21);
  CHECK(gaug_graph_degree(g, 0, &d) == GAUG_OK);
  CHECK(d == 6);
  CHECK(gaug_graph_degree(g, 99, &d) == GAUG_ERR_USAGE);

  const auto nodes = (s.dir / "nodes.jsonl").string(), edges = (s.dir / "edges.csv").string();
  CHECK(gaug_graph_save(g, nodes.c_str(), edges.c_str()) == GAUG_OK);
  gaug_graph* back = nullptr;
  REQUIRE(gaug_graph_load(nodes.c_str(), edges.c_str(), &back) == GAUG_OK);
  CHECK(gaug_graph_num_edges(back, &m) == GAUG_OK);
  CHECK(m == 42);
  gaug_graph_free(back);
  gaug_graph_free(g);

  CHECK(gaug_graph_synthetic("{not json", &g) == GAUG_ERR_PARSE);
  CHECK(gaug_graph_synthetic(R"({"intra_p": 0.0, "inter_p": 0.5})", &g) == GAUG_ERR_VALIDATION);
  CHECK(gaug_graph_load("/nonexistent/a", "/nonexistent/b", &g) == GAUG_ERR_IO);
}

TEST_CASE("pipeline configuration") {
  gaug_pipeline* p = nullptr;
  REQUIRE(gaug_pipeline_create(nullptr, &p) == GAUG_OK);
  CHECK(gaug_pipeline_set(p, "walk.dim", "8") == GAUG_OK);
  CHECK(gaug_pipeline_set(p, "walk.nope", "8") == GAUG_ERR_VALIDATION);
  CHECK(std::string(gaug_last_error()).find("walk.nope") != std::string::npos);
  char* cfg = nullptr;
  REQUIRE(gaug_pipeline_config_json(p, &cfg) == GAUG_OK);
  CHECK(nlohmann::json::parse(take(cfg))["walk"]["dim"] == 8);
  CHECK(gaug_pipeline_validate(p) == GAUG_OK);
  CHECK(gaug_pipeline_run(p, "bogus") == GAUG_ERR_USAGE);
  CHECK(gaug_pipeline_set(p, "edges.accept_rate", "2") == GAUG_OK);
  CHECK(gaug_pipeline_validate(p) == GAUG_ERR_VALIDATION);
  char* report = nullptr;
  CHECK(gaug_pipeline_report_json(p, &report) == GAUG_ERR_USAGE);
  gaug_pipeline_free(p);

  CHECK(gaug_pipeline_create("/nonexistent/config.json", &p) == GAUG_ERR_VALIDATION);
}

TEST_CASE("pipeline run and report") {
  Scratch s;
  gaug_pipeline* p = nullptr;
  REQUIRE(gaug_pipeline_create(nullptr, &p) == GAUG_OK);
  const nlohmann::json overrides = {
      {"synthetic", {{"nodes_per_block", 10}}},
      {"walk", {{"walks_per_node", 4}, {"walk_length", 10}, {"dim", 8}, {"epochs", 1}}},
      {"pretrain", {{"epochs", 5}, {"hidden", 8}, {"out_dim", 4}}},
      {"probe", {{"epochs", 20}}},
      {"seeds", nlohmann::json::array({0})},
      {"out", s.dir.string()}};
  for (const auto& [k, v] : overrides.items()) REQUIRE(gaug_pipeline_set(p, k.c_str(), v.dump().c_str()) == GAUG_OK);

  std::vector<std::string> lines;
  REQUIRE(gaug_pipeline_set_log(p, [](const char* line, void* user) {
    static_cast<std::vector<std::string>*>(user)->push_back(line);
  }, &lines) == GAUG_OK);
  REQUIRE(gaug_pipeline_run(p, "all") == GAUG_OK);
  CHECK_FALSE(lines.empty());

  char* report = nullptr;
  REQUIRE(gaug_pipeline_report_json(p, &report) == GAUG_OK);
  const auto doc = nlohmann::json::parse(take(report));
  CHECK(doc["accs"].size() == 1);
  size_t queries = 0;
  CHECK(gaug_pipeline_edge_queries(p, &queries) == GAUG_OK);
  CHECK(queries <= 40);
  char* skipped = nullptr;
  CHECK(gaug_pipeline_skipped(p, &skipped) == GAUG_OK);
  CHECK(take(skipped).empty());

  REQUIRE(gaug_pipeline_run(p, "all") == GAUG_OK);
  REQUIRE(gaug_pipeline_skipped(p, &skipped) == GAUG_OK);
  CHECK(take(skipped) == "augment,fuse,walk,edges,pretrain_seed0,eval");
  gaug_pipeline_free(p);
}
