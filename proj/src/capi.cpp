#include "gaug/gaug.h"

#include <cstdlib>
#include <cstring>
#include <json.hpp>
#include <new>
#include <optional>
#include <string>

#include "gaug/llm_gateway.hpp"
#include "gaug/pipeline.hpp"
#include "gaug/tag_store.hpp"

struct gaug_graph {
  gaug::TextGraph graph;
};

struct gaug_pipeline {
  gaug::PipelineConfig config;
  std::optional<gaug::Pipeline> pipeline;
  std::optional<std::string> report;
  std::size_t edge_queries = 0;
  std::string skipped;
  gaug_log_fn log_fn = nullptr;
  void* log_user = nullptr;
};

namespace {

thread_local std::string g_last_error;

template <class F>
gaug_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return GAUG_OK;
  } catch (const gaug::ParseError& e) {
    g_last_error = e.what();
    return GAUG_ERR_PARSE;
  } catch (const gaug::ValidationError& e) {
    g_last_error = e.what();
    return GAUG_ERR_VALIDATION;
  } catch (const gaug::UsageError& e) {
    g_last_error = e.what();
    return GAUG_ERR_USAGE;
  } catch (const gaug::IoError& e) {
    g_last_error = e.what();
    return GAUG_ERR_IO;
  } catch (const gaug::NumericError& e) {
    g_last_error = e.what();
    return GAUG_ERR_NUMERIC;
  } catch (const gaug::LlmError& e) {
    g_last_error = e.what();
    return GAUG_ERR_LLM;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return GAUG_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return GAUG_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return GAUG_ERR_INTERNAL;
  }
}

gaug_status invalid(const char* what) {
  g_last_error = std::string(what) + " must not be null";
  return GAUG_ERR_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

gaug::Pipeline& ensure_pipeline(gaug_pipeline* p) {
  if (!p->pipeline) {
    p->pipeline.emplace(p->config);
    if (p->log_fn) {
      auto fn = p->log_fn;
      auto* user = p->log_user;
      p->pipeline->set_logger([fn, user](const std::string& line) { fn(line.c_str(), user); });
    }
  }
  return *p->pipeline;
}

}  // namespace

extern "C" {

const char* gaug_last_error(void) { return g_last_error.c_str(); }

const char* gaug_status_name(gaug_status status) {
  switch (status) {
    case GAUG_OK: return "ok";
    case GAUG_ERR_INVALID_ARGUMENT: return "invalid argument";
    case GAUG_ERR_PARSE: return "parse error";
    case GAUG_ERR_VALIDATION: return "validation error";
    case GAUG_ERR_USAGE: return "usage error";
    case GAUG_ERR_IO: return "i/o error";
    case GAUG_ERR_LLM: return "llm error";
    case GAUG_ERR_NUMERIC: return "numeric error";
    case GAUG_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* gaug_version(void) { return "0.1.0"; }

void gaug_string_free(char* s) { std::free(s); }

gaug_status gaug_graph_load(const char* nodes_path, const char* edges_path, gaug_graph** out) {
  if (!nodes_path || !edges_path) return invalid("path");
  if (!out) return invalid("out");
  return guarded([&] { *out = new gaug_graph{gaug::load_graph(nodes_path, edges_path)}; });
}

gaug_status gaug_graph_synthetic(const char* spec_json, gaug_graph** out) {
  if (!out) return invalid("out");
  return guarded([&] {
    gaug::PipelineConfig config;
    if (spec_json) {
      nlohmann::json spec;
      try {
        spec = nlohmann::json::parse(spec_json);
      } catch (const nlohmann::json::exception& e) {
        throw gaug::ParseError(std::string("synthetic spec: ") + e.what());
      }
      if (!spec.is_object()) throw gaug::ValidationError("synthetic spec must be a JSON object");
      for (const auto& [key, value] : spec.items()) config.set_json("synthetic." + key, value);
    }
    const auto settings = gaug::Settings::resolve(config);
    *out = new gaug_graph{gaug::make_synthetic(settings.synthetic)};
  });
}

gaug_status gaug_graph_save(const gaug_graph* graph, const char* nodes_path, const char* edges_path) {
  if (!graph) return invalid("graph");
  if (!nodes_path || !edges_path) return invalid("path");
  return guarded([&] { gaug::save_graph(graph->graph, nodes_path, edges_path); });
}

gaug_status gaug_graph_num_nodes(const gaug_graph* graph, size_t* out) {
  if (!graph) return invalid("graph");
  if (!out) return invalid("out");
  *out = graph->graph.num_nodes();
  return guarded([] {});
}

gaug_status gaug_graph_num_edges(const gaug_graph* graph, size_t* out) {
  if (!graph) return invalid("graph");
  if (!out) return invalid("out");
  *out = graph->graph.adjacency().num_edges();
  return guarded([] {});
}

gaug_status gaug_graph_degree(const gaug_graph* graph, uint32_t node, size_t* out) {
  if (!graph) return invalid("graph");
  if (!out) return invalid("out");
  return guarded([&] { *out = gaug::degree(graph->graph, node); });
}

void gaug_graph_free(gaug_graph* graph) { delete graph; }

gaug_status gaug_pipeline_create(const char* config_path, gaug_pipeline** out) {
  if (!out) return invalid("out");
  return guarded([&] {
    auto* p = new gaug_pipeline;
    try {
      if (config_path) p->config = gaug::PipelineConfig::from_file(config_path);
    } catch (...) {
      delete p;
      throw;
    }
    *out = p;
  });
}

gaug_status gaug_pipeline_set(gaug_pipeline* pipeline, const char* key, const char* value) {
  if (!pipeline) return invalid("pipeline");
  if (!key || !value) return invalid("key/value");
  return guarded([&] {
    pipeline->config.set(key, value);
    pipeline->pipeline.reset();
  });
}

gaug_status gaug_pipeline_config_json(const gaug_pipeline* pipeline, char** out) {
  if (!pipeline) return invalid("pipeline");
  if (!out) return invalid("out");
  return guarded([&] { *out = dup_string(pipeline->config.doc().dump(2)); });
}

gaug_status gaug_pipeline_validate(gaug_pipeline* pipeline) {
  if (!pipeline) return invalid("pipeline");
  return guarded([&] { ensure_pipeline(pipeline); });
}

gaug_status gaug_pipeline_set_log(gaug_pipeline* pipeline, gaug_log_fn fn, void* user) {
  if (!pipeline) return invalid("pipeline");
  pipeline->log_fn = fn;
  pipeline->log_user = user;
  pipeline->pipeline.reset();
  return guarded([] {});
}

gaug_status gaug_pipeline_run(gaug_pipeline* pipeline, const char* stage) {
  if (!pipeline) return invalid("pipeline");
  if (!stage) return invalid("stage");
  return guarded([&] {
    auto& p = ensure_pipeline(pipeline);
    const std::string s = stage;
    if (s == "synth") p.cmd_synth();
    else if (s == "augment") p.cmd_augment();
    else if (s == "fuse") p.cmd_fuse();
    else if (s == "walk") p.cmd_walk();
    else if (s == "edges") {
      p.cmd_edges();
      pipeline->edge_queries = p.edge_queries();
    } else if (s == "pretrain") p.cmd_pretrain();
    else if (s == "eval") pipeline->report = p.cmd_eval().to_json();
    else if (s == "all") {
      pipeline->report = p.cmd_all().to_json();
      pipeline->edge_queries = p.edge_queries();
      pipeline->skipped.clear();
      for (const auto& name : p.skipped()) pipeline->skipped += (pipeline->skipped.empty() ? "" : ",") + name;
    } else {
      throw gaug::UsageError("unknown stage '" + s + "'");
    }
  });
}

gaug_status gaug_pipeline_report_json(const gaug_pipeline* pipeline, char** out) {
  if (!pipeline) return invalid("pipeline");
  if (!out) return invalid("out");
  return guarded([&] {
    if (!pipeline->report) throw gaug::UsageError("no report yet; run 'eval' or 'all' first");
    *out = dup_string(*pipeline->report);
  });
}

gaug_status gaug_pipeline_edge_queries(const gaug_pipeline* pipeline, size_t* out) {
  if (!pipeline) return invalid("pipeline");
  if (!out) return invalid("out");
  *out = pipeline->edge_queries;
  return guarded([] {});
}

gaug_status gaug_pipeline_skipped(const gaug_pipeline* pipeline, char** out) {
  if (!pipeline) return invalid("pipeline");
  if (!out) return invalid("out");
  return guarded([&] { *out = dup_string(pipeline->skipped); });
}

void gaug_pipeline_free(gaug_pipeline* pipeline) { delete pipeline; }

}  // extern "C"
