#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "gaug/gaug.h"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

int exit_code(gaug_status status) {
  switch (status) {
    case GAUG_OK: return 0;
    case GAUG_ERR_INVALID_ARGUMENT:
    case GAUG_ERR_PARSE:
    case GAUG_ERR_VALIDATION:
    case GAUG_ERR_USAGE: return kExitConfig;
    default: return kExitRuntime;
  }
}

int fail(gaug_status status, const std::string& context) {
  std::cerr << "gaug: " << context << ": " << gaug_last_error() << " (" << gaug_status_name(status) << ")\n";
  return exit_code(status);
}

std::string json_string(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

void log_line(const char* line, void*) { std::cerr << line << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph contrastive learning with LLM-augmented text-attributed graphs"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", gaug_version());

  std::string config_path;
  std::vector<std::string> overrides;
  std::string seed;
  std::string out_dir;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "Override a config field: dotted.key=value")->take_all();
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--out", out_dir, "Output directory");
  app.add_flag("-q,--quiet", quiet, "Only print results");

  const std::pair<const char*, const char*> stages[] = {
      {"synth", "Write the synthetic fixture graph (nodes.jsonl, edges.csv)"},
      {"augment", "Query the prompt experts for every node"},
      {"fuse", "Train the text encoder and fuse expert features"},
      {"walk", "Train structural embeddings from random walks"},
      {"edges", "Rank edge candidates and ask the LLM to adjudicate them"},
      {"pretrain", "Contrastive pretraining for every seed"},
      {"eval", "Linear-probe evaluation of the pretrained encoders"},
      {"all", "Run every stage, skipping those that are up to date"},
  };
  std::string chosen;
  for (const auto& [name, help] : stages) {
    auto* sub = app.add_subcommand(name, help);
    sub->callback([&chosen, n = name] { chosen = n; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  gaug_pipeline* pipeline = nullptr;
  if (auto st = gaug_pipeline_create(config_path.empty() ? nullptr : config_path.c_str(), &pipeline); st != GAUG_OK)
    return fail(st, "loading config");

  int code = 0;
  auto apply = [&](const std::string& key, const std::string& value) {
    if (code) return;
    if (auto st = gaug_pipeline_set(pipeline, key.c_str(), value.c_str()); st != GAUG_OK)
      code = fail(st, "--set " + key);
  };
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "gaug: --set expects key=value, got '" << o << "'\n";
      code = kExitConfig;
      break;
    }
    apply(o.substr(0, eq), o.substr(eq + 1));
  }
  if (!seed.empty()) apply("seed", seed);
  if (!out_dir.empty()) apply("out", json_string(out_dir));
  if (!quiet && !code) gaug_pipeline_set_log(pipeline, log_line, nullptr);

  if (!code) {
    if (auto st = gaug_pipeline_run(pipeline, chosen.c_str()); st != GAUG_OK) {
      code = fail(st, chosen);
    } else if (chosen == "eval" || chosen == "all") {
      char* report = nullptr;
      if (gaug_pipeline_report_json(pipeline, &report) == GAUG_OK) {
        std::fputs(report, stdout);
        gaug_string_free(report);
      }
    }
  }
  gaug_pipeline_free(pipeline);
  return code;
}
