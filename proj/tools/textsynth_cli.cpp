// textsynth: text-only vision-language data synthesis pipeline.
//
//   textsynth <subcommand> --config pipeline.json [--seed N] [--dry-run]
//
// Exit codes: 0 ok, 2 config error, 3 upstream artifact missing,
// 4 runtime failure, 5 validation failure.

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <map>

#include "textsynth/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kUpstream = 3, kRuntime = 4, kValidation = 5 };

}  // namespace

int main(int argc, char** argv) {
  using namespace textsynth;

  CLI::App app{"Text-only vision-language data synthesis pipeline"};
  app.require_subcommand(1);
  std::string config_path = "pipeline.json";
  std::optional<std::uint64_t> seed;
  bool dry_run = false;
  bool quiet = false;
  app.add_option("-c,--config", config_path, "Pipeline configuration file")->capture_default_str();
  app.add_option("--seed", seed, "Override the configured RNG seed");
  app.add_flag("--dry-run", dry_run, "Validate configuration and inputs without writing anything");
  app.add_flag("-q,--quiet", quiet, "Do not mirror log events on stderr");

  const std::map<std::string, std::pair<std::string, std::function<void(RunContext&)>>> commands = {
      {"seed", {"Ingest, filter and dedupe captions; expand domain labels", run_seed}},
      {"expand", {"Stage 1: expand seeds into detailed captions", run_expand}},
      {"instruct", {"Stage 2: generate instruction dialogues from captions", run_instruct}},
      {"embed", {"Encode captions into text embeddings", run_embed}},
      {"transfer", {"Center embeddings into synthetic image representations", run_transfer}},
      {"pack", {"Write the pretraining and instruction datasets", run_pack}},
      {"analyze", {"Diversity and length statistics for the captions", run_analyze}},
      {"simulate-gap", {"Run the modality gap simulation and print its report",
                        [](RunContext& ctx) { run_simulate_gap(ctx); }}},
      {"verify", {"Check a packed dataset against its manifest", [](RunContext& ctx) { run_verify(ctx); }}},
      {"report", {"Summarize LLM usage cost from the ledger", run_report}},
  };
  for (const auto& [name, entry] : commands) app.add_subcommand(name, entry.first)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  std::shared_ptr<EventLog> log;
  try {
    ConfigOverrides overrides;
    overrides.seed = seed;
    overrides.no_network = no_network_env();
    RunContext ctx{load_config(config_path, overrides), dry_run, nullptr, &std::cout};
    const bool writes_log = !dry_run;
    log = std::make_shared<EventLog>(writes_log ? std::optional<fs::path>(ctx.paths().log()) : std::nullopt,
                                     quiet ? nullptr : &std::cerr);
    ctx.log = log;
    commands.at(name).second(ctx);
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const UpstreamMissing& e) {
    std::cerr << "upstream missing: " << e.what() << "\n";
    return kUpstream;
  } catch (const ValidationError& e) {
    if (log) log->event("error", name, e.what());
    else std::cerr << "validation failure: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    if (log) log->event("error", name, e.what());
    else std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
