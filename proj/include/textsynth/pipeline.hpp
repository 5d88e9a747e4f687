#pragma once

// Subcommand bodies. Each reads and writes only its documented files under
// the work directory (or the pack output directory) and throws the typed
// errors from error.hpp, which the CLI maps to exit codes.

#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "textsynth/config.hpp"
#include "textsynth/dataset_packer.hpp"
#include "textsynth/gap_simulator.hpp"

namespace textsynth {

/// One JSON object per line in a file, plus a short human line on a stream.
class EventLog {
 public:
  EventLog(std::optional<fs::path> jsonl, std::ostream* human);
  void event(std::string_view level, std::string_view stage, std::string_view message, const json& fields = json::object());

 private:
  std::mutex mu_;
  std::unique_ptr<LineAppender> file_;
  std::ostream* human_;
};

/// Files under the work directory.
struct WorkPaths {
  fs::path dir;
  fs::path seeds() const { return dir / "seeds.jsonl"; }
  fs::path seeds_manifest() const { return dir / "seeds.manifest.json"; }
  fs::path ledger() const { return dir / "ledger.jsonl"; }
  fs::path log() const { return dir / "log.jsonl"; }
  fs::path stamps() const { return dir / "stamps"; }
  fs::path text_reps() const { return dir / "embed" / "captions.unic"; }
  fs::path text_ids() const { return dir / "embed" / "captions.ids.txt"; }
  fs::path synthetic_reps() const { return dir / "transfer" / "synthetic.unic"; }
  fs::path synthetic_ids() const { return dir / "transfer" / "synthetic.ids.txt"; }
  fs::path text_mean() const { return dir / "transfer" / "text_mean.unic"; }
  fs::path real_centered() const { return dir / "transfer" / "real_centered.unic"; }
  fs::path real_centered_ids() const { return dir / "transfer" / "real_centered.ids.txt"; }
  fs::path real_mean() const { return dir / "transfer" / "real_mean.unic"; }
  fs::path analysis() const { return dir / "analysis"; }
  fs::path gap_report() const { return dir / "gap_report.json"; }
  fs::path cost_report() const { return dir / "cost_report.json"; }
};

struct RunContext {
  PipelineConfig config;
  bool dry_run = false;
  std::shared_ptr<EventLog> log;
  /// Summary text for stdout (JSON for simulate-gap, verify and report).
  std::ostream* out = nullptr;

  WorkPaths paths() const { return {config.work_dir}; }
};

/// created_at value: the config's, else SOURCE_DATE_EPOCH, else now (UTC, ISO 8601).
std::string resolve_created_at(const PipelineConfig& config);

void run_seed(RunContext& ctx);
void run_expand(RunContext& ctx);
void run_instruct(RunContext& ctx);
void run_embed(RunContext& ctx);
void run_transfer(RunContext& ctx);
void run_pack(RunContext& ctx);
void run_analyze(RunContext& ctx);
GapReport run_simulate_gap(RunContext& ctx);
/// Throws ValidationError when any check fails.
VerifyReport run_verify(RunContext& ctx);
void run_report(RunContext& ctx);

/// Loads a vector shard together with its ids file.
EmbeddingBatch load_batch(const fs::path& shard, const fs::path& ids);
void save_batch(const fs::path& shard, const fs::path& ids, const EmbeddingBatch& batch);

}  // namespace textsynth
