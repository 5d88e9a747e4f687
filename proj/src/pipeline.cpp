#include "textsynth/pipeline.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <ostream>
#include <unordered_map>

#include "textsynth/encoder.hpp"
#include "textsynth/hash.hpp"
#include "textsynth/mock_llm.hpp"
#include "textsynth/modality_transfer.hpp"
#include "textsynth/quality_metrics.hpp"

namespace textsynth {

EventLog::EventLog(std::optional<fs::path> jsonl, std::ostream* human) : human_(human) {
  if (jsonl) {
    fs::create_directories(jsonl->parent_path());
    file_ = std::make_unique<LineAppender>(*jsonl);
  }
}

void EventLog::event(std::string_view level, std::string_view stage, std::string_view message, const json& fields) {
  std::lock_guard lock(mu_);
  if (file_) {
    const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::system_clock::now().time_since_epoch());
    json e = fields;
    e["ts_ms"] = now.count();
    e["level"] = level;
    e["stage"] = stage;
    e["message"] = message;
    file_->append(canonical_json(e));
  }
  if (human_) {
    *human_ << "[" << stage << "] " << level << ": " << message;
    if (!fields.empty()) *human_ << " " << fields.dump();
    *human_ << "\n";
  }
}

std::string resolve_created_at(const PipelineConfig& config) {
  if (config.created_at) return *config.created_at;
  std::time_t t;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else {
    t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

EmbeddingBatch load_batch(const fs::path& shard, const fs::path& ids) {
  const Shard s = read_shard(shard);
  const auto id_lines = read_lines(ids);
  if (id_lines.size() != s.header.count) {
    throw ValidationError(ids.string() + ": " + std::to_string(id_lines.size()) + " ids for " +
                          std::to_string(s.header.count) + " vectors");
  }
  EmbeddingBatch b(s.header.dim, s.header.modality, s.header.normalized);
  for (std::size_t i = 0; i < id_lines.size(); ++i) b.push_back(id_lines[i], s.row(i));
  return b;
}

void save_batch(const fs::path& shard, const fs::path& ids, const EmbeddingBatch& batch) {
  fs::create_directories(shard.parent_path());
  write_shard(shard, batch);
  std::string text;
  for (const auto& id : batch.ids()) text += id + "\n";
  write_file_atomic(ids, text);
}

namespace {

// --- Idempotence stamps -------------------------------------------------------

/// A stage is up to date when its stamp records the same key and every output
/// still has the recorded checksum.
class Stamp {
 public:
  Stamp(const RunContext& ctx, std::string stage, const std::vector<fs::path>& inputs)
      : path_(ctx.paths().stamps() / (stage + ".json")), stage_(std::move(stage)) {
    json in = json::array();
    for (const auto& p : inputs) in.push_back(fs::is_regular_file(p) ? hex64(file_crc64(p)) : "missing");
    key_ = hex64(Crc64::of(canonical_json({{"config", ctx.config.content_hash()}, {"stage", stage_}, {"inputs", in}})));
  }

  bool current() const {
    if (!fs::is_regular_file(path_)) return false;
    try {
      const json s = json::parse(read_file(path_));
      if (s.at("key") != key_) return false;
      for (const auto& [p, crc] : s.at("outputs").items()) {
        if (!fs::is_regular_file(p) || hex64(file_crc64(p)) != crc.get<std::string>()) return false;
      }
      return true;
    } catch (const std::exception&) {
      return false;
    }
  }

  void write(const std::vector<fs::path>& outputs) const {
    json out = json::object();
    for (const auto& p : outputs) out[p.string()] = hex64(file_crc64(p));
    fs::create_directories(path_.parent_path());
    write_file_atomic(path_, canonical_json({{"key", key_}, {"stage", stage_}, {"outputs", out}}) + "\n");
  }

 private:
  fs::path path_;
  std::string stage_;
  std::string key_;
};

void require(const fs::path& p, std::string_view what, std::string_view producer) {
  if (!fs::exists(p)) {
    throw UpstreamMissing(std::string(what) + " not found at " + p.string() + " (run `" + std::string(producer) +
                          "` first)");
  }
}

bool skip_if_current(RunContext& ctx, const Stamp& stamp, std::string_view stage) {
  if (!stamp.current()) return false;
  ctx.log->event("info", stage, "outputs up to date, nothing to do");
  return true;
}

std::vector<CaptionSeed> load_seeds(const fs::path& path) {
  std::vector<CaptionSeed> seeds;
  for (const auto& line : read_lines(path)) seeds.push_back(CaptionSeed::from_json(json::parse(line)));
  return seeds;
}

std::unique_ptr<LlmGateway> make_gateway(RunContext& ctx) {
  const auto& g = ctx.config.gateway;
  std::shared_ptr<ChatBackend> backend;
  if (g.backend == "mock") {
    backend = std::make_shared<MockBackend>(synthetic_responder(ctx.config.rng_seed), "mock:" + g.model);
  } else {
    HttpBackendOptions o;
    o.base_url = g.base_url;
    o.model = g.model;
    o.timeout = g.timeout;
    if (const char* key = std::getenv(g.api_key_env.c_str())) o.api_key = key;
    backend = std::make_shared<HttpChatBackend>(o);
  }
  auto ledger = std::make_shared<CostLedger>(g.prices, ctx.paths().ledger());
  return std::make_unique<LlmGateway>(backend, g.retry, ledger);
}

std::unique_ptr<TextEncoder> make_encoder(const PipelineConfig& c) {
  const auto& e = c.encoder;
  if (e.backend == "mock") return std::make_unique<MockTextEncoder>(e.dim, e.seed);
  if (e.backend == "precomputed") return std::make_unique<PrecomputedEncoder>(*e.dir);
  HttpEncoderOptions o;
  o.base_url = e.base_url;
  o.model = e.model;
  if (const char* key = std::getenv(c.gateway.api_key_env.c_str())) o.api_key = key;
  return std::make_unique<HttpTextEncoder>(o);
}

void log_quarantine(RunContext& ctx, std::string_view stage, const fs::path& quarantine, std::string_view key) {
  if (!fs::exists(quarantine)) return;
  for (const auto& line : read_lines(quarantine)) {
    const json q = json::parse(line);
    ctx.log->event("warn", stage, "quarantined", {{"id", q.value(std::string(key), std::string())},
                                                  {"reason", q.value("reason", std::string())}});
  }
}

std::size_t count_lines(const fs::path& p) { return fs::exists(p) ? read_lines(p).size() : 0; }

json cost_summary(const RunContext& ctx) {
  const auto paths = ctx.paths();
  LedgerTotals totals;
  if (fs::exists(paths.ledger())) totals = CostLedger::replay(paths.ledger(), ctx.config.gateway.prices);
  const std::size_t samples = count_lines(Stage1Paths::in(paths.dir).captions) +
                              count_lines(Stage2Paths::in(paths.dir).samples);
  json j = {{"calls", totals.calls},
            {"prompt_tokens", totals.prompt_tokens},
            {"completion_tokens", totals.completion_tokens},
            {"dollars", totals.dollars},
            {"sample_count", samples}};
  j["per_sample_dollars"] = samples ? json(report_cost(totals, samples).per_sample_dollars) : json(nullptr);
  return j;
}

}  // namespace

// --- seed ----------------------------------------------------------------------

void run_seed(RunContext& ctx) {
  const auto& sc = ctx.config.seeds;
  const auto paths = ctx.paths();
  std::vector<fs::path> inputs = sc.inputs;
  if (sc.templates) inputs.push_back(*sc.templates);
  if (sc.labels) inputs.push_back(*sc.labels);
  if (inputs.empty()) throw ConfigError("config /seeds: no inputs, templates or labels given");
  for (const auto& p : inputs) require_file(p, "seed input");
  if (ctx.dry_run) {
    ctx.log->event("info", "seed", "dry run: inputs present", {{"inputs", inputs.size()}});
    return;
  }
  const Stamp stamp(ctx, "seed", inputs);
  if (skip_if_current(ctx, stamp, "seed")) return;

  IngestStats stats;
  std::vector<std::string> lines;
  for (const auto& p : sc.inputs) {
    const auto l = read_lines(p);
    lines.insert(lines.end(), l.begin(), l.end());
  }
  const auto ingested = ingest_captions(lines, sc.policy, &stats);
  auto seeds = dedupe_by_image(ingested);
  const std::size_t duplicates = ingested.size() - seeds.size();
  std::size_t domain = 0;
  if (sc.templates) {
    const auto library = load_template_library(json::parse(read_file(*sc.templates)), sc.per_label_count);
    const auto labels = parse_labels(read_lines(*sc.labels));
    auto expanded = expand_domain_labels(labels, library, ctx.config.rng_seed);
    domain = expanded.size();
    for (auto& s : expanded) seeds.push_back(std::move(s));
  }

  std::string out;
  for (const auto& s : seeds) out += canonical_json(s.to_json()) + "\n";
  fs::create_directories(paths.dir);
  write_file_atomic(paths.seeds(), out);
  const json manifest = {{"ingest", stats.to_json()},
                         {"duplicates_removed", duplicates},
                         {"domain_seeds", domain},
                         {"total", seeds.size()}};
  write_file_atomic(paths.seeds_manifest(), canonical_json(manifest) + "\n");
  for (const auto& [reason, n] : stats.rejected) {
    ctx.log->event("warn", "seed", "rejected records", {{"reason", reason}, {"count", n}});
  }
  ctx.log->event("info", "seed", "wrote seeds", {{"total", seeds.size()}, {"domain", domain}});
  stamp.write({paths.seeds(), paths.seeds_manifest()});
}

// --- expand --------------------------------------------------------------------

void run_expand(RunContext& ctx) {
  const auto paths = ctx.paths();
  require(paths.seeds(), "seed set", "seed");
  if (ctx.dry_run) {
    ctx.log->event("info", "expand", "dry run: seeds present", {{"backend", ctx.config.gateway.backend}});
    return;
  }
  const Stamp stamp(ctx, "expand", {paths.seeds()});
  if (skip_if_current(ctx, stamp, "expand")) return;
  const auto seeds = load_seeds(paths.seeds());
  auto gateway = make_gateway(ctx);
  const auto sp = Stage1Paths::in(paths.dir);
  const StageSummary s = run_stage1(*gateway, seeds, ctx.config.stage1, sp);
  log_quarantine(ctx, "expand", sp.quarantine, "seed_id");
  ctx.log->event("info", "expand", "captions written",
                 {{"accepted", s.accepted}, {"rejected", s.rejected}, {"resumed", s.resumed}, {"calls", s.gateway_calls}});
  stamp.write({sp.captions, sp.quarantine, sp.manifest});
}

// --- instruct ------------------------------------------------------------------

void run_instruct(RunContext& ctx) {
  const auto paths = ctx.paths();
  const auto s1 = Stage1Paths::in(paths.dir);
  require(s1.captions, "captions", "expand");
  if (ctx.dry_run) {
    ctx.log->event("info", "instruct", "dry run: captions present");
    return;
  }
  const Stamp stamp(ctx, "instruct", {s1.captions});
  if (skip_if_current(ctx, stamp, "instruct")) return;
  const auto captions = load_captions(s1.captions);
  auto gateway = make_gateway(ctx);
  const auto sp = Stage2Paths::in(paths.dir);
  const Stage2Summary s = run_stage2(*gateway, captions, ctx.config.stage2, sp);
  log_quarantine(ctx, "instruct", sp.quarantine, "caption_id");
  ctx.log->event("info", "instruct", "instruction samples written",
                 {{"accepted", s.accepted}, {"rejected", s.rejected}, {"task_counts", s.task_counts}});
  stamp.write({sp.samples, sp.quarantine, sp.manifest});
}

// --- embed ---------------------------------------------------------------------

void run_embed(RunContext& ctx) {
  const auto paths = ctx.paths();
  const auto s1 = Stage1Paths::in(paths.dir);
  require(s1.captions, "captions", "expand");
  if (ctx.dry_run) {
    ctx.log->event("info", "embed", "dry run: captions present", {{"backend", ctx.config.encoder.backend}});
    return;
  }
  const Stamp stamp(ctx, "embed", {s1.captions});
  if (skip_if_current(ctx, stamp, "embed")) return;
  const auto captions = load_captions(s1.captions);
  std::vector<std::string> ids, texts;
  for (const auto& c : captions) {
    ids.push_back(c.id);
    texts.push_back(c.text);
  }
  auto encoder = make_encoder(ctx.config);
  EmbeddingBatch batch = captions.empty() ? EmbeddingBatch(ctx.config.encoder.dim, Modality::Text, ctx.config.encoder.normalize)
                                          : embed_texts(*encoder, ids, texts, ctx.config.encoder.normalize,
                                                        ctx.config.encoder.batch_size);
  save_batch(paths.text_reps(), paths.text_ids(), batch);
  const fs::path info = paths.dir / "embed" / "embed.json";
  write_file_atomic(info, canonical_json({{"encoder_id", encoder->encoder_id()},
                                          {"dim", batch.dim()},
                                          {"count", batch.size()},
                                          {"normalized", batch.normalized()}}) +
                              "\n");
  ctx.log->event("info", "embed", "text embeddings written", {{"count", batch.size()}, {"dim", batch.dim()}});
  stamp.write({paths.text_reps(), paths.text_ids(), info});
}

// --- transfer ------------------------------------------------------------------

void run_transfer(RunContext& ctx) {
  const auto paths = ctx.paths();
  const auto& tc = ctx.config.transfer;
  require(paths.text_reps(), "text embeddings", "embed");
  require(paths.text_ids(), "text embedding ids", "embed");
  std::vector<fs::path> inputs = {paths.text_reps(), paths.text_ids()};
  if (tc.mean_file) inputs.push_back(*tc.mean_file);
  if (tc.real_shard) {
    require_file(*tc.real_shard, "real image vectors");
    require_file(*tc.real_ids, "real image ids");
    inputs.push_back(*tc.real_shard);
    inputs.push_back(*tc.real_ids);
  }
  if (ctx.dry_run) {
    ctx.log->event("info", "transfer", "dry run: embeddings present", {{"mean_source", tc.mean_source}});
    return;
  }
  const Stamp stamp(ctx, "transfer", inputs);
  if (skip_if_current(ctx, stamp, "transfer")) return;

  const EmbeddingBatch u = load_batch(paths.text_reps(), paths.text_ids());
  if (u.empty()) throw ValidationError("transfer: no text embeddings to center");
  const MeanVector mu = tc.mean_source == "file" ? read_mean(*tc.mean_file) : mean_vector(u);
  const EmbeddingBatch v_hat = synthesize_image_reps(u, mu, tc.renormalize);
  save_batch(paths.synthetic_reps(), paths.synthetic_ids(), v_hat);
  write_mean(paths.text_mean(), mu);
  std::vector<fs::path> outputs = {paths.synthetic_reps(), paths.synthetic_ids(), paths.text_mean()};
  ctx.log->event("info", "transfer", "synthetic image representations written",
                 {{"count", v_hat.size()}, {"mean_source", tc.mean_source}});

  if (tc.real_shard) {
    EmbeddingBatch v = load_batch(*tc.real_shard, *tc.real_ids);
    if (v.modality() != Modality::RealImage) {
      throw ValidationError(tc.real_shard->string() + ": expected real_image vectors, got " +
                            std::string(to_string(v.modality())));
    }
    const MeanVector mv = mean_vector(v);
    const EmbeddingBatch v_tilde = transform_inference_reps(v, mv, tc.renormalize);
    save_batch(paths.real_centered(), paths.real_centered_ids(), v_tilde);
    write_mean(paths.real_mean(), mv);
    outputs.insert(outputs.end(), {paths.real_centered(), paths.real_centered_ids(), paths.real_mean()});
    ctx.log->event("info", "transfer", "real image representations centered", {{"count", v_tilde.size()}});
  }
  stamp.write(outputs);
}

// --- pack ----------------------------------------------------------------------

void run_pack(RunContext& ctx) {
  const auto paths = ctx.paths();
  const auto s1 = Stage1Paths::in(paths.dir);
  const auto s2 = Stage2Paths::in(paths.dir);
  require(s1.captions, "captions", "expand");
  require(s2.samples, "instruction samples", "instruct");
  require(paths.synthetic_reps(), "synthetic image representations", "transfer");
  require(paths.synthetic_ids(), "synthetic image ids", "transfer");
  require(paths.text_mean(), "text mean", "transfer");
  const fs::path embed_info = paths.dir / "embed" / "embed.json";
  require(embed_info, "embedding record", "embed");
  const fs::path out_dir = ctx.config.pack.out_dir;
  if (ctx.dry_run) {
    ctx.log->event("info", "pack", "dry run: upstream artifacts present", {{"out_dir", out_dir.string()}});
    return;
  }
  std::vector<fs::path> inputs = {s1.captions, s2.samples, paths.synthetic_reps(), paths.synthetic_ids(),
                                  paths.text_mean(), embed_info};
  if (fs::exists(paths.real_mean())) inputs.push_back(paths.real_mean());
  if (fs::exists(paths.ledger())) inputs.push_back(paths.ledger());
  const Stamp stamp(ctx, "pack", inputs);
  if (fs::exists(out_dir / "manifest.json") && skip_if_current(ctx, stamp, "pack")) return;

  const auto captions = load_captions(s1.captions);
  const auto samples = load_instruction_samples(s2.samples);
  const EmbeddingBatch reps = load_batch(paths.synthetic_reps(), paths.synthetic_ids());
  std::unordered_map<std::string, std::size_t> by_caption;
  for (std::size_t i = 0; i < reps.size(); ++i) by_caption.emplace(reps.ids()[i], i);
  EmbeddingBatch sample_reps(reps.dim(), reps.modality(), reps.normalized());
  for (const auto& s : samples) {
    const auto it = by_caption.find(s.caption_id);
    if (it == by_caption.end()) throw ValidationError("unpaired id: " + s.id + " (caption " + s.caption_id + " has no vector)");
    sample_reps.push_back(s.id, reps.row(it->second));
  }

  const json info = json::parse(read_file(embed_info));
  PackOptions opts;
  opts.dataset_name = ctx.config.pack.dataset_name;
  opts.encoder_id = info.at("encoder_id");
  opts.config_hash = ctx.config.content_hash();
  opts.cost = cost_summary(ctx);
  opts.created_at = resolve_created_at(ctx.config);
  opts.renormalized = ctx.config.transfer.renormalize;
  opts.shard_rows = ctx.config.pack.shard_rows;

  DatasetWriter writer(out_dir, opts);
  writer.write_pretrain(captions, reps);
  writer.write_instruct(samples, sample_reps);
  writer.write_mean("text_mean", read_mean(paths.text_mean()));
  if (fs::exists(paths.real_mean())) writer.write_mean("real_mean", read_mean(paths.real_mean()));
  const json manifest = writer.finish();
  ctx.log->event("info", "pack", "dataset written", {{"out_dir", out_dir.string()}, {"counts", manifest.at("counts")}});
  stamp.write({out_dir / "manifest.json"});
}

// --- analyze -------------------------------------------------------------------

void run_analyze(RunContext& ctx) {
  const auto paths = ctx.paths();
  const auto s1 = Stage1Paths::in(paths.dir);
  require(s1.captions, "captions", "expand");
  if (ctx.config.metrics.reference) require_file(*ctx.config.metrics.reference, "reference corpus stats");
  if (ctx.dry_run) {
    ctx.log->event("info", "analyze", "dry run: captions present");
    return;
  }
  const auto& mc = ctx.config.metrics;
  std::vector<std::string> texts;
  for (const auto& c : load_captions(s1.captions)) texts.push_back(c.text);
  if (texts.empty()) throw ValidationError("analyze: no captions");
  const CorpusStats stats = analyze_corpus(texts, mc.ttr_mode, mc.entropy_unit);
  const fs::path dir = paths.analysis();
  fs::create_directories(dir);
  write_file_atomic(dir / "captions.stats.json", canonical_json(stats.to_json()) + "\n");
  write_file_atomic(dir / "captions.stats.txt", stats.to_table());
  write_file_atomic(dir / "captions.length_histogram.csv", stats.histogram_csv());
  std::string summary = stats.to_table();
  if (mc.reference) {
    const CorpusStats ref = CorpusStats::from_json(json::parse(read_file(*mc.reference)));
    const std::string table = format_delta_table(compare_reports(stats, ref), "captions", "reference");
    write_file_atomic(dir / "compare.txt", table);
    summary += "\n" + table;
  }
  if (ctx.out) *ctx.out << summary;
  ctx.log->event("info", "analyze", "corpus stats written", {{"samples", stats.sample_count}});
}

// --- simulate-gap --------------------------------------------------------------

GapReport run_simulate_gap(RunContext& ctx) {
  const auto& p = ctx.config.simulate;
  p.validate();
  if (ctx.dry_run) {
    ctx.log->event("info", "simulate-gap", "dry run: parameters valid", p.to_json());
    return {};
  }
  const GapReport r = run_gap_experiment(p);
  const std::string text = canonical_json(r.to_json()) + "\n";
  fs::create_directories(ctx.paths().dir);
  write_file_atomic(ctx.paths().gap_report(), text);
  if (ctx.out) *ctx.out << text;
  ctx.log->event("info", "simulate-gap", "gap report written",
                 {{"raw_top1", r.raw_top1}, {"centered_top1", r.centered_top1}});
  return r;
}

// --- verify --------------------------------------------------------------------

VerifyReport run_verify(RunContext& ctx) {
  const fs::path out_dir = ctx.config.pack.out_dir;
  require(out_dir / "manifest.json", "dataset manifest", "pack");
  if (ctx.dry_run) {
    ctx.log->event("info", "verify", "dry run: manifest present");
    return {};
  }
  const VerifyReport r = verify_dataset(out_dir);
  if (ctx.out) *ctx.out << r.to_json().dump(2) << "\n";
  for (const auto& f : r.files) {
    if (!f.ok) ctx.log->event("error", "verify", "check failed", {{"path", f.path}, {"detail", f.detail}});
  }
  if (!r.ok()) throw ValidationError("verify: dataset at " + out_dir.string() + " failed verification");
  ctx.log->event("info", "verify", "dataset verified", {{"files", r.files.size()}});
  return r;
}

// --- report --------------------------------------------------------------------

void run_report(RunContext& ctx) {
  const auto paths = ctx.paths();
  require(paths.ledger(), "cost ledger", "expand");
  if (ctx.dry_run) {
    ctx.log->event("info", "report", "dry run: ledger present");
    return;
  }
  const json cost = cost_summary(ctx);
  write_file_atomic(paths.cost_report(), canonical_json(cost) + "\n");
  if (ctx.out) *ctx.out << cost.dump(2) << "\n";
  ctx.log->event("info", "report", "cost report written", {{"dollars", cost.at("dollars")}});
}

}  // namespace textsynth
