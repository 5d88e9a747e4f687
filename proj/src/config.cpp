#include "textsynth/config.hpp"

#include <cstdlib>
#include <set>

#include "textsynth/error.hpp"
#include "textsynth/hash.hpp"

namespace textsynth {
namespace {

/// Typed, strict view of one JSON object. finish() rejects keys nobody read.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "/" : path_, "expected an object");
  }

  [[noreturn]] static void fail(const std::string& where, const std::string& what) {
    throw ConfigError("config " + where + ": " + what);
  }

  std::string at(std::string_view key) const { return path_ + "/" + std::string(key); }

  const json* find(std::string_view key) {
    seen_.insert(std::string(key));
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::optional<std::string> str(std::string_view key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_string()) fail(at(key), "expected a string");
    return v->get<std::string>();
  }

  std::optional<std::uint64_t> uint(std::string_view key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
      fail(at(key), "expected a non-negative integer");
    }
    return v->get<std::uint64_t>();
  }

  std::optional<double> num(std::string_view key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_number()) fail(at(key), "expected a number");
    return v->get<double>();
  }

  std::optional<bool> boolean(std::string_view key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_boolean()) fail(at(key), "expected true or false");
    return v->get<bool>();
  }

  std::optional<std::vector<std::string>> strings(std::string_view key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_array()) fail(at(key), "expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (!(*v)[i].is_string()) fail(at(key) + "/" + std::to_string(i), "expected a string");
      out.push_back((*v)[i].get<std::string>());
    }
    return out;
  }

  std::optional<Node> child(std::string_view key) {
    const json* v = find(key);
    if (!v) return std::nullopt;
    return Node(*v, at(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail(at(k), "unknown key");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class T>
void assign(T& target, const std::optional<T>& v) {
  if (v) target = *v;
}

void assign_size(std::size_t& target, const std::optional<std::uint64_t>& v) {
  if (v) target = static_cast<std::size_t>(*v);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

void check(bool ok, const std::string& where, const std::string& what) {
  if (!ok) Node::fail(where, what);
}

json path_json(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); }

json file_digest(const std::optional<fs::path>& p) {
  if (!p) return nullptr;
  if (fs::is_regular_file(*p)) return hex64(file_crc64(*p));
  return "missing";
}

}  // namespace

bool no_network_env() {
  const char* v = std::getenv("NO_NETWORK");
  return v && std::string_view(v) == "1";
}

PipelineConfig parse_config(const json& doc, const fs::path& base_dir, const ConfigOverrides& overrides) {
  PipelineConfig c;
  Node root(doc, "");
  if (auto v = root.str("work_dir")) c.work_dir = resolve(base_dir, *v);
  else c.work_dir = resolve(base_dir, "work");
  if (auto v = root.uint("rng_seed")) c.rng_seed = *v;
  c.created_at = root.str("created_at");

  if (auto n = root.child("seeds")) {
    if (auto v = n->strings("inputs")) {
      for (const auto& p : *v) c.seeds.inputs.push_back(resolve(base_dir, p));
    }
    if (auto p = n->child("policy")) {
      assign_size(c.seeds.policy.min_tokens, p->uint("min_tokens"));
      assign_size(c.seeds.policy.max_tokens, p->uint("max_tokens"));
      assign(c.seeds.policy.max_nonalpha_ratio, p->num("max_nonalpha_ratio"));
      assign(c.seeds.policy.reject_patterns, p->strings("reject_patterns"));
      p->finish();
      try {
        c.seeds.policy.validate();
        CompiledFilter probe(c.seeds.policy);
      } catch (const std::exception& e) {
        Node::fail(n->at("policy"), e.what());
      }
    }
    if (auto v = n->str("templates")) c.seeds.templates = resolve(base_dir, *v);
    if (auto v = n->str("labels")) c.seeds.labels = resolve(base_dir, *v);
    assign_size(c.seeds.per_label_count, n->uint("per_label_count"));
    check(c.seeds.per_label_count > 0, n->at("per_label_count"), "must be positive");
    check(c.seeds.templates.has_value() == c.seeds.labels.has_value(), n->at("labels"),
          "templates and labels must be given together");
    n->finish();
  }

  GenerationParams params1, params2;
  if (auto n = root.child("stage1")) {
    assign_size(c.stage1.bounds.min_tokens, n->uint("min_tokens"));
    assign_size(c.stage1.bounds.max_tokens, n->uint("max_tokens"));
    assign_size(c.stage1.bounds_retries, n->uint("bounds_retries"));
    assign_size(c.stage1.chunk_size, n->uint("chunk_size"));
    assign(params1.temperature, n->num("temperature"));
    assign_size(params1.max_tokens, n->uint("max_completion_tokens"));
    check(c.stage1.bounds.min_tokens <= c.stage1.bounds.max_tokens, n->at("max_tokens"), "must be >= min_tokens");
    check(c.stage1.chunk_size > 0, n->at("chunk_size"), "must be positive");
    n->finish();
  }
  c.stage1.params = params1;

  if (auto n = root.child("stage2")) {
    if (auto m = n->child("mix")) {
      for (TaskKind t : kAllTasks) {
        if (auto w = m->num(to_string(t))) {
          check(*w >= 0.0, m->at(to_string(t)), "weight must be >= 0");
          c.stage2.mix.weights[static_cast<int>(t)] = *w;
        }
      }
      m->finish();
      try {
        c.stage2.mix.validate();
      } catch (const std::exception& e) {
        Node::fail(n->at("mix"), e.what());
      }
    }
    assign_size(c.stage2.turns, n->uint("turns"));
    assign_size(c.stage2.parse_retries, n->uint("parse_retries"));
    assign_size(c.stage2.chunk_size, n->uint("chunk_size"));
    if (auto v = n->uint("sample_count")) c.stage2.sample_count = static_cast<std::size_t>(*v);
    assign(params2.temperature, n->num("temperature"));
    assign_size(params2.max_tokens, n->uint("max_completion_tokens"));
    check(c.stage2.turns > 0, n->at("turns"), "must be positive");
    check(c.stage2.chunk_size > 0, n->at("chunk_size"), "must be positive");
    n->finish();
  }
  c.stage2.params = params2;

  std::optional<std::uint64_t> jitter_seed;
  if (auto n = root.child("gateway")) {
    assign(c.gateway.backend, n->str("backend"));
    check(c.gateway.backend == "mock" || c.gateway.backend == "http", n->at("backend"), "must be \"mock\" or \"http\"");
    assign(c.gateway.base_url, n->str("base_url"));
    assign(c.gateway.model, n->str("model"));
    assign(c.gateway.api_key_env, n->str("api_key_env"));
    if (auto p = n->child("prices")) {
      assign(c.gateway.prices.per_million_prompt_tokens, p->num("per_million_prompt_tokens"));
      assign(c.gateway.prices.per_million_completion_tokens, p->num("per_million_completion_tokens"));
      check(c.gateway.prices.per_million_prompt_tokens >= 0 && c.gateway.prices.per_million_completion_tokens >= 0,
            n->at("prices"), "prices must be >= 0");
      p->finish();
    }
    assign_size(c.gateway.parallelism, n->uint("parallelism"));
    check(c.gateway.parallelism > 0, n->at("parallelism"), "must be positive");
    if (auto r = n->child("retries")) {
      assign_size(c.gateway.retry.max_attempts, r->uint("max_attempts"));
      if (auto v = r->uint("base_delay_ms")) c.gateway.retry.base_delay = Millis(*v);
      assign(c.gateway.retry.factor, r->num("factor"));
      if (auto v = r->uint("max_delay_ms")) c.gateway.retry.max_delay = Millis(*v);
      jitter_seed = r->uint("jitter_seed");
      check(c.gateway.retry.max_attempts > 0, r->at("max_attempts"), "must be positive");
      check(c.gateway.retry.factor >= 1.0, r->at("factor"), "must be >= 1");
      r->finish();
    }
    if (auto v = n->uint("timeout_ms")) c.gateway.timeout = Millis(*v);
    if (c.gateway.backend == "http") check(!c.gateway.base_url.empty(), n->at("base_url"), "required for the http backend");
    n->finish();
  }

  std::optional<std::uint64_t> encoder_seed;
  if (auto n = root.child("encoder")) {
    assign(c.encoder.backend, n->str("backend"));
    check(c.encoder.backend == "mock" || c.encoder.backend == "http" || c.encoder.backend == "precomputed",
          n->at("backend"), "must be \"mock\", \"http\" or \"precomputed\"");
    assign_size(c.encoder.dim, n->uint("d"));
    encoder_seed = n->uint("seed");
    assign(c.encoder.normalize, n->boolean("normalize"));
    assign(c.encoder.base_url, n->str("base_url"));
    assign(c.encoder.model, n->str("model"));
    if (auto v = n->str("dir")) c.encoder.dir = resolve(base_dir, *v);
    assign_size(c.encoder.batch_size, n->uint("batch_size"));
    check(c.encoder.dim > 0, n->at("d"), "must be positive");
    check(c.encoder.batch_size > 0, n->at("batch_size"), "must be positive");
    if (c.encoder.backend == "http") check(!c.encoder.base_url.empty(), n->at("base_url"), "required for the http backend");
    if (c.encoder.backend == "precomputed") check(c.encoder.dir.has_value(), n->at("dir"), "required for precomputed vectors");
    n->finish();
  }

  if (auto n = root.child("transfer")) {
    assign(c.transfer.mean_source, n->str("mean_source"));
    check(c.transfer.mean_source == "corpus" || c.transfer.mean_source == "file", n->at("mean_source"),
          "must be \"corpus\" or \"file\"");
    if (auto v = n->str("mean_file")) c.transfer.mean_file = resolve(base_dir, *v);
    if (c.transfer.mean_source == "file") check(c.transfer.mean_file.has_value(), n->at("mean_file"), "required when mean_source is \"file\"");
    assign(c.transfer.renormalize, n->boolean("renormalize"));
    if (auto v = n->str("real_shard")) c.transfer.real_shard = resolve(base_dir, *v);
    if (auto v = n->str("real_ids")) c.transfer.real_ids = resolve(base_dir, *v);
    check(c.transfer.real_shard.has_value() == c.transfer.real_ids.has_value(), n->at("real_ids"),
          "real_shard and real_ids must be given together");
    n->finish();
  }

  if (auto n = root.child("pack")) {
    if (auto v = n->str("out_dir")) c.pack.out_dir = resolve(base_dir, *v);
    else c.pack.out_dir = resolve(base_dir, "dataset");
    assign(c.pack.dataset_name, n->str("dataset_name"));
    assign_size(c.pack.shard_rows, n->uint("shard_rows"));
    check(c.pack.shard_rows > 0, n->at("shard_rows"), "must be positive");
    n->finish();
  } else {
    c.pack.out_dir = resolve(base_dir, "dataset");
  }

  if (auto n = root.child("metrics")) {
    if (auto v = n->str("ttr_mode")) {
      const auto m = parse_ttr_mode(*v);
      check(m.has_value(), n->at("ttr_mode"), "must be \"per_sample_mean\" or \"corpus_level\"");
      c.metrics.ttr_mode = *m;
    }
    if (auto v = n->str("entropy_unit")) {
      const auto u = parse_entropy_unit(*v);
      check(u.has_value(), n->at("entropy_unit"), "must be \"nats\" or \"bits\"");
      c.metrics.entropy_unit = *u;
    }
    if (auto v = n->str("reference")) c.metrics.reference = resolve(base_dir, *v);
    n->finish();
  }

  std::optional<std::uint64_t> sim_seed;
  if (auto n = root.child("simulate")) {
    assign_size(c.simulate.d, n->uint("d"));
    assign_size(c.simulate.n, n->uint("n"));
    assign(c.simulate.gap_norm, n->num("gap_norm"));
    assign(c.simulate.sigma, n->num("sigma"));
    sim_seed = n->uint("rng_seed");
    assign_size(c.simulate.latent_subspace_dim, n->uint("latent_subspace_dim"));
    assign(c.simulate.normalize, n->boolean("normalize"));
    check(c.simulate.n > 0, n->at("n"), "must be positive");
    try {
      c.simulate.validate();
    } catch (const std::exception& e) {
      Node::fail("/simulate", e.what());
    }
    n->finish();
  }
  root.finish();

  if (overrides.seed) {
    c.rng_seed = *overrides.seed;
    sim_seed = *overrides.seed;
  }
  c.simulate.rng_seed = sim_seed.value_or(c.rng_seed);
  c.encoder.seed = encoder_seed.value_or(c.rng_seed);
  c.gateway.retry.jitter_seed = jitter_seed.value_or(c.rng_seed);
  c.stage2.rng_seed = c.rng_seed;
  if (overrides.no_network) {
    c.gateway.backend = "mock";
    if (c.encoder.backend == "http") c.encoder.backend = "mock";
  }
  c.stage1.parallelism = c.gateway.parallelism;
  c.stage2.parallelism = c.gateway.parallelism;

  json inputs = json::array();
  for (const auto& p : c.seeds.inputs) inputs.push_back(p.string());
  json mix = json::object();
  for (TaskKind t : kAllTasks) mix[std::string(to_string(t))] = c.stage2.mix.weights[static_cast<int>(t)];
  c.resolved = {
      {"work_dir", c.work_dir.string()},
      {"rng_seed", c.rng_seed},
      {"created_at", c.created_at ? json(*c.created_at) : json(nullptr)},
      {"seeds",
       {{"inputs", inputs},
        {"policy", c.seeds.policy.to_json()},
        {"templates", path_json(c.seeds.templates)},
        {"labels", path_json(c.seeds.labels)},
        {"per_label_count", c.seeds.per_label_count}}},
      {"stage1",
       {{"min_tokens", c.stage1.bounds.min_tokens},
        {"max_tokens", c.stage1.bounds.max_tokens},
        {"bounds_retries", c.stage1.bounds_retries},
        {"chunk_size", c.stage1.chunk_size},
        {"temperature", params1.temperature},
        {"max_completion_tokens", params1.max_tokens}}},
      {"stage2",
       {{"mix", mix},
        {"turns", c.stage2.turns},
        {"parse_retries", c.stage2.parse_retries},
        {"chunk_size", c.stage2.chunk_size},
        {"sample_count", c.stage2.sample_count ? json(*c.stage2.sample_count) : json(nullptr)},
        {"temperature", params2.temperature},
        {"max_completion_tokens", params2.max_tokens}}},
      {"gateway",
       {{"backend", c.gateway.backend},
        {"base_url", c.gateway.base_url},
        {"model", c.gateway.model},
        {"api_key_env", c.gateway.api_key_env},
        {"prices",
         {{"per_million_prompt_tokens", c.gateway.prices.per_million_prompt_tokens},
          {"per_million_completion_tokens", c.gateway.prices.per_million_completion_tokens}}},
        {"parallelism", c.gateway.parallelism},
        {"retries",
         {{"max_attempts", c.gateway.retry.max_attempts},
          {"base_delay_ms", c.gateway.retry.base_delay.count()},
          {"factor", c.gateway.retry.factor},
          {"max_delay_ms", c.gateway.retry.max_delay.count()},
          {"jitter_seed", c.gateway.retry.jitter_seed}}},
        {"timeout_ms", c.gateway.timeout.count()}}},
      {"encoder",
       {{"backend", c.encoder.backend},
        {"d", c.encoder.dim},
        {"seed", c.encoder.seed},
        {"normalize", c.encoder.normalize},
        {"base_url", c.encoder.base_url},
        {"model", c.encoder.model},
        {"dir", path_json(c.encoder.dir)},
        {"batch_size", c.encoder.batch_size}}},
      {"transfer",
       {{"mean_source", c.transfer.mean_source},
        {"mean_file", path_json(c.transfer.mean_file)},
        {"renormalize", c.transfer.renormalize},
        {"real_shard", path_json(c.transfer.real_shard)},
        {"real_ids", path_json(c.transfer.real_ids)}}},
      {"pack",
       {{"out_dir", c.pack.out_dir.string()},
        {"dataset_name", c.pack.dataset_name},
        {"shard_rows", c.pack.shard_rows}}},
      {"metrics",
       {{"ttr_mode", std::string(to_string(c.metrics.ttr_mode))},
        {"entropy_unit", std::string(to_string(c.metrics.entropy_unit))},
        {"reference", path_json(c.metrics.reference)}}},
      {"simulate", c.simulate.to_json()}};
  return c;
}

PipelineConfig load_config(const fs::path& path, const ConfigOverrides& overrides) {
  if (!fs::is_regular_file(path)) throw ConfigError("config file not found: " + path.string());
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": invalid JSON: " + e.what());
  }
  return parse_config(doc, fs::absolute(path).parent_path(), overrides);
}

std::string PipelineConfig::content_hash() const {
  json h = resolved;
  h.erase("work_dir");
  h.erase("created_at");
  h["pack"].erase("out_dir");
  h["gateway"].erase("parallelism");
  h["gateway"].erase("api_key_env");
  h["gateway"].erase("timeout_ms");
  h["encoder"].erase("batch_size");
  h["stage1"].erase("chunk_size");
  h["stage2"].erase("chunk_size");

  json inputs = json::array();
  for (const auto& p : seeds.inputs) inputs.push_back(file_digest(p));
  h["seeds"]["inputs"] = inputs;
  h["seeds"]["templates"] = file_digest(seeds.templates);
  h["seeds"]["labels"] = file_digest(seeds.labels);
  h["transfer"]["mean_file"] = file_digest(transfer.mean_file);
  h["transfer"]["real_shard"] = file_digest(transfer.real_shard);
  h["transfer"]["real_ids"] = file_digest(transfer.real_ids);
  h["metrics"]["reference"] = file_digest(metrics.reference);
  h["encoder"]["dir"] = encoder.dir ? json(encoder.dir->filename().string()) : json(nullptr);
  return hex64(Crc64::of(canonical_json(h)));
}

}  // namespace textsynth
