#pragma once

// Chat-completion gateway: pluggable backends (HTTP or deterministic mock),
// retry with seeded exponential backoff, bounded-parallel batches, and a cost
// ledger journaled one call per line.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "textsynth/error.hpp"
#include "textsynth/io.hpp"

namespace textsynth {

using Millis = std::chrono::milliseconds;

struct GenerationParams {
  double temperature = 0.7;
  std::size_t max_tokens = 1024;
  std::vector<std::string> stop;
};

struct ChatPrompt {
  std::optional<std::string> system;
  std::string user;
  GenerationParams params;

  void validate() const;
  /// Stable key over every field that influences the completion.
  std::uint64_t fingerprint() const;
};

struct CompletionResult {
  std::string text;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  std::string model_id;
  Millis latency{0};
};

/// What a backend saw for one request. status 0 means the request never got
/// an HTTP answer (connection failure or timeout).
struct BackendReply {
  int status = 200;
  std::optional<std::string> text;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  std::string model_id;
  std::string error;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual BackendReply send(const ChatPrompt& prompt) = 0;
};

class GatewayError : public Error {
 public:
  GatewayError(const std::string& what, int status, std::size_t attempts)
      : Error(what), status_(status), attempts_(attempts) {}
  int status() const { return status_; }
  std::size_t attempts() const { return attempts_; }

 private:
  int status_;
  std::size_t attempts_;
};

// ---------------------------------------------------------------------------
// Mock backend

/// Deterministic in-process backend. The responder must be a pure function of
/// the prompt (and whatever seed it captured).
class MockBackend : public ChatBackend {
 public:
  using Responder = std::function<std::string(const ChatPrompt&)>;
  /// Returns an HTTP status to fail the call with, or nullopt to answer.
  using FaultRule = std::function<std::optional<int>(const ChatPrompt&, std::size_t call_index)>;

  explicit MockBackend(Responder responder, std::string model_id = "mock");

  static Responder echo();
  static Responder echo_reversed();
  static Responder fixed(std::string text);

  void set_fault_rule(FaultRule rule) { fault_ = std::move(rule); }

  BackendReply send(const ChatPrompt& prompt) override;

  std::size_t calls() const { return calls_.load(); }
  std::size_t max_in_flight() const { return max_in_flight_.load(); }

 private:
  Responder responder_;
  FaultRule fault_;
  std::string model_id_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> max_in_flight_{0};
};

// ---------------------------------------------------------------------------
// HTTP backend (chat-completions wire shape)

struct HttpBackendOptions {
  std::string base_url;  // e.g. http://127.0.0.1:8000/v1
  std::string model;
  std::string api_key;   // sent as a bearer token when non-empty
  Millis timeout{60000};
};

class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendOptions options);
  BackendReply send(const ChatPrompt& prompt) override;

  static json request_body(const ChatPrompt& prompt, const std::string& model);

 private:
  HttpBackendOptions options_;
};

/// Splits "scheme://host:port/prefix" into ("scheme://host:port", "/prefix").
std::pair<std::string, std::string> split_base_url(const std::string& base_url);

// ---------------------------------------------------------------------------
// Time

class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::chrono::system_clock::time_point now() = 0;
  virtual void sleep_for(Millis d) = 0;
};

class SystemClock : public Clock {
 public:
  std::chrono::system_clock::time_point now() override { return std::chrono::system_clock::now(); }
  void sleep_for(Millis d) override;
};

/// Test clock: sleeping advances time instantly and is recorded.
class ManualClock : public Clock {
 public:
  std::chrono::system_clock::time_point now() override;
  void sleep_for(Millis d) override;
  std::vector<Millis> sleeps() const;

 private:
  mutable std::mutex mu_;
  std::chrono::system_clock::time_point t_{};
  std::vector<Millis> sleeps_;
};

// ---------------------------------------------------------------------------
// Retry

struct RetryPolicy {
  std::size_t max_attempts = 5;
  Millis base_delay{1000};
  double factor = 2.0;
  Millis max_delay{60000};
  std::uint64_t jitter_seed = 0;

  /// 429, 5xx and transport failures (status 0).
  static bool retryable(int status);

  /// Delay before attempt `failed_attempts + 1`: base * factor^(failed-1),
  /// scaled by a jitter factor in [0.5, 1.5) drawn from (jitter_seed, key,
  /// failed_attempts), capped at max_delay.
  Millis delay(std::size_t failed_attempts, std::uint64_t key) const;
};

// ---------------------------------------------------------------------------
// Cost ledger

struct Prices {
  double per_million_prompt_tokens = 0.0;
  double per_million_completion_tokens = 0.0;

  /// (prompt * p_in + completion * p_out) / 1e6, rounded once.
  double dollars(std::size_t prompt_tokens, std::size_t completion_tokens) const;
};

struct LedgerTotals {
  std::size_t calls = 0;
  std::size_t prompt_tokens = 0;
  std::size_t completion_tokens = 0;
  double dollars = 0.0;
  Millis wall_time{0};

  json to_json() const;
};

class CostLedger {
 public:
  /// journal: optional append-only JSONL file, one record per successful call.
  explicit CostLedger(Prices prices, std::optional<fs::path> journal = std::nullopt);

  void record(const CompletionResult& result, std::chrono::system_clock::time_point ts);
  void add_wall_time(Millis d);
  LedgerTotals totals() const;
  const Prices& prices() const { return prices_; }

  /// Rebuilds totals from a journal file (wall time is not journaled).
  static LedgerTotals replay(const fs::path& journal, const Prices& prices);

 private:
  Prices prices_;
  mutable std::mutex mu_;
  LedgerTotals totals_;
  std::unique_ptr<LineAppender> journal_;
};

struct CostReport {
  double per_sample_dollars = 0.0;
  double total_dollars = 0.0;
  Millis wall_time{0};

  json to_json() const;
};

CostReport report_cost(const LedgerTotals& totals, std::size_t sample_count);

// ---------------------------------------------------------------------------
// Gateway

struct BatchOutcome {
  std::optional<CompletionResult> result;
  std::optional<GatewayError> error;
  bool ok() const { return result.has_value(); }
};

class LlmGateway {
 public:
  LlmGateway(std::shared_ptr<ChatBackend> backend, RetryPolicy retry,
             std::shared_ptr<CostLedger> ledger, std::shared_ptr<Clock> clock = nullptr);

  /// Throws GatewayError once retries are exhausted or on a non-retryable status.
  CompletionResult complete(const ChatPrompt& prompt);

  /// Order-aligned; at most `parallelism` requests in flight. Failures stay
  /// per-item.
  std::vector<BatchOutcome> complete_batch(const std::vector<ChatPrompt>& prompts,
                                           std::size_t parallelism);

  CostLedger& ledger() { return *ledger_; }

 private:
  std::shared_ptr<ChatBackend> backend_;
  RetryPolicy retry_;
  std::shared_ptr<CostLedger> ledger_;
  std::shared_ptr<Clock> clock_;
};

}  // namespace textsynth
