#include "textsynth/llm_gateway.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "textsynth/hash.hpp"
#include "textsynth/philox.hpp"
#include "textsynth/text.hpp"

namespace textsynth {
namespace {

constexpr std::uint16_t kJitterStreamTag = 0xB0FF;

std::size_t prompt_token_count(const ChatPrompt& p) {
  return corpus_token_count(p.system.value_or("")) + corpus_token_count(p.user);
}

}  // namespace

void ChatPrompt::validate() const {
  if (user.empty()) throw Error("chat prompt: user message is empty");
  if (!(params.temperature >= 0.0)) throw Error("chat prompt: temperature must be >= 0");
}

std::uint64_t ChatPrompt::fingerprint() const {
  json j = {{"system", system ? json(*system) : json(nullptr)},
            {"user", user},
            {"temperature", params.temperature},
            {"max_tokens", params.max_tokens},
            {"stop", params.stop}};
  return fnv1a64(canonical_json(j));
}

// --- MockBackend -------------------------------------------------------------

MockBackend::MockBackend(Responder responder, std::string model_id)
    : responder_(std::move(responder)), model_id_(std::move(model_id)) {}

MockBackend::Responder MockBackend::echo() {
  return [](const ChatPrompt& p) { return p.user; };
}

MockBackend::Responder MockBackend::echo_reversed() {
  return [](const ChatPrompt& p) { return std::string(p.user.rbegin(), p.user.rend()); };
}

MockBackend::Responder MockBackend::fixed(std::string text) {
  return [text = std::move(text)](const ChatPrompt&) { return text; };
}

BackendReply MockBackend::send(const ChatPrompt& prompt) {
  const std::size_t index = calls_.fetch_add(1);
  const std::size_t now = in_flight_.fetch_add(1) + 1;
  std::size_t seen = max_in_flight_.load();
  while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
  }
  // Yield so concurrent callers actually overlap in tests.
  std::this_thread::yield();

  BackendReply reply;
  reply.model_id = model_id_;
  if (fault_) {
    if (auto status = fault_(prompt, index)) {
      reply.status = *status;
      reply.error = "injected fault";
      in_flight_.fetch_sub(1);
      return reply;
    }
  }
  reply.text = responder_(prompt);
  reply.prompt_tokens = prompt_token_count(prompt);
  reply.completion_tokens = corpus_token_count(*reply.text);
  in_flight_.fetch_sub(1);
  return reply;
}

// --- Clocks ------------------------------------------------------------------

void SystemClock::sleep_for(Millis d) { std::this_thread::sleep_for(d); }

std::chrono::system_clock::time_point ManualClock::now() {
  std::lock_guard lock(mu_);
  return t_;
}

void ManualClock::sleep_for(Millis d) {
  std::lock_guard lock(mu_);
  t_ += d;
  sleeps_.push_back(d);
}

std::vector<Millis> ManualClock::sleeps() const {
  std::lock_guard lock(mu_);
  return sleeps_;
}

// --- Retry -------------------------------------------------------------------

bool RetryPolicy::retryable(int status) { return status == 0 || status == 429 || status >= 500; }

Millis RetryPolicy::delay(std::size_t failed_attempts, std::uint64_t key) const {
  const double nominal = static_cast<double>(base_delay.count()) *
                         std::pow(factor, static_cast<double>(failed_attempts) - 1.0);
  const CounterStream rng(jitter_seed, stream_id(kJitterStreamTag, key));
  const double jitter = 0.5 + rng.uniform(failed_attempts);
  const double ms = std::min(nominal * jitter, static_cast<double>(max_delay.count()));
  return Millis(static_cast<Millis::rep>(std::llround(ms)));
}

// --- Ledger ------------------------------------------------------------------

double Prices::dollars(std::size_t prompt_tokens, std::size_t completion_tokens) const {
  return (static_cast<double>(prompt_tokens) * per_million_prompt_tokens +
          static_cast<double>(completion_tokens) * per_million_completion_tokens) /
         1e6;
}

json LedgerTotals::to_json() const {
  return {{"calls", calls},
          {"prompt_tokens", prompt_tokens},
          {"completion_tokens", completion_tokens},
          {"dollars", dollars},
          {"wall_time_ms", wall_time.count()}};
}

CostLedger::CostLedger(Prices prices, std::optional<fs::path> journal) : prices_(prices) {
  if (journal) journal_ = std::make_unique<LineAppender>(*journal);
}

void CostLedger::record(const CompletionResult& result, std::chrono::system_clock::time_point ts) {
  std::lock_guard lock(mu_);
  totals_.calls += 1;
  totals_.prompt_tokens += result.prompt_tokens;
  totals_.completion_tokens += result.completion_tokens;
  totals_.dollars = prices_.dollars(totals_.prompt_tokens, totals_.completion_tokens);
  if (journal_) {
    const auto ms = std::chrono::duration_cast<Millis>(ts.time_since_epoch()).count();
    journal_->append(canonical_json({{"ts", ms},
                                     {"prompt_tokens", result.prompt_tokens},
                                     {"completion_tokens", result.completion_tokens},
                                     {"model_id", result.model_id}}));
  }
}

void CostLedger::add_wall_time(Millis d) {
  std::lock_guard lock(mu_);
  totals_.wall_time += d;
}

LedgerTotals CostLedger::totals() const {
  std::lock_guard lock(mu_);
  return totals_;
}

LedgerTotals CostLedger::replay(const fs::path& journal, const Prices& prices) {
  LedgerTotals t;
  if (!fs::exists(journal)) return t;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(journal)) {
    ++line_no;
    try {
      const json j = json::parse(line);
      t.calls += 1;
      t.prompt_tokens += j.at("prompt_tokens").get<std::size_t>();
      t.completion_tokens += j.at("completion_tokens").get<std::size_t>();
    } catch (const json::exception& e) {
      throw ValidationError("ledger journal line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  t.dollars = prices.dollars(t.prompt_tokens, t.completion_tokens);
  return t;
}

json CostReport::to_json() const {
  return {{"per_sample_dollars", per_sample_dollars},
          {"total_dollars", total_dollars},
          {"wall_time_ms", wall_time.count()}};
}

CostReport report_cost(const LedgerTotals& totals, std::size_t sample_count) {
  if (sample_count == 0) throw Error("report_cost: sample_count must be >= 1");
  return {totals.dollars / static_cast<double>(sample_count), totals.dollars, totals.wall_time};
}

// --- Gateway -----------------------------------------------------------------

LlmGateway::LlmGateway(std::shared_ptr<ChatBackend> backend, RetryPolicy retry,
                       std::shared_ptr<CostLedger> ledger, std::shared_ptr<Clock> clock)
    : backend_(std::move(backend)),
      retry_(retry),
      ledger_(std::move(ledger)),
      clock_(clock ? std::move(clock) : std::make_shared<SystemClock>()) {
  if (retry_.max_attempts < 1) throw Error("retry policy: max_attempts must be >= 1");
}

CompletionResult LlmGateway::complete(const ChatPrompt& prompt) {
  prompt.validate();
  const std::uint64_t key = prompt.fingerprint();
  for (std::size_t attempt = 1;; ++attempt) {
    const auto start = clock_->now();
    const BackendReply reply = backend_->send(prompt);
    const auto latency = std::chrono::duration_cast<Millis>(clock_->now() - start);

    if (reply.status == 200) {
      if (!reply.text) throw GatewayError("response missing text", reply.status, attempt);
      CompletionResult result{*reply.text, reply.prompt_tokens, reply.completion_tokens,
                              reply.model_id, latency};
      ledger_->record(result, clock_->now());
      return result;
    }
    const std::string what = "status " + std::to_string(reply.status) +
                             (reply.error.empty() ? "" : ": " + reply.error);
    if (!RetryPolicy::retryable(reply.status)) {
      throw GatewayError("non-retryable " + what, reply.status, attempt);
    }
    if (attempt >= retry_.max_attempts) {
      throw GatewayError("retries exhausted after " + std::to_string(attempt) + " attempts, last " + what,
                         reply.status, attempt);
    }
    clock_->sleep_for(retry_.delay(attempt, key));
  }
}

std::vector<BatchOutcome> LlmGateway::complete_batch(const std::vector<ChatPrompt>& prompts,
                                                     std::size_t parallelism) {
  if (parallelism < 1) throw Error("complete_batch: parallelism must be >= 1");
  std::vector<BatchOutcome> out(prompts.size());
  if (prompts.empty()) return out;

  const auto start = std::chrono::steady_clock::now();
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < prompts.size(); i = next.fetch_add(1)) {
      try {
        out[i].result = complete(prompts[i]);
      } catch (const GatewayError& e) {
        out[i].error = e;
      } catch (const std::exception& e) {
        out[i].error = GatewayError(e.what(), -1, 0);
      }
    }
  };
  const std::size_t workers = std::min(parallelism, prompts.size());
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  pool.clear();  // joins

  ledger_->add_wall_time(
      std::chrono::duration_cast<Millis>(std::chrono::steady_clock::now() - start));
  return out;
}

}  // namespace textsynth
