#include <atomic>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "textsynth/caption_forge.hpp"
#include "textsynth/mock_llm.hpp"
#include "textsynth/text.hpp"

namespace textsynth {
namespace {

CaptionSeed seed(std::string id, std::string text) {
  return {std::move(id), std::move(text), SeedSource::WebCrawled, std::nullopt, std::nullopt, std::nullopt};
}

std::string words(std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s += (i ? " w" : "w") + std::to_string(i);
  return s;
}

struct Rig {
  std::shared_ptr<MockBackend> backend;
  std::shared_ptr<CostLedger> ledger = std::make_shared<CostLedger>(Prices{});
  LlmGateway gateway;

  explicit Rig(MockBackend::Responder r)
      : backend(std::make_shared<MockBackend>(std::move(r))),
        gateway(backend, RetryPolicy{1, Millis(1), 2.0, Millis(1), 0}, ledger,
                std::make_shared<ManualClock>()) {}
};

std::vector<CaptionSeed> many_seeds(std::size_t n) {
  std::vector<CaptionSeed> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(seed("w-" + std::to_string(1000 + i), "a photo of object " + std::to_string(i) + " on a table"));
  }
  return out;
}

TEST(ExpansionPrompt, EmbedsSeedVerbatim) {
  const auto p = build_expansion_prompt(seed("w-1", "a red bus on a street"));
  EXPECT_NE(p.user.find("a red bus on a street"), std::string::npos);
  EXPECT_EQ(extract_expansion_seed(p), "a red bus on a street");

  CaptionSeed d{"d-1", "An image of a delicious ramen.", SeedSource::DomainTemplate, std::nullopt, "ramen", "food#0"};
  EXPECT_NE(build_expansion_prompt(d).user.find("An image of a delicious ramen."), std::string::npos);
}

TEST(ExpansionPrompt, DistinctSeedsDistinctPrompts) {
  const auto a = build_expansion_prompt(seed("w-1", "a cat"));
  const auto b = build_expansion_prompt(seed("w-2", "a dog"));
  EXPECT_NE(a.user, b.user);
  EXPECT_EQ(build_expansion_prompt(seed("w-1", "a cat")).user, a.user);
  EXPECT_FALSE(extract_expansion_seed(ChatPrompt{std::nullopt, "hello", {}}).has_value());
}

TEST(ExpandSeed, FixedSixtyTokensAccepted) {
  Rig rig(MockBackend::fixed(words(60)));
  const auto o = expand_seed(rig.gateway, seed("w-1", "a cat"), CaptionBounds{40, 520});
  EXPECT_FALSE(o.reject.has_value());
  EXPECT_EQ(o.caption.token_count, 60u);
  EXPECT_EQ(o.caption.token_count, split_whitespace(o.caption.text).size());
  EXPECT_EQ(o.caption.seed_id, "w-1");
  EXPECT_NO_THROW(o.caption.validate());
}

TEST(ExpandSeed, ThreeTokensRejectedWithoutRetry) {
  Rig rig(MockBackend::fixed("too short here"));
  const auto o = expand_seed(rig.gateway, seed("w-1", "a cat"), CaptionBounds{40, 520}, 0);
  ASSERT_TRUE(o.reject.has_value());
  EXPECT_EQ(o.attempts, 1u);
  EXPECT_EQ(rig.backend->calls(), 1u);
}

TEST(ExpandSeed, BoundsViolationRetriedUpToK) {
  std::atomic<int> n{0};
  Rig rig([&](const ChatPrompt&) { return n.fetch_add(1) < 2 ? std::string("short") : words(50); });
  const auto o = expand_seed(rig.gateway, seed("w-1", "a cat"), CaptionBounds{40, 520}, 2);
  EXPECT_FALSE(o.reject.has_value());
  EXPECT_EQ(o.attempts, 3u);

  Rig always_short(MockBackend::fixed("short"));
  const auto r = expand_seed(always_short.gateway, seed("w-1", "a cat"), CaptionBounds{40, 520}, 2);
  EXPECT_TRUE(r.reject.has_value());
  EXPECT_EQ(always_short.backend->calls(), 3u);
}

TEST(ExpandSeed, GatewayErrorNamesSeed) {
  Rig rig(MockBackend::echo());
  rig.backend->set_fault_rule([](const ChatPrompt&, std::size_t) { return std::optional<int>(400); });
  try {
    expand_seed(rig.gateway, seed("w-42", "a cat"), CaptionBounds{});
    FAIL();
  } catch (const GatewayError& e) {
    EXPECT_NE(std::string(e.what()).find("w-42"), std::string::npos);
  }
}

TEST(ExpandSeed, DeterministicUnderMock) {
  Rig a(synthetic_responder(7));
  Rig b(synthetic_responder(7));
  const auto s = seed("w-1", "a small boat near a lighthouse");
  EXPECT_EQ(expand_seed(a.gateway, s, {}).caption, expand_seed(b.gateway, s, {}).caption);
}

TEST(Stage1, TwoHundredSeedsAllAccepted) {
  test::TempDir dir;
  Rig rig(synthetic_responder(7));
  const auto seeds = many_seeds(200);
  const auto paths = Stage1Paths::in(dir.path());
  const auto summary = run_stage1(rig.gateway, seeds, Stage1Options{}, paths);
  EXPECT_EQ(summary.accepted, 200u);
  EXPECT_EQ(summary.rejected, 0u);
  EXPECT_EQ(summary.gateway_calls, 200u);
  const auto captions = load_captions(paths.captions);
  ASSERT_EQ(captions.size(), 200u);
  std::set<std::string> seed_ids;
  for (std::size_t i = 0; i < captions.size(); ++i) {
    EXPECT_EQ(captions[i].seed_id, seeds[i].id);
    seed_ids.insert(captions[i].seed_id);
  }
  EXPECT_EQ(seed_ids.size(), 200u);
  const json manifest = json::parse(read_file(paths.manifest));
  EXPECT_EQ(manifest["accepted"], 200);
  EXPECT_EQ(manifest["rejected"], 0);
}

TEST(Stage1, RestartAfterKillMakesExactlyRemainingCalls) {
  test::TempDir dir;
  const auto seeds = many_seeds(200);
  const auto paths = Stage1Paths::in(dir.path());
  Stage1Options opts;
  opts.chunk_size = 50;
  opts.parallelism = 4;
  {
    // The "process" dies after 100 completed calls: every later call fails hard.
    Rig rig(synthetic_responder(7));
    rig.backend->set_fault_rule([](const ChatPrompt&, std::size_t call) -> std::optional<int> {
      if (call >= 100) return 400;
      return std::nullopt;
    });
    EXPECT_THROW(run_stage1(rig.gateway, seeds, opts, paths), GatewayError);
    EXPECT_EQ(rig.ledger->totals().calls, 100u);
  }
  Rig rig(synthetic_responder(7));
  const auto summary = run_stage1(rig.gateway, seeds, opts, paths);
  EXPECT_EQ(rig.backend->calls(), 100u);
  EXPECT_EQ(summary.resumed, 100u);
  EXPECT_EQ(summary.accepted, 200u);

  // Same result as an uninterrupted run.
  test::TempDir fresh;
  Rig clean(synthetic_responder(7));
  run_stage1(clean.gateway, seeds, opts, Stage1Paths::in(fresh.path()));
  EXPECT_EQ(read_file(paths.captions), read_file(Stage1Paths::in(fresh.path()).captions));

  // A completed run needs no calls at all.
  Rig again(synthetic_responder(7));
  run_stage1(again.gateway, seeds, opts, paths);
  EXPECT_EQ(again.backend->calls(), 0u);
}

TEST(Stage1, RejectionsGoToQuarantine) {
  test::TempDir dir;
  Rig rig([](const ChatPrompt& p) {
    return p.user.find("object 3 ") != std::string::npos ? std::string("tiny") : words(45);
  });
  Stage1Options opts;
  opts.bounds_retries = 0;
  const auto paths = Stage1Paths::in(dir.path());
  const auto summary = run_stage1(rig.gateway, many_seeds(10), opts, paths);
  EXPECT_EQ(summary.accepted + summary.rejected, 10u);
  EXPECT_EQ(summary.rejected, 1u);
  const auto q = read_lines(paths.quarantine);
  ASSERT_EQ(q.size(), 1u);
  EXPECT_TRUE(json::parse(q[0]).contains("reason"));
}

TEST(Stage1, EmptySeedStream) {
  test::TempDir dir;
  Rig rig(MockBackend::echo());
  const auto paths = Stage1Paths::in(dir.path());
  const auto summary = run_stage1(rig.gateway, {}, Stage1Options{}, paths);
  EXPECT_EQ(summary.total, 0u);
  EXPECT_TRUE(load_captions(paths.captions).empty());
  EXPECT_EQ(json::parse(read_file(paths.manifest))["accepted"], 0);
}

TEST(Stage1, CorruptCheckpointTellsHowToRecover) {
  test::TempDir dir;
  const auto paths = Stage1Paths::in(dir.path());
  Rig rig(synthetic_responder(1));
  const auto seeds = many_seeds(5);
  run_stage1(rig.gateway, seeds, Stage1Options{}, paths);
  {
    std::ofstream out(paths.checkpoint, std::ios::app);
    out << "{\"seed_id\": \"w-9";  // torn write
  }
  try {
    run_stage1(rig.gateway, seeds, Stage1Options{}, paths);
    FAIL();
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("line 6"), std::string::npos) << msg;
    EXPECT_NE(msg.find("truncate"), std::string::npos) << msg;
  }
}

}  // namespace
}  // namespace textsynth
