#pragma once

// Stage 2: multi-turn instruction dialogues (multiple choice, open QA,
// complex reasoning) generated from captions and parsed against a fixed
// line grammar.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "textsynth/caption_forge.hpp"
#include "textsynth/llm_gateway.hpp"

namespace textsynth {

enum class TaskKind { MultipleChoice = 0, QuestionAnswering = 1, ComplexReasoning = 2 };
inline constexpr std::array<TaskKind, 3> kAllTasks = {
    TaskKind::MultipleChoice, TaskKind::QuestionAnswering, TaskKind::ComplexReasoning};

std::string_view to_string(TaskKind task);
std::optional<TaskKind> parse_task_kind(std::string_view name);

struct TaskMix {
  std::array<double, 3> weights = {171.0, 199.0, 100.0};  // indexed by TaskKind

  void validate() const;
};

struct McOption {
  char label = 'A';
  std::string text;
  bool correct = false;

  friend bool operator==(const McOption&, const McOption&) = default;
};

struct DialogueTurn {
  std::string question;
  std::string answer;  // for multiple choice: the correct label, e.g. "C"
  std::vector<McOption> options;

  friend bool operator==(const DialogueTurn&, const DialogueTurn&) = default;
};

struct InstructionSample {
  std::string id;
  std::string caption_id;
  TaskKind task = TaskKind::QuestionAnswering;
  std::vector<DialogueTurn> turns;

  void validate() const;
  json to_json() const;
  static InstructionSample from_json(const json& j);

  friend bool operator==(const InstructionSample&, const InstructionSample&) = default;
};

/// Per-task counts for n items: largest remainder over the quota (n+1)*w/sum(w);
/// leftover seats go to the largest fractional parts (ties: lower task index);
/// if the floors overshoot n, seats are taken back from the smallest weight
/// (ties: higher task index).
std::array<std::size_t, 3> task_counts(std::size_t n, const TaskMix& mix);

/// Seeded permutation of the ids; the first counts[0] become multiple choice,
/// the next counts[1] question answering, the rest complex reasoning.
std::map<std::string, TaskKind> allocate_tasks(const std::vector<std::string>& caption_ids,
                                               const TaskMix& mix, std::uint64_t rng_seed);

ChatPrompt build_task_prompt(const DiverseCaption& caption, TaskKind task, std::size_t turns = 3,
                             const GenerationParams& params = {});

struct TaskPromptParts {
  TaskKind task;
  std::size_t turns;
  std::string caption;
};

/// Inverse of build_task_prompt; nullopt for any other prompt.
std::optional<TaskPromptParts> extract_task_prompt(const ChatPrompt& prompt);

enum class ParseRule {
  EmptyInput,
  NoTurns,
  EmptyQuestion,
  MissingAnswer,
  OptionCount,
  DuplicateOptionLabel,
  OptionLabel,
  CorrectCount,
  UnexpectedOptions,
  StrayText,
};

std::string_view to_string(ParseRule rule);

class DialogueParseError : public ValidationError {
 public:
  DialogueParseError(ParseRule rule, std::size_t turn, const std::string& detail);
  ParseRule rule() const { return rule_; }
  std::size_t turn() const { return turn_; }

 private:
  ParseRule rule_;
  std::size_t turn_;
};

/// Grammar, one item per line:
///   "### Turn <n>"         optional separator
///   "Question: <text>"     starts a turn
///   "A. <text>" .. "D. <text>"   options (multiple choice only)
///   "Answer: <text>"       answer; for multiple choice a single letter
/// Lines that follow Question/Answer/option lines continue them.
std::vector<DialogueTurn> parse_dialogue(std::string_view raw, TaskKind task);

/// Reverse of the parser, used by the mock backend and fixtures.
std::string render_dialogue(const std::vector<DialogueTurn>& turns);

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count, std::uint64_t rng_seed);

struct Stage2Options {
  TaskMix mix;
  std::size_t turns = 3;
  std::size_t parse_retries = 2;
  std::size_t parallelism = 8;
  std::size_t chunk_size = 64;
  std::optional<std::size_t> sample_count;  // default: every caption
  std::uint64_t rng_seed = 0;
  GenerationParams params;
};

struct Stage2Paths {
  fs::path samples;
  fs::path quarantine;
  fs::path checkpoint;
  fs::path manifest;

  static Stage2Paths in(const fs::path& dir);
};

struct Stage2Summary : StageSummary {
  std::array<std::size_t, 3> task_counts{};  // accepted samples per task
  json manifest_json() const;
};

Stage2Summary run_stage2(LlmGateway& gateway, const std::vector<DiverseCaption>& captions,
                         const Stage2Options& options, const Stage2Paths& paths);

std::vector<InstructionSample> load_instruction_samples(const fs::path& path);

}  // namespace textsynth
