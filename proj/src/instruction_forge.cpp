#include "textsynth/instruction_forge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>
#include <set>
#include <unordered_map>

#include "textsynth/philox.hpp"
#include "textsynth/text.hpp"

namespace textsynth {
namespace {

constexpr std::uint16_t kAllocationStreamTag = 0x7A5C;
constexpr std::uint16_t kSampleStreamTag = 0x5A3B;

constexpr std::string_view kTaskSystem =
    "You create instruction-tuning dialogues about an image that is known only through its description.";

constexpr std::string_view kDescriptionPrefix = "Image description: ";

std::string_view task_guidance(TaskKind task) {
  switch (task) {
    case TaskKind::MultipleChoice:
      return "Each turn is a multiple-choice question about the image with four options labeled "
             "A. B. C. D.; exactly one option is correct and the other three are plausible but wrong.";
    case TaskKind::QuestionAnswering:
      return "Each turn is an open-ended question about objects, attributes, counts, actions or "
             "positions in the image, followed by a brief answer of one short sentence or phrase.";
    case TaskKind::ComplexReasoning:
      return "Each turn is a complex reasoning question whose answer needs multi-step reasoning or "
             "hypothetical deductions from what the image shows; the answer walks through the steps "
             "in a few sentences.";
  }
  return "";
}

std::string_view task_format(TaskKind task) {
  if (task == TaskKind::MultipleChoice) {
    return "### Turn <n>\n"
           "Question: <question>\n"
           "A. <option>\n"
           "B. <option>\n"
           "C. <option>\n"
           "D. <option>\n"
           "Answer: <the single letter of the correct option>\n";
  }
  return "### Turn <n>\n"
         "Question: <question>\n"
         "Answer: <answer>\n";
}

bool starts_with_icase(std::string_view line, std::string_view prefix) {
  if (line.size() < prefix.size()) return false;
  return to_lower_ascii(line.substr(0, prefix.size())) == to_lower_ascii(prefix);
}

void append_text(std::string& field, std::string_view more) {
  if (more.empty()) return;
  if (!field.empty()) field += ' ';
  field += more;
}

}  // namespace

std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::MultipleChoice: return "multiple_choice";
    case TaskKind::QuestionAnswering: return "question_answering";
    case TaskKind::ComplexReasoning: return "complex_reasoning";
  }
  return "unknown";
}

std::optional<TaskKind> parse_task_kind(std::string_view name) {
  for (TaskKind t : kAllTasks) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

void TaskMix::validate() const {
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("task mix: weights must be finite and >= 0");
    sum += w;
  }
  if (!(sum > 0.0)) throw ValidationError("task mix: weights sum to zero");
}

// --- InstructionSample -----------------------------------------------------

void InstructionSample::validate() const {
  auto fail = [&](ParseRule rule, std::size_t turn, const std::string& detail) {
    throw DialogueParseError(rule, turn, "sample " + id + ": " + detail);
  };
  if (turns.empty()) fail(ParseRule::NoTurns, 0, "no turns");
  for (std::size_t t = 0; t < turns.size(); ++t) {
    const auto& turn = turns[t];
    if (trim(turn.question).empty()) fail(ParseRule::EmptyQuestion, t + 1, "empty question");
    if (trim(turn.answer).empty()) fail(ParseRule::MissingAnswer, t + 1, "missing answer");
    if (task != TaskKind::MultipleChoice) {
      if (!turn.options.empty()) fail(ParseRule::UnexpectedOptions, t + 1, "options on a non-choice task");
      continue;
    }
    std::set<char> labels;
    for (const auto& o : turn.options) {
      if (!labels.insert(o.label).second) {
        fail(ParseRule::DuplicateOptionLabel, t + 1, std::string("duplicate option label ") + o.label);
      }
    }
    if (turn.options.size() != 4) {
      fail(ParseRule::OptionCount, t + 1, "option count != 4 (got " + std::to_string(turn.options.size()) + ")");
    }
    if (labels != std::set<char>{'A', 'B', 'C', 'D'}) fail(ParseRule::OptionLabel, t + 1, "labels must be A-D");
    const auto correct = std::count_if(turn.options.begin(), turn.options.end(),
                                       [](const McOption& o) { return o.correct; });
    if (correct != 1) {
      fail(ParseRule::CorrectCount, t + 1, std::to_string(correct) + " options marked correct, need exactly 1");
    }
    const auto it = std::find_if(turn.options.begin(), turn.options.end(),
                                 [](const McOption& o) { return o.correct; });
    if (turn.answer != std::string(1, it->label)) {
      fail(ParseRule::CorrectCount, t + 1, "answer does not name the correct option");
    }
    if (trim(it->text).empty()) fail(ParseRule::CorrectCount, t + 1, "correct option has no text");
  }
}

json InstructionSample::to_json() const {
  json jt = json::array();
  for (const auto& t : turns) {
    json turn = {{"question", t.question}, {"answer", t.answer}};
    if (!t.options.empty()) {
      json opts = json::array();
      for (const auto& o : t.options) {
        opts.push_back({{"label", std::string(1, o.label)}, {"text", o.text}, {"correct", o.correct}});
      }
      turn["options"] = std::move(opts);
    }
    jt.push_back(std::move(turn));
  }
  return {{"id", id}, {"caption_id", caption_id}, {"task", std::string(to_string(task))}, {"turns", jt}};
}

InstructionSample InstructionSample::from_json(const json& j) {
  InstructionSample s;
  s.id = j.at("id").get<std::string>();
  s.caption_id = j.at("caption_id").get<std::string>();
  const auto task = parse_task_kind(j.at("task").get<std::string>());
  if (!task) throw ValidationError("sample " + s.id + ": unknown task");
  s.task = *task;
  for (const auto& jt : j.at("turns")) {
    DialogueTurn t{jt.at("question").get<std::string>(), jt.at("answer").get<std::string>(), {}};
    if (jt.contains("options")) {
      for (const auto& jo : jt["options"]) {
        const auto label = jo.at("label").get<std::string>();
        if (label.size() != 1) throw ValidationError("sample " + s.id + ": bad option label");
        t.options.push_back({label[0], jo.at("text").get<std::string>(), jo.at("correct").get<bool>()});
      }
    }
    s.turns.push_back(std::move(t));
  }
  s.validate();
  return s;
}

// --- Allocation --------------------------------------------------------------

std::array<std::size_t, 3> task_counts(std::size_t n, const TaskMix& mix) {
  mix.validate();
  constexpr long double kTie = 1e-12L;
  long double total = 0.0L;
  for (double w : mix.weights) total += w;

  std::array<std::size_t, 3> counts{};
  std::array<long double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const long double quota = static_cast<long double>(n + 1) * mix.weights[i] / total;
    long double whole = std::floor(quota);
    if (quota - whole > 1.0L - kTie) whole += 1.0L;  // snap values a hair below an integer
    counts[i] = static_cast<std::size_t>(whole);
    remainder[i] = std::max(0.0L, quota - whole);
    assigned += counts[i];
  }

  std::array<std::size_t, 3> order = {0, 1, 2};
  if (assigned < n) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return remainder[a] > remainder[b] + kTie;
    });
    for (std::size_t k = 0; assigned < n; k = (k + 1) % 3, ++assigned) ++counts[order[k]];
  }
  while (assigned > n) {
    // Overshoot only happens when every quota is whole: take from the
    // smallest weight that still has a seat, preferring the higher index.
    std::size_t pick = 3;
    for (std::size_t i = 3; i-- > 0;) {
      if (counts[i] == 0) continue;
      if (pick == 3 || mix.weights[i] < mix.weights[pick]) pick = i;
    }
    --counts[pick];
    --assigned;
  }
  return counts;
}

std::map<std::string, TaskKind> allocate_tasks(const std::vector<std::string>& caption_ids,
                                               const TaskMix& mix, std::uint64_t rng_seed) {
  if (caption_ids.empty()) throw ValidationError("allocate_tasks: caption list is empty");
  const auto counts = task_counts(caption_ids.size(), mix);

  std::vector<std::size_t> order(caption_ids.size());
  std::iota(order.begin(), order.end(), 0);
  const CounterStream rng(rng_seed, stream_id(kAllocationStreamTag, 0));
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    std::swap(order[i], order[i + rng.below(i, order.size() - i)]);
  }

  std::map<std::string, TaskKind> out;
  std::size_t pos = 0;
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t k = 0; k < counts[t]; ++k, ++pos) {
      if (!out.emplace(caption_ids[order[pos]], kAllTasks[t]).second) {
        throw ValidationError("allocate_tasks: duplicate caption id " + caption_ids[order[pos]]);
      }
    }
  }
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count, std::uint64_t rng_seed) {
  if (count > population) throw ValidationError("cannot sample more captions than exist");
  std::vector<std::size_t> order(population);
  std::iota(order.begin(), order.end(), 0);
  const CounterStream rng(rng_seed, stream_id(kSampleStreamTag, 0));
  for (std::size_t i = 0; i < count; ++i) std::swap(order[i], order[i + rng.below(i, population - i)]);
  order.resize(count);
  std::sort(order.begin(), order.end());
  return order;
}

// --- Prompts -----------------------------------------------------------------

ChatPrompt build_task_prompt(const DiverseCaption& caption, TaskKind task, std::size_t turns,
                             const GenerationParams& params) {
  ChatPrompt p;
  p.system = std::string(kTaskSystem);
  p.params = params;
  std::string& u = p.user;
  u += "Task: ";
  u += to_string(task);
  u += "\nTurns: " + std::to_string(turns) + "\n";
  u += "Write a " + std::to_string(turns) +
       "-turn dialogue about the image described below. Every question and every answer must be "
       "grounded only in the description; do not invent anything it does not state.\n";
  u += task_guidance(task);
  u += "\nUse exactly this format for every turn and output nothing else:\n";
  u += task_format(task);
  u += "\n";
  u += kDescriptionPrefix;
  u += kSeedOpen;
  u += caption.text;
  u += kSeedClose;
  return p;
}

std::optional<TaskPromptParts> extract_task_prompt(const ChatPrompt& prompt) {
  static const std::regex header(R"(^Task: ([a-z_]+)\nTurns: ([0-9]+)\n)");
  std::smatch m;
  if (!std::regex_search(prompt.user, m, header)) return std::nullopt;
  const auto task = parse_task_kind(m[1].str());
  if (!task) return std::nullopt;
  std::string marker(kDescriptionPrefix);
  marker += kSeedOpen;
  const auto open = prompt.user.rfind(marker);
  const auto close = prompt.user.rfind(kSeedClose);
  if (open == std::string::npos || close == std::string::npos || close < open + marker.size()) {
    return std::nullopt;
  }
  return TaskPromptParts{*task, std::stoul(m[2].str()),
                         prompt.user.substr(open + marker.size(), close - open - marker.size())};
}

// --- Parsing -----------------------------------------------------------------

std::string_view to_string(ParseRule rule) {
  switch (rule) {
    case ParseRule::EmptyInput: return "empty_input";
    case ParseRule::NoTurns: return "no_turns";
    case ParseRule::EmptyQuestion: return "empty_question";
    case ParseRule::MissingAnswer: return "missing_answer";
    case ParseRule::OptionCount: return "option_count";
    case ParseRule::DuplicateOptionLabel: return "duplicate_option_label";
    case ParseRule::OptionLabel: return "option_label";
    case ParseRule::CorrectCount: return "correct_count";
    case ParseRule::UnexpectedOptions: return "unexpected_options";
    case ParseRule::StrayText: return "stray_text";
  }
  return "unknown";
}

DialogueParseError::DialogueParseError(ParseRule rule, std::size_t turn, const std::string& detail)
    : ValidationError(std::string(to_string(rule)) + (turn ? " (turn " + std::to_string(turn) + ")" : "") +
                      ": " + detail),
      rule_(rule),
      turn_(turn) {}

std::vector<DialogueTurn> parse_dialogue(std::string_view raw, TaskKind task) {
  if (trim(raw).empty()) throw DialogueParseError(ParseRule::EmptyInput, 0, "empty model output");

  static const std::regex option_line(R"(^\(?([A-Za-z])[.):]\s*(.*)$)");
  static const std::regex answer_letters(
      R"(^\(?([A-Z])\)?(?:[.):\]]|\s|$)(?:.*?(?:,|\band\b|&|/|\bor\b)\s*\(?([A-Z])\)?(?:[.):\]]|\s|$))?)");

  enum class Field { None, Question, Option, Answer };
  std::vector<DialogueTurn> turns;
  Field field = Field::None;

  std::size_t pos = 0;
  while (pos <= raw.size()) {
    const auto nl = raw.find('\n', pos);
    const std::string_view line_raw = raw.substr(pos, nl == std::string_view::npos ? raw.size() - pos : nl - pos);
    pos = (nl == std::string_view::npos) ? raw.size() + 1 : nl + 1;
    const std::string_view line = trim(line_raw);
    if (line.empty()) continue;

    if (line.starts_with("###")) {
      field = Field::None;
      continue;
    }
    if (starts_with_icase(line, "Question:")) {
      turns.emplace_back();
      turns.back().question = std::string(trim(line.substr(9)));
      field = Field::Question;
      continue;
    }
    if (turns.empty()) continue;  // preamble before the first question
    DialogueTurn& turn = turns.back();
    if (starts_with_icase(line, "Answer:")) {
      turn.answer = std::string(trim(line.substr(7)));
      field = Field::Answer;
      continue;
    }
    const std::string line_str(line);
    std::smatch m;
    if (field != Field::Answer && line.size() >= 2 && std::regex_match(line_str, m, option_line) &&
        std::isupper(static_cast<unsigned char>(m[1].str()[0]))) {
      turn.options.push_back({m[1].str()[0], std::string(trim(m[2].str())), false});
      field = Field::Option;
      continue;
    }
    switch (field) {
      case Field::Question: append_text(turn.question, line); break;
      case Field::Option: append_text(turn.options.back().text, line); break;
      case Field::Answer: append_text(turn.answer, line); break;
      case Field::None: throw DialogueParseError(ParseRule::StrayText, turns.size(), "text outside any field");
    }
  }
  if (turns.empty()) throw DialogueParseError(ParseRule::NoTurns, 0, "no Question: lines found");

  // Structural checks first (shared with persisted samples), then resolve the
  // answer letter into the correct flag.
  for (std::size_t t = 0; t < turns.size(); ++t) {
    auto& turn = turns[t];
    if (turn.question.empty()) throw DialogueParseError(ParseRule::EmptyQuestion, t + 1, "empty question");
    if (turn.answer.empty()) throw DialogueParseError(ParseRule::MissingAnswer, t + 1, "no Answer: line");
    if (task != TaskKind::MultipleChoice) {
      if (!turn.options.empty()) {
        throw DialogueParseError(ParseRule::UnexpectedOptions, t + 1, "labeled options on a non-choice task");
      }
      continue;
    }
    std::set<char> labels;
    for (const auto& o : turn.options) {
      if (!labels.insert(o.label).second) {
        throw DialogueParseError(ParseRule::DuplicateOptionLabel, t + 1,
                                 std::string("duplicate option label ") + o.label);
      }
    }
    if (turn.options.size() != 4) {
      throw DialogueParseError(ParseRule::OptionCount, t + 1,
                               "option count != 4 (got " + std::to_string(turn.options.size()) + ")");
    }
    if (labels != std::set<char>{'A', 'B', 'C', 'D'}) {
      throw DialogueParseError(ParseRule::OptionLabel, t + 1, "option labels must be A, B, C, D");
    }
    std::smatch m;
    const std::string answer = turn.answer;
    if (!std::regex_search(answer, m, answer_letters) || !labels.contains(m[1].str()[0])) {
      throw DialogueParseError(ParseRule::CorrectCount, t + 1, "answer names no option (0 correct)");
    }
    if (m[2].matched && labels.contains(m[2].str()[0]) && m[2].str() != m[1].str()) {
      throw DialogueParseError(ParseRule::CorrectCount, t + 1, "answer names two options (2 correct)");
    }
    const char letter = m[1].str()[0];
    for (auto& o : turn.options) o.correct = (o.label == letter);
    std::sort(turn.options.begin(), turn.options.end(),
              [](const McOption& a, const McOption& b) { return a.label < b.label; });
    turn.answer = std::string(1, letter);
  }
  return turns;
}

std::string render_dialogue(const std::vector<DialogueTurn>& turns) {
  std::string out;
  for (std::size_t t = 0; t < turns.size(); ++t) {
    const auto& turn = turns[t];
    out += "### Turn " + std::to_string(t + 1) + "\n";
    out += "Question: " + turn.question + "\n";
    for (const auto& o : turn.options) out += std::string(1, o.label) + ". " + o.text + "\n";
    out += "Answer: " + turn.answer + "\n";
  }
  return out;
}

// --- Stage 2 run -------------------------------------------------------------

Stage2Paths Stage2Paths::in(const fs::path& dir) {
  return {dir / "instruct.jsonl", dir / "instruct.quarantine.jsonl", dir / "instruct.ckpt.jsonl",
          dir / "stage2.manifest.json"};
}

json Stage2Summary::manifest_json() const {
  json j = StageSummary::manifest_json();
  json counts = json::object();
  for (TaskKind t : kAllTasks) counts[std::string(to_string(t))] = task_counts[static_cast<int>(t)];
  j["task_counts"] = counts;
  return j;
}

Stage2Summary run_stage2(LlmGateway& gateway, const std::vector<DiverseCaption>& all_captions,
                         const Stage2Options& options, const Stage2Paths& paths) {
  options.mix.validate();
  std::vector<const DiverseCaption*> captions;
  if (options.sample_count) {
    for (std::size_t i : sample_indices(all_captions.size(), *options.sample_count, options.rng_seed)) {
      captions.push_back(&all_captions[i]);
    }
  } else {
    for (const auto& c : all_captions) captions.push_back(&c);
  }

  std::map<std::string, TaskKind> tasks;
  if (!captions.empty()) {
    std::vector<std::string> ids;
    for (const auto* c : captions) ids.push_back(c->id);
    tasks = allocate_tasks(ids, options.mix, options.rng_seed);
  }

  std::unordered_map<std::string, json> done;
  for (auto& r : read_checkpoint(paths.checkpoint, "caption_id")) {
    std::string id = r.at("caption_id").get<std::string>();
    done.insert_or_assign(std::move(id), std::move(r));
  }

  Stage2Summary summary;
  summary.total = captions.size();
  summary.resumed = done.size();
  const std::size_t calls_before = gateway.ledger().totals().calls;

  std::vector<const DiverseCaption*> todo;
  for (const auto* c : captions) {
    if (!done.contains(c->id)) todo.push_back(c);
  }

  LineAppender checkpoint(paths.checkpoint);
  const std::size_t chunk = std::max<std::size_t>(1, options.chunk_size);
  for (std::size_t begin = 0; begin < todo.size(); begin += chunk) {
    std::vector<const DiverseCaption*> pending(todo.begin() + begin,
                                               todo.begin() + std::min(todo.size(), begin + chunk));
    std::optional<GatewayError> first_error;
    for (std::size_t round = 0; round <= options.parse_retries && !pending.empty(); ++round) {
      std::vector<ChatPrompt> prompts;
      for (const auto* c : pending) {
        prompts.push_back(build_task_prompt(*c, tasks.at(c->id), options.turns, options.params));
      }
      auto results = gateway.complete_batch(prompts, options.parallelism);
      std::vector<const DiverseCaption*> again;
      for (std::size_t k = 0; k < pending.size(); ++k) {
        const DiverseCaption& c = *pending[k];
        const TaskKind task = tasks.at(c.id);
        if (!results[k].ok()) {
          const auto& e = *results[k].error;
          if (!first_error) first_error = GatewayError("caption " + c.id + ": " + e.what(), e.status(), e.attempts());
          continue;
        }
        json record = {{"caption_id", c.id}};
        try {
          InstructionSample s{"i-" + c.id, c.id, task, parse_dialogue(results[k].result->text, task)};
          s.validate();
          record["status"] = "accepted";
          record["sample"] = s.to_json();
        } catch (const DialogueParseError& e) {
          if (round < options.parse_retries) {
            again.push_back(&c);
            continue;
          }
          record["status"] = "rejected";
          record["quarantine"] = {{"caption_id", c.id},
                                  {"task", std::string(to_string(task))},
                                  {"raw", results[k].result->text},
                                  {"rule", std::string(to_string(e.rule()))},
                                  {"reason", e.what()}};
        }
        checkpoint.append(canonical_json(record));
        done.emplace(c.id, std::move(record));
      }
      pending = std::move(again);
    }
    if (first_error) {
      summary.gateway_calls = gateway.ledger().totals().calls - calls_before;
      throw *first_error;
    }
  }
  summary.gateway_calls = gateway.ledger().totals().calls - calls_before;

  std::string samples;
  std::string quarantine;
  for (const auto* c : captions) {
    const json& r = done.at(c->id);
    if (r.at("status") == "accepted") {
      const auto s = InstructionSample::from_json(r.at("sample"));
      ++summary.task_counts[static_cast<int>(s.task)];
      samples += canonical_json(r.at("sample")) + "\n";
      ++summary.accepted;
    } else {
      quarantine += canonical_json(r.at("quarantine")) + "\n";
      ++summary.rejected;
    }
  }
  write_file_atomic(paths.samples, samples);
  write_file_atomic(paths.quarantine, quarantine);
  write_file_atomic(paths.manifest, summary.manifest_json().dump(2) + "\n");
  return summary;
}

std::vector<InstructionSample> load_instruction_samples(const fs::path& path) {
  std::vector<InstructionSample> out;
  for (const auto& line : read_lines(path)) out.push_back(InstructionSample::from_json(json::parse(line)));
  return out;
}

}  // namespace textsynth
