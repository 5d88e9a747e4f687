#include "textsynth/mock_llm.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <string>
#include <vector>

#include "textsynth/caption_forge.hpp"
#include "textsynth/hash.hpp"
#include "textsynth/instruction_forge.hpp"
#include "textsynth/philox.hpp"
#include "textsynth/text.hpp"

namespace textsynth {
namespace {

constexpr std::array<std::string_view, 16> kAdjectives = {
    "weathered", "bright", "small", "tall", "glossy", "faded", "round", "narrow",
    "wooden", "metal", "striped", "pale", "dark", "crowded", "quiet", "rusty"};
constexpr std::array<std::string_view, 16> kNouns = {
    "bench", "lamp", "fence", "window", "bicycle", "basket", "doorway", "tree",
    "sign", "bucket", "railing", "cloud", "path", "wall", "bottle", "blanket"};
constexpr std::array<std::string_view, 8> kPlaces = {
    "foreground", "background", "left edge", "right side", "upper corner", "center", "lower half", "far end"};
constexpr std::array<std::string_view, 8> kLight = {
    "soft morning light", "harsh midday sun", "warm evening glow", "diffuse overcast light",
    "cool blue shade", "scattered reflections", "a single lamp", "dappled sunlight"};
constexpr std::array<std::string_view, 8> kDistractors = {
    "umbrella", "giraffe", "piano", "helicopter", "snowman", "anchor", "violin", "cactus"};

class Draw {
 public:
  Draw(std::uint64_t seed, std::string_view key) : stream_(seed, fnv1a64(key)) {}
  std::size_t below(std::size_t bound) { return stream_.below(next_++, bound); }
  template <class A>
  std::string_view pick(const A& items) {
    return items[below(items.size())];
  }

 private:
  CounterStream stream_;
  std::uint64_t next_ = 0;
};

std::string describe(std::uint64_t seed, const std::string& seed_text) {
  Draw draw(seed, seed_text);
  std::string text = "The image shows " + seed_text;
  const std::size_t target = std::max<std::size_t>(60 + draw.below(141), corpus_token_count(text));
  if (!text.empty() && text.back() != '.') text += '.';
  while (corpus_token_count(text) < target) {
    switch (draw.below(3)) {
      case 0:
        text += " In the " + std::string(draw.pick(kPlaces)) + " there is a " + std::string(draw.pick(kAdjectives)) +
                " " + std::string(draw.pick(kNouns)) + " beside a " + std::string(draw.pick(kAdjectives)) + " " +
                std::string(draw.pick(kNouns)) + ".";
        break;
      case 1:
        text += " The whole scene is lit by " + std::string(draw.pick(kLight)) + ", which falls across the " +
                std::string(draw.pick(kNouns)) + ".";
        break;
      default:
        text += " A " + std::string(draw.pick(kAdjectives)) + " " + std::string(draw.pick(kNouns)) +
                " sits near the " + std::string(draw.pick(kPlaces)) + " of the frame.";
        break;
    }
  }
  // Trim back to the target at a word boundary, keeping a final period.
  const auto words = split_whitespace(text);
  if (words.size() > target) {
    std::string cut;
    for (std::size_t i = 0; i < target; ++i) {
      if (i) cut += ' ';
      cut += words[i];
    }
    if (cut.back() != '.') cut += '.';
    text = cut;
  }
  return text;
}

std::vector<std::string> content_words(std::string_view caption) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& w : metric_tokens(caption)) {
    if (w.size() >= 4 && seen.insert(w).second) out.push_back(w);
  }
  if (out.empty()) out.push_back("scene");
  return out;
}

std::string dialogue(std::uint64_t seed, const TaskPromptParts& parts) {
  Draw draw(seed, std::string(to_string(parts.task)) + "\n" + parts.caption);
  const auto words = content_words(parts.caption);
  std::vector<DialogueTurn> turns;
  for (std::size_t t = 0; t < parts.turns; ++t) {
    const std::string& word = words[draw.below(words.size())];
    DialogueTurn turn;
    switch (parts.task) {
      case TaskKind::MultipleChoice: {
        turn.question = "Which of these words names something mentioned in the image description?";
        const std::size_t correct = draw.below(4);
        std::size_t d = draw.below(kDistractors.size());
        for (std::size_t k = 0; k < 4; ++k) {
          McOption o;
          o.label = static_cast<char>('A' + k);
          o.correct = k == correct;
          o.text = o.correct ? word : std::string(kDistractors[d++ % kDistractors.size()]);
          turn.options.push_back(o);
        }
        turn.answer = std::string(1, static_cast<char>('A' + correct));
        break;
      }
      case TaskKind::QuestionAnswering:
        turn.question = "What does the description say about the " + word + "?";
        turn.answer = "The description mentions the " + word + " as part of the scene, seen under " +
                      std::string(draw.pick(kLight)) + ".";
        break;
      case TaskKind::ComplexReasoning:
        turn.question = "What can be inferred about the setting from the presence of the " + word + "?";
        turn.answer = "Because the " + word + " appears together with the other details, the scene is most "
                      "likely an ordinary place in use, and the " + std::string(draw.pick(kAdjectives)) + " " +
                      std::string(draw.pick(kNouns)) + " suggests it is visited often.";
        break;
    }
    turns.push_back(std::move(turn));
  }
  return render_dialogue(turns);
}

}  // namespace

MockBackend::Responder synthetic_responder(std::uint64_t seed) {
  return [seed](const ChatPrompt& prompt) -> std::string {
    if (const auto parts = extract_task_prompt(prompt)) return dialogue(seed, *parts);
    if (const auto s = extract_expansion_seed(prompt)) return describe(seed, *s);
    return prompt.user;
  };
}

}  // namespace textsynth
