#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "storyplan/corpus.hpp"
#include "storyplan/decompose.hpp"
#include "storyplan/models.hpp"
#include "storyplan/sampling.hpp"
#include "storyplan/sequence_model.hpp"

namespace storyplan {

/// A token counts as a word unless it is a special token or consists only of
/// ASCII punctuation. Placeholders count as one word each.
bool is_word_token(std::string_view token);
std::size_t count_words(const Tokens& tokens);

/// Keeps the first `words` words (and any punctuation attached before the next word).
Tokens trim_to_words(const Tokens& tokens, std::size_t words);

struct GeneratedSequence {
  /// Without bos and eos.
  std::vector<int> ids;
  bool ended_with_eos = false;
  /// Stopped at the first sentence boundary past max_words.
  bool cut_at_boundary = false;
  /// Ran out of budget before any boundary; flagged for inspection.
  bool hard_cut = false;
  std::size_t words = 0;
};

/// Samples until eos. eos is suppressed while fewer than min_words words
/// exist; once max_words is reached decoding stops at the next sentence
/// boundary (terminator plus any closing quotes). Without a boundary by
/// max_words + slack, or at the token budget, the output is hard cut.
/// unk, pad and bos are always banned. Models with a pointer head decode
/// through decode_step_with_copy.
GeneratedSequence generate_sequence(const SequenceModel& model, std::span<const int> source,
                                    const Vocabulary& target_vocab, const GenerationConfig& config, Rng& rng);

struct PipelineConfig {
  GenerationConfig plan;
  GenerationConfig story;
  std::uint64_t seed = 0;

  PipelineConfig();
  nlohmann::json to_json() const;
  static PipelineConfig from_json(const nlohmann::json& j);
};

/// Every intermediate of one pipeline run.
struct PipelineRecord {
  std::uint64_t example = 0;
  Tokens prompt;
  Tokens plan;
  Tokens anonymized;
  Fills fills;
  Tokens story;
  bool plan_hard_cut = false;
  bool story_hard_cut = false;

  nlohmann::json to_json() const;
};

/// prompt -> plan -> anonymized story -> fills -> story. Randomness comes
/// from substreams of (config.seed, example). A failing stage throws
/// StageError tagged plan, story, fill or deanonymize.
PipelineRecord run_pipeline(const Prompt& prompt, const PipelineBundle& bundle, const PipelineConfig& config,
                            std::uint64_t example = 0);

}  // namespace storyplan
