#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "storyplan/corpus.hpp"
#include "storyplan/decompose.hpp"
#include "storyplan/rng.hpp"
#include "storyplan/sampling.hpp"
#include "storyplan/seq2seq.hpp"
#include "storyplan/sequence_model.hpp"

namespace storyplan {

inline constexpr std::size_t kDefaultFillWindow = 10;

/// Everything the reference filler sees for one mention.
struct MentionContext {
  std::size_t placeholder = 0;
  /// Token index of the mention in the anonymized story.
  std::size_t position = 0;
  /// Sorted multiset of the tokens within `window` positions on each side,
  /// excluding the mention itself.
  Tokens window;
  /// Surfaces already chosen for this placeholder, oldest first.
  std::vector<std::string> previous;
  Tokens story;
};

/// Throws ValidationError unless `position` holds a placeholder.
MentionContext make_mention_context(const Tokens& story, std::size_t position, std::vector<std::string> previous,
                                    std::size_t window = kDefaultFillWindow);

/// entK <sep> window <sep> references <sep> story, where references are the
/// previous surfaces joined by <sep> (or <null> when there are none) and the
/// mention itself is replaced by <mention>.
Tokens coref_fill_source(const MentionContext& context);
/// entK <sep> story
Tokens ner_fill_source(std::size_t placeholder, const Tokens& story);

/// One supervised filler example taken from a gold anonymized story.
struct FillExample {
  Tokens source;
  std::string target;
  std::size_t placeholder = 0;
  /// First reference to its placeholder in the story.
  bool first_mention = true;
};

/// One example per placeholder (ner) or per occurrence with gold previous
/// references (coref).
std::vector<FillExample> fill_examples(const AnonymizedStory& anon, AnonScheme mode,
                                       std::size_t window = kDefaultFillWindow);

/// Ids of `tokens` followed by eos.
std::vector<int> encode_with_eos(const Vocabulary& vocab, const Tokens& tokens);

struct FillModel {
  std::shared_ptr<const SequenceModel> model;
  /// Word-level vocabulary of the anonymized story side.
  Vocabulary source_vocab;
  /// Subword or character vocabulary of the fill strings.
  Vocabulary target_vocab;
  Tokenizer target_tokenizer;
  AnonScheme mode = AnonScheme::ner;
  std::size_t window = kDefaultFillWindow;
  std::size_t max_length = 48;
  double temperature = 0.0;
  std::size_t k = 10;
  /// Mean rather than summed token log-probability in score_mention.
  bool length_normalize = true;

  TrainingPair encode(const FillExample& example) const;
};

/// Decodes one fill string for `source`. eos is banned at the first step;
/// throws ValidationError if the decoded string is still empty.
std::string decode_fill(const FillModel& filler, const Tokens& source, Rng& rng);

/// One string for every occurrence of the placeholder. Throws
/// ValidationError when the placeholder does not occur in the story.
std::string ner_fill_predict(std::size_t placeholder, const Tokens& anon_story, const FillModel& filler, Rng& rng);
std::string coref_fill_predict(const MentionContext& context, const FillModel& filler, Rng& rng);

/// Fills for a generated anonymized story: per placeholder (ner) or per
/// mention in textual order, each seeing the earlier predictions (coref).
Fills predict_fills(const Tokens& anon_story, const FillModel& filler, Rng& rng);

/// Teacher-forced log-likelihood of `candidate` (with eos), length-normalized
/// unless the filler says otherwise. Throws ValidationError on an empty candidate.
double score_mention(const FillModel& filler, const Tokens& source, const std::string& candidate);
double score_mention(const FillModel& filler, const MentionContext& context, const std::string& candidate);

struct StepDecision {
  int token = 0;
  bool copied = false;
};

/// Copy branch when the step reports p_copy >= threshold and the prefix holds
/// a placeholder: emits the placeholder at the highest pointer weight among
/// prefix placeholder positions (earliest on ties). Otherwise samples from
/// the logits with `banned` masked.
StepDecision decode_step_with_copy(const StepOutput& step, std::span<const int> prefix, int placeholder_begin,
                                   std::size_t placeholder_count, const GenerationConfig& config,
                                   std::span<const int> banned, Rng& rng);

/// The three stages plus the vocabularies they share. The story vocabulary
/// is the plan target, the story source and target, and the filler source.
struct PipelineBundle {
  std::shared_ptr<const SequenceModel> plan_model;
  std::shared_ptr<const SequenceModel> story_model;
  FillModel fill;
  Vocabulary prompt_vocab;
  Vocabulary story_vocab;
  AnonScheme scheme = AnonScheme::ner;

  /// Throws ValidationError when sizes disagree or placeholders are missing.
  void validate() const;
};

/// Seq2Seq configs for each stage of a bundle.
struct StageShape {
  std::size_t dim = 128;
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 4;
  std::size_t heads = 4;
  std::size_t kernel_width = 3;
  bool verb_attention = true;
  bool pointer_copy = true;

  nlohmann::json to_json() const;
  static StageShape from_json(const nlohmann::json& j);
};

Seq2SeqConfig plan_model_config(const Vocabulary& prompt_vocab, const Vocabulary& story_vocab,
                                const StageShape& shape);
Seq2SeqConfig story_model_config(const Vocabulary& story_vocab, const StageShape& shape);
Seq2SeqConfig fill_model_config(const Vocabulary& story_vocab, const Vocabulary& fill_vocab, const StageShape& shape);

/// Sidecar of a saved model: what it was trained on and how to rebuild it.
struct ModelManifest {
  std::string stage;
  Seq2SeqConfig config;
  std::uint64_t seed = 0;
  std::string source_vocab;
  std::string target_vocab;
  Scheme target_scheme = Scheme::word;
  /// Merge file for bpe targets, relative to the model directory.
  std::string bpe_merges;
  std::optional<AnonScheme> anon_scheme;
  nlohmann::json training = nlohmann::json::object();

  nlohmann::json to_json() const;
  static ModelManifest from_json(const nlohmann::json& j);
};

/// Writes <dir>/<stage>.ckpt and <dir>/<stage>.json.
void save_model(const Seq2SeqModel& model, const ModelManifest& manifest, const std::filesystem::path& dir);
/// Reads them back; the manifest config must match the checkpoint shapes.
std::pair<std::shared_ptr<Seq2SeqModel>, ModelManifest> load_model(const std::filesystem::path& dir,
                                                                   const std::string& stage);

}  // namespace storyplan
