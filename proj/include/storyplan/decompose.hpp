#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "storyplan/annotate.hpp"
#include "storyplan/corpus.hpp"

namespace storyplan {

/// Serialized predicate-argument sequence: per frame the frame delimiter,
/// the predicate, then core arguments in role order; a sentence delimiter
/// closes every sentence that produced frames.
struct SrlPlan {
  Tokens tokens;
  /// Index of the predicate token opening each frame.
  std::vector<std::size_t> verb_positions;
};

/// Verb positions recovered from delimiters: the token after each frame delimiter.
std::vector<std::size_t> plan_verb_positions(const Tokens& plan_tokens);

enum class AnonScheme { ner, coref };

std::string_view to_string(AnonScheme scheme);
AnonScheme parse_anon_scheme(std::string_view name);

inline constexpr std::size_t kDefaultPlaceholderCap = 64;

struct MentionSlot {
  /// Token index of the placeholder in the anonymized story.
  std::size_t position = 0;
  /// Gold surface, space-joined word tokens. Empty for generated stories.
  std::string surface;
  /// Extent in the original story, when known.
  std::optional<Span> source;

  friend bool operator==(const MentionSlot&, const MentionSlot&) = default;
};

struct PlaceholderEntry {
  std::vector<MentionSlot> slots;

  friend bool operator==(const PlaceholderEntry&, const PlaceholderEntry&) = default;
};

/// Entry i describes placeholder ent<i>; ids follow first appearance.
struct PlaceholderTable {
  std::vector<PlaceholderEntry> entries;

  std::size_t occurrence_count() const;
  friend bool operator==(const PlaceholderTable&, const PlaceholderTable&) = default;
};

struct AnonymizedStory {
  Tokens tokens;
  PlaceholderTable table;
  AnonScheme scheme = AnonScheme::ner;
  /// More distinct entities than the placeholder cap; the excess became unk.
  bool overflow = false;
};

nlohmann::json table_to_json(const AnonymizedStory& anon);
/// Rebuilds an anonymized story from its tokens and sidecar record.
AnonymizedStory anonymized_from_json(Tokens tokens, const nlohmann::json& record);

SrlPlan serialize_srl_plan(const AnnotatedStory& annotated);
/// Same plan, but tokens inside anonymized mentions collapse to their placeholder.
SrlPlan serialize_srl_plan(const AnnotatedStory& annotated, const AnonymizedStory& anon);

/// Identical surface strings (case-sensitive) share a placeholder. Overlapping
/// mentions keep the longer, then earlier, span.
AnonymizedStory anonymize_ner(const Story& story, const std::vector<EntityMention>& mentions,
                              std::size_t cap = kDefaultPlaceholderCap);

/// One placeholder per cluster; named entities outside every cluster get a
/// fresh placeholder each.
AnonymizedStory anonymize_coref(const Story& story, const std::vector<CorefCluster>& clusters,
                                const std::vector<EntityMention>& mentions, std::size_t cap = kDefaultPlaceholderCap);

/// fills[id] holds either one string (applied to every occurrence, ner
/// style) or exactly one string per occurrence in textual order.
using Fills = std::vector<std::vector<std::string>>;

/// Ids without occurrences need no fill. Throws ValidationError when a
/// placeholder that occurs has no fill or an occurrence
/// count does not match.
Tokens deanonymize(const AnonymizedStory& anon, const Fills& fills);

/// Gold surfaces from the table: one per id for ner, one per occurrence for coref.
Fills gold_fills(const AnonymizedStory& anon);

/// Table for a generated anonymized story: every placeholder token becomes a slot.
AnonymizedStory anonymized_from_tokens(Tokens tokens, AnonScheme scheme);

enum class PosteriorScheme { srl_plan, ner_anon, coref_anon };

std::string_view to_string(PosteriorScheme scheme);
PosteriorScheme parse_posterior_scheme(std::string_view name);

/// The deterministic latent z* and the target x. The model pair
/// (prompt -> latent, latent -> target) bounds the story NLL from above.
struct Posterior {
  Tokens latent;
  Tokens target;
  std::vector<std::size_t> verb_positions;
  std::optional<AnonymizedStory> anonymized;
};

Posterior build_posterior(const AnnotatedStory& annotated, PosteriorScheme scheme,
                          std::size_t cap = kDefaultPlaceholderCap);

/// Intermediates of the full three-stage pipeline: an anonymized action plan
/// and the anonymized story it abstracts.
struct PipelineDecomposition {
  SrlPlan plan;
  AnonymizedStory anonymized;
};

PipelineDecomposition decompose_for_pipeline(const AnnotatedStory& annotated, AnonScheme scheme,
                                             std::size_t cap = kDefaultPlaceholderCap);

}  // namespace storyplan
