#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "storyplan/corpus.hpp"

namespace storyplan {

/// Half-open token range [start, end).
struct Span {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - start; }
  bool overlaps(const Span& o) const { return start < o.end && o.start < end; }
  bool contains(std::size_t i) const { return i >= start && i < end; }

  friend bool operator==(const Span&, const Span&) = default;
  friend auto operator<=>(const Span&, const Span&) = default;
};

struct SrlArgument {
  std::string role;
  Span span;

  friend bool operator==(const SrlArgument&, const SrlArgument&) = default;
};

struct SrlFrame {
  Span predicate;
  std::vector<SrlArgument> arguments;
  std::size_t sentence_index = 0;

  friend bool operator==(const SrlFrame&, const SrlFrame&) = default;
};

enum class EntityLabel { person, org, loc };

std::string_view to_string(EntityLabel label);
EntityLabel parse_entity_label(std::string_view name);

struct EntityMention {
  Span span;
  EntityLabel label = EntityLabel::person;
  Tokens surface;

  friend bool operator==(const EntityMention&, const EntityMention&) = default;
};

struct CorefCluster {
  std::vector<Span> mentions;

  friend bool operator==(const CorefCluster&, const CorefCluster&) = default;
};

struct AnnotatedStory {
  Story story;
  std::vector<SrlFrame> frames;
  std::vector<EntityMention> mentions;
  std::vector<CorefCluster> clusters;
};

/// ARG0..ARG5 or ARGM-<TAG>.
bool is_valid_role(std::string_view role);
/// ARG0..ARG5. Returns -1 for modifiers.
int core_role_index(std::string_view role);

/// The fixed pronoun inventory used for fallback coreference.
const std::vector<std::string>& default_pronouns();

/// Validates one annotation record against `story` and canonicalizes it:
/// frames sorted by (sentence, predicate start), mentions by start,
/// cluster spans by start. Singleton clusters are dropped.
/// Throws ValidationError on out-of-range spans, unknown roles, or
/// overlapping spans within a cluster.
AnnotatedStory import_annotations(const Story& story, const nlohmann::json& record);
nlohmann::json export_annotations(const AnnotatedStory& annotated);

/// Word form -> lemma. Any form present is treated as a verb.
using VerbLexicon = std::map<std::string, std::string, std::less<>>;
/// Lowercased, space-joined token sequence -> label.
using Gazetteer = std::map<std::string, EntityLabel, std::less<>>;

/// Small built-in lexicon of common narrative verbs and their inflections.
const VerbLexicon& default_verb_lexicon();
VerbLexicon load_verb_lexicon(const std::filesystem::path& path);
Gazetteer load_gazetteer(const std::filesystem::path& path);

/// Each lexicon verb becomes a predicate; ARG0 is the chunk directly left of
/// it and ARG1 the chunk directly right, chunks ending at punctuation,
/// function words, other verbs or the sentence edge.
std::vector<SrlFrame> heuristic_srl(const Story& story, const VerbLexicon& lexicon);

/// Gazetteer n-gram hits first (longest match), then maximal runs of
/// capitalized tokens that do not start a sentence, labeled PERSON.
std::vector<EntityMention> heuristic_ner(const Story& story, const Gazetteer& gazetteer);

/// Mentions group when their lowercased surfaces match or one is a
/// single-token name equal to the first or final token of the other. Each
/// pronoun joins the group with the nearest preceding member. Groups with
/// fewer than two spans are dropped.
std::vector<CorefCluster> heuristic_coref(const std::vector<EntityMention>& mentions, const Story& story,
                                          const std::vector<std::string>& pronouns = default_pronouns());

/// Runs all three fallback annotators.
AnnotatedStory annotate_fallback(const Story& story, const VerbLexicon& lexicon, const Gazetteer& gazetteer);

}  // namespace storyplan
