#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "storyplan/annotate.hpp"
#include "storyplan/models.hpp"
#include "storyplan/rng.hpp"
#include "storyplan/seq2seq.hpp"

namespace storyplan {

/// Lexicon lookup first (case-insensitive), then suffix stripping:
/// -ing, -ed, -es, -s, each only when at least three letters remain.
std::string lemmatize_verb(std::string_view token, const VerbLexicon& lexicon);

/// Verb lemmas of one story: frame predicates when the story has frames,
/// otherwise every token the lexicon knows.
std::vector<std::string> story_verbs(const AnnotatedStory& story, const VerbLexicon& lexicon);

struct VerbDiversity {
  double mean_unique = 0.0;
  double percent_diverse = 0.0;
  /// The corpus's five most frequent lemmas (count desc, then lexicographic).
  std::vector<std::string> top_verbs;
  std::size_t verb_tokens = 0;
};

/// Per-story lemma lists in; throws ValidationError on an empty corpus.
VerbDiversity verb_diversity(const std::vector<std::vector<std::string>>& story_lemmas);

std::size_t lcs_length(std::span<const int> a, std::span<const int> b);
std::size_t lcs_length(const Tokens& a, const Tokens& b);

struct LcsStats {
  std::size_t max = 0;
  double mean = 0.0;
};

/// LCS of `story` against every training story; shards across threads
/// (0 = hardware concurrency) with an order-independent reduction.
LcsStats lcs_stats(const Tokens& story, const std::vector<Tokens>& training, std::size_t threads = 0);

struct RankingCase {
  Tokens source;
  std::string gold;
  bool first_mention = true;
};

using MentionScorer = std::function<double(const RankingCase&, const std::string& candidate)>;

struct RankingAccuracy {
  double first = 0.0;
  double subsequent = 0.0;
  std::size_t first_cases = 0;
  std::size_t subsequent_cases = 0;
};

/// Each case ranks its gold string against n - 1 distinct distractors drawn
/// uniformly from the other gold strings of `cases`. A case counts only when
/// the gold score is strictly highest. Throws ValidationError when fewer than
/// n - 1 distractors exist for some case.
RankingAccuracy entity_ranking(const std::vector<RankingCase>& cases, const MentionScorer& scorer, std::size_t n,
                               Rng& rng);

std::vector<RankingCase> ranking_cases(const std::vector<FillExample>& examples);
MentionScorer filler_scorer(const FillModel& filler);

/// Mean number of distinct entity surfaces per story.
double entity_name_diversity(const std::vector<std::vector<EntityMention>>& story_mentions);

struct CorefClusterStats {
  double mean_chains = 0.0;
  double mean_unique_names = 0.0;
};

/// Per story: clusters with at least two mentions, and the mean count of
/// distinct lowercased mention strings per such cluster (0 without clusters).
/// Both are then averaged over stories.
CorefClusterStats coref_cluster_stats(const std::vector<AnnotatedStory>& stories);

struct StageNll {
  double stage1 = 0.0;
  double stage2 = 0.0;
  std::size_t stage1_tokens = 0;
  std::size_t stage2_tokens = 0;
};

/// Mean per-token NLL in nats under teacher forcing for any model.
std::pair<double, std::size_t> teacher_forced_nll(const SequenceModel& model, std::span<const TrainingPair> pairs);

/// Stage 1 scores prompt -> plan, stage 2 plan -> anonymized story.
StageNll stage_nll_report(const PipelineBundle& bundle, std::span<const TrainingPair> plan_pairs,
                          std::span<const TrainingPair> story_pairs);

struct MetricsReport {
  std::size_t stories = 0;
  std::string verb_source;
  std::optional<StageNll> nll;
  std::optional<VerbDiversity> verbs;
  struct LcsSummary {
    double max = 0.0;
    double average = 0.0;
  };
  /// Means over evaluated stories of their max and average LCS.
  std::optional<LcsSummary> lcs;
  /// (first|subsequent, n) -> accuracy in [0, 1].
  std::map<std::pair<std::string, std::size_t>, double> ranking;
  std::optional<double> entity_names;
  std::optional<CorefClusterStats> coref;

  std::string to_text() const;
  nlohmann::json to_json() const;
};

}  // namespace storyplan
