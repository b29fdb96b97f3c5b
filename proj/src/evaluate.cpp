#include "storyplan/evaluate.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "storyplan/errors.hpp"

namespace storyplan {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string lemmatize_verb(std::string_view token, const VerbLexicon& lexicon) {
  const std::string w = lower(token);
  if (auto it = lexicon.find(w); it != lexicon.end()) return it->second;
  for (std::string_view suffix : {"ing", "ed", "es", "s"}) {
    if (w.size() >= suffix.size() + 3 && w.ends_with(suffix)) return w.substr(0, w.size() - suffix.size());
  }
  return w;
}

std::vector<std::string> story_verbs(const AnnotatedStory& story, const VerbLexicon& lexicon) {
  std::vector<std::string> out;
  const auto& tokens = story.story.tokens;
  if (!story.frames.empty()) {
    for (const auto& f : story.frames) {
      Tokens words(tokens.begin() + static_cast<std::ptrdiff_t>(f.predicate.start),
                   tokens.begin() + static_cast<std::ptrdiff_t>(f.predicate.end));
      out.push_back(lemmatize_verb(join_tokens(words), lexicon));
    }
    return out;
  }
  for (const auto& t : tokens) {
    if (auto it = lexicon.find(lower(t)); it != lexicon.end()) out.push_back(it->second);
  }
  return out;
}

VerbDiversity verb_diversity(const std::vector<std::vector<std::string>>& story_lemmas) {
  if (story_lemmas.empty()) throw ValidationError("verb diversity needs at least one story");
  std::map<std::string, std::size_t> counts;
  VerbDiversity out;
  double unique_total = 0.0;
  for (const auto& lemmas : story_lemmas) {
    unique_total += static_cast<double>(std::set<std::string>(lemmas.begin(), lemmas.end()).size());
    for (const auto& l : lemmas) ++counts[l];
    out.verb_tokens += lemmas.size();
  }
  out.mean_unique = unique_total / static_cast<double>(story_lemmas.size());

  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  std::size_t frequent = 0;
  for (std::size_t i = 0; i < ranked.size() && i < 5; ++i) {
    out.top_verbs.push_back(ranked[i].first);
    frequent += ranked[i].second;
  }
  if (out.verb_tokens > 0) {
    out.percent_diverse =
        100.0 * static_cast<double>(out.verb_tokens - frequent) / static_cast<double>(out.verb_tokens);
  }
  return out;
}

std::size_t lcs_length(std::span<const int> a, std::span<const int> b) {
  if (a.size() < b.size()) std::swap(a, b);
  // One row over the shorter sequence.
  std::vector<std::uint32_t> row(b.size() + 1, 0);
  for (int x : a) {
    std::uint32_t diag = 0;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const std::uint32_t up = row[j + 1];
      row[j + 1] = x == b[j] ? diag + 1 : std::max(up, row[j]);
      diag = up;
    }
  }
  return row[b.size()];
}

namespace {

class Interner {
 public:
  std::vector<int> ids(const Tokens& tokens) {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(table_.try_emplace(t, static_cast<int>(table_.size())).first->second);
    return out;
  }

 private:
  std::unordered_map<std::string, int> table_;
};

}  // namespace

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  Interner in;
  const auto x = in.ids(a);
  const auto y = in.ids(b);
  return lcs_length(x, y);
}

LcsStats lcs_stats(const Tokens& story, const std::vector<Tokens>& training, std::size_t threads) {
  LcsStats out;
  if (training.empty()) return out;
  Interner in;
  const auto s = in.ids(story);
  std::vector<std::vector<int>> train;
  train.reserve(training.size());
  for (const auto& t : training) train.push_back(in.ids(t));

  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, train.size());
  std::vector<std::size_t> maxima(threads, 0), sums(threads, 0);
  const auto work = [&](std::size_t shard) {
    for (std::size_t i = shard; i < train.size(); i += threads) {
      const std::size_t v = lcs_length(s, train[i]);
      maxima[shard] = std::max(maxima[shard], v);
      sums[shard] += v;
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  std::size_t total = 0;
  for (std::size_t t = 0; t < threads; ++t) {
    out.max = std::max(out.max, maxima[t]);
    total += sums[t];
  }
  out.mean = static_cast<double>(total) / static_cast<double>(train.size());
  return out;
}

RankingAccuracy entity_ranking(const std::vector<RankingCase>& cases, const MentionScorer& scorer, std::size_t n,
                               Rng& rng) {
  if (n < 2) throw ValidationError("ranking needs at least one distractor");
  const std::set<std::string> pool_set = [&] {
    std::set<std::string> s;
    for (const auto& c : cases) s.insert(c.gold);
    return s;
  }();
  const std::vector<std::string> pool(pool_set.begin(), pool_set.end());
  RankingAccuracy out;
  std::size_t first_hits = 0, subsequent_hits = 0;
  for (const auto& c : cases) {
    std::vector<std::size_t> candidates;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (pool[i] != c.gold) candidates.push_back(i);
    }
    if (candidates.size() < n - 1) {
      throw ValidationError("only " + std::to_string(candidates.size()) + " distractors available for n = " +
                            std::to_string(n));
    }
    // Partial Fisher-Yates: the first n - 1 entries become the sample.
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
      std::swap(candidates[i], candidates[j]);
    }
    const double gold = scorer(c, c.gold);
    bool wins = !std::isnan(gold);
    for (std::size_t i = 0; wins && i + 1 < n; ++i) {
      if (!(gold > scorer(c, pool[candidates[i]]))) wins = false;
    }
    if (c.first_mention) {
      ++out.first_cases;
      first_hits += wins;
    } else {
      ++out.subsequent_cases;
      subsequent_hits += wins;
    }
  }
  if (out.first_cases) out.first = static_cast<double>(first_hits) / static_cast<double>(out.first_cases);
  if (out.subsequent_cases) {
    out.subsequent = static_cast<double>(subsequent_hits) / static_cast<double>(out.subsequent_cases);
  }
  return out;
}

std::vector<RankingCase> ranking_cases(const std::vector<FillExample>& examples) {
  std::vector<RankingCase> out;
  out.reserve(examples.size());
  for (const auto& e : examples) out.push_back({e.source, e.target, e.first_mention});
  return out;
}

MentionScorer filler_scorer(const FillModel& filler) {
  return [&filler](const RankingCase& c, const std::string& candidate) {
    return score_mention(filler, c.source, candidate);
  };
}

double entity_name_diversity(const std::vector<std::vector<EntityMention>>& story_mentions) {
  if (story_mentions.empty()) return 0.0;
  double total = 0.0;
  for (const auto& mentions : story_mentions) {
    std::set<std::string> names;
    for (const auto& m : mentions) names.insert(join_tokens(m.surface));
    total += static_cast<double>(names.size());
  }
  return total / static_cast<double>(story_mentions.size());
}

CorefClusterStats coref_cluster_stats(const std::vector<AnnotatedStory>& stories) {
  CorefClusterStats out;
  if (stories.empty()) return out;
  double chains_total = 0.0, names_total = 0.0;
  for (const auto& s : stories) {
    std::size_t chains = 0;
    double names = 0.0;
    for (const auto& cluster : s.clusters) {
      if (cluster.mentions.size() < 2) continue;
      ++chains;
      std::set<std::string> distinct;
      for (const auto& span : cluster.mentions) {
        Tokens words(s.story.tokens.begin() + static_cast<std::ptrdiff_t>(span.start),
                     s.story.tokens.begin() + static_cast<std::ptrdiff_t>(span.end));
        distinct.insert(lower(join_tokens(words)));
      }
      names += static_cast<double>(distinct.size());
    }
    chains_total += static_cast<double>(chains);
    if (chains) names_total += names / static_cast<double>(chains);
  }
  out.mean_chains = chains_total / static_cast<double>(stories.size());
  out.mean_unique_names = names_total / static_cast<double>(stories.size());
  return out;
}

std::pair<double, std::size_t> teacher_forced_nll(const SequenceModel& model, std::span<const TrainingPair> pairs) {
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& p : pairs) {
    for (double lp : model.score_tokens(p.source, p.target)) total -= lp;
    tokens += p.target.size();
  }
  return {tokens ? total / static_cast<double>(tokens) : 0.0, tokens};
}

StageNll stage_nll_report(const PipelineBundle& bundle, std::span<const TrainingPair> plan_pairs,
                          std::span<const TrainingPair> story_pairs) {
  if (!bundle.plan_model || !bundle.story_model) throw ValidationError("stage NLL needs plan and story models");
  StageNll out;
  std::tie(out.stage1, out.stage1_tokens) = teacher_forced_nll(*bundle.plan_model, plan_pairs);
  std::tie(out.stage2, out.stage2_tokens) = teacher_forced_nll(*bundle.story_model, story_pairs);
  return out;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void row(std::ostringstream& out, std::string_view label, const std::string& value) {
  out << "  " << label;
  for (std::size_t i = label.size(); i < 34; ++i) out << ' ';
  out << value << '\n';
}

}  // namespace

std::string MetricsReport::to_text() const {
  std::ostringstream out;
  out << "stories evaluated: " << stories << "\n";
  if (nll) {
    out << "\nstage NLL (nats per token, teacher forced)\n";
    row(out, "stage 1 -log p(z*)", fixed(nll->stage1, 4) + "  (" + std::to_string(nll->stage1_tokens) + " tokens)");
    row(out, "stage 2 -log p(x|z*)", fixed(nll->stage2, 4) + "  (" + std::to_string(nll->stage2_tokens) + " tokens)");
  }
  if (verbs) {
    out << "\nverb diversity (verbs from " << verb_source << ")\n";
    row(out, "unique verbs per story", fixed(verbs->mean_unique, 4));
    row(out, "% diverse verbs", fixed(verbs->percent_diverse, 4));
    std::string top;
    for (const auto& v : verbs->top_verbs) top += (top.empty() ? "" : ", ") + v;
    row(out, "top-5 verbs", top.empty() ? "-" : top);
  }
  if (lcs) {
    out << "\nlongest common subsequence with training stories (tokens)\n";
    row(out, "max LCS", fixed(lcs->max, 4));
    row(out, "average LCS", fixed(lcs->average, 4));
  }
  if (!ranking.empty()) {
    out << "\nentity ranking accuracy (%)\n";
    for (const auto& [key, acc] : ranking) {
      row(out, key.first + " mention, rank " + std::to_string(key.second), fixed(100.0 * acc, 2));
    }
  }
  if (entity_names) {
    out << "\nentity names\n";
    row(out, "unique entities per story", fixed(*entity_names, 4));
  }
  if (coref) {
    out << "\ncoreference clusters\n";
    row(out, "non-singleton chains per story", fixed(coref->mean_chains, 4));
    row(out, "unique names per chain", fixed(coref->mean_unique_names, 4));
  }
  return out.str();
}

json MetricsReport::to_json() const {
  json j = {{"stories", stories}};
  if (nll) {
    j["stage_nll"] = {{"stage1", nll->stage1},
                      {"stage2", nll->stage2},
                      {"stage1_tokens", nll->stage1_tokens},
                      {"stage2_tokens", nll->stage2_tokens},
                      {"unit", "nats/token"}};
  }
  if (verbs) {
    j["verb_diversity"] = {{"unique_verbs_per_story", verbs->mean_unique},
                           {"percent_diverse_verbs", verbs->percent_diverse},
                           {"top_verbs", verbs->top_verbs},
                           {"verb_tokens", verbs->verb_tokens},
                           {"source", verb_source}};
  }
  if (lcs) j["lcs"] = {{"max", lcs->max}, {"average", lcs->average}, {"unit", "tokens"}};
  if (!ranking.empty()) {
    json r = json::object();
    for (const auto& [key, acc] : ranking) r[key.first][std::to_string(key.second)] = acc;
    j["entity_ranking"] = r;
  }
  if (entity_names) j["unique_entities_per_story"] = *entity_names;
  if (coref) {
    j["coref_clusters"] = {{"non_singleton_chains_per_story", coref->mean_chains},
                           {"unique_names_per_chain", coref->mean_unique_names}};
  }
  return j;
}

}  // namespace storyplan
