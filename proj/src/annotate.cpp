#include "storyplan/annotate.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <set>

#include "storyplan/errors.hpp"

namespace storyplan {

using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool is_punct_token(std::string_view t) {
  return !t.empty() && std::all_of(t.begin(), t.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return u < 0x80 && std::ispunct(u);
  });
}

Tokens slice(const Tokens& tokens, const Span& span) {
  return Tokens(tokens.begin() + static_cast<std::ptrdiff_t>(span.start),
                tokens.begin() + static_cast<std::ptrdiff_t>(span.end));
}

Span parse_span(const json& j, std::size_t limit, std::string_view what) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer()) {
    throw ValidationError(std::string(what) + ": span must be [start, end)");
  }
  const auto s = j[0].get<long long>();
  const auto e = j[1].get<long long>();
  if (s < 0 || e <= s || static_cast<std::size_t>(e) > limit) {
    throw ValidationError(std::string(what) + ": span [" + std::to_string(s) + "," + std::to_string(e) +
                          ") outside story of " + std::to_string(limit) + " tokens");
  }
  return {static_cast<std::size_t>(s), static_cast<std::size_t>(e)};
}

json span_json(const Span& s) { return json::array({s.start, s.end}); }

// Words that end an argument chunk in the fallback SRL.
const std::set<std::string, std::less<>>& chunk_breakers() {
  static const std::set<std::string, std::less<>> words = {
      "and",   "or",   "but",   "then",  "to",    "of",   "in",   "on",  "at",    "with", "from",
      "into",  "by",   "for",   "as",    "that",  "which", "who",  "when", "while", "because", "so",
      "if",    "was",  "were",  "is",    "are",   "be",   "been", "not", "after", "before", "until",
      "over",  "under", "through", "about", "than", "<newline>"};
  return words;
}

bool sentence_initial(const Story& story, std::size_t i) {
  if (i == 0) return true;
  if (story.sentence_begin(story.sentence_of(i)) == i) return true;
  const auto& prev = story.tokens[i - 1];
  return prev == "\"" || prev == "“" || prev == "'" || prev == kNewlineMarker;
}

bool capitalized(std::string_view t) {
  return !t.empty() && std::isupper(static_cast<unsigned char>(t[0])) != 0 && t != "I";
}

}  // namespace

std::string_view to_string(EntityLabel label) {
  switch (label) {
    case EntityLabel::person: return "PERSON";
    case EntityLabel::org: return "ORG";
    case EntityLabel::loc: return "LOC";
  }
  return "PERSON";
}

EntityLabel parse_entity_label(std::string_view name) {
  if (name == "PERSON") return EntityLabel::person;
  if (name == "ORG") return EntityLabel::org;
  if (name == "LOC") return EntityLabel::loc;
  throw ValidationError("unknown entity label: " + std::string(name));
}

bool is_valid_role(std::string_view role) {
  if (core_role_index(role) >= 0) return true;
  if (role.size() <= 5 || role.substr(0, 5) != "ARGM-") return false;
  return std::all_of(role.begin() + 5, role.end(), [](char c) { return std::isupper(static_cast<unsigned char>(c)); });
}

int core_role_index(std::string_view role) {
  if (role.size() == 4 && role.substr(0, 3) == "ARG" && role[3] >= '0' && role[3] <= '5') return role[3] - '0';
  return -1;
}

const std::vector<std::string>& default_pronouns() {
  static const std::vector<std::string> pronouns = {"he",   "she",  "it",  "they", "him",  "her",
                                                    "them", "his",  "hers", "its", "their"};
  return pronouns;
}

AnnotatedStory import_annotations(const Story& story, const json& record) {
  if (!record.is_object()) throw ValidationError("annotation record must be an object");
  const std::size_t n = story.tokens.size();
  AnnotatedStory out{story, {}, {}, {}};

  if (auto it = record.find("frames"); it != record.end()) {
    for (const auto& f : *it) {
      SrlFrame frame;
      frame.predicate = parse_span(f.at("predicate"), n, "predicate");
      frame.sentence_index = f.value("sentence", story.sentence_of(frame.predicate.start));
      if (frame.sentence_index >= story.sentence_boundaries.size()) {
        throw ValidationError("frame sentence index out of range");
      }
      for (const auto& a : f.value("args", json::array())) {
        auto role = a.at("role").get<std::string>();
        if (!is_valid_role(role)) throw ValidationError("unknown role label: " + role);
        frame.arguments.push_back({std::move(role), parse_span(a.at("span"), n, "argument")});
      }
      out.frames.push_back(std::move(frame));
    }
  }
  std::stable_sort(out.frames.begin(), out.frames.end(), [](const SrlFrame& a, const SrlFrame& b) {
    return std::tie(a.sentence_index, a.predicate.start) < std::tie(b.sentence_index, b.predicate.start);
  });

  if (auto it = record.find("mentions"); it != record.end()) {
    for (const auto& m : *it) {
      EntityMention mention;
      mention.span = parse_span(m.at("span"), n, "mention");
      mention.label = parse_entity_label(m.value("label", std::string("PERSON")));
      mention.surface = slice(story.tokens, mention.span);
      out.mentions.push_back(std::move(mention));
    }
  }
  std::stable_sort(out.mentions.begin(), out.mentions.end(),
                   [](const EntityMention& a, const EntityMention& b) { return a.span < b.span; });

  if (auto it = record.find("clusters"); it != record.end()) {
    for (const auto& c : *it) {
      CorefCluster cluster;
      for (const auto& s : c) cluster.mentions.push_back(parse_span(s, n, "cluster mention"));
      std::sort(cluster.mentions.begin(), cluster.mentions.end());
      for (std::size_t i = 1; i < cluster.mentions.size(); ++i) {
        if (cluster.mentions[i - 1].overlaps(cluster.mentions[i])) {
          throw ValidationError("overlapping mentions within one coreference cluster");
        }
      }
      // Singletons are not clusters.
      if (cluster.mentions.size() >= 2) out.clusters.push_back(std::move(cluster));
    }
  }
  return out;
}

json export_annotations(const AnnotatedStory& annotated) {
  json frames = json::array();
  for (const auto& f : annotated.frames) {
    json args = json::array();
    for (const auto& a : f.arguments) args.push_back({{"role", a.role}, {"span", span_json(a.span)}});
    frames.push_back({{"predicate", span_json(f.predicate)}, {"sentence", f.sentence_index}, {"args", args}});
  }
  json mentions = json::array();
  for (const auto& m : annotated.mentions) {
    mentions.push_back({{"span", span_json(m.span)}, {"label", std::string(to_string(m.label))}});
  }
  json clusters = json::array();
  for (const auto& c : annotated.clusters) {
    json spans = json::array();
    for (const auto& s : c.mentions) spans.push_back(span_json(s));
    clusters.push_back(spans);
  }
  return {{"frames", frames}, {"mentions", mentions}, {"clusters", clusters}};
}

const VerbLexicon& default_verb_lexicon() {
  static const VerbLexicon lexicon = [] {
    // lemma followed by its inflected forms
    const std::vector<std::vector<std::string>> table = {
        {"ask", "asks", "asked", "asking"},         {"eat", "eats", "ate", "eating", "eaten"},
        {"become", "becomes", "became", "becoming"}, {"begin", "begins", "began", "beginning", "begun"},
        {"bring", "brings", "brought", "bringing"}, {"build", "builds", "built", "building"},
        {"call", "calls", "called", "calling"},     {"carry", "carries", "carried", "carrying"},
        {"climb", "climbs", "climbed", "climbing"}, {"come", "comes", "came", "coming"},
        {"cry", "cries", "cried", "crying"},        {"die", "dies", "died", "dying"},
        {"drink", "drinks", "drank", "drinking", "drunk"},
        {"fall", "falls", "fell", "falling", "fallen"},
        {"feel", "feels", "felt", "feeling"},       {"fight", "fights", "fought", "fighting"},
        {"find", "finds", "found", "finding"},      {"fly", "flies", "flew", "flying", "flown"},
        {"follow", "follows", "followed", "following"},
        {"get", "gets", "got", "getting", "gotten"}, {"give", "gives", "gave", "giving", "given"},
        {"go", "goes", "went", "going", "gone"},    {"grab", "grabs", "grabbed", "grabbing"},
        {"hear", "hears", "heard", "hearing"},      {"help", "helps", "helped", "helping"},
        {"hide", "hides", "hid", "hiding", "hidden"}, {"hold", "holds", "held", "holding"},
        {"jump", "jumps", "jumped", "jumping"},     {"keep", "keeps", "kept", "keeping"},
        {"kill", "kills", "killed", "killing"},     {"know", "knows", "knew", "knowing", "known"},
        {"laugh", "laughs", "laughed", "laughing"}, {"leave", "leaves", "left", "leaving"},
        {"like", "likes", "liked", "liking"},       {"look", "looks", "looked", "looking"},
        {"lose", "loses", "lost", "losing"},        {"love", "loves", "loved", "loving"},
        {"make", "makes", "made", "making"},        {"meet", "meets", "met", "meeting"},
        {"move", "moves", "moved", "moving"},       {"need", "needs", "needed", "needing"},
        {"open", "opens", "opened", "opening"},     {"pull", "pulls", "pulled", "pulling"},
        {"push", "pushes", "pushed", "pushing"},    {"reach", "reaches", "reached", "reaching"},
        {"read", "reads", "reading"},               {"run", "runs", "ran", "running"},
        {"say", "says", "said", "saying"},          {"see", "sees", "saw", "seeing", "seen"},
        {"send", "sends", "sent", "sending"},       {"shout", "shouts", "shouted", "shouting"},
        {"sit", "sits", "sat", "sitting"},          {"sleep", "sleeps", "slept", "sleeping"},
        {"smile", "smiles", "smiled", "smiling"},   {"speak", "speaks", "spoke", "speaking", "spoken"},
        {"stand", "stands", "stood", "standing"},   {"steal", "steals", "stole", "stealing", "stolen"},
        {"stop", "stops", "stopped", "stopping"},   {"take", "takes", "took", "taking", "taken"},
        {"tell", "tells", "told", "telling"},       {"think", "thinks", "thought", "thinking"},
        {"throw", "throws", "threw", "throwing", "thrown"},
        {"turn", "turns", "turned", "turning"},     {"walk", "walks", "walked", "walking"},
        {"want", "wants", "wanted", "wanting"},     {"watch", "watches", "watched", "watching"},
        {"win", "wins", "won", "winning"},          {"write", "writes", "wrote", "writing", "written"},
    };
    VerbLexicon lex;
    for (const auto& row : table) {
      for (const auto& form : row) lex.emplace(form, row[0]);
    }
    return lex;
  }();
  return lexicon;
}

VerbLexicon load_verb_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open verb lexicon " + path.string());
  VerbLexicon lex;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      lex.emplace(lower(line), lower(line));
    } else {
      lex.emplace(lower(line.substr(0, tab)), lower(line.substr(tab + 1)));
    }
  }
  return lex;
}

Gazetteer load_gazetteer(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open gazetteer " + path.string());
  Gazetteer gaz;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      gaz.emplace(lower(line), EntityLabel::person);
    } else {
      gaz.emplace(lower(line.substr(0, tab)), parse_entity_label(line.substr(tab + 1)));
    }
  }
  return gaz;
}

std::vector<SrlFrame> heuristic_srl(const Story& story, const VerbLexicon& lexicon) {
  const auto& toks = story.tokens;
  const auto is_verb = [&](std::size_t i) { return lexicon.contains(lower(toks[i])); };
  const auto breaks = [&](std::size_t i) {
    return is_punct_token(toks[i]) || chunk_breakers().contains(lower(toks[i])) || is_verb(i);
  };

  std::vector<SrlFrame> frames;
  for (std::size_t s = 0; s < story.sentence_boundaries.size(); ++s) {
    const std::size_t begin = story.sentence_begin(s);
    const std::size_t end = story.sentence_boundaries[s];
    for (std::size_t v = begin; v < end; ++v) {
      if (!is_verb(v)) continue;
      SrlFrame frame;
      frame.predicate = {v, v + 1};
      frame.sentence_index = s;
      std::size_t left = v;
      while (left > begin && !breaks(left - 1)) --left;
      if (left < v) frame.arguments.push_back({"ARG0", {left, v}});
      std::size_t right = v + 1;
      while (right < end && !breaks(right)) ++right;
      if (right > v + 1) frame.arguments.push_back({"ARG1", {v + 1, right}});
      frames.push_back(std::move(frame));
    }
  }
  return frames;
}

std::vector<EntityMention> heuristic_ner(const Story& story, const Gazetteer& gazetteer) {
  const auto& toks = story.tokens;
  const std::size_t n = toks.size();
  std::size_t max_gram = 0;
  for (const auto& [key, label] : gazetteer) {
    max_gram = std::max<std::size_t>(max_gram, tokenize(key, Scheme::word).size());
  }

  std::vector<EntityMention> mentions;
  std::vector<bool> taken(n, false);
  for (std::size_t i = 0; i < n;) {
    bool hit = false;
    for (std::size_t len = std::min(max_gram, n - i); len >= 1; --len) {
      std::string key = lower(toks[i]);
      for (std::size_t k = 1; k < len; ++k) key += " " + lower(toks[i + k]);
      if (auto it = gazetteer.find(key); it != gazetteer.end()) {
        Span span{i, i + len};
        mentions.push_back({span, it->second, slice(toks, span)});
        std::fill(taken.begin() + static_cast<std::ptrdiff_t>(i), taken.begin() + static_cast<std::ptrdiff_t>(i + len), true);
        i += len;
        hit = true;
        break;
      }
    }
    if (!hit) ++i;
  }

  const auto eligible = [&](std::size_t i) {
    return !taken[i] && capitalized(toks[i]) && !sentence_initial(story, i) && !is_special_token(toks[i]);
  };
  for (std::size_t i = 0; i < n;) {
    if (!eligible(i)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && eligible(j)) ++j;
    Span span{i, j};
    mentions.push_back({span, EntityLabel::person, slice(toks, span)});
    i = j;
  }
  std::sort(mentions.begin(), mentions.end(),
            [](const EntityMention& a, const EntityMention& b) { return a.span < b.span; });
  return mentions;
}

std::vector<CorefCluster> heuristic_coref(const std::vector<EntityMention>& mentions, const Story& story,
                                          const std::vector<std::string>& pronouns) {
  std::vector<EntityMention> sorted = mentions;
  std::sort(sorted.begin(), sorted.end(), [](const EntityMention& a, const EntityMention& b) { return a.span < b.span; });
  const std::size_t m = sorted.size();

  std::vector<std::size_t> parent(m);
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };

  std::vector<std::vector<std::string>> lowered(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (const auto& t : sorted[i].surface) lowered[i].push_back(lower(t));
  }
  const auto head_match = [&](const std::vector<std::string>& shorter, const std::vector<std::string>& longer) {
    return shorter.size() == 1 && longer.size() > 1 && (shorter[0] == longer.front() || shorter[0] == longer.back());
  };
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const auto& a = lowered[i];
      const auto& b = lowered[j];
      if (a == b || head_match(a, b) || head_match(b, a)) parent[find(j)] = find(i);
    }
  }

  // group root -> member spans
  std::map<std::size_t, std::vector<Span>> groups;
  for (std::size_t i = 0; i < m; ++i) groups[find(i)].push_back(sorted[i].span);

  const std::set<std::string, std::less<>> pronoun_set(pronouns.begin(), pronouns.end());
  for (std::size_t p = 0; p < story.tokens.size(); ++p) {
    if (!pronoun_set.contains(lower(story.tokens[p]))) continue;
    const bool inside = std::any_of(sorted.begin(), sorted.end(), [&](const EntityMention& e) { return e.span.contains(p); });
    if (inside) continue;
    std::vector<Span>* nearest = nullptr;
    std::size_t nearest_start = 0;
    for (auto& [root, spans] : groups) {
      for (const auto& s : spans) {
        if (s.start < p && (nearest == nullptr || s.start > nearest_start)) {
          nearest = &spans;
          nearest_start = s.start;
        }
      }
    }
    if (nearest != nullptr) nearest->push_back({p, p + 1});
  }

  std::vector<CorefCluster> clusters;
  for (auto& [root, spans] : groups) {
    if (spans.size() < 2) continue;
    std::sort(spans.begin(), spans.end());
    clusters.push_back({spans});
  }
  std::sort(clusters.begin(), clusters.end(),
            [](const CorefCluster& a, const CorefCluster& b) { return a.mentions.front() < b.mentions.front(); });
  return clusters;
}

AnnotatedStory annotate_fallback(const Story& story, const VerbLexicon& lexicon, const Gazetteer& gazetteer) {
  AnnotatedStory out{story, heuristic_srl(story, lexicon), heuristic_ner(story, gazetteer), {}};
  out.clusters = heuristic_coref(out.mentions, story);
  return out;
}

}  // namespace storyplan
