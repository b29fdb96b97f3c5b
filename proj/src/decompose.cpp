#include "storyplan/decompose.hpp"

#include <algorithm>
#include <map>

#include "storyplan/errors.hpp"

namespace storyplan {

using nlohmann::json;

std::vector<std::size_t> plan_verb_positions(const Tokens& plan_tokens) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i + 1 < plan_tokens.size(); ++i) {
    if (plan_tokens[i] == special::frame) out.push_back(i + 1);
  }
  return out;
}

std::string_view to_string(AnonScheme scheme) { return scheme == AnonScheme::ner ? "ner" : "coref"; }

AnonScheme parse_anon_scheme(std::string_view name) {
  if (name == "ner") return AnonScheme::ner;
  if (name == "coref") return AnonScheme::coref;
  throw ValidationError("unknown entity scheme: " + std::string(name));
}

std::size_t PlaceholderTable::occurrence_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.slots.size();
  return n;
}

json table_to_json(const AnonymizedStory& anon) {
  json entries = json::array();
  for (const auto& e : anon.table.entries) {
    json slots = json::array();
    for (const auto& s : e.slots) {
      json slot = {{"position", s.position}, {"surface", s.surface}};
      if (s.source) slot["source"] = json::array({s.source->start, s.source->end});
      slots.push_back(std::move(slot));
    }
    entries.push_back(std::move(slots));
  }
  return {{"scheme", std::string(to_string(anon.scheme))}, {"overflow", anon.overflow}, {"entries", entries}};
}

AnonymizedStory anonymized_from_json(Tokens tokens, const json& record) {
  AnonymizedStory anon;
  anon.tokens = std::move(tokens);
  anon.scheme = parse_anon_scheme(record.at("scheme").get<std::string>());
  anon.overflow = record.value("overflow", false);
  for (const auto& e : record.at("entries")) {
    PlaceholderEntry entry;
    for (const auto& s : e) {
      MentionSlot slot;
      slot.position = s.at("position").get<std::size_t>();
      slot.surface = s.value("surface", std::string());
      if (slot.position >= anon.tokens.size()) throw ValidationError("placeholder slot outside anonymized story");
      if (auto it = s.find("source"); it != s.end()) slot.source = Span{(*it)[0].get<std::size_t>(), (*it)[1].get<std::size_t>()};
      entry.slots.push_back(std::move(slot));
    }
    anon.table.entries.push_back(std::move(entry));
  }
  return anon;
}

namespace {

void append_span(const Tokens& story, const Span& span, Tokens& out) {
  out.insert(out.end(), story.begin() + static_cast<std::ptrdiff_t>(span.start),
             story.begin() + static_cast<std::ptrdiff_t>(span.end));
}

// Per original token: the anonymized token that replaces it, if any.
struct AnonView {
  std::vector<int> slot_of;  // -1 when the token is not inside a mention
  std::vector<std::string> replacement;
};

AnonView make_view(std::size_t story_len, const AnonymizedStory& anon) {
  AnonView view{std::vector<int>(story_len, -1), {}};
  for (const auto& entry : anon.table.entries) {
    for (const auto& slot : entry.slots) {
      if (!slot.source) continue;
      const int id = static_cast<int>(view.replacement.size());
      view.replacement.push_back(anon.tokens.at(slot.position));
      for (std::size_t i = slot.source->start; i < slot.source->end && i < story_len; ++i) view.slot_of[i] = id;
    }
  }
  return view;
}

void append_mapped(const Tokens& story, const Span& span, const AnonView& view, Tokens& out) {
  int last = -1;
  for (std::size_t i = span.start; i < span.end; ++i) {
    const int s = view.slot_of[i];
    if (s < 0) {
      out.push_back(story[i]);
      last = -1;
    } else if (s != last) {
      out.push_back(view.replacement[static_cast<std::size_t>(s)]);
      last = s;
    }
  }
}

template <typename AppendFn>
SrlPlan serialize_with(const AnnotatedStory& annotated, AppendFn&& append) {
  SrlPlan plan;
  const auto& frames = annotated.frames;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& frame = frames[f];
    plan.tokens.emplace_back(special::frame);
    plan.verb_positions.push_back(plan.tokens.size());
    append(frame.predicate, plan.tokens);

    std::vector<const SrlArgument*> core;
    for (const auto& a : frame.arguments) {
      if (core_role_index(a.role) >= 0) core.push_back(&a);
    }
    std::stable_sort(core.begin(), core.end(), [](const SrlArgument* a, const SrlArgument* b) {
      return core_role_index(a->role) < core_role_index(b->role);
    });
    for (const auto* a : core) append(a->span, plan.tokens);

    const bool last_in_sentence = f + 1 == frames.size() || frames[f + 1].sentence_index != frame.sentence_index;
    if (last_in_sentence) plan.tokens.emplace_back(special::sentence);
  }
  return plan;
}

// Non-overlapping subset preferring longer, then earlier, spans. Returns indices.
std::vector<std::size_t> resolve_overlaps(const std::vector<Span>& spans) {
  std::vector<std::size_t> order(spans.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (spans[a].length() != spans[b].length()) return spans[a].length() > spans[b].length();
    return spans[a].start < spans[b].start;
  });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    const bool clash = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) { return spans[k].overlaps(spans[i]); });
    if (!clash) kept.push_back(i);
  }
  std::sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) { return spans[a].start < spans[b].start; });
  return kept;
}

// Rewrites `story`, replacing each span with a placeholder for its group.
// spans must be non-overlapping and sorted; groups are renumbered by first appearance.
AnonymizedStory substitute(const Story& story, const std::vector<Span>& spans, const std::vector<std::size_t>& group,
                           AnonScheme scheme, std::size_t cap) {
  AnonymizedStory anon;
  anon.scheme = scheme;
  std::map<std::size_t, std::size_t> renumber;
  std::size_t next = 0;
  for (std::size_t i = 0; i < story.tokens.size();) {
    if (next < spans.size() && spans[next].start == i) {
      const Span span = spans[next];
      auto [it, fresh] = renumber.try_emplace(group[next], renumber.size());
      const std::size_t id = it->second;
      if (fresh) anon.table.entries.emplace_back();
      Tokens surface(story.tokens.begin() + static_cast<std::ptrdiff_t>(span.start),
                     story.tokens.begin() + static_cast<std::ptrdiff_t>(span.end));
      anon.table.entries[id].slots.push_back({anon.tokens.size(), join_tokens(surface), span});
      if (id < cap) {
        anon.tokens.push_back(placeholder_token(id));
      } else {
        anon.tokens.emplace_back(special::unk);
        anon.overflow = true;
      }
      i = span.end;
      ++next;
    } else {
      anon.tokens.push_back(story.tokens[i]);
      ++i;
    }
  }
  return anon;
}

}  // namespace

SrlPlan serialize_srl_plan(const AnnotatedStory& annotated) {
  const auto& toks = annotated.story.tokens;
  return serialize_with(annotated, [&](const Span& span, Tokens& out) { append_span(toks, span, out); });
}

SrlPlan serialize_srl_plan(const AnnotatedStory& annotated, const AnonymizedStory& anon) {
  const auto& toks = annotated.story.tokens;
  const AnonView view = make_view(toks.size(), anon);
  return serialize_with(annotated, [&](const Span& span, Tokens& out) { append_mapped(toks, span, view, out); });
}

AnonymizedStory anonymize_ner(const Story& story, const std::vector<EntityMention>& mentions, std::size_t cap) {
  std::vector<Span> spans;
  for (const auto& m : mentions) spans.push_back(m.span);
  const auto kept = resolve_overlaps(spans);

  std::vector<Span> chosen;
  std::vector<std::size_t> group;
  std::map<std::string, std::size_t> by_surface;
  for (std::size_t k : kept) {
    const Span s = spans[k];
    Tokens surface(story.tokens.begin() + static_cast<std::ptrdiff_t>(s.start),
                   story.tokens.begin() + static_cast<std::ptrdiff_t>(s.end));
    auto [it, fresh] = by_surface.try_emplace(join_tokens(surface), by_surface.size());
    chosen.push_back(s);
    group.push_back(it->second);
  }
  return substitute(story, chosen, group, AnonScheme::ner, cap);
}

AnonymizedStory anonymize_coref(const Story& story, const std::vector<CorefCluster>& clusters,
                                const std::vector<EntityMention>& mentions, std::size_t cap) {
  std::vector<Span> spans;
  std::vector<std::size_t> owner;
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    for (const auto& s : clusters[c].mentions) {
      spans.push_back(s);
      owner.push_back(c);
    }
  }
  std::vector<Span> chosen;
  std::vector<std::size_t> group;
  for (std::size_t k : resolve_overlaps(spans)) {
    chosen.push_back(spans[k]);
    group.push_back(owner[k]);
  }

  // Named entities that no cluster covers become their own groups.
  std::vector<Span> loose;
  for (const auto& m : mentions) {
    const bool covered = std::any_of(chosen.begin(), chosen.end(), [&](const Span& s) { return s.overlaps(m.span); });
    if (!covered) loose.push_back(m.span);
  }
  std::size_t next_group = clusters.size();
  for (std::size_t k : resolve_overlaps(loose)) {
    chosen.push_back(loose[k]);
    group.push_back(next_group++);
  }

  std::vector<std::size_t> order(chosen.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return chosen[a].start < chosen[b].start; });
  std::vector<Span> sorted_spans;
  std::vector<std::size_t> sorted_group;
  for (std::size_t i : order) {
    sorted_spans.push_back(chosen[i]);
    sorted_group.push_back(group[i]);
  }
  return substitute(story, sorted_spans, sorted_group, AnonScheme::coref, cap);
}

Tokens deanonymize(const AnonymizedStory& anon, const Fills& fills) {
  // position -> fill text
  std::map<std::size_t, const std::string*> at;
  for (std::size_t id = 0; id < anon.table.entries.size(); ++id) {
    const auto& slots = anon.table.entries[id].slots;
    if (slots.empty()) continue;
    if (id >= fills.size() || fills[id].empty()) {
      throw ValidationError("missing fill for " + placeholder_token(id));
    }
    const auto& options = fills[id];
    if (options.size() != 1 && options.size() != slots.size()) {
      throw ValidationError("fill count for " + placeholder_token(id) + " does not match its " +
                            std::to_string(slots.size()) + " occurrences");
    }
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const std::string& text = options.size() == 1 ? options[0] : options[k];
      if (text.empty()) throw ValidationError("empty fill for " + placeholder_token(id));
      at[slots[k].position] = &text;
    }
  }
  Tokens out;
  for (std::size_t i = 0; i < anon.tokens.size(); ++i) {
    auto it = at.find(i);
    if (it == at.end()) {
      if (placeholder_index(anon.tokens[i])) {
        throw ValidationError("placeholder " + anon.tokens[i] + " has no table slot");
      }
      out.push_back(anon.tokens[i]);
      continue;
    }
    auto words = tokenize(*it->second, Scheme::word);
    out.insert(out.end(), words.begin(), words.end());
  }
  return out;
}

Fills gold_fills(const AnonymizedStory& anon) {
  Fills fills;
  for (const auto& e : anon.table.entries) {
    std::vector<std::string> strings;
    if (anon.scheme == AnonScheme::ner && !e.slots.empty()) {
      strings.push_back(e.slots.front().surface);
    } else {
      for (const auto& s : e.slots) strings.push_back(s.surface);
    }
    fills.push_back(std::move(strings));
  }
  return fills;
}

AnonymizedStory anonymized_from_tokens(Tokens tokens, AnonScheme scheme) {
  AnonymizedStory anon;
  anon.scheme = scheme;
  anon.tokens = std::move(tokens);
  for (std::size_t i = 0; i < anon.tokens.size(); ++i) {
    if (auto id = placeholder_index(anon.tokens[i])) {
      if (anon.table.entries.size() <= *id) anon.table.entries.resize(*id + 1);
      anon.table.entries[*id].slots.push_back({i, {}, std::nullopt});
    }
  }
  return anon;
}

std::string_view to_string(PosteriorScheme scheme) {
  switch (scheme) {
    case PosteriorScheme::srl_plan: return "srl-plan";
    case PosteriorScheme::ner_anon: return "ner-anon";
    case PosteriorScheme::coref_anon: return "coref-anon";
  }
  return "srl-plan";
}

PosteriorScheme parse_posterior_scheme(std::string_view name) {
  if (name == "srl-plan") return PosteriorScheme::srl_plan;
  if (name == "ner-anon") return PosteriorScheme::ner_anon;
  if (name == "coref-anon") return PosteriorScheme::coref_anon;
  throw ValidationError("unknown decomposition scheme: " + std::string(name));
}

Posterior build_posterior(const AnnotatedStory& annotated, PosteriorScheme scheme, std::size_t cap) {
  Posterior post;
  post.target = annotated.story.tokens;
  switch (scheme) {
    case PosteriorScheme::srl_plan: {
      auto plan = serialize_srl_plan(annotated);
      post.latent = std::move(plan.tokens);
      post.verb_positions = std::move(plan.verb_positions);
      break;
    }
    case PosteriorScheme::ner_anon:
      post.anonymized = anonymize_ner(annotated.story, annotated.mentions, cap);
      post.latent = post.anonymized->tokens;
      break;
    case PosteriorScheme::coref_anon:
      post.anonymized = anonymize_coref(annotated.story, annotated.clusters, annotated.mentions, cap);
      post.latent = post.anonymized->tokens;
      break;
  }
  return post;
}

PipelineDecomposition decompose_for_pipeline(const AnnotatedStory& annotated, AnonScheme scheme, std::size_t cap) {
  PipelineDecomposition out;
  out.anonymized = scheme == AnonScheme::ner
                       ? anonymize_ner(annotated.story, annotated.mentions, cap)
                       : anonymize_coref(annotated.story, annotated.clusters, annotated.mentions, cap);
  out.plan = serialize_srl_plan(annotated, out.anonymized);
  return out;
}

}  // namespace storyplan
