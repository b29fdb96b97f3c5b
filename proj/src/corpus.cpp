#include "storyplan/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "storyplan/errors.hpp"

namespace storyplan {

namespace {

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u) != 0;
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

std::vector<std::string_view> split_whitespace(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) out.push_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

void tokenize_words(std::string_view text, Tokens& out) {
  for (std::string_view chunk : split_whitespace(text)) {
    if (chunk == kNewlineMarker) {
      out.emplace_back(chunk);
      continue;
    }
    std::size_t begin = 0;
    while (begin < chunk.size() && is_ascii_punct(chunk[begin])) {
      out.emplace_back(1, chunk[begin]);
      ++begin;
    }
    std::size_t end = chunk.size();
    while (end > begin && is_ascii_punct(chunk[end - 1])) --end;
    if (end > begin) out.emplace_back(chunk.substr(begin, end - begin));
    for (std::size_t k = end; k < chunk.size(); ++k) out.emplace_back(1, chunk[k]);
  }
}

std::size_t utf8_length(unsigned char lead) {
  if (lead < 0x80) return 1;
  if ((lead >> 5) == 0x6) return 2;
  if ((lead >> 4) == 0xE) return 3;
  if ((lead >> 3) == 0x1E) return 4;
  return 0;
}

}  // namespace

std::string_view to_string(Scheme scheme) {
  switch (scheme) {
    case Scheme::word: return "word";
    case Scheme::bpe: return "bpe";
    case Scheme::character: return "character";
  }
  return "word";
}

Scheme parse_scheme(std::string_view name) {
  if (name == "word") return Scheme::word;
  if (name == "bpe") return Scheme::bpe;
  if (name == "character" || name == "char") return Scheme::character;
  throw ValidationError("unknown tokenization scheme: " + std::string(name));
}

std::size_t Story::sentence_of(std::size_t token_index) const {
  auto it = std::upper_bound(sentence_boundaries.begin(), sentence_boundaries.end(), token_index);
  return static_cast<std::size_t>(it - sentence_boundaries.begin());
}

std::size_t Story::sentence_begin(std::size_t sentence) const {
  return sentence == 0 ? 0 : sentence_boundaries.at(sentence - 1);
}

bool is_sentence_terminator(std::string_view token) { return token == "." || token == "!" || token == "?"; }

bool is_closing_quote(std::string_view token) {
  return token == "\"" || token == "'" || token == "”" || token == "’" || token == "''";
}

std::vector<std::size_t> find_sentence_boundaries(const Tokens& tokens) {
  std::vector<std::size_t> bounds;
  std::size_t i = 0;
  while (i < tokens.size()) {
    if (is_sentence_terminator(tokens[i])) {
      std::size_t end = i + 1;
      while (end < tokens.size() && (is_sentence_terminator(tokens[end]) || is_closing_quote(tokens[end]))) ++end;
      bounds.push_back(end);
      i = end;
    } else {
      ++i;
    }
  }
  if (!tokens.empty() && (bounds.empty() || bounds.back() != tokens.size())) bounds.push_back(tokens.size());
  return bounds;
}

std::string join_tokens(const Tokens& tokens, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

Prompt make_prompt(std::string_view text) {
  Prompt p;
  p.tokens = tokenize(text, Scheme::word);
  p.text = join_tokens(p.tokens);
  return p;
}

Story make_story(Tokens tokens) {
  Story s;
  s.tokens = std::move(tokens);
  s.text = join_tokens(s.tokens);
  s.sentence_boundaries = find_sentence_boundaries(s.tokens);
  return s;
}

Story make_story(std::string_view text) { return make_story(tokenize(text, Scheme::word)); }

bool is_valid_utf8(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    const std::size_t len = utf8_length(lead);
    if (len == 0 || i + len > text.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((static_cast<unsigned char>(text[i + k]) >> 6) != 0x2) return false;
    }
    i += len;
  }
  return true;
}

std::vector<std::string> utf8_characters(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t len = utf8_length(static_cast<unsigned char>(text[i]));
    if (len == 0 || i + len > text.size()) len = 1;
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace

std::vector<ParallelExample> load_dataset(const std::filesystem::path& source_path,
                                          const std::filesystem::path& target_path) {
  const auto sources = read_lines(source_path);
  const auto targets = read_lines(target_path);
  if (sources.size() != targets.size()) {
    throw ValidationError("dataset misaligned: " + std::to_string(sources.size()) + " prompts vs " +
                          std::to_string(targets.size()) + " stories");
  }
  std::vector<ParallelExample> out;
  out.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    if (!is_valid_utf8(sources[i]) || !is_valid_utf8(targets[i])) {
      throw ValidationError("invalid UTF-8 on line " + std::to_string(i + 1));
    }
    ParallelExample ex{make_prompt(sources[i]), make_story(targets[i])};
    if (ex.prompt.tokens.empty() || ex.story.tokens.empty()) {
      throw ValidationError("empty prompt or story on line " + std::to_string(i + 1));
    }
    out.push_back(std::move(ex));
  }
  return out;
}

Story truncate_story(const Story& story, std::size_t max_words) {
  if (story.tokens.size() <= max_words) return story;
  Tokens kept(story.tokens.begin(), story.tokens.begin() + static_cast<std::ptrdiff_t>(max_words));
  return make_story(std::move(kept));
}

Tokens tokenize(std::string_view text, Scheme scheme) {
  Tokens out;
  switch (scheme) {
    case Scheme::word:
      tokenize_words(text, out);
      break;
    case Scheme::character:
      for (auto& ch : utf8_characters(text)) {
        if (ch == " ") {
          out.emplace_back(kSpaceMarker);
        } else {
          out.push_back(std::move(ch));
        }
      }
      break;
    case Scheme::bpe:
      return BpeModel{}.encode(text);
  }
  return out;
}

std::string detokenize(const Tokens& tokens, Scheme scheme) {
  std::string out;
  switch (scheme) {
    case Scheme::word:
      return join_tokens(tokens);
    case Scheme::character:
      for (const auto& t : tokens) out += (t == kSpaceMarker) ? std::string(" ") : t;
      return out;
    case Scheme::bpe:
      for (const auto& t : tokens) {
        if (t.size() >= kEndOfWord.size() && t.compare(t.size() - kEndOfWord.size(), kEndOfWord.size(), kEndOfWord) == 0) {
          out.append(t, 0, t.size() - kEndOfWord.size());
          out += ' ';
        } else {
          out += t;
        }
      }
      if (!out.empty() && out.back() == ' ') out.pop_back();
      return out;
  }
  return out;
}

// ---------------------------------------------------------------------------
// BPE

namespace {

using Segmented = std::vector<std::string>;

Segmented initial_segmentation(std::string_view word) {
  Segmented units = utf8_characters(word);
  if (!units.empty()) units.back() += kEndOfWord;
  return units;
}

void apply_merge(Segmented& units, const std::string& left, const std::string& right) {
  Segmented merged;
  merged.reserve(units.size());
  std::size_t i = 0;
  while (i < units.size()) {
    if (i + 1 < units.size() && units[i] == left && units[i + 1] == right) {
      merged.push_back(left + right);
      i += 2;
    } else {
      merged.push_back(units[i]);
      ++i;
    }
  }
  units = std::move(merged);
}

}  // namespace

std::vector<BpeMerge> learn_bpe(const std::vector<std::string>& corpus, std::size_t num_merges) {
  std::map<std::string, std::size_t> word_counts;
  for (const auto& line : corpus) {
    for (const auto& w : tokenize(line, Scheme::word)) ++word_counts[w];
  }
  std::vector<std::pair<Segmented, std::size_t>> words;
  words.reserve(word_counts.size());
  for (const auto& [w, c] : word_counts) words.emplace_back(initial_segmentation(w), c);

  std::vector<BpeMerge> merges;
  for (std::size_t step = 0; step < num_merges; ++step) {
    std::map<std::pair<std::string, std::string>, std::size_t> pairs;
    for (const auto& [units, count] : words) {
      for (std::size_t i = 0; i + 1 < units.size(); ++i) pairs[{units[i], units[i + 1]}] += count;
    }
    if (pairs.empty()) break;
    // std::map iterates in lexicographic order, so the first maximum wins ties.
    auto best = pairs.begin();
    for (auto it = pairs.begin(); it != pairs.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const auto [left, right] = best->first;
    for (auto& [units, count] : words) apply_merge(units, left, right);
    merges.push_back({left, right});
  }
  return merges;
}

BpeModel::BpeModel(std::vector<BpeMerge> merges) : merges_(std::move(merges)) {
  for (std::size_t r = 0; r < merges_.size(); ++r) ranks_.try_emplace({merges_[r].left, merges_[r].right}, r);
}

Tokens BpeModel::segment_word(std::string_view word) const {
  Segmented units = initial_segmentation(word);
  while (units.size() > 1) {
    std::size_t best_rank = merges_.size();
    for (std::size_t i = 0; i + 1 < units.size(); ++i) {
      auto it = ranks_.find({units[i], units[i + 1]});
      if (it != ranks_.end() && it->second < best_rank) best_rank = it->second;
    }
    if (best_rank == merges_.size()) break;
    apply_merge(units, merges_[best_rank].left, merges_[best_rank].right);
  }
  return units;
}

Tokens BpeModel::encode(std::string_view text) const {
  Tokens out;
  for (const auto& w : tokenize(text, Scheme::word)) {
    auto units = segment_word(w);
    out.insert(out.end(), units.begin(), units.end());
  }
  return out;
}

void BpeModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  for (const auto& m : merges_) out << m.left << ' ' << m.right << '\n';
}

BpeModel BpeModel::load(const std::filesystem::path& path) {
  std::vector<BpeMerge> merges;
  for (const auto& line : read_lines(path)) {
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    if (sp == std::string::npos || sp == 0 || sp + 1 == line.size()) {
      throw ValidationError("malformed merge line: " + line);
    }
    merges.push_back({line.substr(0, sp), line.substr(sp + 1)});
  }
  return BpeModel(std::move(merges));
}

Tokens Tokenizer::tokenize(std::string_view text) const {
  if (scheme_ == Scheme::bpe) return bpe_.encode(text);
  return storyplan::tokenize(text, scheme_);
}

// ---------------------------------------------------------------------------
// Vocabulary

const std::vector<std::string_view>& base_special_tokens() {
  static const std::vector<std::string_view> tokens = {special::pad,      special::unk,       special::bos,
                                                       special::eos,      special::sentence,  special::frame,
                                                       special::separator, special::mention, special::null_slot};
  return tokens;
}

std::string placeholder_token(std::size_t index) { return "ent" + std::to_string(index); }

std::optional<std::size_t> placeholder_index(std::string_view token) {
  if (token.size() < 4 || token.substr(0, 3) != "ent") return std::nullopt;
  const auto digits = token.substr(3);
  if (digits.size() > 1 && digits[0] == '0') return std::nullopt;
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) return std::nullopt;
  return value;
}

bool is_special_token(std::string_view token) {
  const auto& base = base_special_tokens();
  return std::find(base.begin(), base.end(), token) != base.end();
}

Vocabulary::Vocabulary(Scheme scheme, std::vector<std::string> entries)
    : scheme_(scheme), entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!index_.emplace(entries_[i], static_cast<int>(i)).second) {
      throw ValidationError("duplicate vocabulary entry: " + entries_[i]);
    }
  }
  const auto& base = base_special_tokens();
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (i >= entries_.size() || entries_[i] != base[i]) {
      throw ValidationError("vocabulary must start with the special tokens; missing " + std::string(base[i]));
    }
  }
  placeholder_begin_ = static_cast<int>(base.size());
  while (placeholder_begin_ + placeholder_count_ < entries_.size() &&
         entries_[placeholder_begin_ + placeholder_count_] == placeholder_token(placeholder_count_)) {
    ++placeholder_count_;
  }
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::id(std::string_view token) const { return find(token).value_or(unk_); }

const std::string& Vocabulary::token(int id) const { return entries_.at(static_cast<std::size_t>(id)); }

std::vector<int> Vocabulary::encode(const Tokens& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

Tokens Vocabulary::decode(const std::vector<int>& ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(token(i));
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  for (const auto& e : entries_) out << e << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path, Scheme scheme) {
  return Vocabulary(scheme, read_lines(path));
}

Vocabulary build_vocab(const std::vector<Tokens>& corpus, Scheme scheme, std::size_t max_size,
                       std::size_t placeholders) {
  std::vector<std::string> entries;
  for (auto t : base_special_tokens()) entries.emplace_back(t);
  for (std::size_t k = 0; k < placeholders; ++k) entries.push_back(placeholder_token(k));
  if (max_size <= entries.size()) {
    throw ValidationError("vocabulary size " + std::to_string(max_size) + " must exceed the " +
                          std::to_string(entries.size()) + " special tokens");
  }
  const std::set<std::string, std::less<>> reserved(entries.begin(), entries.end());

  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& seq : corpus) {
    for (const auto& t : seq) {
      if (!reserved.contains(t)) ++counts[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  const std::size_t room = max_size - entries.size();
  for (std::size_t i = 0; i < ranked.size() && i < room; ++i) entries.push_back(ranked[i].first);
  return Vocabulary(scheme, std::move(entries));
}

}  // namespace storyplan
