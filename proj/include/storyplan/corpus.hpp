#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace storyplan {

using Tokens = std::vector<std::string>;

/// Tokenization granularity. Entity fillers use bpe or character targets.
enum class Scheme { word, bpe, character };

std::string_view to_string(Scheme scheme);
Scheme parse_scheme(std::string_view name);

/// Dataset line-break marker; kept as one ordinary token.
inline constexpr std::string_view kNewlineMarker = "<newline>";
/// Stands in for a space in character-scheme output.
inline constexpr std::string_view kSpaceMarker = "▁";
/// Suffix carried by the last subunit of every word in the bpe scheme.
inline constexpr std::string_view kEndOfWord = "</w>";

/// Full-corpus vocabulary sizes (prompts, stories). Desk runs use far less.
inline constexpr std::size_t kFullPromptVocabSize = 19025;
inline constexpr std::size_t kFullStoryVocabSize = 104960;
inline constexpr std::size_t kDefaultMaxStoryWords = 1000;

struct Prompt {
  std::string text;
  Tokens tokens;
};

struct Story {
  std::string text;
  Tokens tokens;
  /// Exclusive end index of each sentence; the last one equals tokens.size().
  std::vector<std::size_t> sentence_boundaries;

  std::size_t sentence_of(std::size_t token_index) const;
  std::size_t sentence_begin(std::size_t sentence) const;
};

struct ParallelExample {
  Prompt prompt;
  Story story;
};

bool is_sentence_terminator(std::string_view token);
bool is_closing_quote(std::string_view token);
std::vector<std::size_t> find_sentence_boundaries(const Tokens& tokens);

Prompt make_prompt(std::string_view text);
Story make_story(std::string_view text);
Story make_story(Tokens tokens);

std::string join_tokens(const Tokens& tokens, std::string_view sep = " ");
bool is_valid_utf8(std::string_view text);
/// Splits into UTF-8 code points. Invalid bytes come out one per element.
std::vector<std::string> utf8_characters(std::string_view text);

/// Reads two line-aligned files (prompts, stories).
/// Throws ValidationError on a line-count mismatch, invalid UTF-8 or an empty line.
std::vector<ParallelExample> load_dataset(const std::filesystem::path& source_path,
                                          const std::filesystem::path& target_path);

Story truncate_story(const Story& story, std::size_t max_words);

/// word: whitespace split, then leading/trailing ASCII punctuation peeled off
/// one character per token. character: one token per code point, spaces
/// become kSpaceMarker. bpe: character segmentation per word with the
/// end-of-word suffix (no merges; see BpeModel for merged segmentation).
Tokens tokenize(std::string_view text, Scheme scheme);
std::string detokenize(const Tokens& tokens, Scheme scheme);

struct BpeMerge {
  std::string left;
  std::string right;

  friend bool operator==(const BpeMerge&, const BpeMerge&) = default;
};

/// Greedy most-frequent-pair merges over the word-scheme tokens of `corpus`.
/// Ties go to the lexicographically smallest (left, right) pair.
std::vector<BpeMerge> learn_bpe(const std::vector<std::string>& corpus, std::size_t num_merges);

class BpeModel {
 public:
  BpeModel() = default;
  explicit BpeModel(std::vector<BpeMerge> merges);

  const std::vector<BpeMerge>& merges() const { return merges_; }
  Tokens segment_word(std::string_view word) const;
  Tokens encode(std::string_view text) const;

  /// One merge per line, "left right".
  void save(const std::filesystem::path& path) const;
  static BpeModel load(const std::filesystem::path& path);

 private:
  std::vector<BpeMerge> merges_;
  std::map<std::pair<std::string, std::string>, std::size_t> ranks_;
};

class Tokenizer {
 public:
  explicit Tokenizer(Scheme scheme = Scheme::word, BpeModel bpe = {})
      : scheme_(scheme), bpe_(std::move(bpe)) {}

  Scheme scheme() const { return scheme_; }
  const BpeModel& bpe() const { return bpe_; }
  Tokens tokenize(std::string_view text) const;
  std::string detokenize(const Tokens& tokens) const { return storyplan::detokenize(tokens, scheme_); }

 private:
  Scheme scheme_;
  BpeModel bpe_;
};

namespace special {
inline constexpr std::string_view pad = "<pad>";
inline constexpr std::string_view unk = "<unk>";
inline constexpr std::string_view bos = "<s>";
inline constexpr std::string_view eos = "</s>";
inline constexpr std::string_view sentence = "<sent>";
inline constexpr std::string_view frame = "<frame>";
inline constexpr std::string_view separator = "<sep>";
inline constexpr std::string_view mention = "<mention>";
inline constexpr std::string_view null_slot = "<null>";
}  // namespace special

/// Special tokens other than the placeholder family, in vocabulary order.
const std::vector<std::string_view>& base_special_tokens();

std::string placeholder_token(std::size_t index);
std::optional<std::size_t> placeholder_index(std::string_view token);
bool is_special_token(std::string_view token);

class Vocabulary {
 public:
  Vocabulary() = default;
  /// Validates uniqueness and the special-token layout; pad must be index 0.
  Vocabulary(Scheme scheme, std::vector<std::string> entries);

  Scheme scheme() const { return scheme_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<std::string>& entries() const { return entries_; }

  std::optional<int> find(std::string_view token) const;
  /// Out-of-vocabulary tokens map to unk.
  int id(std::string_view token) const;
  const std::string& token(int id) const;

  std::vector<int> encode(const Tokens& tokens) const;
  Tokens decode(const std::vector<int>& ids) const;

  int pad_id() const { return 0; }
  int unk_id() const { return unk_; }
  int bos_id() const { return bos_; }
  int eos_id() const { return eos_; }
  int sentence_id() const { return sentence_; }
  int frame_id() const { return frame_; }
  int separator_id() const { return separator_; }
  int mention_id() const { return mention_; }
  int null_id() const { return null_; }

  std::size_t placeholder_count() const { return placeholder_count_; }
  int placeholder_begin() const { return placeholder_begin_; }
  bool is_placeholder(int id) const {
    return id >= placeholder_begin_ && id < placeholder_begin_ + static_cast<int>(placeholder_count_);
  }
  std::size_t special_count() const { return base_special_tokens().size() + placeholder_count_; }

  /// One token per line; index = line number.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path, Scheme scheme);

 private:
  Scheme scheme_ = Scheme::word;
  std::vector<std::string> entries_;
  std::map<std::string, int, std::less<>> index_;
  int unk_ = 1, bos_ = 2, eos_ = 3, sentence_ = 4, frame_ = 5, separator_ = 6, mention_ = 7, null_ = 8;
  int placeholder_begin_ = 9;
  std::size_t placeholder_count_ = 0;
};

/// Specials first (pad at 0, then placeholders ent0..), then the most frequent
/// corpus tokens up to max_size; frequency ties broken lexicographically.
/// Throws ValidationError if max_size does not exceed the special count.
Vocabulary build_vocab(const std::vector<Tokens>& corpus, Scheme scheme, std::size_t max_size,
                       std::size_t placeholders = 0);

}  // namespace storyplan
