#pragma once

// Synthetic query-generation corpus: user histories, word-level relevance
// annotation, toy tokenizers and the word -> token reward mapping.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tppo {

class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a response has no content words, so no sentence-level
/// judgment can be formed. Callers skip such episodes.
class AnnotationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// 0 = non-reward / masked (separators, padding), 1 = irrelevant, 2 = relevant.
enum class RewardCategory : std::uint8_t { masked = 0, irrelevant = 1, relevant = 2 };

RewardCategory category_from_int(int v);
inline int to_int(RewardCategory c) { return static_cast<int>(c); }

enum class HistoryKind : std::uint8_t { search, click, purchase, visit };

std::string_view to_string(HistoryKind k);
HistoryKind history_kind_from_string(std::string_view s);

struct HistoryEvent {
  HistoryKind kind = HistoryKind::search;
  std::string text;
  bool operator==(const HistoryEvent&) const = default;
};

struct WordAnnotation {
  std::string word;
  RewardCategory category = RewardCategory::masked;
  bool operator==(const WordAnnotation&) const = default;
};

struct EpisodeRecord {
  std::string id;
  std::vector<HistoryEvent> history;
  std::vector<std::string> prompt_words;
  std::vector<WordAnnotation> response_words;
  RewardCategory sentence_reward = RewardCategory::irrelevant;
  std::vector<std::string> target_queries;
  bool operator==(const EpisodeRecord&) const = default;
};

/// Fixed-length character chunker. Two instances with different chunk
/// lengths split most words differently.
struct Tokenizer {
  std::string name;
  int chunk_len = 2;

  static Tokenizer chunked(int chunk_len);
};

std::vector<std::string> tokenize_word(std::string_view word, const Tokenizer& tok);
std::string detokenize(const std::vector<std::string>& tokens);

struct TokenReward {
  std::string token;
  RewardCategory category = RewardCategory::masked;
  bool operator==(const TokenReward&) const = default;
};

/// Every token emitted for a word inherits that word's category.
std::vector<TokenReward> map_word_rewards(const std::vector<WordAnnotation>& words,
                                          const Tokenizer& tok);

struct AnnotatorConfig {
  double tau = 0.5;
  std::set<std::string> stopwords = {",", ".", "and", "the"};
};

/// Topic key of a content word (its leading character).
char word_topic(std::string_view word);
bool is_stopword(std::string_view word, const AnnotatorConfig& rules);
std::set<char> history_topics(const std::vector<HistoryEvent>& history,
                              const AnnotatorConfig& rules);

struct Annotation {
  std::vector<WordAnnotation> words;
  RewardCategory sentence_reward = RewardCategory::irrelevant;
};

/// Rule oracle: a content word is relevant iff its topic occurs in the
/// history; stopwords/separators are masked. The sentence is relevant iff
/// the relevant fraction among content words is >= tau.
Annotation annotate_episode(const std::vector<HistoryEvent>& history,
                            const std::vector<std::string>& response_words,
                            const AnnotatorConfig& rules);

/// Fraction of relevant words among content words; throws AnnotationError
/// if there are none.
double relevant_fraction(const std::vector<WordAnnotation>& words);

struct CorpusConfig {
  int n_topics = 6;
  int words_per_topic = 8;
  int min_history = 1;
  int max_history = 8;
  int max_user_topics = 2;
  int max_prompt_words = 3;
  int target_query_num = 3;
  int max_query_words = 3;
  /// Probability that a target query is drawn from an unrelated topic.
  double query_noise = 0.4;
  /// Per-word probability that a response word is off-topic.
  double response_noise = 0.4;
  double separator_prob = 0.3;
  int max_response_words = 4;
  AnnotatorConfig annotator;
};

/// All words the generator can produce: topic words followed by stopwords.
std::vector<std::string> word_inventory(const CorpusConfig& cfg);

std::vector<EpisodeRecord> generate_corpus(std::uint64_t seed, std::size_t n,
                                           const CorpusConfig& cfg);

/// Re-runs the annotator over stored response words. Episodes the annotator
/// rejects are dropped and counted in `skipped`.
std::vector<EpisodeRecord> reannotate(const std::vector<EpisodeRecord>& records,
                                      const AnnotatorConfig& rules, std::size_t* skipped);

// JSONL persistence, one record per line.
void store_dataset(const std::filesystem::path& path, const std::vector<EpisodeRecord>& records);
std::vector<EpisodeRecord> load_dataset(const std::filesystem::path& path);
std::string record_to_json_line(const EpisodeRecord& rec);
EpisodeRecord record_from_json_line(std::string_view line, std::size_t line_no);

inline constexpr int kPadId = 0;
inline constexpr int kEosId = 1;
inline constexpr int kSepId = 2;
/// Ids below this are reserved specials; they never carry a word category.
inline constexpr int kFirstWordId = 3;

class Vocabulary {
 public:
  /// Reserves pad/eos/sep, then assigns ids to every token the tokenizer
  /// emits over `words`, in first-seen order. Unused ids up to `size` stay
  /// unassigned.
  Vocabulary(const std::vector<std::string>& words, const Tokenizer& tok, int size);

  int size() const { return size_; }
  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return ids_.contains(token); }
  const std::string& token(int id) const;
  const Tokenizer& tokenizer() const { return tok_; }
  std::vector<int> encode_words(const std::vector<std::string>& words) const;

 private:
  Tokenizer tok_;
  int size_;
  std::map<std::string, int> ids_;
  std::vector<std::string> tokens_;
};

/// Row-major [episode x position] grids.
struct TokenBatch {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<int> token_ids;
  std::vector<std::uint8_t> attention_mask;
  std::vector<std::uint8_t> activation_mask;
  std::vector<RewardCategory> token_categories;
  std::vector<RewardCategory> sentence_rewards;

  std::size_t index(std::size_t r, std::size_t c) const { return r * cols + c; }
  int token(std::size_t r, std::size_t c) const { return token_ids[index(r, c)]; }
  bool attended(std::size_t r, std::size_t c) const { return attention_mask[index(r, c)] != 0; }
  bool active(std::size_t r, std::size_t c) const { return activation_mask[index(r, c)] != 0; }
  RewardCategory category(std::size_t r, std::size_t c) const {
    return token_categories[index(r, c)];
  }
};

/// One row: prompt tokens, sep, response tokens, eos. Response tokens and
/// eos are active; eos carries category 0.
struct TokenRow {
  std::vector<int> ids;
  std::vector<RewardCategory> categories;
  std::size_t response_begin = 0;
  RewardCategory sentence_reward = RewardCategory::irrelevant;
};

TokenRow encode_record(const EpisodeRecord& rec, const Vocabulary& vocab);
TokenBatch make_token_batch(const std::vector<TokenRow>& rows);
TokenBatch build_token_batch(const std::vector<EpisodeRecord>& records, const Vocabulary& vocab);
/// Throws InvalidInput if a mask invariant is broken.
void validate_token_batch(const TokenBatch& batch);

/// Context-free corpus: response token ids drawn from [3, vocab), category
/// 2 for even ids and 1 for odd ids, with a sprinkling of masked separators.
TokenBatch make_parity_batch(std::uint64_t seed, std::size_t episodes, int vocab_size,
                             int max_response_tokens = 8);

}  // namespace tppo
