#include "tppo/datagen.hpp"

#include <algorithm>
#include <cctype>

#include "tppo/random.hpp"

namespace tppo {

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

RewardCategory category_from_int(int v) {
  if (v < 0 || v > 2) throw InvalidInput("reward category out of range: " + std::to_string(v));
  return static_cast<RewardCategory>(v);
}

std::string_view to_string(HistoryKind k) {
  switch (k) {
    case HistoryKind::search: return "search";
    case HistoryKind::click: return "click";
    case HistoryKind::purchase: return "purchase";
    case HistoryKind::visit: return "visit";
  }
  return "search";
}

HistoryKind history_kind_from_string(std::string_view s) {
  if (s == "search") return HistoryKind::search;
  if (s == "click") return HistoryKind::click;
  if (s == "purchase") return HistoryKind::purchase;
  if (s == "visit") return HistoryKind::visit;
  throw InvalidInput("unknown history kind '" + std::string(s) + "'");
}

Tokenizer Tokenizer::chunked(int chunk_len) {
  if (chunk_len < 1) throw InvalidInput("chunk_len must be positive");
  return Tokenizer{"chunk" + std::to_string(chunk_len), chunk_len};
}

std::vector<std::string> tokenize_word(std::string_view word, const Tokenizer& tok) {
  if (word.empty()) throw InvalidInput("cannot tokenize an empty word");
  if (tok.chunk_len < 1) throw InvalidInput("chunk_len must be positive");
  std::vector<std::string> out;
  const auto step = static_cast<std::size_t>(tok.chunk_len);
  for (std::size_t i = 0; i < word.size(); i += step) out.emplace_back(word.substr(i, step));
  return out;
}

std::string detokenize(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) out += t;
  return out;
}

std::vector<TokenReward> map_word_rewards(const std::vector<WordAnnotation>& words,
                                          const Tokenizer& tok) {
  std::vector<TokenReward> out;
  for (const auto& w : words) {
    for (auto& t : tokenize_word(w.word, tok)) out.push_back({std::move(t), w.category});
  }
  return out;
}

char word_topic(std::string_view word) { return word.empty() ? '\0' : word.front(); }

bool is_stopword(std::string_view word, const AnnotatorConfig& rules) {
  return rules.stopwords.contains(std::string(word));
}

namespace {

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

std::set<char> history_topics(const std::vector<HistoryEvent>& history,
                              const AnnotatorConfig& rules) {
  std::set<char> topics;
  for (const auto& ev : history)
    for (const auto& w : split_words(ev.text))
      if (!is_stopword(w, rules)) topics.insert(word_topic(w));
  return topics;
}

double relevant_fraction(const std::vector<WordAnnotation>& words) {
  std::size_t content = 0, relevant = 0;
  for (const auto& w : words) {
    if (w.category == RewardCategory::masked) continue;
    ++content;
    if (w.category == RewardCategory::relevant) ++relevant;
  }
  if (content == 0) throw AnnotationError("response has no content words");
  return static_cast<double>(relevant) / static_cast<double>(content);
}

Annotation annotate_episode(const std::vector<HistoryEvent>& history,
                            const std::vector<std::string>& response_words,
                            const AnnotatorConfig& rules) {
  if (history.empty()) throw InvalidInput("annotation needs a non-empty history");
  const auto topics = history_topics(history, rules);
  Annotation out;
  out.words.reserve(response_words.size());
  for (const auto& w : response_words) {
    if (w.empty()) throw InvalidInput("empty response word");
    RewardCategory c = RewardCategory::masked;
    if (!is_stopword(w, rules))
      c = topics.contains(word_topic(w)) ? RewardCategory::relevant : RewardCategory::irrelevant;
    out.words.push_back({w, c});
  }
  out.sentence_reward = relevant_fraction(out.words) >= rules.tau ? RewardCategory::relevant
                                                                  : RewardCategory::irrelevant;
  return out;
}

std::vector<std::string> word_inventory(const CorpusConfig& cfg) {
  if (cfg.n_topics < 1 || cfg.n_topics > 26 || cfg.words_per_topic < 1 ||
      cfg.words_per_topic > 9)
    throw InvalidInput("corpus topic layout out of range");
  std::vector<std::string> words;
  for (int t = 0; t < cfg.n_topics; ++t)
    for (int j = 0; j < cfg.words_per_topic; ++j)
      words.push_back(std::string{static_cast<char>('A' + t), static_cast<char>('1' + j)});
  for (const auto& s : cfg.annotator.stopwords) words.push_back(s);
  return words;
}

namespace {

std::string topic_word(Rng& rng, char topic, const CorpusConfig& cfg) {
  return std::string{topic, static_cast<char>('1' + rng.uniform_int(0, cfg.words_per_topic - 1))};
}

char pick(Rng& rng, const std::vector<char>& from) {
  return from[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(from.size()) - 1))];
}

std::vector<std::string> prompt_from_history(const std::vector<HistoryEvent>& history,
                                             const CorpusConfig& cfg) {
  std::map<char, int> topic_freq;
  std::map<std::string, int> word_freq;
  for (const auto& ev : history)
    for (const auto& w : split_words(ev.text)) {
      if (is_stopword(w, cfg.annotator)) continue;
      ++topic_freq[word_topic(w)];
      ++word_freq[w];
    }
  std::vector<std::pair<char, int>> order(topic_freq.begin(), topic_freq.end());
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> prompt;
  for (const auto& [topic, _] : order) {
    if (static_cast<int>(prompt.size()) >= cfg.max_prompt_words) break;
    std::string best;
    int best_n = 0;
    for (const auto& [w, n] : word_freq)
      if (word_topic(w) == topic && n > best_n) best = w, best_n = n;
    prompt.push_back(best);
  }
  return prompt;
}

}  // namespace

std::vector<EpisodeRecord> generate_corpus(std::uint64_t seed, std::size_t n,
                                           const CorpusConfig& cfg) {
  if (n == 0) throw InvalidInput("corpus size must be >= 1");
  if (cfg.max_user_topics < 1 || cfg.max_user_topics >= cfg.n_topics)
    throw InvalidInput("max_user_topics must be in [1, n_topics)");
  if (cfg.min_history < 1 || cfg.max_history < cfg.min_history)
    throw InvalidInput("history length range invalid");
  (void)word_inventory(cfg);

  const std::vector<std::string> separators = {",", "and", "the"};
  std::vector<EpisodeRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = Rng::stream(seed, i);
    EpisodeRecord rec;
    rec.id = "ep" + std::to_string(i);

    std::vector<char> all_topics;
    for (int t = 0; t < cfg.n_topics; ++t) all_topics.push_back(static_cast<char>('A' + t));
    rng.shuffle(all_topics);
    const int k = rng.uniform_int(1, cfg.max_user_topics);
    std::vector<char> user(all_topics.begin(), all_topics.begin() + k);

    const int n_events = rng.uniform_int(cfg.min_history, cfg.max_history);
    for (int e = 0; e < n_events; ++e) {
      HistoryEvent ev;
      ev.kind = static_cast<HistoryKind>(rng.uniform_int(0, 3));
      const char topic = pick(rng, user);
      const int n_words = rng.uniform_int(1, 3);
      for (int w = 0; w < n_words; ++w) {
        if (w > 0) ev.text += ' ';
        ev.text += topic_word(rng, topic, cfg);
      }
      rec.history.push_back(std::move(ev));
    }

    const auto seen = history_topics(rec.history, cfg.annotator);
    std::vector<char> on_topic(seen.begin(), seen.end());
    std::vector<char> off_topic;
    for (char t : all_topics)
      if (!seen.contains(t)) off_topic.push_back(t);
    std::sort(off_topic.begin(), off_topic.end());

    rec.prompt_words = prompt_from_history(rec.history, cfg);

    for (int q = 0; q < cfg.target_query_num; ++q) {
      const char topic =
          rng.bernoulli(cfg.query_noise) ? pick(rng, off_topic) : pick(rng, on_topic);
      const int n_words = rng.uniform_int(1, cfg.max_query_words);
      std::string query;
      for (int w = 0; w < n_words; ++w) {
        if (w > 0) query += rng.bernoulli(cfg.separator_prob) ? " and " : " ";
        query += topic_word(rng, topic, cfg);
      }
      rec.target_queries.push_back(std::move(query));
    }

    std::vector<std::string> response;
    const int n_content = rng.uniform_int(1, cfg.max_response_words);
    for (int w = 0; w < n_content; ++w) {
      if (w > 0 && rng.bernoulli(cfg.separator_prob))
        response.push_back(separators[static_cast<std::size_t>(rng.uniform_int(0, 2))]);
      const char topic =
          rng.bernoulli(cfg.response_noise) ? pick(rng, off_topic) : pick(rng, on_topic);
      response.push_back(topic_word(rng, topic, cfg));
    }
    auto ann = annotate_episode(rec.history, response, cfg.annotator);
    rec.response_words = std::move(ann.words);
    rec.sentence_reward = ann.sentence_reward;
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<EpisodeRecord> reannotate(const std::vector<EpisodeRecord>& records,
                                      const AnnotatorConfig& rules, std::size_t* skipped) {
  std::vector<EpisodeRecord> out;
  std::size_t dropped = 0;
  for (const auto& rec : records) {
    std::vector<std::string> words;
    for (const auto& w : rec.response_words) words.push_back(w.word);
    try {
      auto ann = annotate_episode(rec.history, words, rules);
      EpisodeRecord copy = rec;
      copy.response_words = std::move(ann.words);
      copy.sentence_reward = ann.sentence_reward;
      out.push_back(std::move(copy));
    } catch (const AnnotationError&) {
      ++dropped;
    }
  }
  if (skipped) *skipped = dropped;
  return out;
}

Vocabulary::Vocabulary(const std::vector<std::string>& words, const Tokenizer& tok, int size)
    : tok_(tok), size_(size) {
  tokens_ = {"<pad>", "<eos>", "<sep>"};
  for (int i = 0; i < 3; ++i) ids_[tokens_[static_cast<std::size_t>(i)]] = i;
  for (const auto& w : words)
    for (const auto& t : tokenize_word(w, tok))
      if (!ids_.contains(t)) {
        ids_[t] = static_cast<int>(tokens_.size());
        tokens_.push_back(t);
      }
  if (static_cast<int>(tokens_.size()) > size)
    throw InvalidInput("vocabulary needs " + std::to_string(tokens_.size()) +
                       " ids but size is " + std::to_string(size));
  for (int i = static_cast<int>(tokens_.size()); i < size; ++i)
    tokens_.push_back("<unused" + std::to_string(i) + ">");
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) throw InvalidInput("token not in vocabulary: '" + token + "'");
  return it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size_) throw InvalidInput("token id out of range: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode_words(const std::vector<std::string>& words) const {
  std::vector<int> ids;
  for (const auto& w : words)
    for (const auto& t : tokenize_word(w, tok_)) ids.push_back(id(t));
  return ids;
}

TokenRow encode_record(const EpisodeRecord& rec, const Vocabulary& vocab) {
  TokenRow row;
  row.ids = vocab.encode_words(rec.prompt_words);
  row.categories.assign(row.ids.size(), RewardCategory::masked);
  row.ids.push_back(kSepId);
  row.categories.push_back(RewardCategory::masked);
  row.response_begin = row.ids.size();
  for (const auto& tr : map_word_rewards(rec.response_words, vocab.tokenizer())) {
    row.ids.push_back(vocab.id(tr.token));
    row.categories.push_back(tr.category);
  }
  row.ids.push_back(kEosId);
  row.categories.push_back(RewardCategory::masked);
  row.sentence_reward = rec.sentence_reward;
  return row;
}

TokenBatch make_token_batch(const std::vector<TokenRow>& rows) {
  TokenBatch b;
  b.rows = rows.size();
  for (const auto& r : rows) b.cols = std::max(b.cols, r.ids.size());
  const std::size_t total = b.rows * b.cols;
  b.token_ids.assign(total, kPadId);
  b.attention_mask.assign(total, 0);
  b.activation_mask.assign(total, 0);
  b.token_categories.assign(total, RewardCategory::masked);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    for (std::size_t c = 0; c < row.ids.size(); ++c) {
      const auto k = b.index(r, c);
      b.token_ids[k] = row.ids[c];
      b.attention_mask[k] = 1;
      if (c >= row.response_begin) {
        b.activation_mask[k] = 1;
        b.token_categories[k] = row.categories[c];
      }
    }
    b.sentence_rewards.push_back(row.sentence_reward);
  }
  return b;
}

TokenBatch build_token_batch(const std::vector<EpisodeRecord>& records, const Vocabulary& vocab) {
  std::vector<TokenRow> rows;
  rows.reserve(records.size());
  for (const auto& rec : records) rows.push_back(encode_record(rec, vocab));
  return make_token_batch(rows);
}

void validate_token_batch(const TokenBatch& b) {
  const std::size_t total = b.rows * b.cols;
  if (b.token_ids.size() != total || b.attention_mask.size() != total ||
      b.activation_mask.size() != total || b.token_categories.size() != total ||
      b.sentence_rewards.size() != b.rows)
    throw InvalidInput("token batch grids have inconsistent shapes");
  for (std::size_t k = 0; k < total; ++k) {
    if (b.activation_mask[k] && !b.attention_mask[k])
      throw InvalidInput("active token at a padding position");
    if (!b.activation_mask[k] && b.token_categories[k] != RewardCategory::masked)
      throw InvalidInput("non-response token carries a reward category");
  }
}

TokenBatch make_parity_batch(std::uint64_t seed, std::size_t episodes, int vocab_size,
                             int max_response_tokens) {
  constexpr int kFirstContent = 8;  // ids 3..7 act as separators
  if (vocab_size <= kFirstContent + 1) throw InvalidInput("vocab too small for parity corpus");
  std::vector<TokenRow> rows;
  for (std::size_t e = 0; e < episodes; ++e) {
    Rng rng = Rng::stream(seed, e);
    TokenRow row;
    for (int p = 0; p < 3; ++p) {
      row.ids.push_back(rng.uniform_int(3, vocab_size - 1));
      row.categories.push_back(RewardCategory::masked);
    }
    row.ids.push_back(kSepId);
    row.categories.push_back(RewardCategory::masked);
    row.response_begin = row.ids.size();
    const int len = rng.uniform_int(1, max_response_tokens);
    int relevant = 0, content = 0;
    for (int t = 0; t < len; ++t) {
      const int id = rng.uniform_int(3, vocab_size - 1);
      RewardCategory c = RewardCategory::masked;
      if (id >= kFirstContent) {
        c = id % 2 == 0 ? RewardCategory::relevant : RewardCategory::irrelevant;
        ++content;
        relevant += c == RewardCategory::relevant;
      }
      row.ids.push_back(id);
      row.categories.push_back(c);
    }
    row.ids.push_back(kEosId);
    row.categories.push_back(RewardCategory::masked);
    row.sentence_reward = (content > 0 && 2 * relevant >= content) ? RewardCategory::relevant
                                                                    : RewardCategory::irrelevant;
    rows.push_back(std::move(row));
  }
  return make_token_batch(rows);
}

}  // namespace tppo
