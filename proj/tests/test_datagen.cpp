#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "tppo/datagen.hpp"
#include "tppo/random.hpp"

using namespace tppo;

namespace {

std::vector<std::string> toks(std::string_view w, int chunk) {
  return tokenize_word(w, Tokenizer::chunked(chunk));
}

std::vector<HistoryEvent> history_of(std::initializer_list<const char*> texts) {
  std::vector<HistoryEvent> h;
  for (const char* t : texts) h.push_back({HistoryKind::search, t});
  return h;
}

std::string random_word(Rng& rng) {
  const int len = rng.uniform_int(1, 12);
  std::string w;
  for (int i = 0; i < len; ++i) w.push_back(static_cast<char>('a' + rng.uniform_int(0, 25)));
  return w;
}

}  // namespace

TEST_CASE("fixed-chunk tokenization") {
  CHECK(toks("relevant", 2) == std::vector<std::string>{"re", "le", "va", "nt"});
  CHECK(toks("relevant", 5) == std::vector<std::string>{"relev", "ant"});
  CHECK(toks("a", 3) == std::vector<std::string>{"a"});
  CHECK_THROWS_AS(toks("", 2), InvalidInput);
  CHECK_THROWS_AS(Tokenizer::chunked(0), InvalidInput);
}

TEST_CASE("tokenization is lossless and respects the chunk length") {
  Rng rng(7);
  for (int i = 0; i < 500; ++i) {
    const auto w = random_word(rng);
    for (int chunk : {1, 2, 3, 5}) {
      const auto t = toks(w, chunk);
      CHECK(detokenize(t) == w);
      for (const auto& piece : t) {
        CHECK(!piece.empty());
        CHECK(static_cast<int>(piece.size()) <= chunk);
      }
    }
  }
}

TEST_CASE("word rewards map onto every emitted token") {
  using RC = RewardCategory;
  const auto two = Tokenizer::chunked(2);
  const auto three = Tokenizer::chunked(3);
  CHECK(map_word_rewards({{"relevant", RC::relevant}}, two) ==
        std::vector<TokenReward>{{"re", RC::relevant},
                                 {"le", RC::relevant},
                                 {"va", RC::relevant},
                                 {"nt", RC::relevant}});
  CHECK(map_word_rewards({{",", RC::masked}}, two) == std::vector<TokenReward>{{",", RC::masked}});
  CHECK(map_word_rewards({{"good", RC::relevant}, {"bad", RC::irrelevant}}, three) ==
        std::vector<TokenReward>{{"goo", RC::relevant},
                                 {"d", RC::relevant},
                                 {"bad", RC::irrelevant}});
}

TEST_CASE("per-word mean token reward is tokenizer invariant") {
  Rng rng(11);
  std::vector<WordAnnotation> words;
  for (int i = 0; i < 200; ++i)
    words.push_back({random_word(rng), category_from_int(rng.uniform_int(0, 2))});
  for (int chunk : {2, 3, 5}) {
    const auto tok = Tokenizer::chunked(chunk);
    const auto mapped = map_word_rewards(words, tok);
    std::size_t pos = 0;
    for (const auto& w : words) {
      const auto n = tokenize_word(w.word, tok).size();
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) sum += to_int(mapped[pos + j].category);
      CHECK(sum / static_cast<double>(n) == to_int(w.category));
      pos += n;
    }
    CHECK(pos == mapped.size());
  }
}

TEST_CASE("annotator rule oracle") {
  const AnnotatorConfig rules;
  const auto hist = history_of({"A3 B2", "A1"});

  const auto mixed = annotate_episode(hist, {"A1", ",", "C7"}, rules);
  CHECK(mixed.words == std::vector<WordAnnotation>{{"A1", RewardCategory::relevant},
                                                   {",", RewardCategory::masked},
                                                   {"C7", RewardCategory::irrelevant}});
  CHECK(mixed.sentence_reward == RewardCategory::relevant);

  const auto all_on = annotate_episode(hist, {"B4", "and", "A8"}, rules);
  CHECK(all_on.sentence_reward == RewardCategory::relevant);
  for (const auto& w : all_on.words)
    if (w.word != "and") CHECK(w.category == RewardCategory::relevant);

  const auto off = annotate_episode(hist, {"D1", "E2"}, rules);
  CHECK(off.sentence_reward == RewardCategory::irrelevant);
  for (const auto& w : off.words) CHECK(w.category == RewardCategory::irrelevant);

  AnnotatorConfig strict = rules;
  strict.tau = 0.75;
  CHECK(annotate_episode(hist, {"A1", ",", "C7"}, strict).sentence_reward ==
        RewardCategory::irrelevant);

  CHECK_THROWS_AS(annotate_episode({}, {"A1"}, rules), InvalidInput);
  CHECK_THROWS_AS(annotate_episode(hist, {",", "the"}, rules), AnnotationError);
}

TEST_CASE("annotation is deterministic") {
  const AnnotatorConfig rules;
  const auto hist = history_of({"C1 F2"});
  const std::vector<std::string> resp{"C3", "the", "F1", "A2"};
  const auto a = annotate_episode(hist, resp, rules);
  const auto b = annotate_episode(hist, resp, rules);
  CHECK(a.words == b.words);
  CHECK(a.sentence_reward == b.sentence_reward);
}

TEST_CASE("corpus generation contract") {
  const CorpusConfig cfg;
  const auto a = generate_corpus(0, 2, cfg);
  CHECK(a.size() == 2);
  CHECK(a == generate_corpus(0, 2, cfg));
  CHECK(a != generate_corpus(1, 2, cfg));
  CHECK_THROWS_AS(generate_corpus(0, 0, cfg), InvalidInput);

  for (const auto& rec : generate_corpus(3, 300, cfg)) {
    CHECK(rec.history.size() >= 1);
    CHECK(rec.history.size() <= 8);
    CHECK(rec.target_queries.size() == 3);
    CHECK(rec.sentence_reward != RewardCategory::masked);
    CHECK(!rec.prompt_words.empty());
    // Labels agree with the oracle applied to the stored history.
    std::vector<std::string> words;
    for (const auto& w : rec.response_words) words.push_back(w.word);
    const auto ann = annotate_episode(rec.history, words, cfg.annotator);
    CHECK(ann.words == rec.response_words);
    CHECK(ann.sentence_reward == rec.sentence_reward);
  }

  CorpusConfig five = cfg;
  five.target_query_num = 5;
  for (const auto& rec : generate_corpus(0, 20, five)) CHECK(rec.target_queries.size() == 5);
}

TEST_CASE("corpus prefix is stable under growing n") {
  const CorpusConfig cfg;
  const auto small = generate_corpus(4, 10, cfg);
  const auto big = generate_corpus(4, 50, cfg);
  CHECK(std::equal(small.begin(), small.end(), big.begin()));
}

TEST_CASE("reannotation skips episodes without content words") {
  const CorpusConfig cfg;
  auto recs = generate_corpus(0, 5, cfg);
  recs[2].response_words = {{",", RewardCategory::masked}};
  std::size_t skipped = 0;
  const auto out = reannotate(recs, cfg.annotator, &skipped);
  CHECK(skipped == 1);
  CHECK(out.size() == 4);
}

TEST_CASE("vocabulary reserves specials and encodes words") {
  const CorpusConfig cfg;
  const Vocabulary vocab(word_inventory(cfg), Tokenizer::chunked(2), 64);
  CHECK(vocab.token(kPadId) == "<pad>");
  CHECK(vocab.token(kEosId) == "<eos>");
  CHECK(vocab.token(kSepId) == "<sep>");
  CHECK(vocab.id("A1") == kFirstWordId);
  CHECK(vocab.encode_words({"A1", "and"}) == std::vector<int>{vocab.id("A1"), vocab.id("an"),
                                                                vocab.id("d")});
  CHECK_THROWS_AS(vocab.id("zz"), InvalidInput);
  CHECK_THROWS_AS(Vocabulary(word_inventory(cfg), Tokenizer::chunked(2), 16), InvalidInput);
}

TEST_CASE("token batch masks") {
  const CorpusConfig cfg;
  const Vocabulary vocab(word_inventory(cfg), Tokenizer::chunked(2), 64);
  const auto recs = generate_corpus(5, 40, cfg);
  const auto batch = build_token_batch(recs, vocab);
  CHECK_NOTHROW(validate_token_batch(batch));
  for (std::size_t r = 0; r < batch.rows; ++r) {
    const auto row = encode_record(recs[r], vocab);
    CHECK(row.ids[row.response_begin - 1] == kSepId);
    CHECK(row.ids.back() == kEosId);
    for (std::size_t c = 0; c < batch.cols; ++c) {
      if (batch.active(r, c)) CHECK(batch.attended(r, c));
      if (!batch.active(r, c)) CHECK(batch.category(r, c) == RewardCategory::masked);
      if (!batch.attended(r, c)) CHECK(batch.token(r, c) == kPadId);
    }
  }

  auto broken = batch;
  broken.activation_mask[batch.index(0, batch.cols - 1)] = 1;
  broken.attention_mask[batch.index(0, batch.cols - 1)] = 0;
  CHECK_THROWS_AS(validate_token_batch(broken), InvalidInput);
}

TEST_CASE("parity corpus labels follow token parity") {
  const auto batch = make_parity_batch(0, 50, 64);
  CHECK_NOTHROW(validate_token_batch(batch));
  std::size_t seen = 0;
  for (std::size_t k = 0; k < batch.token_ids.size(); ++k) {
    if (!batch.activation_mask[k]) continue;
    const int id = batch.token_ids[k];
    if (id == kEosId) continue;
    ++seen;
    if (id < 8) CHECK(batch.token_categories[k] == RewardCategory::masked);
    else
      CHECK(batch.token_categories[k] ==
            (id % 2 == 0 ? RewardCategory::relevant : RewardCategory::irrelevant));
  }
  CHECK(seen > 100);
}
