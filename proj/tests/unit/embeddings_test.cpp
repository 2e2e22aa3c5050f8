// SPDX-License-Identifier: Apache-2.0
#include "pm/embeddings.hpp"

#include <doctest.h>

#include <cstdio>

#include "pm/corpus.hpp"
#include "pm/rng.hpp"

using namespace pm;

namespace {

TokenizedReport doc(std::vector<std::vector<std::string>> sents) {
  TokenizedReport rep;
  rep.sentences = std::move(sents);
  rep.sentence_field.assign(rep.sentences.size(), 0);
  return rep;
}

}  // namespace

TEST_CASE("skip-gram on a degenerate one-token corpus") {
  std::vector<TokenizedReport> corpus;
  for (int i = 0; i < 10; ++i) corpus.push_back(doc({{"hammer", "hammer", "hammer"}}));
  auto vocab = Vocabulary::build(corpus, 1);
  SkipgramConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 2;
  auto emb = train_skipgram(id_streams(corpus, vocab), vocab, cfg, 1);
  CHECK(emb.vectors.all_finite());
  CHECK(emb.vocab_size() == vocab.size());
  // pad row preserved
  for (std::size_t c = 0; c < emb.dim(); ++c) CHECK(emb.vectors.at(0, c) == 0.0f);
}

TEST_CASE("skip-gram co-occurrence raises cosine similarity") {
  // "hard hat" always co-occur inside their own contexts; "cone" lives in
  // disjoint contexts and never co-occurs with "hat".
  Rng rng(99);
  std::vector<TokenizedReport> corpus;
  std::vector<std::string> pool_a = {"alpha", "beta", "gamma", "delta"};
  std::vector<std::string> pool_b = {"epsilon", "zeta", "eta", "theta"};
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> sent;
    const auto& pool = i % 2 == 0 ? pool_a : pool_b;
    for (int j = 0; j < 4; ++j) sent.push_back(pool[rng.below(pool.size())]);
    if (i % 2 == 0) {
      sent.push_back("hard");
      sent.push_back("hat");
    } else {
      sent.insert(sent.begin(), "cone");
    }
    corpus.push_back(doc({sent}));
  }
  auto vocab = Vocabulary::build(corpus, 1);
  SkipgramConfig cfg;
  cfg.dim = 12;
  cfg.epochs = 20;
  cfg.subsample = 0;  // tiny corpus, keep everything
  auto emb = train_skipgram(id_streams(corpus, vocab), vocab, cfg, 7);

  const std::size_t d = emb.dim();
  auto vec = [&](const char* w) {
    return std::span<const float>{
        emb.vectors.row(static_cast<std::size_t>(vocab.lookup(w))), d};
  };
  CHECK(cosine(vec("hard"), vec("hat")) > cosine(vec("cone"), vec("hat")));
}

TEST_CASE("skip-gram determinism under seed") {
  std::vector<TokenizedReport> corpus;
  for (int i = 0; i < 20; ++i)
    corpus.push_back(doc({{"pipe", "valve", "weld", "pipe", "flange"}}));
  auto vocab = Vocabulary::build(corpus, 1);
  SkipgramConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 2;
  auto streams = id_streams(corpus, vocab);
  auto a = train_skipgram(streams, vocab, cfg, 42);
  auto b = train_skipgram(streams, vocab, cfg, 42);
  CHECK(a.vectors.data == b.vectors.data);
  auto c = train_skipgram(streams, vocab, cfg, 43);
  CHECK(a.vectors.data != c.vectors.data);
}

TEST_CASE("skip-gram rejects an empty corpus") {
  Vocabulary vocab;
  CHECK_THROWS_AS(train_skipgram({}, vocab, SkipgramConfig{}, 1),
                  ValidationError);
}

TEST_CASE("cosine symmetry") {
  Rng rng(5);
  std::vector<float> a(16), b(16);
  for (auto& v : a) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& v : b) v = static_cast<float>(rng.uniform(-1, 1));
  CHECK(std::abs(cosine(a, b) - cosine(b, a)) < 1e-12);
}

TEST_CASE("nearest_neighbors excludes self and reserved rows") {
  std::vector<TokenizedReport> corpus;
  Rng rng(11);
  std::vector<std::string> fillers = {"red", "blue", "green", "grey"};
  for (int i = 0; i < 150; ++i) {
    std::vector<std::string> sent = {"start"};
    for (int j = 0; j < 4; ++j) sent.push_back(fillers[rng.below(4)]);
    // "hammer" and "mallet" share planted contexts
    if (i % 3 == 0) {
      sent.push_back("grip");
      sent.push_back(i % 2 ? "hammer" : "mallet");
      sent.push_back("swing");
    }
    corpus.push_back(doc({sent}));
  }
  auto vocab = Vocabulary::build(corpus, 1);
  SkipgramConfig cfg;
  cfg.dim = 16;
  cfg.epochs = 12;
  cfg.subsample = 0;
  auto emb = train_skipgram(id_streams(corpus, vocab), vocab, cfg, 3);

  auto nn = nearest_neighbors(emb, vocab, "hammer", 3);
  REQUIRE(nn.size() == 3);
  bool found = false;
  for (const auto& [w, score] : nn) {
    CHECK(w != "hammer");
    CHECK(w != "PAD");
    if (w == "mallet") found = true;
  }
  CHECK(found);

  CHECK_THROWS_AS(nearest_neighbors(emb, vocab, "notaword", 3),
                  ValidationError);
}

TEST_CASE("embedding text format round trip") {
  EmbeddingMatrix emb;
  emb.vectors = Tensor({3, 4});
  Rng rng(2);
  for (std::size_t r = 1; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      emb.vectors.at(r, c) = static_cast<float>(rng.uniform(-1, 1));
  const std::string path = "/tmp/pm_emb_test.txt";
  emb.save_text(path);
  auto loaded = EmbeddingMatrix::load_text(path);
  CHECK(loaded.vectors.shape == emb.vectors.shape);
  CHECK(loaded.vectors.data == emb.vectors.data);
}
