// SPDX-License-Identifier: Apache-2.0
#include "pm/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "pm/corpus.hpp"
#include "pm/rng.hpp"

namespace pm {

void EmbeddingMatrix::save_text(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write embeddings: " + path);
  out << "dim=" << dim() << " vocab=" << vocab_size() << "\n";
  char buf[32];
  for (std::size_t r = 0; r < vocab_size(); ++r) {
    const float* row = vectors.row(r);
    for (std::size_t c = 0; c < dim(); ++c) {
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(row[c]));
      if (c) out << ' ';
      out << buf;
    }
    out << "\n";
  }
}

EmbeddingMatrix EmbeddingMatrix::load_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read embeddings: " + path);
  std::string header;
  std::getline(in, header);
  std::size_t d = 0, v = 0;
  if (std::sscanf(header.c_str(), "dim=%zu vocab=%zu", &d, &v) != 2)
    throw std::runtime_error("malformed embedding header: " + header);
  EmbeddingMatrix emb;
  emb.vectors = Tensor({v, d});
  for (std::size_t r = 0; r < v; ++r)
    for (std::size_t c = 0; c < d; ++c)
      if (!(in >> emb.vectors.at(r, c)))
        throw std::runtime_error("truncated embedding file: " + path);
  return emb;
}

std::vector<std::vector<std::int32_t>> id_streams(
    const std::vector<TokenizedReport>& corpus, const Vocabulary& vocab) {
  std::vector<std::vector<std::int32_t>> streams;
  streams.reserve(corpus.size());
  for (const auto& rep : corpus) {
    std::vector<std::int32_t> ids;
    for (const auto& sentence : rep.sentences)
      for (const auto& tok : sentence) ids.push_back(vocab.lookup(tok));
    if (!ids.empty()) streams.push_back(std::move(ids));
  }
  return streams;
}

EmbeddingMatrix train_skipgram(
    const std::vector<std::vector<std::int32_t>>& streams,
    const Vocabulary& vocab, const SkipgramConfig& config,
    std::uint64_t seed) {
  if (streams.empty()) throw ValidationError("skip-gram: empty corpus");
  if (config.dim == 0 || config.window == 0)
    throw ValidationError("skip-gram: dim and window must be positive");

  const std::size_t v = vocab.size();
  const std::size_t d = config.dim;

  // token counts over the streams (ids >= 1; OOV occurrences counted too)
  std::vector<double> counts(v, 0.0);
  std::size_t total_tokens = 0;
  for (const auto& s : streams)
    for (std::int32_t id : s) {
      counts[static_cast<std::size_t>(id)] += 1.0;
      ++total_tokens;
    }

  // unigram^0.75 cumulative table for negative sampling
  std::vector<double> cum(v, 0.0);
  double acc = 0.0;
  for (std::size_t i = 1; i < v; ++i) {  // pad id 0 excluded
    acc += std::pow(counts[i], 0.75);
    cum[i] = acc;
  }
  if (acc <= 0.0) throw ValidationError("skip-gram: no trainable tokens");

  Rng rng(seed);
  EmbeddingMatrix emb;
  emb.vectors = Tensor({v, d});
  Tensor context({v, d});  // output vectors, zero-initialized
  const double half = 0.5 / static_cast<double>(d);
  for (std::size_t r = 1; r < v; ++r)  // row 0 stays zero
    for (std::size_t c = 0; c < d; ++c)
      emb.vectors.at(r, c) = static_cast<float>(rng.uniform(-half, half));

  auto sample_negative = [&]() -> std::size_t {
    const double u = rng.uniform() * acc;
    const auto it = std::upper_bound(cum.begin() + 1, cum.end(), u);
    return static_cast<std::size_t>(it - cum.begin());
  };

  const double planned =
      static_cast<double>(total_tokens) * static_cast<double>(config.epochs);
  const double lr_floor = config.initial_lr * 1e-4;
  std::size_t processed = 0;

  std::vector<float> neu1e(d);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& stream : streams) {
      // frequency subsampling, then training over the kept sequence
      std::vector<std::int32_t> sen;
      sen.reserve(stream.size());
      for (std::int32_t id : stream) {
        ++processed;
        if (config.subsample > 0.0) {
          const double f = counts[static_cast<std::size_t>(id)] /
                           static_cast<double>(total_tokens);
          const double keep =
              (std::sqrt(f / config.subsample) + 1.0) * config.subsample / f;
          if (keep < 1.0 && rng.uniform() >= keep) continue;
        }
        sen.push_back(id);
      }

      const double lr_now = std::max(
          lr_floor, config.initial_lr *
                        (1.0 - static_cast<double>(processed) / (planned + 1.0)));
      const auto lr = static_cast<float>(lr_now);

      for (std::size_t pos = 0; pos < sen.size(); ++pos) {
        const auto target = static_cast<std::size_t>(sen[pos]);
        const std::size_t shrink =
            static_cast<std::size_t>(rng.below(config.window));
        const std::size_t w = config.window - shrink;
        const std::size_t lo = pos >= w ? pos - w : 0;
        const std::size_t hi = std::min(sen.size(), pos + w + 1);
        for (std::size_t cpos = lo; cpos < hi; ++cpos) {
          if (cpos == pos) continue;
          float* in = emb.vectors.row(static_cast<std::size_t>(sen[cpos]));
          std::fill(neu1e.begin(), neu1e.end(), 0.0f);
          for (std::size_t n = 0; n <= config.negatives; ++n) {
            std::size_t out_id;
            float label;
            if (n == 0) {
              out_id = target;
              label = 1.0f;
            } else {
              do {
                out_id = sample_negative();
              } while (out_id == target);
              label = 0.0f;
            }
            float* out = context.row(out_id);
            float dot = 0.0f;
            for (std::size_t c = 0; c < d; ++c) dot += in[c] * out[c];
            const float g =
                (label - static_cast<float>(1.0 / (1.0 + std::exp(-dot)))) * lr;
            for (std::size_t c = 0; c < d; ++c) {
              neu1e[c] += g * out[c];
              out[c] += g * in[c];
            }
          }
          for (std::size_t c = 0; c < d; ++c) in[c] += neu1e[c];
        }
      }
    }
  }

  if (!emb.vectors.all_finite())
    throw std::runtime_error("skip-gram training produced non-finite vectors");
  return emb;
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<std::pair<std::string, double>> nearest_neighbors(
    const EmbeddingMatrix& emb, const Vocabulary& vocab,
    const std::string& word, std::size_t k) {
  if (k == 0) throw ValidationError("nearest_neighbors: k must be >= 1");
  if (!vocab.contains(word))
    throw ValidationError("nearest_neighbors: '" + word +
                          "' is not in the vocabulary");
  const auto qid = static_cast<std::size_t>(vocab.lookup(word));
  const std::size_t d = emb.dim();
  std::span<const float> q{emb.vectors.row(qid), d};

  std::vector<std::pair<std::string, double>> scored;
  for (std::size_t id = kFirstTokenId; id < emb.vocab_size(); ++id) {
    if (id == qid) continue;
    scored.emplace_back(vocab.token_of(static_cast<std::int32_t>(id)),
                        cosine(q, {emb.vectors.row(id), d}));
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

}  // namespace pm
