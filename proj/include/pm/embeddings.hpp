// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pm/tensor.hpp"
#include "pm/textprep.hpp"

namespace pm {

struct SkipgramConfig {
  std::size_t dim = 64;
  std::size_t window = 5;
  std::size_t negatives = 5;
  std::size_t epochs = 5;
  double initial_lr = 0.025;
  double subsample = 1e-3;  // 0 disables frequency subsampling
};

// V x dim word vectors. Row 0 is the pad row and stays exactly zero; row 1
// is the OOV vector, trained as an ordinary token (all sub-min_count tokens
// map to it during pre-training).
struct EmbeddingMatrix {
  Tensor vectors;  // V x dim

  std::size_t vocab_size() const { return vectors.dim(0); }
  std::size_t dim() const { return vectors.dim(1); }

  // header "dim=<d> vocab=<V>", then one row of space-separated floats per id
  void save_text(const std::string& path) const;
  static EmbeddingMatrix load_text(const std::string& path);
};

// Maps each report's flat tokens to vocabulary ids (OOV -> 1). Pre-training
// streams; pad id 0 never occurs here.
std::vector<std::vector<std::int32_t>> id_streams(
    const std::vector<TokenizedReport>& corpus, const Vocabulary& vocab);

// Skip-gram with negative sampling: unigram^0.75 negative distribution,
// dynamic window, linearly decayed learning rate, optional frequency
// subsampling. Deterministic under seed; draws are consumed in a fixed
// order (per token: subsample, per center: window shrink, per pair:
// negative samples).
EmbeddingMatrix train_skipgram(
    const std::vector<std::vector<std::int32_t>>& streams,
    const Vocabulary& vocab, const SkipgramConfig& config, std::uint64_t seed);

double cosine(std::span<const float> a, std::span<const float> b);

// Most similar retained tokens by cosine; excludes the query itself and the
// reserved rows 0-1. Throws on out-of-vocabulary queries.
std::vector<std::pair<std::string, double>> nearest_neighbors(
    const EmbeddingMatrix& emb, const Vocabulary& vocab,
    const std::string& word, std::size_t k);

}  // namespace pm
