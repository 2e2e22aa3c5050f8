// SPDX-License-Identifier: Apache-2.0
//
// Hierarchical attention classifier: per-sentence word-level bidirectional
// GRU with self-attention produces sentence vectors; a sentence-level
// bidirectional GRU with self-attention produces the document vector, which
// feeds a dense softmax head. Word and sentence encoders have distinct
// parameters. Empty (all-pad) sentences are excluded from sentence
// attention entirely.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "pm/ops.hpp"
#include "pm/rng.hpp"
#include "pm/tensor.hpp"
#include "pm/textprep.hpp"

namespace pm {

struct HanConfig {
  std::size_t dim = 64;
  std::size_t word_hidden = 50;   // word annotations have width 100
  std::size_t sent_hidden = 50;   // sentence annotations have width 100
  std::size_t attention_dim = 100;
  std::size_t max_words = 50;
  std::size_t max_sents = 14;
  double dropout = 0.5;
  std::size_t k = 2;
  bool fine_tune_embeddings = true;
};

template <typename T>
struct HanTraceT {
  std::vector<T> probabilities;
  TensorT<T> word_alphas;          // max_sents x max_words, zero at padding
  std::vector<T> sentence_alphas;  // max_sents, zero at empty sentences
  TensorT<T> sentence_vectors;     // n_nonempty x 2*word_hidden
  std::vector<T> document;         // 2*sent_hidden, pre-dropout

  // backward state
  std::vector<std::size_t> nonempty;
  std::vector<TensorT<T>> word_inputs;
  std::vector<std::vector<unsigned char>> word_masks;
  std::vector<TensorT<T>> word_annotations;
  std::vector<ops::BiGruCacheT<T>> word_gru_caches;
  std::vector<ops::AttentionCacheT<T>> word_att_caches;
  TensorT<T> sent_annotations;
  ops::BiGruCacheT<T> sent_gru_cache;
  ops::AttentionCacheT<T> sent_att_cache;
  std::vector<unsigned char> sent_mask;
  std::vector<T> dropout_mask;
  std::vector<T> logits;
};

template <typename T>
class HanModelT {
 public:
  HanModelT(const HanConfig& config, const TensorT<T>& embedding, Rng& rng)
      : cfg_(config) {
    if (embedding.dim(1) != cfg_.dim)
      throw std::invalid_argument("han: embedding dim mismatch");
    if (cfg_.word_hidden == 0 || cfg_.sent_hidden == 0 ||
        cfg_.attention_dim == 0)
      throw std::invalid_argument("han: zero hidden size");

    emb_ = &params_.add("embedding", embedding.shape,
                        cfg_.fine_tune_embeddings);
    emb_->value = embedding;
    emb_->frozen_scalars = cfg_.dim;  // pad row 0 stays zero

    word_fwd_ = ops::GruParamsT<T>::registered(params_, "word.fwd",
                                               cfg_.word_hidden, cfg_.dim);
    word_bwd_ = ops::GruParamsT<T>::registered(params_, "word.bwd",
                                               cfg_.word_hidden, cfg_.dim);
    word_att_ = ops::AttentionParamsT<T>::registered(
        params_, "word.att", cfg_.attention_dim, 2 * cfg_.word_hidden);
    sent_fwd_ = ops::GruParamsT<T>::registered(
        params_, "sent.fwd", cfg_.sent_hidden, 2 * cfg_.word_hidden);
    sent_bwd_ = ops::GruParamsT<T>::registered(
        params_, "sent.bwd", cfg_.sent_hidden, 2 * cfg_.word_hidden);
    sent_att_ = ops::AttentionParamsT<T>::registered(
        params_, "sent.att", cfg_.attention_dim, 2 * cfg_.sent_hidden);
    head_w_ = &params_.add("head.W", {cfg_.k, 2 * cfg_.sent_hidden});
    head_b_ = &params_.add("head.b", {cfg_.k});

    init_weights(rng);
  }

  const HanConfig& config() const { return cfg_; }
  ParamSetT<T>& params() { return params_; }
  const TensorT<T>& embedding() const { return emb_->value; }

  HanTraceT<T> forward(const Encoded& input, bool train, Rng& rng) const {
    if (input.rows != cfg_.max_sents || input.cols != cfg_.max_words)
      throw std::invalid_argument("han: input shape mismatch");
    HanTraceT<T> tr;
    tr.word_alphas = TensorT<T>({cfg_.max_sents, cfg_.max_words});
    tr.sentence_alphas.assign(cfg_.max_sents, T(0));

    for (std::size_t i = 0; i < cfg_.max_sents; ++i) {
      std::vector<unsigned char> mask(cfg_.max_words, 0);
      bool any = false;
      for (std::size_t j = 0; j < cfg_.max_words; ++j) {
        mask[j] = input.at(i, j) != kPadId;
        any = any || mask[j];
      }
      if (!any) continue;

      TensorT<T> a({cfg_.max_words, cfg_.dim});
      for (std::size_t j = 0; j < cfg_.max_words; ++j) {
        const T* src =
            emb_->value.row(static_cast<std::size_t>(input.at(i, j)));
        std::copy(src, src + cfg_.dim, a.row(j));
      }

      ops::BiGruCacheT<T> gcache;
      auto ann = ops::bi_gru(word_fwd_, word_bwd_, a, mask, &gcache);
      ops::AttentionCacheT<T> acache;
      auto res = ops::self_attention(word_att_, ann, mask, &acache);

      for (std::size_t j = 0; j < cfg_.max_words; ++j)
        tr.word_alphas.at(i, j) = res.alpha[j];
      tr.nonempty.push_back(i);
      tr.word_inputs.push_back(std::move(a));
      tr.word_masks.push_back(std::move(mask));
      tr.word_annotations.push_back(std::move(ann));
      tr.word_gru_caches.push_back(std::move(gcache));
      tr.word_att_caches.push_back(std::move(acache));

      tr.sentence_vectors.shape = {tr.nonempty.size(), 2 * cfg_.word_hidden};
      tr.sentence_vectors.data.insert(tr.sentence_vectors.data.end(),
                                      res.att.begin(), res.att.end());
    }
    if (tr.nonempty.empty())
      throw std::invalid_argument("han: document has no non-empty sentence");

    tr.sent_mask.assign(tr.nonempty.size(), 1);
    tr.sent_annotations = ops::bi_gru(sent_fwd_, sent_bwd_,
                                      tr.sentence_vectors, tr.sent_mask,
                                      &tr.sent_gru_cache);
    auto res = ops::self_attention(sent_att_, tr.sent_annotations,
                                   tr.sent_mask, &tr.sent_att_cache);
    for (std::size_t s = 0; s < tr.nonempty.size(); ++s)
      tr.sentence_alphas[tr.nonempty[s]] = res.alpha[s];
    tr.document = std::move(res.att);

    tr.dropout_mask =
        ops::dropout_mask<T>(tr.document.size(), cfg_.dropout, train, rng);
    std::vector<T> dropped = tr.document;
    ops::apply_mask<T>(tr.dropout_mask, dropped.data());
    tr.logits = ops::dense(head_w_->value, head_b_->value, dropped.data());
    tr.probabilities = ops::softmax<T>(tr.logits);
    return tr;
  }

  std::vector<T> forward_eval_probs(const Encoded& input) const {
    Rng no_draws(0);
    return forward(input, false, no_draws).probabilities;
  }

  // Accumulates parameter gradients (including the embedding scatter when
  // fine-tuning; pad rows are skipped so row 0 stays zero).
  void backward(const HanTraceT<T>& tr, const Encoded& input,
                std::span<const T> dlogits) {
    std::vector<T> dropped = tr.document;
    ops::apply_mask<T>(tr.dropout_mask, dropped.data());
    std::vector<T> ddropped(dropped.size(), T(0));
    ops::dense_backward(head_w_->value, dropped.data(), dlogits.data(),
                        &head_w_->grad, &head_b_->grad, ddropped.data());
    ops::apply_mask<T>(tr.dropout_mask, ddropped.data());

    TensorT<T> dsann(tr.sent_annotations.shape);
    ops::self_attention_backward(sent_att_, tr.sent_att_cache,
                                 tr.sent_annotations, ddropped.data(), &dsann);
    TensorT<T> dsvec(tr.sentence_vectors.shape);
    ops::bi_gru_backward(sent_fwd_, sent_bwd_, tr.sent_gru_cache, dsann,
                         &dsvec);

    for (std::size_t s = 0; s < tr.nonempty.size(); ++s) {
      TensorT<T> dann(tr.word_annotations[s].shape);
      ops::self_attention_backward(word_att_, tr.word_att_caches[s],
                                   tr.word_annotations[s], dsvec.row(s),
                                   &dann);
      TensorT<T> da(tr.word_inputs[s].shape);
      ops::bi_gru_backward(word_fwd_, word_bwd_, tr.word_gru_caches[s], dann,
                           &da);
      if (cfg_.fine_tune_embeddings) {
        const std::size_t row = tr.nonempty[s];
        for (std::size_t j = 0; j < cfg_.max_words; ++j) {
          const auto id = static_cast<std::size_t>(input.at(row, j));
          if (id == static_cast<std::size_t>(kPadId)) continue;
          T* dst = emb_->grad.row(id);
          const T* src = da.row(j);
          for (std::size_t c = 0; c < cfg_.dim; ++c) dst[c] += src[c];
        }
      }
    }
  }

  // Evaluation-mode document vector (pre-head), used for retrieval and PCA
  // sanity checks.
  std::vector<T> document_embedding(const Encoded& input) const {
    Rng no_draws(0);
    return forward(input, false, no_draws).document;
  }

 private:
  void init_weights(Rng& rng) {
    auto init_mat = [&](typename ParamSetT<T>::Param* p) {
      const double bound =
          std::sqrt(6.0 / static_cast<double>(p->value.dim(0) +
                                              p->value.dim(1)));
      for (auto& v : p->value.data)
        v = static_cast<T>(rng.uniform(-bound, bound));
    };
    auto init_gru = [&](ops::GruParamsT<T>& g) {
      init_mat(g.Wz);
      init_mat(g.Uz);
      init_mat(g.Wr);
      init_mat(g.Ur);
      init_mat(g.Wh);
      init_mat(g.Uh);
    };
    auto init_att = [&](ops::AttentionParamsT<T>& a) {
      init_mat(a.W);
      const double bound =
          std::sqrt(6.0 / static_cast<double>(cfg_.attention_dim + 1));
      for (auto& v : a.u->value.data)
        v = static_cast<T>(rng.uniform(-bound, bound));
    };
    init_gru(word_fwd_);
    init_gru(word_bwd_);
    init_att(word_att_);
    init_gru(sent_fwd_);
    init_gru(sent_bwd_);
    init_att(sent_att_);
    init_mat(head_w_);
  }

  HanConfig cfg_;
  ParamSetT<T> params_;
  typename ParamSetT<T>::Param* emb_ = nullptr;
  ops::GruParamsT<T> word_fwd_, word_bwd_;
  ops::AttentionParamsT<T> word_att_;
  ops::GruParamsT<T> sent_fwd_, sent_bwd_;
  ops::AttentionParamsT<T> sent_att_;
  typename ParamSetT<T>::Param* head_w_ = nullptr;
  typename ParamSetT<T>::Param* head_b_ = nullptr;
};

using HanModel = HanModelT<float>;

// Per-position combined attention score: word alpha times the alpha of the
// containing sentence. Scores over all non-pad positions sum to 1.
template <typename T>
TensorT<T> word_scores(const HanTraceT<T>& trace) {
  TensorT<T> scores(trace.word_alphas.shape);
  for (std::size_t i = 0; i < scores.dim(0); ++i)
    for (std::size_t j = 0; j < scores.dim(1); ++j)
      scores.at(i, j) = trace.word_alphas.at(i, j) * trace.sentence_alphas[i];
  return scores;
}

}  // namespace pm
