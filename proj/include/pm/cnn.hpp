// SPDX-License-Identifier: Apache-2.0
//
// Convolutional text classifier: embedding lookup, parallel filter branches
// of widths {2,3,4}, ReLU, global 1-max pooling, concatenation, dropout,
// dense softmax head. Interpretability outputs: per-region embedding norms
// (pre-pooling feature-map rows) and per-token gradient saliency.

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

struct CnnConfig {
  std::size_t s = 200;
  std::size_t dim = 64;
  std::vector<std::size_t> branch_widths = {2, 3, 4};
  std::size_t filters_per_branch = 100;  // 300 for incident_type
  double dropout = 0.5;
  std::size_t k = 2;
  bool fine_tune_embeddings = true;
};

template <typename T>
struct CnnTraceT {
  TensorT<T> input;                        // s x dim embedded document
  std::vector<TensorT<T>> feature_maps;    // per branch, post-ReLU
  std::vector<std::vector<std::size_t>> pool_argmax;  // per branch, per filter
  std::vector<T> pooled;                   // concatenated, pre-dropout
  std::vector<T> dropout_mask;
  std::vector<T> logits;
  std::vector<T> probabilities;
};

// One region of one branch: the h-token window starting at `pos`, embedded
// as the n_f-dimensional feature-map row. `contains_pad` flags windows that
// overlap zero-padding.
struct RegionEmbedding {
  std::size_t branch;
  std::size_t pos;
  double norm;  // L2 of the post-ReLU feature-map row
  bool contains_pad;
};

template <typename T>
class CnnModelT {
 public:
  CnnModelT(const CnnConfig& config, const TensorT<T>& embedding, Rng& rng)
      : cfg_(config) {
    if (embedding.dim(1) != cfg_.dim)
      throw std::invalid_argument("cnn: embedding dim mismatch");
    for (auto h : cfg_.branch_widths)
      if (h == 0 || h > cfg_.s)
        throw std::invalid_argument("cnn: branch width exceeds document length");
    if (cfg_.filters_per_branch == 0)
      throw std::invalid_argument("cnn: filters_per_branch must be positive");

    emb_ = &params_.add("embedding", embedding.shape,
                        cfg_.fine_tune_embeddings);
    emb_->value = embedding;
    emb_->frozen_scalars = cfg_.dim;  // pad row 0 stays zero

    const std::size_t n_f = cfg_.filters_per_branch;
    for (auto h : cfg_.branch_widths) {
      auto& flt = params_.add("conv" + std::to_string(h) + ".filters",
                              {n_f, h, cfg_.dim});
      const double bound = std::sqrt(
          6.0 / (static_cast<double>(h) * cfg_.dim + n_f));
      for (auto& v : flt.value.data)
        v = static_cast<T>(rng.uniform(-bound, bound));
      filters_.push_back(&flt);
      biases_.push_back(
          &params_.add("conv" + std::to_string(h) + ".bias", {n_f}));
    }

    const std::size_t cat = cfg_.branch_widths.size() * n_f;
    head_w_ = &params_.add("head.W", {cfg_.k, cat});
    const double bound = std::sqrt(6.0 / static_cast<double>(cat + cfg_.k));
    for (auto& v : head_w_->value.data)
      v = static_cast<T>(rng.uniform(-bound, bound));
    head_b_ = &params_.add("head.b", {cfg_.k});
  }

  const CnnConfig& config() const { return cfg_; }
  ParamSetT<T>& params() { return params_; }
  const TensorT<T>& embedding() const { return emb_->value; }

  TensorT<T> embed(const Encoded& input) const {
    if (input.rows != 1 || input.cols != cfg_.s)
      throw std::invalid_argument("cnn: input length != s");
    TensorT<T> a({cfg_.s, cfg_.dim});
    for (std::size_t i = 0; i < cfg_.s; ++i) {
      const auto id = static_cast<std::size_t>(input.ids[i]);
      const T* src = emb_->value.row(id);
      std::copy(src, src + cfg_.dim, a.row(i));
    }
    return a;
  }

  CnnTraceT<T> forward(const Encoded& input, bool train, Rng& rng) const {
    return forward_from(embed(input), train, rng);
  }

  // Split out so saliency checks can differentiate with respect to the
  // embedded input directly.
  CnnTraceT<T> forward_from(TensorT<T> a, bool train, Rng& rng) const {
    CnnTraceT<T> tr;
    tr.input = std::move(a);
    const std::size_t n_f = cfg_.filters_per_branch;

    tr.pooled.reserve(cfg_.branch_widths.size() * n_f);
    for (std::size_t b = 0; b < cfg_.branch_widths.size(); ++b) {
      auto fm = ops::conv1d_valid(tr.input, filters_[b]->value,
                                  biases_[b]->value);
      ops::relu_inplace(fm);
      std::vector<std::size_t> argmax(n_f);
      for (std::size_t f = 0; f < n_f; ++f) {
        T best = fm.at(0, f);
        std::size_t arg = 0;
        for (std::size_t r = 1; r < fm.dim(0); ++r)
          if (fm.at(r, f) > best) {
            best = fm.at(r, f);
            arg = r;
          }
        tr.pooled.push_back(best);
        argmax[f] = arg;
      }
      tr.feature_maps.push_back(std::move(fm));
      tr.pool_argmax.push_back(std::move(argmax));
    }

    tr.dropout_mask =
        ops::dropout_mask<T>(tr.pooled.size(), cfg_.dropout, train, rng);
    std::vector<T> dropped = tr.pooled;
    ops::apply_mask<T>(tr.dropout_mask, dropped.data());

    tr.logits = ops::dense(head_w_->value, head_b_->value, dropped.data());
    tr.probabilities = ops::softmax<T>(tr.logits);
    return tr;
  }

  std::vector<T> forward_eval_probs(const Encoded& input) const {
    Rng no_draws(0);
    return forward(input, false, no_draws).probabilities;
  }

  // Accumulates parameter gradients and returns the gradient with respect
  // to the embedded input rows.
  TensorT<T> backward(const CnnTraceT<T>& tr, std::span<const T> dlogits) {
    const std::size_t n_f = cfg_.filters_per_branch;

    std::vector<T> dropped = tr.pooled;
    ops::apply_mask<T>(tr.dropout_mask, dropped.data());
    std::vector<T> ddropped(dropped.size(), T(0));
    ops::dense_backward(head_w_->value, dropped.data(), dlogits.data(),
                        &head_w_->grad, &head_b_->grad, ddropped.data());
    ops::apply_mask<T>(tr.dropout_mask, ddropped.data());  // through dropout

    TensorT<T> da(tr.input.shape);
    for (std::size_t b = 0; b < cfg_.branch_widths.size(); ++b) {
      const auto& fm = tr.feature_maps[b];
      TensorT<T> dfm(fm.shape);
      for (std::size_t f = 0; f < n_f; ++f)
        dfm.at(tr.pool_argmax[b][f], f) = ddropped[b * n_f + f];
      ops::relu_backward_inplace(fm, dfm);
      ops::conv1d_backward(tr.input, filters_[b]->value, dfm, &da,
                           &filters_[b]->grad, &biases_[b]->grad);
    }
    return da;
  }

  // Scatter the input-row gradient into the embedding table. Pad rows are
  // skipped so row 0 stays exactly zero.
  void scatter_embedding_grad(const Encoded& input, const TensorT<T>& da) {
    if (!cfg_.fine_tune_embeddings) return;
    for (std::size_t i = 0; i < cfg_.s; ++i) {
      const auto id = static_cast<std::size_t>(input.ids[i]);
      if (id == static_cast<std::size_t>(kPadId)) continue;
      T* dst = emb_->grad.row(id);
      const T* src = da.row(i);
      for (std::size_t c = 0; c < cfg_.dim; ++c) dst[c] += src[c];
    }
  }

  // All regions with their embedding norms, evaluation mode.
  std::vector<RegionEmbedding> region_embeddings(const Encoded& input) const {
    Rng no_draws(0);
    auto tr = forward(input, false, no_draws);
    std::vector<RegionEmbedding> regions;
    for (std::size_t b = 0; b < cfg_.branch_widths.size(); ++b) {
      const auto h = cfg_.branch_widths[b];
      const auto& fm = tr.feature_maps[b];
      for (std::size_t r = 0; r < fm.dim(0); ++r) {
        double norm = 0;
        for (std::size_t f = 0; f < cfg_.filters_per_branch; ++f)
          norm += static_cast<double>(fm.at(r, f)) * fm.at(r, f);
        bool pad = false;
        for (std::size_t i = r; i < r + h; ++i)
          if (input.ids[i] == kPadId) pad = true;
        regions.push_back({b, r, std::sqrt(norm), pad});
      }
    }
    return regions;
  }

  // L2 norm, per input position, of the gradient of the predicted-class
  // logit with respect to that embedding row. One backward pass in
  // evaluation mode; parameter values are untouched (gradient buffers are
  // used as scratch and cleared).
  std::vector<double> saliency(const Encoded& input) {
    Rng no_draws(0);
    auto tr = forward(input, false, no_draws);
    std::size_t predicted = 0;
    for (std::size_t j = 1; j < cfg_.k; ++j)
      if (tr.probabilities[j] > tr.probabilities[predicted]) predicted = j;
    std::vector<T> dlogits(cfg_.k, T(0));
    dlogits[predicted] = T(1);
    params_.zero_grads();
    auto da = backward(tr, dlogits);
    params_.zero_grads();
    std::vector<double> scores(cfg_.s);
    for (std::size_t i = 0; i < cfg_.s; ++i) {
      double acc = 0;
      for (std::size_t c = 0; c < cfg_.dim; ++c)
        acc += static_cast<double>(da.at(i, c)) * da.at(i, c);
      scores[i] = std::sqrt(acc);
    }
    return scores;
  }

 private:
  CnnConfig cfg_;
  ParamSetT<T> params_;
  typename ParamSetT<T>::Param* emb_ = nullptr;
  std::vector<typename ParamSetT<T>::Param*> filters_;
  std::vector<typename ParamSetT<T>::Param*> biases_;
  typename ParamSetT<T>::Param* head_w_ = nullptr;
  typename ParamSetT<T>::Param* head_b_ = nullptr;
};

using CnnModel = CnnModelT<float>;

}  // namespace pm
