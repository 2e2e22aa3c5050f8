// SPDX-License-Identifier: Apache-2.0
//
// Dense layer math for the two sequence models: 1-D valid convolution,
// global 1-max pooling, GRU steps, bidirectional GRU over masked sequences,
// dot-product self-attention, softmax, dense/relu/tanh/dropout. Every
// forward has an exact reverse-mode backward; grad_check_max_rel_err
// verifies them against central finite differences.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <type_traits>
#include <stdexcept>
#include <string>
#include <vector>

#include "pm/rng.hpp"
#include "pm/tensor.hpp"

namespace pm::ops {

// ---------------------------------------------------------------------------
// small dense helpers

// y = W x, W: out x in (row-major)
template <typename T>
void matvec(const TensorT<T>& W, const T* x, T* y) {
  const std::size_t out = W.dim(0), in = W.dim(1);
  for (std::size_t i = 0; i < out; ++i) {
    const T* w = W.row(i);
    T acc = 0;
    for (std::size_t j = 0; j < in; ++j) acc += w[j] * x[j];
    y[i] = acc;
  }
}

template <typename T>
void matvec_add(const TensorT<T>& W, const T* x, T* y) {
  const std::size_t out = W.dim(0), in = W.dim(1);
  for (std::size_t i = 0; i < out; ++i) {
    const T* w = W.row(i);
    T acc = 0;
    for (std::size_t j = 0; j < in; ++j) acc += w[j] * x[j];
    y[i] += acc;
  }
}

// dx += W^T dy
template <typename T>
void matvec_t_add(const TensorT<T>& W, const T* dy, T* dx) {
  const std::size_t out = W.dim(0), in = W.dim(1);
  for (std::size_t i = 0; i < out; ++i) {
    const T* w = W.row(i);
    const T g = dy[i];
    if (g == T(0)) continue;
    for (std::size_t j = 0; j < in; ++j) dx[j] += w[j] * g;
  }
}

// dW += dy x^T
template <typename T>
void outer_add(TensorT<T>& dW, const T* dy, const T* x) {
  const std::size_t out = dW.dim(0), in = dW.dim(1);
  for (std::size_t i = 0; i < out; ++i) {
    T* w = dW.row(i);
    const T g = dy[i];
    if (g == T(0)) continue;
    for (std::size_t j = 0; j < in; ++j) w[j] += g * x[j];
  }
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// ---------------------------------------------------------------------------
// convolution and pooling

// input: s x d, filters: n_f x h x d, bias: n_f  ->  (s - h + 1) x n_f
// out[r][f] = sum(input[r:r+h, :] * filter_f) + bias_f
template <typename T>
TensorT<T> conv1d_valid(const TensorT<T>& input, const TensorT<T>& filters,
                        const TensorT<T>& bias) {
  const std::size_t s = input.dim(0), d = input.dim(1);
  const std::size_t n_f = filters.dim(0), h = filters.dim(1);
  if (h > s) throw std::invalid_argument("conv1d_valid: filter taller than input");
  if (filters.dim(2) != d) throw std::invalid_argument("conv1d_valid: depth mismatch");
  TensorT<T> out({s - h + 1, n_f});
  for (std::size_t r = 0; r + h <= s; ++r) {
    const T* win = input.row(r);  // h*d contiguous values
    T* orow = out.row(r);
    for (std::size_t f = 0; f < n_f; ++f) {
      const T* flt = filters.row(f);
      T acc = bias.at(f);
      for (std::size_t k = 0; k < h * d; ++k) acc += win[k] * flt[k];
      orow[f] = acc;
    }
  }
  return out;
}

template <typename T>
void conv1d_backward(const TensorT<T>& input, const TensorT<T>& filters,
                     const TensorT<T>& dout, TensorT<T>* dinput,
                     TensorT<T>* dfilters, TensorT<T>* dbias) {
  const std::size_t s = input.dim(0), d = input.dim(1);
  const std::size_t n_f = filters.dim(0), h = filters.dim(1);
  for (std::size_t r = 0; r + h <= s; ++r) {
    const T* win = input.row(r);
    const T* grow = dout.row(r);
    for (std::size_t f = 0; f < n_f; ++f) {
      const T g = grow[f];
      if (g == T(0)) continue;
      if (dbias) dbias->at(f) += g;
      if (dfilters) {
        T* df = dfilters->row(f);
        for (std::size_t k = 0; k < h * d; ++k) df[k] += g * win[k];
      }
      if (dinput) {
        T* di = dinput->row(r);
        const T* flt = filters.row(f);
        for (std::size_t k = 0; k < h * d; ++k) di[k] += g * flt[k];
      }
    }
  }
}

// Max and first index of the max (ties break to the smallest index, which
// keeps region attribution deterministic). Backward routes the gradient to
// the argmax only.
template <typename T>
std::pair<T, std::size_t> global_max_pool(std::span<const T> feature_map) {
  if (feature_map.empty())
    throw std::invalid_argument("global_max_pool: empty feature map");
  std::size_t arg = 0;
  T best = feature_map[0];
  for (std::size_t i = 1; i < feature_map.size(); ++i) {
    if (feature_map[i] > best) {
      best = feature_map[i];
      arg = i;
    }
  }
  return {best, arg};
}

// ---------------------------------------------------------------------------
// elementwise

template <typename T>
void relu_inplace(TensorT<T>& x) {
  for (T& v : x.data) v = v > T(0) ? v : T(0);
}

// dpre = dpost * 1[pre > 0]; `post` is the relu output, which carries the
// same sign information (post > 0 iff pre > 0).
template <typename T>
void relu_backward_inplace(const TensorT<T>& post, TensorT<T>& d) {
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!(post.data[i] > T(0))) d.data[i] = T(0);
}

template <typename T>
std::vector<T> tanh_vec(std::span<const T> x) {
  std::vector<T> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

// ---------------------------------------------------------------------------
// softmax

// Stabilized by max subtraction; invariant under constant input shifts.
template <typename T>
std::vector<T> softmax(std::span<const T> x) {
  if (x.empty()) throw std::invalid_argument("softmax: empty input");
  T mx = x[0];
  for (T v : x) mx = std::max(mx, v);
  std::vector<T> out(x.size());
  T sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    sum += out[i];
  }
  for (T& v : out) v /= sum;
  return out;
}

// ds = J_softmax^T dp given p = softmax(s)
template <typename T>
std::vector<T> softmax_backward(std::span<const T> p, std::span<const T> dp) {
  T dot = 0;
  for (std::size_t i = 0; i < p.size(); ++i) dot += p[i] * dp[i];
  std::vector<T> ds(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) ds[i] = p[i] * (dp[i] - dot);
  return ds;
}

// ---------------------------------------------------------------------------
// dense

template <typename T>
std::vector<T> dense(const TensorT<T>& W, const TensorT<T>& b, const T* x) {
  std::vector<T> y(W.dim(0));
  matvec(W, x, y.data());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.at(i);
  return y;
}

template <typename T>
void dense_backward(const TensorT<T>& W, const T* x, const T* dy,
                    TensorT<T>* dW, TensorT<T>* db, T* dx) {
  if (dW) outer_add(*dW, dy, x);
  if (db)
    for (std::size_t i = 0; i < W.dim(0); ++i) db->at(i) += dy[i];
  if (dx) matvec_t_add(W, dy, dx);
}

// ---------------------------------------------------------------------------
// dropout

// Inverted dropout: kept units are scaled by 1/(1-rate) so evaluation mode
// is the identity. The mask stores the multiplier (0 or 1/(1-rate)).
// No RNG draws are consumed when inactive (rate == 0 or eval mode).
template <typename T>
std::vector<T> dropout_mask(std::size_t n, double rate, bool train, Rng& rng) {
  std::vector<T> mask(n, T(1));
  if (!train || rate <= 0.0) return mask;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  const T keep_scale = T(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < n; ++i)
    mask[i] = rng.uniform() < rate ? T(0) : keep_scale;
  return mask;
}

template <typename T>
void apply_mask(std::span<const T> mask, T* x) {
  for (std::size_t i = 0; i < mask.size(); ++i) x[i] *= mask[i];
}

// ---------------------------------------------------------------------------
// GRU

// z = sigmoid(Wz x + Uz h_prev + bz)
// r = sigmoid(Wr x + Ur h_prev + br)
// hc = tanh(Wh x + Uh (r . h_prev) + bh)
// h  = (1 - z) . h_prev + z . hc
template <typename T>
struct GruParamsT {
  using Param = typename ParamSetT<T>::Param;
  Param *Wz, *Uz, *bz, *Wr, *Ur, *br, *Wh, *Uh, *bh;

  std::size_t hidden() const { return Wz->value.dim(0); }
  std::size_t input_dim() const { return Wz->value.dim(1); }

  static GruParamsT registered(ParamSetT<T>& ps, const std::string& prefix,
                               std::size_t d_h, std::size_t d_in) {
    GruParamsT g;
    g.Wz = &ps.add(prefix + ".Wz", {d_h, d_in});
    g.Uz = &ps.add(prefix + ".Uz", {d_h, d_h});
    g.bz = &ps.add(prefix + ".bz", {d_h});
    g.Wr = &ps.add(prefix + ".Wr", {d_h, d_in});
    g.Ur = &ps.add(prefix + ".Ur", {d_h, d_h});
    g.br = &ps.add(prefix + ".br", {d_h});
    g.Wh = &ps.add(prefix + ".Wh", {d_h, d_in});
    g.Uh = &ps.add(prefix + ".Uh", {d_h, d_h});
    g.bh = &ps.add(prefix + ".bh", {d_h});
    return g;
  }
};

template <typename T>
struct GruStepCacheT {
  std::vector<T> x, h_prev, z, r, hc, rh;  // rh = r . h_prev
};

template <typename T>
void gru_step(const GruParamsT<T>& p, const T* x, const T* h_prev, T* h_out,
              std::type_identity_t<GruStepCacheT<T>>* cache) {
  const std::size_t d_h = p.hidden(), d_in = p.input_dim();
  std::vector<T> z(d_h), r(d_h), hc(d_h), rh(d_h);

  matvec(p.Wz->value, x, z.data());
  matvec_add(p.Uz->value, h_prev, z.data());
  for (std::size_t i = 0; i < d_h; ++i) z[i] = sigmoid(z[i] + p.bz->value.at(i));

  matvec(p.Wr->value, x, r.data());
  matvec_add(p.Ur->value, h_prev, r.data());
  for (std::size_t i = 0; i < d_h; ++i) r[i] = sigmoid(r[i] + p.br->value.at(i));

  for (std::size_t i = 0; i < d_h; ++i) rh[i] = r[i] * h_prev[i];
  matvec(p.Wh->value, x, hc.data());
  matvec_add(p.Uh->value, rh.data(), hc.data());
  for (std::size_t i = 0; i < d_h; ++i)
    hc[i] = std::tanh(hc[i] + p.bh->value.at(i));

  for (std::size_t i = 0; i < d_h; ++i)
    h_out[i] = (T(1) - z[i]) * h_prev[i] + z[i] * hc[i];

  if (cache) {
    cache->x.assign(x, x + d_in);
    cache->h_prev.assign(h_prev, h_prev + d_h);
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->hc = std::move(hc);
    cache->rh = std::move(rh);
  }
}

// Accumulates parameter gradients; dh_prev and dx are accumulated too.
template <typename T>
void gru_step_backward(const GruParamsT<T>& p, const GruStepCacheT<T>& c,
                       const T* dh, T* dh_prev, T* dx) {
  const std::size_t d_h = p.hidden();
  std::vector<T> daz(d_h), dar(d_h), dah(d_h), dq(d_h);

  for (std::size_t i = 0; i < d_h; ++i) {
    const T dz = dh[i] * (c.hc[i] - c.h_prev[i]);
    daz[i] = dz * c.z[i] * (T(1) - c.z[i]);
    const T dhc = dh[i] * c.z[i];
    dah[i] = dhc * (T(1) - c.hc[i] * c.hc[i]);
    dh_prev[i] += dh[i] * (T(1) - c.z[i]);
  }

  // through the candidate's reset-gate product: dq = Uh^T dah
  matvec_t_add(p.Uh->value, dah.data(), dq.data());
  for (std::size_t i = 0; i < d_h; ++i) {
    const T dr = dq[i] * c.h_prev[i];
    dar[i] = dr * c.r[i] * (T(1) - c.r[i]);
    dh_prev[i] += dq[i] * c.r[i];
  }

  matvec_t_add(p.Uz->value, daz.data(), dh_prev);
  matvec_t_add(p.Ur->value, dar.data(), dh_prev);

  matvec_t_add(p.Wz->value, daz.data(), dx);
  matvec_t_add(p.Wr->value, dar.data(), dx);
  matvec_t_add(p.Wh->value, dah.data(), dx);

  outer_add(p.Wz->grad, daz.data(), c.x.data());
  outer_add(p.Uz->grad, daz.data(), c.h_prev.data());
  outer_add(p.Wr->grad, dar.data(), c.x.data());
  outer_add(p.Ur->grad, dar.data(), c.h_prev.data());
  outer_add(p.Wh->grad, dah.data(), c.x.data());
  outer_add(p.Uh->grad, dah.data(), c.rh.data());
  for (std::size_t i = 0; i < d_h; ++i) {
    p.bz->grad.at(i) += daz[i];
    p.br->grad.at(i) += dar[i];
    p.bh->grad.at(i) += dah[i];
  }
}

// ---------------------------------------------------------------------------
// bidirectional GRU over a masked sequence

// Pad positions (mask[t] == 0) are skipped: their annotation rows stay zero
// and the hidden state carries over them unchanged. With right-side padding
// this matches running each direction over the real prefix only.
template <typename T>
struct BiGruCacheT {
  std::vector<std::size_t> steps_fwd, steps_bwd;  // real positions in process order
  std::vector<GruStepCacheT<T>> cache_fwd, cache_bwd;
};

template <typename T>
TensorT<T> bi_gru(const GruParamsT<T>& fwd, const GruParamsT<T>& bwd,
                  const TensorT<T>& seq, std::span<const unsigned char> mask,
                  std::type_identity_t<BiGruCacheT<T>>* cache) {
  const std::size_t len = seq.dim(0);
  const std::size_t d_h = fwd.hidden();
  if (bwd.hidden() != d_h)
    throw std::invalid_argument("bi_gru: direction width mismatch");
  TensorT<T> ann({len, 2 * d_h});

  std::vector<T> h(d_h, T(0));
  for (std::size_t t = 0; t < len; ++t) {
    if (!mask[t]) continue;
    GruStepCacheT<T> c;
    std::vector<T> h_next(d_h);
    gru_step(fwd, seq.row(t), h.data(), h_next.data(),
             cache ? &c : nullptr);
    h = std::move(h_next);
    std::copy(h.begin(), h.end(), ann.row(t));
    if (cache) {
      cache->steps_fwd.push_back(t);
      cache->cache_fwd.push_back(std::move(c));
    }
  }

  std::fill(h.begin(), h.end(), T(0));
  for (std::size_t ti = len; ti-- > 0;) {
    if (!mask[ti]) continue;
    GruStepCacheT<T> c;
    std::vector<T> h_next(d_h);
    gru_step(bwd, seq.row(ti), h.data(), h_next.data(),
             cache ? &c : nullptr);
    h = std::move(h_next);
    std::copy(h.begin(), h.end(), ann.row(ti) + d_h);
    if (cache) {
      cache->steps_bwd.push_back(ti);
      cache->cache_bwd.push_back(std::move(c));
    }
  }
  return ann;
}

template <typename T>
void bi_gru_backward(const GruParamsT<T>& fwd, const GruParamsT<T>& bwd,
                     const BiGruCacheT<T>& cache, const TensorT<T>& dann,
                     TensorT<T>* dseq) {
  const std::size_t d_h = fwd.hidden();
  // forward direction, reverse process order
  std::vector<T> dh_carry(d_h, T(0));
  for (std::size_t k = cache.steps_fwd.size(); k-- > 0;) {
    const std::size_t t = cache.steps_fwd[k];
    std::vector<T> dh(d_h);
    for (std::size_t i = 0; i < d_h; ++i) dh[i] = dann.at(t, i) + dh_carry[i];
    std::fill(dh_carry.begin(), dh_carry.end(), T(0));
    gru_step_backward(fwd, cache.cache_fwd[k], dh.data(), dh_carry.data(),
                      dseq ? dseq->row(t) : nullptr);
  }
  // backward direction
  std::fill(dh_carry.begin(), dh_carry.end(), T(0));
  for (std::size_t k = cache.steps_bwd.size(); k-- > 0;) {
    const std::size_t t = cache.steps_bwd[k];
    std::vector<T> dh(d_h);
    for (std::size_t i = 0; i < d_h; ++i)
      dh[i] = dann.at(t, d_h + i) + dh_carry[i];
    std::fill(dh_carry.begin(), dh_carry.end(), T(0));
    gru_step_backward(bwd, cache.cache_bwd[k], dh.data(), dh_carry.data(),
                      dseq ? dseq->row(t) : nullptr);
  }
}

// ---------------------------------------------------------------------------
// self-attention

// u_t = tanh(W h_t + b); alpha = softmax over unmasked t of u_t . u;
// att = sum alpha_t h_t. Masked positions receive alpha = 0.
template <typename T>
struct AttentionParamsT {
  using Param = typename ParamSetT<T>::Param;
  Param *W, *b, *u;

  static AttentionParamsT registered(ParamSetT<T>& ps,
                                     const std::string& prefix,
                                     std::size_t d_a, std::size_t d_h) {
    AttentionParamsT a;
    a.W = &ps.add(prefix + ".W", {d_a, d_h});
    a.b = &ps.add(prefix + ".b", {d_a});
    a.u = &ps.add(prefix + ".u", {d_a});
    return a;
  }
};

template <typename T>
struct AttentionCacheT {
  std::vector<std::size_t> pos;        // unmasked positions
  std::vector<std::vector<T>> ut;      // tanh outputs per unmasked position
  std::vector<T> alpha_packed;         // softmax over unmasked positions
};

template <typename T>
struct AttentionResultT {
  std::vector<T> att;    // d_h
  std::vector<T> alpha;  // full length, zero at masked positions
};

template <typename T>
AttentionResultT<T> self_attention(const AttentionParamsT<T>& p,
                                   const TensorT<T>& H,
                                   std::span<const unsigned char> mask,
                                   std::type_identity_t<AttentionCacheT<T>>* cache) {
  const std::size_t len = H.dim(0), d_h = H.dim(1);
  const std::size_t d_a = p.W->value.dim(0);
  AttentionResultT<T> res;
  res.alpha.assign(len, T(0));
  res.att.assign(d_h, T(0));

  std::vector<std::size_t> pos;
  std::vector<std::vector<T>> ut;
  std::vector<T> scores;
  for (std::size_t t = 0; t < len; ++t) {
    if (!mask[t]) continue;
    std::vector<T> a(d_a);
    matvec(p.W->value, H.row(t), a.data());
    for (std::size_t i = 0; i < d_a; ++i) a[i] = std::tanh(a[i] + p.b->value.at(i));
    T score = 0;
    for (std::size_t i = 0; i < d_a; ++i) score += a[i] * p.u->value.at(i);
    pos.push_back(t);
    ut.push_back(std::move(a));
    scores.push_back(score);
  }
  if (pos.empty())
    throw std::invalid_argument("self_attention: fully masked sequence");

  std::vector<T> alpha = softmax<T>(scores);
  for (std::size_t k = 0; k < pos.size(); ++k) {
    res.alpha[pos[k]] = alpha[k];
    const T* h = H.row(pos[k]);
    for (std::size_t i = 0; i < d_h; ++i) res.att[i] += alpha[k] * h[i];
  }
  if (cache) {
    cache->pos = std::move(pos);
    cache->ut = std::move(ut);
    cache->alpha_packed = std::move(alpha);
  }
  return res;
}

template <typename T>
void self_attention_backward(const AttentionParamsT<T>& p,
                             const AttentionCacheT<T>& c, const TensorT<T>& H,
                             const T* datt, TensorT<T>* dH) {
  const std::size_t d_h = H.dim(1);
  const std::size_t d_a = p.W->value.dim(0);
  const std::size_t n = c.pos.size();

  // through att = sum alpha_t h_t
  std::vector<T> dalpha(n);
  for (std::size_t k = 0; k < n; ++k) {
    const T* h = H.row(c.pos[k]);
    T acc = 0;
    for (std::size_t i = 0; i < d_h; ++i) acc += datt[i] * h[i];
    dalpha[k] = acc;
    if (dH) {
      T* dh = dH->row(c.pos[k]);
      for (std::size_t i = 0; i < d_h; ++i) dh[i] += c.alpha_packed[k] * datt[i];
    }
  }

  std::vector<T> dscores =
      softmax_backward<T>(c.alpha_packed, dalpha);

  for (std::size_t k = 0; k < n; ++k) {
    const T ds = dscores[k];
    const auto& a = c.ut[k];
    std::vector<T> dpre(d_a);
    for (std::size_t i = 0; i < d_a; ++i) {
      p.u->grad.at(i) += ds * a[i];
      dpre[i] = ds * p.u->value.at(i) * (T(1) - a[i] * a[i]);
    }
    outer_add(p.W->grad, dpre.data(), H.row(c.pos[k]));
    for (std::size_t i = 0; i < d_a; ++i) p.b->grad.at(i) += dpre[i];
    if (dH) matvec_t_add(p.W->value, dpre.data(), dH->row(c.pos[k]));
  }
}

// ---------------------------------------------------------------------------
// gradient checking

// Central finite differences against the gradients already accumulated in
// `ps`. The caller runs one forward+backward to populate the grads; `loss`
// replays the forward pass from the current parameter values. Relative
// error: |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|).
template <typename T, typename LossFn>
double grad_check_max_rel_err(ParamSetT<T>& ps, LossFn loss, T eps = T(1e-4)) {
  double max_err = 0;
  for (auto& p : ps) {
    if (!p->trainable) continue;
    for (std::size_t i = p->frozen_scalars; i < p->value.size(); ++i) {
      const T saved = p->value.data[i];
      p->value.data[i] = saved + eps;
      const double lp = loss();
      p->value.data[i] = saved - eps;
      const double lm = loss();
      p->value.data[i] = saved;
      const double fd = (lp - lm) / (2.0 * static_cast<double>(eps));
      const double ad = static_cast<double>(p->grad.data[i]);
      const double err =
          std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
      max_err = std::max(max_err, err);
    }
  }
  return max_err;
}

}  // namespace pm::ops
