// SPDX-License-Identifier: Apache-2.0
#include "pm/ops.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

#include "pm/rng.hpp"
#include "pm/tensor.hpp"

using namespace pm;

namespace {

template <typename T>
void rand_fill(TensorT<T>& t, Rng& rng, double lo = -0.5, double hi = 0.5) {
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
}

// independent elementwise oracle, deliberately written region-by-region
template <typename T>
T conv_cell_oracle(const TensorT<T>& in, const TensorT<T>& filters,
                   const TensorT<T>& bias, std::size_t r, std::size_t f) {
  const std::size_t h = filters.dim(1), d = filters.dim(2);
  T acc = bias.at(f);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < d; ++j)
      acc += in.at(r + i, j) * filters.at(f, i, j);
  return acc;
}

}  // namespace

TEST_CASE("conv1d_valid scaling filter") {
  TensorT<double> in({3, 1});
  in.data = {1, 2, 3};
  TensorT<double> flt({1, 1, 1});
  flt.data = {2};
  TensorT<double> bias({1});
  auto out = ops::conv1d_valid(in, flt, bias);
  REQUIRE(out.shape == std::vector<std::size_t>{3, 1});
  CHECK(out.data[0] == doctest::Approx(2));
  CHECK(out.data[1] == doctest::Approx(4));
  CHECK(out.data[2] == doctest::Approx(6));
}

TEST_CASE("conv1d_valid all-ones sum") {
  TensorT<double> in({2, 2});
  in.fill(1.0);
  TensorT<double> flt({1, 2, 2});
  flt.fill(1.0);
  TensorT<double> bias({1});
  auto out = ops::conv1d_valid(in, flt, bias);
  REQUIRE(out.shape == std::vector<std::size_t>{1, 1});
  CHECK(out.data[0] == doctest::Approx(4));
}

TEST_CASE("conv1d_valid matches loop oracle on random cases") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t s = 5 + trial, d = 3, h = 2 + trial % 3, n_f = 4;
    TensorT<double> in({s, d}), flt({n_f, h, d}), bias({n_f});
    rand_fill(in, rng);
    rand_fill(flt, rng);
    rand_fill(bias, rng);
    auto out = ops::conv1d_valid(in, flt, bias);
    REQUIRE(out.dim(0) == s - h + 1);
    REQUIRE(out.dim(1) == n_f);
    for (std::size_t r = 0; r < out.dim(0); ++r)
      for (std::size_t f = 0; f < n_f; ++f)
        CHECK(out.at(r, f) ==
              doctest::Approx(conv_cell_oracle(in, flt, bias, r, f))
                  .epsilon(1e-6));
  }
}

TEST_CASE("conv1d_valid rejects filters taller than input") {
  TensorT<double> in({2, 1}), flt({1, 3, 1}), bias({1});
  CHECK_THROWS_AS(ops::conv1d_valid(in, flt, bias), std::invalid_argument);
}

TEST_CASE("global_max_pool value, argmax, tie rule") {
  std::vector<double> a = {1, 5, 2};
  auto [v1, i1] = ops::global_max_pool<double>(a);
  CHECK(v1 == 5);
  CHECK(i1 == 1);
  std::vector<double> b = {3, 3};
  auto [v2, i2] = ops::global_max_pool<double>(b);
  CHECK(v2 == 3);
  CHECK(i2 == 0);

  Rng rng(5);
  std::vector<double> c(17);
  for (auto& x : c) x = rng.uniform(-1, 1);
  auto [v3, i3] = ops::global_max_pool<double>(c);
  double best = c[0];
  std::size_t arg = 0;
  for (std::size_t i = 1; i < c.size(); ++i)
    if (c[i] > best) best = c[i], arg = i;
  CHECK(v3 == best);
  CHECK(i3 == arg);
}

TEST_CASE("softmax basics") {
  std::vector<double> z = {0.0, 0.0};
  auto p = ops::softmax<double>(z);
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[1] == doctest::Approx(0.5));

  std::vector<double> x = {1.0, 2.0, 3.0};
  auto q = ops::softmax<double>(x);
  const double e1 = std::exp(1.0), e2 = std::exp(2.0), e3 = std::exp(3.0);
  const double s = e1 + e2 + e3;
  CHECK(q[0] == doctest::Approx(e1 / s).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(e2 / s).epsilon(1e-12));
  CHECK(q[2] == doctest::Approx(e3 / s).epsilon(1e-12));

  // shift invariance and sum-to-one over random inputs
  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> v(6);
    for (auto& a : v) a = rng.uniform(-10, 10);
    auto pv = ops::softmax<double>(v);
    double sum = 0;
    for (auto a : pv) sum += a;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    const double c = rng.uniform(-100, 100);
    auto shifted = v;
    for (auto& a : shifted) a += c;
    auto ps = ops::softmax<double>(shifted);
    for (std::size_t i = 0; i < v.size(); ++i)
      CHECK(ps[i] == doctest::Approx(pv[i]).epsilon(1e-9));
  }
}

TEST_CASE("gru_step zero-parameter algebra") {
  ParamSetT<double> ps;
  auto gru = ops::GruParamsT<double>::registered(ps, "g", 4, 3);
  std::vector<double> x(3, 0.0), h_prev = {1.0, -2.0, 3.0, 0.5}, h(4);
  ops::gru_step(gru, x.data(), h_prev.data(), h.data(), nullptr);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(h[i] == doctest::Approx(0.5 * h_prev[i]).epsilon(1e-12));

  std::vector<double> zero(4, 0.0);
  ops::gru_step(gru, x.data(), zero.data(), h.data(), nullptr);
  for (double v : h) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("gru_step matches scalar oracle") {
  Rng rng(23);
  ParamSetT<double> ps;
  const std::size_t d_h = 4, d_in = 3;
  auto gru = ops::GruParamsT<double>::registered(ps, "g", d_h, d_in);
  for (auto& p : ps) rand_fill(p->value, rng);
  std::vector<double> x(d_in), h_prev(d_h), h(d_h);
  for (auto& v : x) v = rng.uniform(-1, 1);
  for (auto& v : h_prev) v = rng.uniform(-1, 1);
  ops::gru_step(gru, x.data(), h_prev.data(), h.data(), nullptr);

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  for (std::size_t i = 0; i < d_h; ++i) {
    double az = gru.bz->value.at(i), ar = gru.br->value.at(i);
    for (std::size_t j = 0; j < d_in; ++j) {
      az += gru.Wz->value.at(i, j) * x[j];
      ar += gru.Wr->value.at(i, j) * x[j];
    }
    for (std::size_t j = 0; j < d_h; ++j) {
      az += gru.Uz->value.at(i, j) * h_prev[j];
      ar += gru.Ur->value.at(i, j) * h_prev[j];
    }
    const double z = sig(az), r_i = sig(ar);
    (void)r_i;
    double ah = gru.bh->value.at(i);
    for (std::size_t j = 0; j < d_in; ++j) ah += gru.Wh->value.at(i, j) * x[j];
    for (std::size_t j = 0; j < d_h; ++j) {
      // reset gate of coordinate j gates h_prev[j]
      double arj = gru.br->value.at(j);
      for (std::size_t k = 0; k < d_in; ++k)
        arj += gru.Wr->value.at(j, k) * x[k];
      for (std::size_t k = 0; k < d_h; ++k)
        arj += gru.Ur->value.at(j, k) * h_prev[k];
      ah += gru.Uh->value.at(i, j) * sig(arj) * h_prev[j];
    }
    const double hc = std::tanh(ah);
    const double expect = (1.0 - z) * h_prev[i] + z * hc;
    CHECK(h[i] == doctest::Approx(expect).epsilon(1e-6));
  }
}

TEST_CASE("bi_gru basics") {
  Rng rng(31);
  ParamSetT<double> ps;
  const std::size_t d_h = 3, d_in = 2;
  auto fwd = ops::GruParamsT<double>::registered(ps, "f", d_h, d_in);
  auto bwd = ops::GruParamsT<double>::registered(ps, "b", d_h, d_in);
  for (auto& p : ps) rand_fill(p->value, rng);

  SUBCASE("T=1 reduces to two concatenated steps") {
    TensorT<double> seq({1, d_in});
    rand_fill(seq, rng);
    std::vector<unsigned char> mask = {1};
    auto ann = ops::bi_gru(fwd, bwd, seq, mask, nullptr);
    std::vector<double> h0(d_h, 0.0), hf(d_h), hb(d_h);
    ops::gru_step(fwd, seq.row(0), h0.data(), hf.data(), nullptr);
    ops::gru_step(bwd, seq.row(0), h0.data(), hb.data(), nullptr);
    for (std::size_t i = 0; i < d_h; ++i) {
      CHECK(ann.at(0, i) == doctest::Approx(hf[i]));
      CHECK(ann.at(0, d_h + i) == doctest::Approx(hb[i]));
    }
  }

  SUBCASE("reversal symmetry with swapped directions") {
    const std::size_t len = 4;
    TensorT<double> seq({len, d_in});
    rand_fill(seq, rng);
    std::vector<unsigned char> mask(len, 1);
    auto ann = ops::bi_gru(fwd, bwd, seq, mask, nullptr);
    TensorT<double> rev({len, d_in});
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t j = 0; j < d_in; ++j)
        rev.at(t, j) = seq.at(len - 1 - t, j);
    auto ann_rev = ops::bi_gru(bwd, fwd, rev, mask, nullptr);
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t i = 0; i < d_h; ++i) {
        CHECK(ann.at(t, i) ==
              doctest::Approx(ann_rev.at(len - 1 - t, d_h + i)).epsilon(1e-12));
        CHECK(ann.at(t, d_h + i) ==
              doctest::Approx(ann_rev.at(len - 1 - t, i)).epsilon(1e-12));
      }
  }

  SUBCASE("fully masked sequence gives zero annotations") {
    TensorT<double> seq({3, d_in});
    rand_fill(seq, rng);
    std::vector<unsigned char> mask(3, 0);
    auto ann = ops::bi_gru(fwd, bwd, seq, mask, nullptr);
    for (double v : ann.data) CHECK(v == 0.0);
  }
}

TEST_CASE("self_attention basics") {
  Rng rng(41);
  ParamSetT<double> ps;
  const std::size_t d_h = 4, d_a = 3;
  auto att = ops::AttentionParamsT<double>::registered(ps, "a", d_a, d_h);
  for (auto& p : ps) rand_fill(p->value, rng);

  SUBCASE("single element gets alpha 1") {
    TensorT<double> H({1, d_h});
    rand_fill(H, rng);
    std::vector<unsigned char> mask = {1};
    auto res = ops::self_attention(att, H, mask, nullptr);
    CHECK(res.alpha[0] == doctest::Approx(1.0));
    for (std::size_t i = 0; i < d_h; ++i)
      CHECK(res.att[i] == doctest::Approx(H.at(0, i)));
  }

  SUBCASE("identical annotations share weight equally") {
    TensorT<double> H({2, d_h});
    for (std::size_t j = 0; j < d_h; ++j)
      H.at(0, j) = H.at(1, j) = rng.uniform(-1, 1);
    std::vector<unsigned char> mask = {1, 1};
    auto res = ops::self_attention(att, H, mask, nullptr);
    CHECK(res.alpha[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(res.alpha[1] == doctest::Approx(0.5).epsilon(1e-12));
  }

  SUBCASE("alphas match independent exp/sum computation") {
    TensorT<double> H({5, d_h});
    rand_fill(H, rng);
    std::vector<unsigned char> mask = {1, 1, 0, 1, 1};
    auto res = ops::self_attention(att, H, mask, nullptr);
    std::vector<double> scores;
    for (std::size_t t = 0; t < 5; ++t) {
      if (!mask[t]) continue;
      double sc = 0;
      for (std::size_t i = 0; i < d_a; ++i) {
        double pre = att.b->value.at(i);
        for (std::size_t j = 0; j < d_h; ++j)
          pre += att.W->value.at(i, j) * H.at(t, j);
        sc += std::tanh(pre) * att.u->value.at(i);
      }
      scores.push_back(sc);
    }
    double denom = 0;
    for (double sc : scores) denom += std::exp(sc);
    std::size_t k = 0;
    for (std::size_t t = 0; t < 5; ++t) {
      if (!mask[t]) {
        CHECK(res.alpha[t] == 0.0);
        continue;
      }
      CHECK(res.alpha[t] ==
            doctest::Approx(std::exp(scores[k]) / denom).epsilon(1e-6));
      ++k;
    }
  }

  SUBCASE("fully masked sequence throws") {
    TensorT<double> H({2, d_h});
    std::vector<unsigned char> mask = {0, 0};
    CHECK_THROWS_AS(ops::self_attention(att, H, mask, nullptr),
                    std::invalid_argument);
  }
}

TEST_CASE("dropout") {
  Rng rng(3);
  SUBCASE("rate 0 and eval mode are the identity without consuming draws") {
    const auto before = rng.next_u64();
    Rng a(9), b(9);
    auto m0 = ops::dropout_mask<double>(16, 0.0, true, a);
    auto m1 = ops::dropout_mask<double>(16, 0.5, false, b);
    for (double v : m0) CHECK(v == 1.0);
    for (double v : m1) CHECK(v == 1.0);
    CHECK(a.next_u64() == b.next_u64());
    (void)before;
  }
  SUBCASE("Monte-Carlo mean of kept mass is within 2%") {
    const double rate = 0.3;
    double sum = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      auto m = ops::dropout_mask<double>(1, rate, true, rng);
      sum += m[0];
    }
    CHECK(sum / n == doctest::Approx(1.0).epsilon(0.02));
  }
}

TEST_CASE("grad_check: linear function is exact") {
  Rng rng(77);
  ParamSetT<double> ps;
  auto& w = ps.add("w", {8});
  rand_fill(w.value, rng);
  std::vector<double> c(8);
  for (auto& v : c) v = rng.uniform(-2, 2);

  auto loss = [&] {
    double acc = 0;
    for (std::size_t i = 0; i < 8; ++i) acc += c[i] * w.value.at(i);
    return acc;
  };
  ps.zero_grads();
  for (std::size_t i = 0; i < 8; ++i) w.grad.at(i) = c[i];
  CHECK(ops::grad_check_max_rel_err(ps, loss) < 1e-10);
}

TEST_CASE("grad_check: conv + pool + dense composite") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    ParamSetT<double> ps;
    const std::size_t s = 7, d = 3, h = 3, n_f = 4;
    auto& input = ps.add("input", {s, d});
    auto& flt = ps.add("filters", {n_f, h, d});
    auto& bias = ps.add("bias", {n_f});
    auto& proj = ps.add("proj", {n_f});
    for (auto& p : ps) rand_fill(p->value, rng);

    auto forward = [&] {
      auto fm = ops::conv1d_valid(input.value, flt.value, bias.value);
      ops::relu_inplace(fm);
      double acc = 0;
      for (std::size_t f = 0; f < n_f; ++f) {
        std::vector<double> col(fm.dim(0));
        for (std::size_t r = 0; r < fm.dim(0); ++r) col[r] = fm.at(r, f);
        auto [v, arg] = ops::global_max_pool<double>(col);
        (void)arg;
        acc += proj.value.at(f) * v;
      }
      return acc;
    };

    // forward + hand backward
    ps.zero_grads();
    auto fm = ops::conv1d_valid(input.value, flt.value, bias.value);
    auto post = fm;
    ops::relu_inplace(post);
    TensorT<double> dfm(post.shape);
    for (std::size_t f = 0; f < n_f; ++f) {
      std::vector<double> col(post.dim(0));
      for (std::size_t r = 0; r < post.dim(0); ++r) col[r] = post.at(r, f);
      auto [v, arg] = ops::global_max_pool<double>(col);
      proj.grad.at(f) += v;
      dfm.at(arg, f) += proj.value.at(f);
    }
    ops::relu_backward_inplace(post, dfm);
    ops::conv1d_backward(input.value, flt.value, dfm, &input.grad, &flt.grad,
                         &bias.grad);

    CHECK(ops::grad_check_max_rel_err(ps, forward) < 1e-4);
  }
}

TEST_CASE("grad_check: bi_gru + attention sentence encoder") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed * 13);
    ParamSetT<double> ps;
    const std::size_t len = 5, d_in = 3, d_h = 2, d_a = 3;
    auto& seq = ps.add("seq", {len, d_in});
    auto fwd = ops::GruParamsT<double>::registered(ps, "f", d_h, d_in);
    auto bwd = ops::GruParamsT<double>::registered(ps, "b", d_h, d_in);
    auto att = ops::AttentionParamsT<double>::registered(ps, "a", d_a, 2 * d_h);
    auto& proj = ps.add("proj", {2 * d_h});
    for (auto& p : ps) rand_fill(p->value, rng);
    std::vector<unsigned char> mask = {1, 1, 1, 1, 0};

    auto forward = [&] {
      auto ann = ops::bi_gru(fwd, bwd, seq.value, mask, nullptr);
      auto res = ops::self_attention(att, ann, mask, nullptr);
      double acc = 0;
      for (std::size_t i = 0; i < res.att.size(); ++i)
        acc += proj.value.at(i) * res.att[i];
      return acc;
    };

    ps.zero_grads();
    ops::BiGruCacheT<double> gcache;
    auto ann = ops::bi_gru(fwd, bwd, seq.value, mask, &gcache);
    ops::AttentionCacheT<double> acache;
    auto res = ops::self_attention(att, ann, mask, &acache);
    for (std::size_t i = 0; i < res.att.size(); ++i)
      proj.grad.at(i) += res.att[i];
    std::vector<double> datt(proj.value.data);
    TensorT<double> dann(ann.shape);
    ops::self_attention_backward(att, acache, ann, datt.data(), &dann);
    ops::bi_gru_backward(fwd, bwd, gcache, dann, &seq.grad);

    CHECK(ops::grad_check_max_rel_err(ps, forward) < 1e-4);
  }
}
