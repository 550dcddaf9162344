#include <doctest.h>

#include <cmath>

#include "morphinn/loss.hpp"
#include "morphinn/numerics.hpp"
#include "test_helpers.hpp"

using namespace morphinn;
using namespace morphinn::testing;

namespace {

Mlp identity_mlp(std::size_t n) {
  Mlp net;
  MlpLayer layer;
  layer.w = Mat(n, n);
  for (std::size_t i = 0; i < n; ++i) layer.w.at(i, i) = 1.0;
  layer.b.assign(n, 0.0);
  layer.act = Act::kIdentity;
  net.layers.push_back(std::move(layer));
  return net;
}

}  // namespace

TEST_CASE("mlp_forward identity layer") {
  const Mlp net = identity_mlp(2);
  const Vec out = mlp_forward(net, {1.0, -2.0});
  CHECK(out == Vec{1.0, -2.0});
}

TEST_CASE("mlp_forward relu layer") {
  Mlp net = identity_mlp(2);
  net.layers[0].b = {0.0, -3.0};
  net.layers[0].act = Act::kReLU;
  const Vec out = mlp_forward(net, {2.0, 1.0});
  CHECK(out == Vec{2.0, 0.0});
}

TEST_CASE("mlp_forward zero weights returns bias") {
  Mlp net;
  net.layers.push_back({Mat(3, 2), {0.5, -1.5, 2.0}, Act::kIdentity});
  const Vec out = mlp_forward(net, {7.0, -4.0});
  CHECK(out == Vec{0.5, -1.5, 2.0});
}

TEST_CASE("mlp_forward rejects wrong input length") {
  const Mlp net = identity_mlp(2);
  CHECK_THROWS_AS(mlp_forward(net, {1.0, 2.0, 3.0}), std::invalid_argument);
}

TEST_CASE("mlp_forward is deterministic") {
  Rng rng(11);
  const Mlp net = make_mlp(4, 3, 8, 3, WeightInit::kOrthogonal, rng);
  Rng vrng(12);
  const Vec x = random_vec(4, vrng);
  const Vec a = mlp_forward(net, x);
  const Vec b = mlp_forward(net, x);
  CHECK(a == b);
}

TEST_CASE("mlp_backward identity layer") {
  const Mlp net = identity_mlp(2);
  MlpCache cache;
  mlp_forward(net, {3.0, 5.0}, &cache);
  MlpGrads grads = make_grads(net);
  const Vec g_in = mlp_backward(net, cache, {1.0, 2.0}, grads);
  CHECK(g_in == Vec{1.0, 2.0});
  // weight grad = upstream (outer) input
  CHECK(grads.w[0].at(0, 0) == 3.0);
  CHECK(grads.w[0].at(0, 1) == 5.0);
  CHECK(grads.w[0].at(1, 0) == 6.0);
  CHECK(grads.w[0].at(1, 1) == 10.0);
  CHECK(grads.b[0] == Vec{1.0, 2.0});
}

TEST_CASE("mlp_backward gates gradients at negative relu pre-activations") {
  Mlp net = identity_mlp(2);
  net.layers[0].b = {0.0, -3.0};
  net.layers[0].act = Act::kReLU;
  MlpCache cache;
  mlp_forward(net, {2.0, 1.0}, &cache);  // pre = [2, -2]
  MlpGrads grads = make_grads(net);
  const Vec g_in = mlp_backward(net, cache, {1.0, 1.0}, grads);
  CHECK(g_in[0] == 1.0);
  CHECK(g_in[1] == 0.0);
  CHECK(grads.w[0].at(1, 0) == 0.0);
  CHECK(grads.b[0][1] == 0.0);
}

TEST_CASE("mlp_backward rejects a cache from another net") {
  const Mlp a = identity_mlp(2);
  const Mlp b = identity_mlp(2);
  MlpCache cache;
  mlp_forward(a, {1.0, 1.0}, &cache);
  MlpGrads grads = make_grads(b);
  CHECK_THROWS_AS(mlp_backward(b, cache, {1.0, 1.0}, grads), std::logic_error);
}

TEST_CASE("mlp gradients match finite differences") {
  Rng rng(99);
  for (int draw = 0; draw < 100; ++draw) {
    Mlp net = make_mlp(3, 2, 5, 2, WeightInit::kGaussian, rng);
    const Vec x = random_vec(3, rng);
    const Vec probe = random_vec(2, rng);
    auto scalar = [&](const Mlp& n, const Vec& in) {
      const Vec out = mlp_forward(n, in);
      double s = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) s += probe[i] * out[i];
      return s;
    };

    MlpCache cache;
    mlp_forward(net, x, &cache);
    MlpGrads grads = make_grads(net);
    const Vec g_in = mlp_backward(net, cache, probe, grads);

    const Vec fd_in =
        finite_difference_grad([&](const Vec& p) { return scalar(net, p); }, x);
    CHECK(max_rel_err(g_in, fd_in) < 1e-4);

    // every weight and bias of the first layer, spot the second
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
      Vec& wv = net.layers[l].w.v;
      const Vec fd_w = finite_difference_grad(
          [&](const Vec& p) {
            Mlp n2 = net;
            n2.layers[l].w.v = p;
            return scalar(n2, x);
          },
          wv);
      CHECK(max_rel_err(grads.w[l].v, fd_w) < 1e-4);
    }
  }
}

TEST_CASE("orthogonal_init square") {
  const Mat m = orthogonal_init(4, 4, std::uint64_t(7));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 4; ++k) dot += m.at(i, k) * m.at(j, k);
      CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-8);
    }
}

TEST_CASE("orthogonal_init wide is row-orthonormal") {
  const Mat m = orthogonal_init(2, 8, std::uint64_t(1));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 8; ++k) dot += m.at(i, k) * m.at(j, k);
      CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-8);
    }
}

TEST_CASE("orthogonal_init tall is column-orthonormal") {
  const Mat m = orthogonal_init(8, 3, std::uint64_t(21));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 8; ++k) dot += m.at(k, i) * m.at(k, j);
      CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-8);
    }
}

TEST_CASE("orthogonal_init deterministic per seed") {
  const Mat a = orthogonal_init(5, 5, std::uint64_t(42));
  const Mat b = orthogonal_init(5, 5, std::uint64_t(42));
  CHECK(a.v == b.v);
  const Mat c = orthogonal_init(5, 5, std::uint64_t(43));
  CHECK(a.v != c.v);
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  Vec p{1.0, -2.0};
  Vec g{0.0, 0.0};
  AdamState st = make_adam({2}, 1e-3);
  adam_step({{"p", std::span<double>(p), std::span<const double>(g)}}, st);
  CHECK(p == Vec{1.0, -2.0});
  CHECK(st.step == 1);
}

TEST_CASE("adam first step on unit gradient moves by about -lr") {
  Vec p{0.0};
  Vec g{1.0};
  AdamState st = make_adam({1}, 1e-3);
  adam_step({{"p", std::span<double>(p), std::span<const double>(g)}}, st);
  CHECK(p[0] == doctest::Approx(-0.001).epsilon(1e-6));
}

TEST_CASE("adam trajectories are reproducible") {
  auto run = [] {
    Rng rng(5);
    Vec p = random_vec(6, rng);
    AdamState st = make_adam({6}, 1e-2);
    for (int i = 0; i < 20; ++i) {
      const Vec g = random_vec(6, rng);
      adam_step({{"p", std::span<double>(p), std::span<const double>(g)}}, st);
    }
    return p;
  };
  CHECK(run() == run());
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
  Vec p{0.0};
  Vec g{std::nan("")};
  AdamState st = make_adam({1}, 1e-3);
  CHECK_THROWS_WITH_AS(
      adam_step({{"blk.w0", std::span<double>(p), std::span<const double>(g)}}, st),
      "adam_step: non-finite gradient in blk.w0", std::runtime_error);
}

TEST_CASE("clip_gradients scales when over the max norm") {
  Vec g{6.0, 8.0};  // norm 10
  const double pre = clip_gradients({std::span<double>(g)}, 5.0);
  CHECK(pre == doctest::Approx(10.0));
  CHECK(g[0] == doctest::Approx(3.0));
  CHECK(g[1] == doctest::Approx(4.0));
}

TEST_CASE("clip_gradients below the limit is a no-op") {
  Vec g{3.0, 0.0};
  clip_gradients({std::span<double>(g)}, 5.0);
  CHECK(g == Vec{3.0, 0.0});
  Vec zeros{0.0, 0.0};
  clip_gradients({std::span<double>(zeros)}, 5.0);
  CHECK(zeros == Vec{0.0, 0.0});
}

TEST_CASE("clip_gradients preserves direction and bounds the norm") {
  Rng rng(17);
  for (int draw = 0; draw < 50; ++draw) {
    Vec g = random_vec(8, rng, 3.0);
    const Vec orig = g;
    const double pre = clip_gradients({std::span<double>(g)}, 2.0);
    double post = 0.0;
    for (double x : g) post += x * x;
    post = std::sqrt(post);
    CHECK(post <= 2.0 + 1e-12);
    if (pre > 2.0) {
      // scaled copies stay parallel
      for (std::size_t i = 0; i < g.size(); ++i)
        CHECK(g[i] == doctest::Approx(orig[i] * 2.0 / pre).epsilon(1e-12));
    }
  }
}

TEST_CASE("finite differences of x squared") {
  const Vec g = finite_difference_grad(
      [](const Vec& x) { return x[0] * x[0]; }, {3.0}, 1e-5);
  CHECK(std::abs(g[0] - 6.0) < 1e-6);
}

TEST_CASE("finite differences of a sum are all ones") {
  const Vec g = finite_difference_grad(
      [](const Vec& x) {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
      },
      {0.3, -2.0, 5.5});
  for (double v : g) CHECK(std::abs(v - 1.0) < 1e-9);
}

TEST_CASE("finite differences agree with the cosine loss gradient") {
  Rng rng(23);
  const Vec gold = random_vec(6, rng);
  const Vec point = random_vec(6, rng);
  const LossResult r = cosine_loss(point, gold);
  const Vec fd = finite_difference_grad(
      [&](const Vec& p) { return cosine_loss(p, gold).loss; }, point);
  CHECK(max_rel_err(r.grad, fd) < 1e-4);
}
