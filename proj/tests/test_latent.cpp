#include <doctest.h>

#include <cmath>

#include "morphinn/latent.hpp"
#include "test_helpers.hpp"

using namespace morphinn;
using namespace morphinn::testing;

TEST_CASE("latent spec validation") {
  CHECK_THROWS_AS(validate(LatentSpec{0, 3, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(validate(LatentSpec{2, 1, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(validate(LatentSpec{2, 3, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(validate(LatentSpec{2, 3, -1.0}), std::invalid_argument);
  CHECK_NOTHROW(validate(LatentSpec{2, 3, 1.0}));
}

TEST_CASE("gumbel-softmax blocks always sum to one") {
  Rng rng(101);
  for (double tau : {0.05, 0.7, 1.0, 13.0, 100.0}) {
    const LatentSpec spec{3, 4, tau};
    for (int draw = 0; draw < 200; ++draw) {
      const Vec logits = random_vec(spec.len(), rng, 4.0);
      const Vec z = gumbel_softmax_sample(logits, spec, rng);
      for (std::size_t j = 0; j < spec.d; ++j) {
        double sum = 0.0;
        for (std::size_t k = 0; k < spec.cat; ++k) {
          const double p = z[j * spec.cat + k];
          CHECK(p >= 0.0);
          CHECK(p <= 1.0);
          sum += p;
        }
        CHECK(std::abs(sum - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("low temperature with sharp logits is nearly one-hot") {
  const LatentSpec spec{1, 3, 0.05};
  const Vec logits{10.0, 0.0, 0.0};
  Rng rng(103);
  std::size_t sharp = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const Vec z = gumbel_softmax_sample(logits, spec, rng);
    const double m = *std::max_element(z.begin(), z.end());
    if (m > 0.99) ++sharp;
  }
  CHECK(double(sharp) / draws >= 0.99);
}

TEST_CASE("high temperature with flat logits is nearly uniform") {
  const LatentSpec spec{1, 4, 100.0};
  const Vec logits(4, 0.0);
  Rng rng(107);
  Vec mean(4, 0.0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const Vec z = gumbel_softmax_sample(logits, spec, rng);
    for (std::size_t k = 0; k < 4; ++k) mean[k] += z[k];
  }
  for (std::size_t k = 0; k < 4; ++k)
    CHECK(std::abs(mean[k] / draws - 0.25) < 0.02);
}

TEST_CASE("expected sharpness is non-increasing in temperature") {
  // same logits and the same gumbel noise across the whole tau grid
  const LatentSpec base{2, 3, 1.0};
  Rng rng(109);
  const Vec logits = random_vec(base.len(), rng, 2.0);
  std::vector<Vec> noises;
  for (int i = 0; i < 10000; ++i) noises.push_back(gumbel_noise(base.len(), rng));

  const std::vector<double> taus{0.1, 0.5, 1.0, 2.0, 10.0};
  std::vector<double> sharpness;
  for (double tau : taus) {
    const LatentSpec spec{2, 3, tau};
    double acc = 0.0;
    for (const Vec& noise : noises) {
      const Vec z = gumbel_softmax_with_noise(logits, noise, spec);
      for (std::size_t j = 0; j < spec.d; ++j) {
        double m = 0.0;
        for (std::size_t k = 0; k < spec.cat; ++k)
          m = std::max(m, z[j * spec.cat + k]);
        acc += m;
      }
    }
    sharpness.push_back(acc / double(noises.size() * base.d));
  }
  for (std::size_t i = 0; i + 1 < sharpness.size(); ++i)
    CHECK(sharpness[i] >= sharpness[i + 1] - 1e-12);
}

TEST_CASE("reparameterized gradients match finite differences with fixed noise") {
  Rng rng(113);
  const LatentSpec spec{2, 3, 0.8};
  for (int draw = 0; draw < 50; ++draw) {
    const Vec logits = random_vec(spec.len(), rng);
    const Vec noise = gumbel_noise(spec.len(), rng);
    const Vec probe = random_vec(spec.len(), rng);

    GumbelCache cache;
    gumbel_softmax_with_noise(logits, noise, spec, &cache);
    const Vec g = gumbel_softmax_backward(cache, probe);

    const Vec fd = finite_difference_grad(
        [&](const Vec& l) {
          const Vec z = gumbel_softmax_with_noise(l, noise, spec);
          double s = 0.0;
          for (std::size_t i = 0; i < z.size(); ++i) s += probe[i] * z[i];
          return s;
        },
        logits);
    CHECK(max_rel_err(g, fd) < 1e-4);
  }
}

TEST_CASE("sampling rejects a non-positive temperature") {
  Rng rng(127);
  CHECK_THROWS_AS(gumbel_softmax_sample({0.0, 0.0}, LatentSpec{1, 2, 0.0}, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(gumbel_softmax_sample({0.0, 0.0}, LatentSpec{1, 2, -2.0}, rng),
                  std::invalid_argument);
}

TEST_CASE("harden picks the block argmax") {
  const LatentSpec spec{1, 3, 1.0};
  CHECK(harden({0.1, 0.7, 0.2}, spec) == Vec{0.0, 1.0, 0.0});
}

TEST_CASE("harden is idempotent on one-hot input") {
  const LatentSpec spec{2, 2, 1.0};
  const Vec onehot{1.0, 0.0, 0.0, 1.0};
  CHECK(harden(onehot, spec) == onehot);
}

TEST_CASE("harden breaks ties toward the lowest index") {
  const LatentSpec spec{1, 2, 1.0};
  CHECK(harden({0.5, 0.5}, spec) == Vec{1.0, 0.0});
}

TEST_CASE("kl of uniform blocks is zero") {
  const LatentSpec spec{3, 4, 1.0};
  const KlResult r = kl_to_uniform(uniform_probs(spec), spec);
  CHECK(std::abs(r.loss) < 1e-12);
}

TEST_CASE("kl is zero only at uniform blocks") {
  const LatentSpec spec{1, 3, 1.0};
  const KlResult off = kl_to_uniform({0.5, 0.3, 0.2}, spec);
  CHECK(off.loss > 1e-3);
}

TEST_CASE("kl of a near-one-hot block approaches log cat") {
  const LatentSpec spec{1, 3, 1.0};
  const double eps = 1e-9;
  const KlResult r = kl_to_uniform({1.0 - 2 * eps, eps, eps}, spec);
  CHECK(r.loss == doctest::Approx(std::log(3.0)).epsilon(1e-6));
}

TEST_CASE("kl rejects negative probabilities") {
  const LatentSpec spec{1, 2, 1.0};
  CHECK_THROWS_AS(kl_to_uniform({1.2, -0.2}, spec), std::invalid_argument);
}

TEST_CASE("kl gradient matches finite differences") {
  Rng rng(131);
  const LatentSpec spec{2, 3, 1.0};
  for (int draw = 0; draw < 50; ++draw) {
    // interior points of the simplex per block
    Vec p(spec.len());
    for (std::size_t j = 0; j < spec.d; ++j) {
      double sum = 0.0;
      std::uniform_real_distribution<double> unit(0.1, 1.0);
      for (std::size_t k = 0; k < spec.cat; ++k) {
        p[j * spec.cat + k] = unit(rng);
        sum += p[j * spec.cat + k];
      }
      for (std::size_t k = 0; k < spec.cat; ++k) p[j * spec.cat + k] /= sum;
    }
    const KlResult r = kl_to_uniform(p, spec);
    const Vec fd = finite_difference_grad(
        [&](const Vec& q) { return kl_to_uniform(q, spec).loss; }, p);
    CHECK(max_rel_err(r.grad, fd) < 1e-4);
  }
}

TEST_CASE("kl on logits matches softmax composed with kl, gradient included") {
  Rng rng(137);
  const LatentSpec spec{2, 4, 1.0};
  for (int draw = 0; draw < 50; ++draw) {
    const Vec logits = random_vec(spec.len(), rng, 2.0);
    const KlResult r = kl_to_uniform_logits(logits, spec);
    const Vec fd = finite_difference_grad(
        [&](const Vec& l) { return kl_to_uniform_logits(l, spec).loss; }, logits);
    CHECK(r.loss >= 0.0);
    CHECK(max_rel_err(r.grad, fd) < 1e-4);
  }
}
