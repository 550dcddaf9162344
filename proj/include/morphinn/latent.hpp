#pragma once

// Categorical latent machinery: Gumbel-Softmax sampling with temperature,
// hardening to one-hot, and the KL-to-uniform regularizer.

#include <cstddef>

#include "morphinn/numerics.hpp"

namespace morphinn {

/// Geometry of the categorical latent: d independent dimensions with cat
/// categories each, flattened to a vector of length d*cat.
struct LatentSpec {
  std::size_t d = 1;
  std::size_t cat = 2;
  double tau = 1.0;

  std::size_t len() const { return d * cat; }
};

void validate(const LatentSpec& spec);

struct GumbelCache {
  Vec z;
  double tau = 1.0;
  std::size_t d = 0, cat = 0;
};

/// d*cat i.i.d. standard Gumbel variates, -log(-log(U)).
Vec gumbel_noise(std::size_t n, Rng& rng);

/// Reparameterized sample: per dimension, softmax((logits + noise) / tau).
/// Each cat-sized block lies on the probability simplex.
Vec gumbel_softmax_with_noise(const Vec& logits, const Vec& noise,
                              const LatentSpec& spec,
                              GumbelCache* cache = nullptr);
Vec gumbel_softmax_sample(const Vec& logits, const LatentSpec& spec, Rng& rng,
                          GumbelCache* cache = nullptr);

/// Gradient of the sample w.r.t. the logits (noise held fixed).
Vec gumbel_softmax_backward(const GumbelCache& cache, const Vec& upstream);

/// Per block: argmax position set to 1, rest 0. Ties break to the lowest index.
Vec harden(const Vec& z, const LatentSpec& spec);

/// Prior mean: every entry 1/cat.
Vec uniform_probs(const LatentSpec& spec);

struct KlResult {
  double loss = 0.0;
  Vec grad;
};

/// Sum over dimensions of KL(block || Uniform(cat)) = sum p*log(p*cat),
/// with the gradient taken w.r.t. the probabilities as free variables.
KlResult kl_to_uniform(const Vec& z_probs, const LatentSpec& spec);

/// Same divergence applied to softmax(logits) per block (temperature 1);
/// gradient w.r.t. the logits. This is the training-time z regularizer.
KlResult kl_to_uniform_logits(const Vec& logits, const LatentSpec& spec);

}  // namespace morphinn
