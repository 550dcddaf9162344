#include "morphinn/latent.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace morphinn {

void validate(const LatentSpec& spec) {
  if (spec.d < 1 || spec.cat < 2)
    throw std::invalid_argument("latent spec: need d >= 1 and cat >= 2");
  if (!(spec.tau > 0.0))
    throw std::invalid_argument("latent spec: temperature must be positive");
}

Vec gumbel_noise(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vec g(n);
  for (auto& x : g) {
    double u = unit(rng);
    u = std::clamp(u, 1e-12, 1.0 - 1e-12);
    x = -std::log(-std::log(u));
  }
  return g;
}

Vec gumbel_softmax_with_noise(const Vec& logits, const Vec& noise,
                              const LatentSpec& spec, GumbelCache* cache) {
  validate(spec);
  if (logits.size() != spec.len() || noise.size() != spec.len())
    throw std::invalid_argument("gumbel_softmax: logits/noise length must be d*cat");

  Vec z(spec.len());
  for (std::size_t j = 0; j < spec.d; ++j) {
    const std::size_t off = j * spec.cat;
    double hmax = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < spec.cat; ++k)
      hmax = std::max(hmax, (logits[off + k] + noise[off + k]) / spec.tau);
    double sum = 0.0;
    for (std::size_t k = 0; k < spec.cat; ++k) {
      const double h = (logits[off + k] + noise[off + k]) / spec.tau;
      z[off + k] = std::exp(h - hmax);
      sum += z[off + k];
    }
    for (std::size_t k = 0; k < spec.cat; ++k) z[off + k] /= sum;
  }

  if (cache) {
    cache->z = z;
    cache->tau = spec.tau;
    cache->d = spec.d;
    cache->cat = spec.cat;
  }
  return z;
}

Vec gumbel_softmax_sample(const Vec& logits, const LatentSpec& spec, Rng& rng,
                          GumbelCache* cache) {
  validate(spec);
  return gumbel_softmax_with_noise(logits, gumbel_noise(spec.len(), rng), spec,
                                   cache);
}

Vec gumbel_softmax_backward(const GumbelCache& cache, const Vec& upstream) {
  if (upstream.size() != cache.z.size())
    throw std::invalid_argument("gumbel_softmax_backward: upstream length mismatch");
  Vec g(cache.z.size());
  for (std::size_t j = 0; j < cache.d; ++j) {
    const std::size_t off = j * cache.cat;
    double dot = 0.0;
    for (std::size_t k = 0; k < cache.cat; ++k)
      dot += upstream[off + k] * cache.z[off + k];
    for (std::size_t k = 0; k < cache.cat; ++k)
      g[off + k] = cache.z[off + k] * (upstream[off + k] - dot) / cache.tau;
  }
  return g;
}

Vec harden(const Vec& z, const LatentSpec& spec) {
  if (z.size() != spec.len())
    throw std::invalid_argument("harden: length must be d*cat");
  Vec out(z.size(), 0.0);
  for (std::size_t j = 0; j < spec.d; ++j) {
    const std::size_t off = j * spec.cat;
    std::size_t best = 0;
    for (std::size_t k = 1; k < spec.cat; ++k)
      if (z[off + k] > z[off + best]) best = k;
    out[off + best] = 1.0;
  }
  return out;
}

Vec uniform_probs(const LatentSpec& spec) {
  return Vec(spec.len(), 1.0 / double(spec.cat));
}

KlResult kl_to_uniform(const Vec& z_probs, const LatentSpec& spec) {
  if (z_probs.size() != spec.len())
    throw std::invalid_argument("kl_to_uniform: length must be d*cat");
  for (double p : z_probs)
    if (p < 0.0)
      throw std::invalid_argument("kl_to_uniform: negative probability");

  KlResult r;
  r.grad.resize(z_probs.size());
  const double cat = double(spec.cat);
  for (std::size_t i = 0; i < z_probs.size(); ++i) {
    const double p = std::max(z_probs[i], 1e-12);
    r.loss += p * std::log(p * cat);
    r.grad[i] = std::log(p * cat) + 1.0;
  }
  return r;
}

KlResult kl_to_uniform_logits(const Vec& logits, const LatentSpec& spec) {
  if (logits.size() != spec.len())
    throw std::invalid_argument("kl_to_uniform_logits: length must be d*cat");

  KlResult r;
  r.grad.resize(logits.size());
  const double cat = double(spec.cat);
  Vec p(spec.cat);
  for (std::size_t j = 0; j < spec.d; ++j) {
    const std::size_t off = j * spec.cat;
    double hmax = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < spec.cat; ++k) hmax = std::max(hmax, logits[off + k]);
    double sum = 0.0;
    for (std::size_t k = 0; k < spec.cat; ++k) {
      p[k] = std::exp(logits[off + k] - hmax);
      sum += p[k];
    }
    double block_kl = 0.0;
    for (std::size_t k = 0; k < spec.cat; ++k) {
      p[k] /= sum;
      block_kl += p[k] * std::log(std::max(p[k], 1e-300) * cat);
    }
    r.loss += block_kl;
    for (std::size_t k = 0; k < spec.cat; ++k)
      r.grad[off + k] =
          p[k] * (std::log(std::max(p[k], 1e-300) * cat) - block_kl);
  }
  return r;
}

}  // namespace morphinn
