#pragma once

// Invertible network built from affine coupling blocks and fixed permutation
// layers. One parameter set serves the forward map x -> [y, z] and the exact
// inverse [y, z] -> x; the Jacobian log-determinant falls out of the coupling
// scale sums.

#include <cstdint>
#include <vector>

#include "morphinn/numerics.hpp"

namespace morphinn {

enum class Task : std::uint8_t { kInflection = 0, kLemmatization = 1 };

/// Semantic input/output geometry before zero padding. The network width is
/// the larger of the two sides; the narrower side is padded with trailing
/// zeros. z_dim == 0 means the model carries no latent block.
struct IoLayout {
  std::size_t x_dim = 0;
  std::size_t y_dim = 0;
  std::size_t z_dim = 0;  // number of latent dimensions
  std::size_t z_cat = 0;  // categories per latent dimension
  Task task = Task::kInflection;
  std::size_t tag_count = 0;  // inflection only

  std::size_t z_len() const { return z_dim * z_cat; }
  std::size_t width() const { return std::max(x_dim, y_dim + z_len()); }
};

/// One reversible block: the input is split into halves u1, u2 which are
/// scaled and shifted by nets conditioned on the other half.
///   v1 = u1 * exp(s2(u2)) + t2(u2)
///   v2 = u2 * exp(s1(v1)) + t1(v1)
struct CouplingBlock {
  Mlp s1, s2, t1, t2;
  std::size_t split_point = 0;  // length of u1
  std::size_t width = 0;
};

/// Fixed shuffle applied between blocks. out[i] = in[forward_index[i]].
struct PermutationLayer {
  std::vector<std::size_t> forward_index;

  std::size_t width() const { return forward_index.size(); }
};

PermutationLayer make_permutation(std::size_t width, Rng& rng);
PermutationLayer identity_permutation(std::size_t width);

Vec permute(const PermutationLayer& layer, const Vec& v);
Vec inverse_permute(const PermutationLayer& layer, const Vec& v);

// Scale outputs are squashed before exponentiation: identity inside [-3, 3],
// tanh easing towards +-5 beyond, so exp() cannot overflow.
double squash_scale(double s_raw);
double squash_scale_deriv(double s_raw);

struct CouplingGrads {
  MlpGrads s1, s2, t1, t2;
};

struct CouplingCache {
  const CouplingBlock* block = nullptr;
  Vec u1, u2;
  Vec s2_raw, s2;  // raw net output and squashed scale for the first half
  Vec s1_raw, s1;
  MlpCache cs1, cs2, ct1, ct2;
};

struct CouplingInvCache {
  const CouplingBlock* block = nullptr;
  Vec v1, u1, u2;
  Vec s1_raw, s1;
  Vec s2_raw, s2;
  MlpCache cs1, cs2, ct1, ct2;
};

struct CouplingResult {
  Vec v;
  double logdet = 0.0;
};

CouplingResult coupling_forward(const CouplingBlock& block, const Vec& u,
                                CouplingCache* cache = nullptr);
Vec coupling_inverse(const CouplingBlock& block, const Vec& v,
                     CouplingInvCache* cache = nullptr);

/// Gradients of the forward map (log-det excluded); accumulates into `acc`
/// and returns the gradient w.r.t. u.
Vec coupling_backward(const CouplingBlock& block, const CouplingCache& cache,
                      const Vec& upstream, CouplingGrads& acc);

/// Gradients of the inverse map; returns the gradient w.r.t. v.
Vec coupling_inverse_backward(const CouplingBlock& block,
                              const CouplingInvCache& cache,
                              const Vec& upstream, CouplingGrads& acc);

CouplingGrads make_grads(const CouplingBlock& block);

/// Stacked invertible model: coupling blocks with a fixed permutation between
/// consecutive blocks (none after the last). Forward and inverse passes read
/// the identical parameter set.
struct InnModel {
  std::vector<CouplingBlock> blocks;
  std::vector<PermutationLayer> perms;  // blocks.size() - 1 entries
  std::size_t width = 0;
  IoLayout layout;
};

struct InnGrads {
  std::vector<CouplingGrads> blocks;
};

struct InnForward {
  Vec y;
  Vec z_logits;
  double logdet = 0.0;
};

struct InnForwardCache {
  const InnModel* model = nullptr;
  std::vector<CouplingCache> blocks;
};

struct InnInverseCache {
  const InnModel* model = nullptr;
  std::vector<CouplingInvCache> blocks;
  Vec x_full;  // full-width reconstruction including padding positions
};

struct InnConfig {
  std::size_t n_blocks = 3;
  std::size_t hidden = 128;
  std::size_t n_layers = 3;
  WeightInit init = WeightInit::kOrthogonal;
};

InnModel make_inn_model(const IoLayout& layout, const InnConfig& cfg,
                        std::uint64_t seed);

InnForward inn_forward(const InnModel& model, const Vec& x,
                       InnForwardCache* cache = nullptr);
Vec inn_inverse(const InnModel& model, const Vec& y, const Vec& z,
                InnInverseCache* cache = nullptr);

/// Backward through the forward pass. Returns the gradient w.r.t. x.
Vec inn_forward_backward(const InnModel& model, const InnForwardCache& cache,
                         const Vec& upstream_y, const Vec& upstream_z,
                         InnGrads& acc);

struct YzGrad {
  Vec y, z;
};

/// Backward through the inverse pass. Returns gradients w.r.t. (y, z).
YzGrad inn_inverse_backward(const InnModel& model, const InnInverseCache& cache,
                            const Vec& upstream_x, InnGrads& acc);

/// log|det(df/dx)|, the sum of the per-block squashed scale sums.
double inn_logdet(const InnModel& model, const Vec& x);

InnGrads make_grads(const InnModel& model);
void zero_grads(InnGrads& g);
void scale_grads(InnGrads& g, double factor);

/// Flat named view over all parameters, paired with congruent grad buffers.
std::vector<ParamBinding> bind_params(InnModel& model, const InnGrads& grads);
std::vector<std::span<double>> grad_spans(InnGrads& g);
std::vector<std::size_t> param_sizes(const InnModel& model);
std::size_t param_count(const InnModel& model);

}  // namespace morphinn
