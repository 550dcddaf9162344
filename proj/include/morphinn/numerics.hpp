#pragma once

// Dense linear algebra, small feed-forward nets with hand-written
// reverse-mode gradients, Adam, and a finite-difference oracle.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace morphinn {

using Vec = std::vector<double>;
using Rng = std::mt19937_64;

struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec v;  // row-major

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), v(r * c, fill) {}

  double& at(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

enum class Act : std::uint8_t { kReLU = 0, kIdentity = 1 };

struct MlpLayer {
  Mat w;
  Vec b;
  Act act = Act::kIdentity;
};

/// Fixed-depth feed-forward net. ReLU between layers, identity on the last.
struct Mlp {
  std::vector<MlpLayer> layers;

  std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().w.cols; }
  std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().w.rows; }
};

/// Activation record of one forward call; consumed by mlp_backward.
/// Valid only for the Mlp object it was produced from.
struct MlpCache {
  const Mlp* net = nullptr;
  Vec input;
  std::vector<Vec> pre;  // pre-activation per layer
};

/// Gradient buffers mirroring an Mlp's shapes. Backward calls accumulate (+=).
struct MlpGrads {
  std::vector<Mat> w;
  std::vector<Vec> b;
};

enum class WeightInit { kOrthogonal, kGaussian };

MlpGrads make_grads(const Mlp& net);
void zero_grads(MlpGrads& g);

/// n_layers linear layers: in -> hidden -> ... -> out, biases zero.
Mlp make_mlp(std::size_t in, std::size_t out, std::size_t hidden,
             std::size_t n_layers, WeightInit init, Rng& rng);

/// Zero weights, constant bias: the net computes a constant function.
Mlp make_constant_mlp(std::size_t in, std::size_t out, double value,
                      std::size_t n_layers = 1);

Vec mlp_forward(const Mlp& net, const Vec& input, MlpCache* cache = nullptr);

/// Exact gradients of the cached forward pass. Parameter gradients are
/// accumulated into `acc`; the return value is the gradient w.r.t. the input.
Vec mlp_backward(const Mlp& net, const MlpCache& cache, const Vec& upstream,
                 MlpGrads& acc);

/// Semi-orthogonal matrix from the QR factorization of a seeded Gaussian
/// draw, sign-corrected so the result is unique per seed. Satisfies
/// M*M^T = I for rows <= cols and M^T*M = I otherwise.
Mat orthogonal_init(std::size_t rows, std::size_t cols, std::uint64_t seed);
Mat orthogonal_init(std::size_t rows, std::size_t cols, Rng& rng);

/// One named parameter tensor paired with its gradient buffer.
struct ParamBinding {
  std::string name;
  std::span<double> value;
  std::span<const double> grad;
};

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Vec> m;  // first moments, congruent with the bound parameters
  std::vector<Vec> v;  // second moments
};

std::vector<ParamBinding> bind_params(Mlp& net, const MlpGrads& grads,
                                      const std::string& prefix);
std::vector<std::span<double>> grad_spans(MlpGrads& g);
std::vector<std::size_t> param_sizes(const Mlp& net);

AdamState make_adam(const std::vector<std::size_t>& sizes, double learning_rate);

/// Standard Adam update with bias correction. Throws if any gradient entry
/// is non-finite, naming the offending parameter.
void adam_step(const std::vector<ParamBinding>& params, AdamState& state);

/// Global L2-norm clipping in place. Returns the pre-clip norm.
double clip_gradients(const std::vector<std::span<double>>& grads, double max_norm);

/// Central differences (f(x+eps*e_i) - f(x-eps*e_i)) / (2*eps).
Vec finite_difference_grad(const std::function<double(const Vec&)>& f,
                           const Vec& point, double epsilon = 1e-5);

/// splitmix64 of (seed, salt); used to derive independent per-epoch streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace morphinn
