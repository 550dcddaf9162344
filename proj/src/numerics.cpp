#include "morphinn/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace morphinn {

MlpGrads make_grads(const Mlp& net) {
  MlpGrads g;
  g.w.reserve(net.layers.size());
  g.b.reserve(net.layers.size());
  for (const auto& layer : net.layers) {
    g.w.emplace_back(layer.w.rows, layer.w.cols);
    g.b.emplace_back(layer.b.size(), 0.0);
  }
  return g;
}

void zero_grads(MlpGrads& g) {
  for (auto& m : g.w) std::fill(m.v.begin(), m.v.end(), 0.0);
  for (auto& b : g.b) std::fill(b.begin(), b.end(), 0.0);
}

Mlp make_mlp(std::size_t in, std::size_t out, std::size_t hidden,
             std::size_t n_layers, WeightInit init, Rng& rng) {
  if (in == 0 || out == 0 || n_layers == 0)
    throw std::invalid_argument("make_mlp: dimensions must be positive");
  if (n_layers > 1 && hidden == 0)
    throw std::invalid_argument("make_mlp: hidden width must be positive");

  Mlp net;
  net.layers.resize(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t li = (l == 0) ? in : hidden;
    const std::size_t lo = (l + 1 == n_layers) ? out : hidden;
    auto& layer = net.layers[l];
    if (init == WeightInit::kOrthogonal) {
      layer.w = orthogonal_init(lo, li, rng);
    } else {
      layer.w = Mat(lo, li);
      std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(double(li)));
      for (auto& x : layer.w.v) x = gauss(rng);
    }
    layer.b.assign(lo, 0.0);
    layer.act = (l + 1 == n_layers) ? Act::kIdentity : Act::kReLU;
  }
  return net;
}

Mlp make_constant_mlp(std::size_t in, std::size_t out, double value,
                      std::size_t n_layers) {
  Mlp net;
  net.layers.resize(n_layers);
  for (std::size_t l = 0; l < n_layers; ++l) {
    const std::size_t li = (l == 0) ? in : out;
    auto& layer = net.layers[l];
    layer.w = Mat(out, li);
    layer.b.assign(out, (l + 1 == n_layers) ? value : 0.0);
    layer.act = Act::kIdentity;
  }
  return net;
}

Vec mlp_forward(const Mlp& net, const Vec& input, MlpCache* cache) {
  if (net.layers.empty()) throw std::invalid_argument("mlp_forward: empty net");
  if (input.size() != net.in_dim())
    throw std::invalid_argument("mlp_forward: input length " +
                                std::to_string(input.size()) + " != in_dim " +
                                std::to_string(net.in_dim()));
  if (cache) {
    cache->net = &net;
    cache->input = input;
    cache->pre.clear();
    cache->pre.reserve(net.layers.size());
  }

  Vec act = input;
  for (const auto& layer : net.layers) {
    Vec pre(layer.w.rows, 0.0);
    for (std::size_t i = 0; i < layer.w.rows; ++i) {
      const double* row = &layer.w.v[i * layer.w.cols];
      double acc = layer.b[i];
      for (std::size_t j = 0; j < layer.w.cols; ++j) acc += row[j] * act[j];
      pre[i] = acc;
    }
    if (cache) cache->pre.push_back(pre);
    if (layer.act == Act::kReLU) {
      for (auto& x : pre) x = x > 0.0 ? x : 0.0;
    }
    act = std::move(pre);
  }
  return act;
}

Vec mlp_backward(const Mlp& net, const MlpCache& cache, const Vec& upstream,
                 MlpGrads& acc) {
  if (cache.net != &net || cache.pre.size() != net.layers.size())
    throw std::logic_error("mlp_backward: cache does not belong to this net");
  if (upstream.size() != net.out_dim())
    throw std::invalid_argument("mlp_backward: upstream length mismatch");
  if (acc.w.size() != net.layers.size())
    throw std::invalid_argument("mlp_backward: gradient store shape mismatch");

  Vec g = upstream;
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const auto& layer = net.layers[l];
    const Vec& pre = cache.pre[l];
    if (layer.act == Act::kReLU) {
      for (std::size_t i = 0; i < g.size(); ++i)
        if (pre[i] <= 0.0) g[i] = 0.0;
    }
    // layer input: previous layer's post-activation (or the net input)
    Vec layer_in;
    if (l == 0) {
      layer_in = cache.input;
    } else {
      layer_in = cache.pre[l - 1];
      if (net.layers[l - 1].act == Act::kReLU)
        for (auto& x : layer_in) x = x > 0.0 ? x : 0.0;
    }

    Vec g_in(layer.w.cols, 0.0);
    Mat& dw = acc.w[l];
    Vec& db = acc.b[l];
    for (std::size_t i = 0; i < layer.w.rows; ++i) {
      const double gi = g[i];
      db[i] += gi;
      const double* row = &layer.w.v[i * layer.w.cols];
      double* drow = &dw.v[i * layer.w.cols];
      for (std::size_t j = 0; j < layer.w.cols; ++j) {
        drow[j] += gi * layer_in[j];
        g_in[j] += gi * row[j];
      }
    }
    g = std::move(g_in);
  }
  return g;
}

namespace {

// Householder QR of a tall matrix (m >= n); returns the thin Q with
// orthonormal columns, sign-corrected so diag(R) >= 0.
Mat thin_q(Mat a) {
  const std::size_t m = a.rows, n = a.cols;
  std::vector<Vec> reflectors;
  reflectors.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    double norm_x = 0.0;
    for (std::size_t i = k; i < m; ++i) norm_x += a.at(i, k) * a.at(i, k);
    norm_x = std::sqrt(norm_x);
    Vec v(m, 0.0);
    if (norm_x == 0.0) {
      v[k] = 1.0;
    } else {
      const double alpha = a.at(k, k) >= 0.0 ? -norm_x : norm_x;
      for (std::size_t i = k; i < m; ++i) v[i] = a.at(i, k);
      v[k] -= alpha;
      double vn = 0.0;
      for (std::size_t i = k; i < m; ++i) vn += v[i] * v[i];
      vn = std::sqrt(vn);
      for (std::size_t i = k; i < m; ++i) v[i] /= vn;
      for (std::size_t j = k; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t i = k; i < m; ++i) dot += v[i] * a.at(i, j);
        for (std::size_t i = k; i < m; ++i) a.at(i, j) -= 2.0 * dot * v[i];
      }
    }
    reflectors.push_back(std::move(v));
  }

  Mat q(m, n);
  for (std::size_t j = 0; j < n; ++j) q.at(j, j) = 1.0;
  for (std::size_t k = n; k-- > 0;) {
    const Vec& v = reflectors[k];
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t i = k; i < m; ++i) dot += v[i] * q.at(i, j);
      for (std::size_t i = k; i < m; ++i) q.at(i, j) -= 2.0 * dot * v[i];
    }
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (a.at(j, j) < 0.0)
      for (std::size_t i = 0; i < m; ++i) q.at(i, j) = -q.at(i, j);
  }
  return q;
}

}  // namespace

Mat orthogonal_init(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows == 0 || cols == 0)
    throw std::invalid_argument("orthogonal_init: dimensions must be >= 1");
  const std::size_t m = std::max(rows, cols), n = std::min(rows, cols);
  Mat gauss(m, n);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& x : gauss.v) x = dist(rng);
  Mat q = thin_q(std::move(gauss));

  if (rows >= cols) return q;
  Mat out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out.at(i, j) = q.at(j, i);
  return out;
}

Mat orthogonal_init(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  return orthogonal_init(rows, cols, rng);
}

std::vector<ParamBinding> bind_params(Mlp& net, const MlpGrads& grads,
                                      const std::string& prefix) {
  if (grads.w.size() != net.layers.size())
    throw std::invalid_argument("bind_params: gradient store shape mismatch");
  std::vector<ParamBinding> out;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    out.push_back({prefix + ".w" + std::to_string(l),
                   std::span<double>(net.layers[l].w.v),
                   std::span<const double>(grads.w[l].v)});
    out.push_back({prefix + ".b" + std::to_string(l),
                   std::span<double>(net.layers[l].b),
                   std::span<const double>(grads.b[l])});
  }
  return out;
}

std::vector<std::span<double>> grad_spans(MlpGrads& g) {
  std::vector<std::span<double>> out;
  for (auto& m : g.w) out.emplace_back(m.v);
  for (auto& b : g.b) out.emplace_back(b);
  return out;
}

std::vector<std::size_t> param_sizes(const Mlp& net) {
  std::vector<std::size_t> sizes;
  for (const auto& layer : net.layers) {
    sizes.push_back(layer.w.v.size());
    sizes.push_back(layer.b.size());
  }
  return sizes;
}

AdamState make_adam(const std::vector<std::size_t>& sizes, double learning_rate) {
  AdamState st;
  st.learning_rate = learning_rate;
  st.m.reserve(sizes.size());
  st.v.reserve(sizes.size());
  for (std::size_t s : sizes) {
    st.m.emplace_back(s, 0.0);
    st.v.emplace_back(s, 0.0);
  }
  return st;
}

void adam_step(const std::vector<ParamBinding>& params, AdamState& state) {
  if (params.size() != state.m.size())
    throw std::invalid_argument("adam_step: state holds " +
                                std::to_string(state.m.size()) +
                                " tensors, got " + std::to_string(params.size()));
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto& p = params[t];
    if (p.value.size() != p.grad.size() || p.value.size() != state.m[t].size())
      throw std::invalid_argument("adam_step: shape mismatch for " + p.name);
    for (double g : p.grad)
      if (!std::isfinite(g))
        throw std::runtime_error("adam_step: non-finite gradient in " + p.name);
  }

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto& p = params[t];
    Vec& m = state.m[t];
    Vec& v = state.v[t];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

double clip_gradients(const std::vector<std::span<double>>& grads, double max_norm) {
  if (max_norm <= 0.0)
    throw std::invalid_argument("clip_gradients: max_norm must be positive");
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& g : grads)
      for (double& x : g) x *= scale;
  }
  return norm;
}

Vec finite_difference_grad(const std::function<double(const Vec&)>& f,
                           const Vec& point, double epsilon) {
  Vec g(point.size(), 0.0);
  Vec x = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    x[i] = point[i] + epsilon;
    const double hi = f(x);
    x[i] = point[i] - epsilon;
    const double lo = f(x);
    x[i] = point[i];
    g[i] = (hi - lo) / (2.0 * epsilon);
  }
  return g;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace morphinn
