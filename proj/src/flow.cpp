#include "morphinn/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace morphinn {

namespace {

constexpr double kSquashLinear = 3.0;
constexpr double kSquashRange = 2.0;  // saturates at linear + range = 5

void check_width(std::size_t got, std::size_t want, const char* who) {
  if (got != want)
    throw std::invalid_argument(std::string(who) + ": input length " +
                                std::to_string(got) + " != width " +
                                std::to_string(want));
}

void check_block(const CouplingBlock& b) {
  if (b.width < 2 || b.split_point < 1 || b.split_point >= b.width)
    throw std::invalid_argument("coupling block: invalid split geometry");
  const std::size_t n1 = b.split_point, n2 = b.width - b.split_point;
  if (b.s2.in_dim() != n2 || b.s2.out_dim() != n1 || b.t2.in_dim() != n2 ||
      b.t2.out_dim() != n1 || b.s1.in_dim() != n1 || b.s1.out_dim() != n2 ||
      b.t1.in_dim() != n1 || b.t1.out_dim() != n2)
    throw std::invalid_argument("coupling block: subnet dimensions do not chain");
}

}  // namespace

double squash_scale(double s_raw) {
  if (std::abs(s_raw) <= kSquashLinear) return s_raw;
  const double sign = s_raw > 0.0 ? 1.0 : -1.0;
  return sign * (kSquashLinear +
                 kSquashRange * std::tanh((std::abs(s_raw) - kSquashLinear) / kSquashRange));
}

double squash_scale_deriv(double s_raw) {
  if (std::abs(s_raw) <= kSquashLinear) return 1.0;
  const double t = std::tanh((std::abs(s_raw) - kSquashLinear) / kSquashRange);
  return 1.0 - t * t;
}

PermutationLayer make_permutation(std::size_t width, Rng& rng) {
  PermutationLayer layer;
  layer.forward_index.resize(width);
  std::iota(layer.forward_index.begin(), layer.forward_index.end(), 0);
  for (std::size_t i = width; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(layer.forward_index[i - 1], layer.forward_index[pick(rng)]);
  }
  return layer;
}

PermutationLayer identity_permutation(std::size_t width) {
  PermutationLayer layer;
  layer.forward_index.resize(width);
  std::iota(layer.forward_index.begin(), layer.forward_index.end(), 0);
  return layer;
}

Vec permute(const PermutationLayer& layer, const Vec& v) {
  check_width(v.size(), layer.width(), "permute");
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[layer.forward_index[i]];
  return out;
}

Vec inverse_permute(const PermutationLayer& layer, const Vec& v) {
  check_width(v.size(), layer.width(), "inverse_permute");
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[layer.forward_index[i]] = v[i];
  return out;
}

CouplingGrads make_grads(const CouplingBlock& block) {
  return CouplingGrads{make_grads(block.s1), make_grads(block.s2),
                       make_grads(block.t1), make_grads(block.t2)};
}

CouplingResult coupling_forward(const CouplingBlock& block, const Vec& u,
                                CouplingCache* cache) {
  check_block(block);
  check_width(u.size(), block.width, "coupling_forward");
  const std::size_t n1 = block.split_point, n2 = block.width - n1;

  Vec u1(u.begin(), u.begin() + n1);
  Vec u2(u.begin() + n1, u.end());

  MlpCache local_cs1, local_cs2, local_ct1, local_ct2;
  MlpCache* cs1 = cache ? &cache->cs1 : &local_cs1;
  MlpCache* cs2 = cache ? &cache->cs2 : &local_cs2;
  MlpCache* ct1 = cache ? &cache->ct1 : &local_ct1;
  MlpCache* ct2 = cache ? &cache->ct2 : &local_ct2;

  Vec s2_raw = mlp_forward(block.s2, u2, cs2);
  Vec t2_val = mlp_forward(block.t2, u2, ct2);
  Vec s2(n1), v1(n1);
  double logdet = 0.0;
  for (std::size_t i = 0; i < n1; ++i) {
    s2[i] = squash_scale(s2_raw[i]);
    v1[i] = u1[i] * std::exp(s2[i]) + t2_val[i];
    logdet += s2[i];
  }

  Vec s1_raw = mlp_forward(block.s1, v1, cs1);
  Vec t1_val = mlp_forward(block.t1, v1, ct1);
  Vec s1(n2), v2(n2);
  for (std::size_t i = 0; i < n2; ++i) {
    s1[i] = squash_scale(s1_raw[i]);
    v2[i] = u2[i] * std::exp(s1[i]) + t1_val[i];
    logdet += s1[i];
  }

  if (cache) {
    cache->block = &block;
    cache->u1 = std::move(u1);
    cache->u2 = std::move(u2);
    cache->s2_raw = std::move(s2_raw);
    cache->s2 = s2;
    cache->s1_raw = std::move(s1_raw);
    cache->s1 = s1;
  }

  CouplingResult result;
  result.v.resize(block.width);
  std::copy(v1.begin(), v1.end(), result.v.begin());
  std::copy(v2.begin(), v2.end(), result.v.begin() + n1);
  result.logdet = logdet;
  return result;
}

Vec coupling_inverse(const CouplingBlock& block, const Vec& v,
                     CouplingInvCache* cache) {
  check_block(block);
  check_width(v.size(), block.width, "coupling_inverse");
  const std::size_t n1 = block.split_point, n2 = block.width - n1;

  Vec v1(v.begin(), v.begin() + n1);
  Vec v2(v.begin() + n1, v.end());

  MlpCache local_cs1, local_cs2, local_ct1, local_ct2;
  MlpCache* cs1 = cache ? &cache->cs1 : &local_cs1;
  MlpCache* cs2 = cache ? &cache->cs2 : &local_cs2;
  MlpCache* ct1 = cache ? &cache->ct1 : &local_ct1;
  MlpCache* ct2 = cache ? &cache->ct2 : &local_ct2;

  Vec s1_raw = mlp_forward(block.s1, v1, cs1);
  Vec t1_val = mlp_forward(block.t1, v1, ct1);
  Vec s1(n2), u2(n2);
  for (std::size_t i = 0; i < n2; ++i) {
    s1[i] = squash_scale(s1_raw[i]);
    u2[i] = (v2[i] - t1_val[i]) * std::exp(-s1[i]);
  }

  Vec s2_raw = mlp_forward(block.s2, u2, cs2);
  Vec t2_val = mlp_forward(block.t2, u2, ct2);
  Vec s2(n1), u1(n1);
  for (std::size_t i = 0; i < n1; ++i) {
    s2[i] = squash_scale(s2_raw[i]);
    u1[i] = (v1[i] - t2_val[i]) * std::exp(-s2[i]);
  }

  if (cache) {
    cache->block = &block;
    cache->v1 = std::move(v1);
    cache->u1 = u1;
    cache->u2 = u2;
    cache->s1_raw = std::move(s1_raw);
    cache->s1 = std::move(s1);
    cache->s2_raw = std::move(s2_raw);
    cache->s2 = std::move(s2);
  }

  Vec u(block.width);
  std::copy(u1.begin(), u1.end(), u.begin());
  std::copy(u2.begin(), u2.end(), u.begin() + n1);
  return u;
}

Vec coupling_backward(const CouplingBlock& block, const CouplingCache& cache,
                      const Vec& upstream, CouplingGrads& acc) {
  if (cache.block != &block)
    throw std::logic_error("coupling_backward: cache does not belong to this block");
  check_width(upstream.size(), block.width, "coupling_backward");
  const std::size_t n1 = block.split_point, n2 = block.width - n1;

  Vec gv1(upstream.begin(), upstream.begin() + n1);
  Vec gv2(upstream.begin() + n1, upstream.end());

  // v2 = u2 * exp(s1(v1)) + t1(v1)
  Vec gu2(n2), gc(n2);
  for (std::size_t i = 0; i < n2; ++i) {
    const double e1 = std::exp(cache.s1[i]);
    gu2[i] = gv2[i] * e1;
    gc[i] = gv2[i] * cache.u2[i] * e1 * squash_scale_deriv(cache.s1_raw[i]);
  }
  Vec gv1_s1 = mlp_backward(block.s1, cache.cs1, gc, acc.s1);
  Vec gv1_t1 = mlp_backward(block.t1, cache.ct1, gv2, acc.t1);
  for (std::size_t i = 0; i < n1; ++i) gv1[i] += gv1_s1[i] + gv1_t1[i];

  // v1 = u1 * exp(s2(u2)) + t2(u2)
  Vec gu1(n1), ga(n1);
  for (std::size_t i = 0; i < n1; ++i) {
    const double e2 = std::exp(cache.s2[i]);
    gu1[i] = gv1[i] * e2;
    ga[i] = gv1[i] * cache.u1[i] * e2 * squash_scale_deriv(cache.s2_raw[i]);
  }
  Vec gu2_s2 = mlp_backward(block.s2, cache.cs2, ga, acc.s2);
  Vec gu2_t2 = mlp_backward(block.t2, cache.ct2, gv1, acc.t2);
  for (std::size_t i = 0; i < n2; ++i) gu2[i] += gu2_s2[i] + gu2_t2[i];

  Vec g(block.width);
  std::copy(gu1.begin(), gu1.end(), g.begin());
  std::copy(gu2.begin(), gu2.end(), g.begin() + n1);
  return g;
}

Vec coupling_inverse_backward(const CouplingBlock& block,
                              const CouplingInvCache& cache,
                              const Vec& upstream, CouplingGrads& acc) {
  if (cache.block != &block)
    throw std::logic_error(
        "coupling_inverse_backward: cache does not belong to this block");
  check_width(upstream.size(), block.width, "coupling_inverse_backward");
  const std::size_t n1 = block.split_point, n2 = block.width - n1;

  Vec gu1(upstream.begin(), upstream.begin() + n1);
  Vec gu2(upstream.begin() + n1, upstream.end());

  // u1 = (v1 - t2(u2)) * exp(-s2(u2))
  Vec gv1(n1), gb(n1), ga(n1);
  for (std::size_t i = 0; i < n1; ++i) {
    const double em2 = std::exp(-cache.s2[i]);
    gv1[i] = gu1[i] * em2;
    gb[i] = -gu1[i] * em2;
    ga[i] = -gu1[i] * cache.u1[i] * squash_scale_deriv(cache.s2_raw[i]);
  }
  Vec gu2_s2 = mlp_backward(block.s2, cache.cs2, ga, acc.s2);
  Vec gu2_t2 = mlp_backward(block.t2, cache.ct2, gb, acc.t2);
  for (std::size_t i = 0; i < n2; ++i) gu2[i] += gu2_s2[i] + gu2_t2[i];

  // u2 = (v2 - t1(v1)) * exp(-s1(v1))
  Vec gv2(n2), gd(n2), gc(n2);
  for (std::size_t i = 0; i < n2; ++i) {
    const double em1 = std::exp(-cache.s1[i]);
    gv2[i] = gu2[i] * em1;
    gd[i] = -gu2[i] * em1;
    gc[i] = -gu2[i] * cache.u2[i] * squash_scale_deriv(cache.s1_raw[i]);
  }
  Vec gv1_s1 = mlp_backward(block.s1, cache.cs1, gc, acc.s1);
  Vec gv1_t1 = mlp_backward(block.t1, cache.ct1, gd, acc.t1);
  for (std::size_t i = 0; i < n1; ++i) gv1[i] += gv1_s1[i] + gv1_t1[i];

  Vec g(block.width);
  std::copy(gv1.begin(), gv1.end(), g.begin());
  std::copy(gv2.begin(), gv2.end(), g.begin() + n1);
  return g;
}

InnModel make_inn_model(const IoLayout& layout, const InnConfig& cfg,
                        std::uint64_t seed) {
  if (cfg.n_blocks == 0)
    throw std::invalid_argument("make_inn_model: need at least one block");
  const std::size_t width = layout.width();
  if (width < 2)
    throw std::invalid_argument("make_inn_model: width must be >= 2");

  InnModel model;
  model.layout = layout;
  model.width = width;
  const std::size_t n1 = width / 2, n2 = width - n1;

  Rng init_rng(mix_seed(seed, 0x706172616dULL));
  for (std::size_t b = 0; b < cfg.n_blocks; ++b) {
    CouplingBlock block;
    block.width = width;
    block.split_point = n1;
    block.s2 = make_mlp(n2, n1, cfg.hidden, cfg.n_layers, cfg.init, init_rng);
    block.t2 = make_mlp(n2, n1, cfg.hidden, cfg.n_layers, cfg.init, init_rng);
    block.s1 = make_mlp(n1, n2, cfg.hidden, cfg.n_layers, cfg.init, init_rng);
    block.t1 = make_mlp(n1, n2, cfg.hidden, cfg.n_layers, cfg.init, init_rng);
    model.blocks.push_back(std::move(block));
  }
  Rng perm_rng(mix_seed(seed, 0x7065726dULL));
  for (std::size_t p = 0; p + 1 < cfg.n_blocks; ++p)
    model.perms.push_back(make_permutation(width, perm_rng));
  return model;
}

namespace {

Vec pad_to_width(const Vec& v, std::size_t width, const char* who) {
  if (v.size() > width)
    throw std::invalid_argument(std::string(who) + ": input longer than width");
  Vec padded(width, 0.0);
  std::copy(v.begin(), v.end(), padded.begin());
  return padded;
}

void check_model(const InnModel& model) {
  if (model.blocks.empty())
    throw std::invalid_argument("inn: model has no blocks");
  if (model.perms.size() + 1 != model.blocks.size())
    throw std::invalid_argument("inn: expected one permutation between blocks");
  for (const auto& b : model.blocks)
    if (b.width != model.width)
      throw std::invalid_argument("inn: block width mismatch");
  for (const auto& p : model.perms)
    if (p.width() != model.width)
      throw std::invalid_argument("inn: permutation width mismatch");
}

}  // namespace

InnForward inn_forward(const InnModel& model, const Vec& x,
                       InnForwardCache* cache) {
  check_model(model);
  if (x.size() != model.layout.x_dim)
    throw std::invalid_argument("inn_forward: x length " +
                                std::to_string(x.size()) + " != x_dim " +
                                std::to_string(model.layout.x_dim));
  if (cache) {
    cache->model = &model;
    cache->blocks.assign(model.blocks.size(), CouplingCache{});
  }

  Vec h = pad_to_width(x, model.width, "inn_forward");
  double logdet = 0.0;
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    CouplingResult r = coupling_forward(model.blocks[b], h,
                                        cache ? &cache->blocks[b] : nullptr);
    logdet += r.logdet;
    h = std::move(r.v);
    if (b + 1 < model.blocks.size()) h = permute(model.perms[b], h);
  }

  InnForward out;
  out.y.assign(h.begin(), h.begin() + model.layout.y_dim);
  out.z_logits.assign(h.begin() + model.layout.y_dim,
                      h.begin() + model.layout.y_dim + model.layout.z_len());
  out.logdet = logdet;
  return out;
}

Vec inn_inverse(const InnModel& model, const Vec& y, const Vec& z,
                InnInverseCache* cache) {
  check_model(model);
  if (y.size() != model.layout.y_dim)
    throw std::invalid_argument("inn_inverse: y length mismatch");
  if (z.size() != model.layout.z_len())
    throw std::invalid_argument("inn_inverse: z length mismatch");
  if (cache) {
    cache->model = &model;
    cache->blocks.assign(model.blocks.size(), CouplingInvCache{});
  }

  Vec h(model.width, 0.0);
  std::copy(y.begin(), y.end(), h.begin());
  std::copy(z.begin(), z.end(), h.begin() + y.size());

  // permutations sit between blocks: undo each one before the preceding
  // block's inverse, none after the last
  for (std::size_t b = model.blocks.size(); b-- > 0;) {
    h = coupling_inverse(model.blocks[b], h, cache ? &cache->blocks[b] : nullptr);
    if (b > 0) h = inverse_permute(model.perms[b - 1], h);
  }
  if (cache) cache->x_full = h;
  return Vec(h.begin(), h.begin() + model.layout.x_dim);
}

Vec inn_forward_backward(const InnModel& model, const InnForwardCache& cache,
                         const Vec& upstream_y, const Vec& upstream_z,
                         InnGrads& acc) {
  if (cache.model != &model || cache.blocks.size() != model.blocks.size())
    throw std::logic_error("inn_forward_backward: cache/model mismatch");
  if (upstream_y.size() != model.layout.y_dim ||
      upstream_z.size() != model.layout.z_len())
    throw std::invalid_argument("inn_forward_backward: upstream length mismatch");
  if (acc.blocks.size() != model.blocks.size())
    throw std::invalid_argument("inn_forward_backward: grad store mismatch");

  Vec g(model.width, 0.0);
  std::copy(upstream_y.begin(), upstream_y.end(), g.begin());
  std::copy(upstream_z.begin(), upstream_z.end(), g.begin() + upstream_y.size());

  for (std::size_t b = model.blocks.size(); b-- > 0;) {
    if (b + 1 < model.blocks.size()) g = inverse_permute(model.perms[b], g);
    g = coupling_backward(model.blocks[b], cache.blocks[b], g, acc.blocks[b]);
  }
  return Vec(g.begin(), g.begin() + model.layout.x_dim);
}

YzGrad inn_inverse_backward(const InnModel& model, const InnInverseCache& cache,
                            const Vec& upstream_x, InnGrads& acc) {
  if (cache.model != &model || cache.blocks.size() != model.blocks.size())
    throw std::logic_error("inn_inverse_backward: cache/model mismatch");
  if (upstream_x.size() != model.layout.x_dim)
    throw std::invalid_argument("inn_inverse_backward: upstream length mismatch");
  if (acc.blocks.size() != model.blocks.size())
    throw std::invalid_argument("inn_inverse_backward: grad store mismatch");

  Vec g(model.width, 0.0);
  std::copy(upstream_x.begin(), upstream_x.end(), g.begin());

  // the inverse pass ran blocks last-to-first; backprop retraces first-to-last
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    g = coupling_inverse_backward(model.blocks[b], cache.blocks[b], g,
                                  acc.blocks[b]);
    if (b + 1 < model.blocks.size()) g = permute(model.perms[b], g);
  }

  YzGrad out;
  out.y.assign(g.begin(), g.begin() + model.layout.y_dim);
  out.z.assign(g.begin() + model.layout.y_dim,
               g.begin() + model.layout.y_dim + model.layout.z_len());
  return out;
}

double inn_logdet(const InnModel& model, const Vec& x) {
  return inn_forward(model, x).logdet;
}

InnGrads make_grads(const InnModel& model) {
  InnGrads g;
  g.blocks.reserve(model.blocks.size());
  for (const auto& b : model.blocks) g.blocks.push_back(make_grads(b));
  return g;
}

void zero_grads(InnGrads& g) {
  for (auto& b : g.blocks) {
    zero_grads(b.s1);
    zero_grads(b.s2);
    zero_grads(b.t1);
    zero_grads(b.t2);
  }
}

void scale_grads(InnGrads& g, double factor) {
  for (auto& b : g.blocks)
    for (MlpGrads* mg : {&b.s1, &b.s2, &b.t1, &b.t2}) {
      for (auto& m : mg->w)
        for (auto& x : m.v) x *= factor;
      for (auto& bias : mg->b)
        for (auto& x : bias) x *= factor;
    }
}

std::vector<ParamBinding> bind_params(InnModel& model, const InnGrads& grads) {
  if (grads.blocks.size() != model.blocks.size())
    throw std::invalid_argument("bind_params: grad store mismatch");
  std::vector<ParamBinding> out;
  auto append = [&out](std::vector<ParamBinding> part) {
    for (auto& b : part) out.push_back(std::move(b));
  };
  for (std::size_t b = 0; b < model.blocks.size(); ++b) {
    const std::string p = "block" + std::to_string(b);
    append(bind_params(model.blocks[b].s1, grads.blocks[b].s1, p + ".s1"));
    append(bind_params(model.blocks[b].s2, grads.blocks[b].s2, p + ".s2"));
    append(bind_params(model.blocks[b].t1, grads.blocks[b].t1, p + ".t1"));
    append(bind_params(model.blocks[b].t2, grads.blocks[b].t2, p + ".t2"));
  }
  return out;
}

std::vector<std::span<double>> grad_spans(InnGrads& g) {
  std::vector<std::span<double>> out;
  for (auto& b : g.blocks)
    for (MlpGrads* mg : {&b.s1, &b.s2, &b.t1, &b.t2}) {
      for (auto& m : mg->w) out.emplace_back(m.v);
      for (auto& bias : mg->b) out.emplace_back(bias);
    }
  return out;
}

std::vector<std::size_t> param_sizes(const InnModel& model) {
  std::vector<std::size_t> sizes;
  for (const auto& b : model.blocks)
    for (const Mlp* net : {&b.s1, &b.s2, &b.t1, &b.t2})
      for (const auto& layer : net->layers) {
        sizes.push_back(layer.w.v.size());
        sizes.push_back(layer.b.size());
      }
  return sizes;
}

std::size_t param_count(const InnModel& model) {
  std::size_t n = 0;
  for (std::size_t s : param_sizes(model)) n += s;
  return n;
}

}  // namespace morphinn
