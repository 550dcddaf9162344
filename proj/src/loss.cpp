#include "morphinn/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace morphinn {

LossResult cosine_loss(const Vec& pred, const Vec& gold) {
  if (pred.size() != gold.size())
    throw std::invalid_argument("cosine_loss: length mismatch");
  if (pred.empty()) throw std::invalid_argument("cosine_loss: empty vectors");

  double dot = 0.0, np2 = 0.0, ng2 = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    dot += pred[i] * gold[i];
    np2 += pred[i] * pred[i];
    ng2 += gold[i] * gold[i];
  }
  const double np = std::sqrt(np2), ng = std::sqrt(ng2);
  if (np < 1e-12) throw std::invalid_argument("cosine_loss: zero-norm prediction");
  if (ng < 1e-12) throw std::invalid_argument("cosine_loss: zero-norm gold vector");

  LossResult r;
  const double cos = dot / (np * ng);
  r.loss = 1.0 - cos;
  r.grad.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i)
    r.grad[i] = dot * pred[i] / (np2 * np * ng) - gold[i] / (np * ng);
  return r;
}

LossResult bce_tag_loss(const Vec& activations, const Vec& gold) {
  if (activations.size() != gold.size())
    throw std::invalid_argument("bce_tag_loss: length mismatch");
  if (activations.empty()) throw std::invalid_argument("bce_tag_loss: empty input");

  const double n = double(activations.size());
  LossResult r;
  r.grad.resize(activations.size());
  for (std::size_t i = 0; i < activations.size(); ++i) {
    const double a = std::clamp(activations[i], 1e-7, 1.0 - 1e-7);
    const double t = gold[i];
    r.loss -= (t * std::log(a) + (1.0 - t) * std::log(1.0 - a)) / n;
    r.grad[i] = (a - t) / n;
  }
  return r;
}

LossResult bce_tag_loss_logits(const Vec& logits, const Vec& gold) {
  if (logits.size() != gold.size())
    throw std::invalid_argument("bce_tag_loss_logits: length mismatch");
  if (logits.empty())
    throw std::invalid_argument("bce_tag_loss_logits: empty input");

  const double n = double(logits.size());
  LossResult r;
  r.grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double x = logits[i];
    const double t = gold[i];
    // max(x,0) - x*t + log(1 + exp(-|x|))
    r.loss += (std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)))) / n;
    r.grad[i] = (1.0 / (1.0 + std::exp(-x)) - t) / n;
  }
  return r;
}

double composite_inflection_loss(double lemma_term, double tag_term,
                                 double surface_term, double z_term,
                                 const LossWeights& w) {
  return w.alpha_x * lemma_term + w.alpha_t * tag_term +
         w.alpha_y * surface_term + w.alpha_z * z_term;
}

double composite_lemmatization_loss(double surface_term_x, double lemma_term_y,
                                    double z_term, const LossWeights& w) {
  return w.alpha_x * surface_term_x + w.alpha_y * lemma_term_y +
         w.alpha_z * z_term;
}

}  // namespace morphinn
