#pragma once

// Task losses: cosine distance for word vectors, binary cross-entropy for tag
// vectors, and the weighted composite objectives.

#include "morphinn/numerics.hpp"

namespace morphinn {

struct LossWeights {
  double alpha_x = 20.0;
  double alpha_t = 10.0;
  double alpha_y = 80.0;
  double alpha_z = 1.0;
};

struct LossResult {
  double loss = 0.0;
  Vec grad;
};

/// 1 - cos(pred, gold), in [0, 2]. Gradient w.r.t. pred. Rejects zero-norm
/// inputs.
LossResult cosine_loss(const Vec& pred, const Vec& gold);

/// Mean binary cross-entropy over N tag activations in (0, 1); activations
/// are clamped to [1e-7, 1 - 1e-7]. The gradient is taken w.r.t. the
/// pre-sigmoid values, i.e. (a - t) / N.
LossResult bce_tag_loss(const Vec& activations, const Vec& gold);

/// Numerically stable BCE straight from pre-sigmoid values.
LossResult bce_tag_loss_logits(const Vec& logits, const Vec& gold);

/// alpha_x*L_lemma + alpha_t*L_t + alpha_y*L_y + alpha_z*L_z
double composite_inflection_loss(double lemma_term, double tag_term,
                                 double surface_term, double z_term,
                                 const LossWeights& w);

/// alpha_x*L_x + alpha_y*L_y + alpha_z*L_z
double composite_lemmatization_loss(double surface_term_x, double lemma_term_y,
                                    double z_term, const LossWeights& w);

}  // namespace morphinn
