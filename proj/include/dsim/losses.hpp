#pragma once

#include <span>
#include <vector>

namespace dsim {

using ConstVec = std::span<const double>;
using MutVec = std::span<double>;

double cosine_similarity(ConstVec a, ConstVec b);

/// max(0, m + |s - p|^2 - |s - n|^2) on raw (unnormalized) vectors.
double triplet_loss(ConstVec sentence, ConstVec positive, ConstVec negative, double margin);

/// Same value; adds scale * gradient into the three gradient buffers.
double triplet_loss_backward(ConstVec sentence, ConstVec positive, ConstVec negative,
                             double margin, double scale, MutVec grad_sentence,
                             MutVec grad_positive, MutVec grad_negative);

/// -log softmax of the positive among {positive} + pool over cosine / tau.
/// Throws DegenerateVector on a zero-norm input and std::invalid_argument on
/// an empty pool or tau <= 0.
double info_nce_loss(ConstVec sentence, ConstVec positive, std::span<const ConstVec> pool,
                     double tau);

/// Same value; adds scale * gradient into the buffers (grad_pool aligned with pool).
double info_nce_loss_backward(ConstVec sentence, ConstVec positive,
                              std::span<const ConstVec> pool, double tau, double scale,
                              MutVec grad_sentence, MutVec grad_positive,
                              std::span<const MutVec> grad_pool);

}  // namespace dsim
