#include "dsim/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dsim/error.hpp"

namespace dsim {

namespace {

double dot(ConstVec a, ConstVec b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double checked_norm(ConstVec v) {
    // A NaN norm comes from non-finite inputs and propagates into the loss.
    const double n = std::sqrt(dot(v, v));
    if (n == 0.0) {
        throw DegenerateVector("degenerate vector: cosine similarity undefined for zero norm");
    }
    return n;
}

void check_dims(ConstVec a, ConstVec b) {
    if (a.size() != b.size()) {
        throw DimensionMismatch("vector dimensions differ");
    }
}

double squared_distance(ConstVec a, ConstVec b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = a[i] - b[i];
        acc += diff * diff;
    }
    return acc;
}

// Adds scale * d cos(a, b) / d a into ga, given cos, |a| and |b|.
void add_cosine_grad(ConstVec a, ConstVec b, double cos, double na, double nb, double scale,
                     MutVec ga) {
    const double inv_ab = 1.0 / (na * nb);
    const double c_over_aa = cos / (na * na);
    for (std::size_t i = 0; i < a.size(); ++i) {
        ga[i] += scale * (b[i] * inv_ab - c_over_aa * a[i]);
    }
}

struct InfoNceForward {
    double loss;
    double sentence_norm;
    double positive_norm;
    double positive_cos;
    std::vector<double> pool_norms;
    std::vector<double> pool_cos;
    std::vector<double> probabilities;  // [positive, pool...]
};

InfoNceForward info_nce_forward(ConstVec s, ConstVec p, std::span<const ConstVec> pool,
                                double tau) {
    if (pool.empty()) {
        throw std::invalid_argument("info_nce_loss: in-batch negative pool is empty");
    }
    if (!(tau > 0.0)) {
        throw std::invalid_argument("info_nce_loss: temperature must be positive");
    }
    check_dims(s, p);
    InfoNceForward f;
    f.sentence_norm = checked_norm(s);
    f.positive_norm = checked_norm(p);
    f.positive_cos = dot(s, p) / (f.sentence_norm * f.positive_norm);
    f.pool_norms.reserve(pool.size());
    f.pool_cos.reserve(pool.size());
    for (const ConstVec n : pool) {
        check_dims(s, n);
        const double nn = checked_norm(n);
        f.pool_norms.push_back(nn);
        f.pool_cos.push_back(dot(s, n) / (f.sentence_norm * nn));
    }

    // log-sum-exp with max subtraction
    double max_logit = f.positive_cos / tau;
    for (const double c : f.pool_cos) max_logit = std::max(max_logit, c / tau);
    f.probabilities.resize(pool.size() + 1);
    f.probabilities[0] = std::exp(f.positive_cos / tau - max_logit);
    double total = f.probabilities[0];
    for (std::size_t k = 0; k < pool.size(); ++k) {
        f.probabilities[k + 1] = std::exp(f.pool_cos[k] / tau - max_logit);
        total += f.probabilities[k + 1];
    }
    f.loss = (max_logit - f.positive_cos / tau) + std::log(total);
    for (double& q : f.probabilities) q /= total;
    return f;
}

}  // namespace

double cosine_similarity(ConstVec a, ConstVec b) {
    check_dims(a, b);
    return dot(a, b) / (checked_norm(a) * checked_norm(b));
}

double triplet_loss(ConstVec sentence, ConstVec positive, ConstVec negative, double margin) {
    check_dims(sentence, positive);
    check_dims(sentence, negative);
    const double t = margin + squared_distance(sentence, positive) -
                     squared_distance(sentence, negative);
    return std::max(0.0, t);
}

double triplet_loss_backward(ConstVec s, ConstVec p, ConstVec n, double margin, double scale,
                             MutVec gs, MutVec gp, MutVec gn) {
    const double loss = triplet_loss(s, p, n, margin);
    if (loss <= 0.0) return 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        gs[i] += scale * 2.0 * (n[i] - p[i]);
        gp[i] += scale * -2.0 * (s[i] - p[i]);
        gn[i] += scale * 2.0 * (s[i] - n[i]);
    }
    return loss;
}

double info_nce_loss(ConstVec sentence, ConstVec positive, std::span<const ConstVec> pool,
                     double tau) {
    return info_nce_forward(sentence, positive, pool, tau).loss;
}

double info_nce_loss_backward(ConstVec s, ConstVec p, std::span<const ConstVec> pool,
                              double tau, double scale, MutVec gs, MutVec gp,
                              std::span<const MutVec> gpool) {
    const InfoNceForward f = info_nce_forward(s, p, pool, tau);
    // dL/dz_0 = q_0 - 1, dL/dz_k = q_k, z = cos / tau
    const double w0 = scale * (f.probabilities[0] - 1.0) / tau;
    add_cosine_grad(s, p, f.positive_cos, f.sentence_norm, f.positive_norm, w0, gs);
    add_cosine_grad(p, s, f.positive_cos, f.positive_norm, f.sentence_norm, w0, gp);
    for (std::size_t k = 0; k < pool.size(); ++k) {
        const double wk = scale * f.probabilities[k + 1] / tau;
        add_cosine_grad(s, pool[k], f.pool_cos[k], f.sentence_norm, f.pool_norms[k], wk, gs);
        add_cosine_grad(pool[k], s, f.pool_cos[k], f.pool_norms[k], f.sentence_norm, wk,
                        gpool[k]);
    }
    return f.loss;
}

}  // namespace dsim
