#include "dsim/adam.hpp"

#include "dsim/error.hpp"

namespace dsim {

void adam_step(std::span<const std::span<float>> params,
               std::span<const std::span<const double>> grads, AdamState& state, double lr) {
    if (params.size() != grads.size()) {
        throw DimensionMismatch("adam_step: parameter and gradient tensor counts differ");
    }
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (params[t].size() != grads[t].size()) {
            throw DimensionMismatch("adam_step: shape mismatch in tensor " + std::to_string(t));
        }
    }
    if (state.first_moment.empty() && state.second_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.size(), 0.0f);
            state.second_moment.emplace_back(p.size(), 0.0f);
        }
    }
    if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
        throw DimensionMismatch("adam_step: optimizer state tracks a different tensor count");
    }
    for (std::size_t t = 0; t < params.size(); ++t) {
        if (state.first_moment[t].size() != params[t].size() ||
            state.second_moment[t].size() != params[t].size()) {
            throw DimensionMismatch("adam_step: moment shape mismatch in tensor " +
                                    std::to_string(t));
        }
    }

    ++state.step;
    const auto coeff = AdamStepCoefficients::at(state.config, state.step, lr);
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto p = params[t];
        auto g = grads[t];
        auto& m = state.first_moment[t];
        auto& v = state.second_moment[t];
        for (std::size_t i = 0; i < p.size(); ++i) adam_update(p[i], m[i], v[i], g[i], coeff);
    }
}

}  // namespace dsim
