#include "cass/adam.hpp"

#include <cmath>

#include "cass/errors.hpp"
#include "cass/kernels.hpp"

namespace cass {

AdamState AdamState::init(const ParamList& params, AdamConfig config) {
    AdamState s;
    s.config = config;
    for (const NamedParam& p : params) {
        s.first_moment.emplace_back(p.tensor.numel(), 0.0);
        s.second_moment.emplace_back(p.tensor.numel(), 0.0);
    }
    return s;
}

void adam_step(ParamList& params, AdamState& state) {
    if (params.size() != state.first_moment.size()) {
        throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& t = params[i].tensor;
        if (state.first_moment[i].size() != t.numel()) {
            throw ShapeError("adam_step: moment size mismatch for " + params[i].name);
        }
        for (double g : t.grad()) {
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + params[i].name);
        }
    }

    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const kernels::AdamCoeffs coeffs{
        state.config.lr,
        state.config.beta1,
        state.config.beta2,
        state.config.epsilon,
        1.0 - std::pow(state.config.beta1, t),
        1.0 - std::pow(state.config.beta2, t),
    };
    std::vector<double> zeros;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i].tensor;
        const double* g = p.grad().data();
        if (!p.has_grad()) {
            zeros.assign(p.numel(), 0.0);
            g = zeros.data();
        }
        kernels::active().adam_update(p.mutable_data().data(), g, state.first_moment[i].data(),
                                      state.second_moment[i].data(), p.numel(), coeffs);
    }
}

void zero_grads(ParamList& params) {
    for (NamedParam& p : params) p.tensor.zero_grad();
}

}  // namespace cass
