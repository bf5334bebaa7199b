#pragma once

#include <cstdint>
#include <vector>

#include "cass/tensor.hpp"

namespace cass {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct AdamState {
    AdamConfig config;
    std::uint64_t step_count = 0;
    std::vector<std::vector<double>> first_moment;   // one per parameter
    std::vector<std::vector<double>> second_moment;

    static AdamState init(const ParamList& params, AdamConfig config);
};

// One bias-corrected Adam update using each parameter's accumulated grad
// (absent grad == zero grad). Throws NumericError naming the first parameter
// with a non-finite gradient; nothing is modified in that case.
void adam_step(ParamList& params, AdamState& state);

void zero_grads(ParamList& params);

}  // namespace cass
