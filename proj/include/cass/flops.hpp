#pragma once

#include <cstdint>

namespace cass {

// Attention-score cost of one encoder layer: 2*T*C*D for the interactive
// (cross-attention) layer, (T^2 + C^2)*D for two independent self-attention towers.
constexpr std::uint64_t flop_estimate(std::uint64_t time_steps, std::uint64_t channels,
                                      std::uint64_t width, bool interactive) {
    return interactive ? 2 * time_steps * channels * width
                       : (time_steps * time_steps + channels * channels) * width;
}

}  // namespace cass
