#pragma once

// Series augmentations for contrastive batches. All functions take a single
// sample x: [C, T] and an explicit RNG, and return a new [C, T] tensor.

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "cass/tensor.hpp"

namespace cass {

struct AugmentConfig {
    double jitter_sigma = 0.1;
    std::pair<std::size_t, std::size_t> interval_count_range{1, 5};
    std::pair<std::size_t, std::size_t> segment_count_range{4, 8};  // clipped to T
    std::uint64_t rng_seed = 0;

    void validate() const;  // throws ConfigError
};

// Half-open column range [begin, end).
struct Interval {
    std::size_t begin;
    std::size_t end;
};

// k ~ U[interval_count_range] intervals, each of length ~ U[1, max(1, T/4)]
// at a uniform start.
std::vector<Interval> draw_intervals(std::size_t length, const AugmentConfig& cfg, std::mt19937_64& rng);

// Adds N(0, sigma^2) noise to every element whose column lies in the union of
// `intervals`; the intervals are shared by all channels, noise is per element.
Tensor interval_adjust_at(const Tensor& x, const std::vector<Interval>& intervals, double sigma,
                          std::mt19937_64& rng);
Tensor interval_adjust(const Tensor& x, const AugmentConfig& cfg, std::mt19937_64& rng);

// A split of [0, T) into contiguous segments and the order to emit them in.
struct SegmentPlan {
    std::vector<std::size_t> starts;  // ascending, starts[0] == 0
    std::vector<std::size_t> order;   // permutation of segment indices
};

SegmentPlan draw_segment_plan(std::size_t length, const AugmentConfig& cfg, std::mt19937_64& rng);

// Source column for every output column under `plan`.
std::vector<std::size_t> plan_columns(const SegmentPlan& plan, std::size_t length);

// One plan applied to every channel.
Tensor sync_permute(const Tensor& x, const AugmentConfig& cfg, std::mt19937_64& rng);

// An independent plan per channel.
Tensor async_permute(const Tensor& x, const AugmentConfig& cfg, std::mt19937_64& rng);

}  // namespace cass
