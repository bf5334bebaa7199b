#include "cass/augment.hpp"

#include <algorithm>
#include <numeric>

#include "cass/errors.hpp"

namespace cass {
namespace {

std::size_t uniform_index(std::size_t lo, std::size_t hi, std::mt19937_64& rng) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::pair<std::size_t, std::size_t> sample_dims(const Tensor& x) {
    if (x.dim() != 2) throw ShapeError("augment: expected [C, T], got " + shape_to_string(x.shape()));
    return {x.shape()[0], x.shape()[1]};
}

void permute_columns(const Tensor& x, std::size_t channel_begin, std::size_t channel_end,
                       const std::vector<std::size_t>& columns, std::vector<double>& out) {
    const std::size_t length = x.shape()[1];
    const auto src = x.data();
    for (std::size_t c = channel_begin; c < channel_end; ++c) {
        for (std::size_t t = 0; t < length; ++t) out[c * length + t] = src[c * length + columns[t]];
    }
}

}  // namespace

void AugmentConfig::validate() const {
    if (!(jitter_sigma > 0.0)) throw ConfigError("jitter_sigma must be > 0");
    const auto [imin, imax] = interval_count_range;
    if (imin < 1 || imin > imax) throw ConfigError("interval_count_range must satisfy 1 <= min <= max");
    const auto [smin, smax] = segment_count_range;
    if (smin < 1 || smin > smax) throw ConfigError("segment_count_range must satisfy 1 <= min <= max");
}

std::vector<Interval> draw_intervals(std::size_t length, const AugmentConfig& cfg, std::mt19937_64& rng) {
    const std::size_t count = uniform_index(cfg.interval_count_range.first, cfg.interval_count_range.second, rng);
    const std::size_t max_len = std::max<std::size_t>(1, length / 4);
    std::vector<Interval> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t len = std::min(uniform_index(1, max_len, rng), length);
        const std::size_t begin = uniform_index(0, length - len, rng);
        out.push_back({begin, begin + len});
    }
    return out;
}

Tensor interval_adjust_at(const Tensor& x, const std::vector<Interval>& intervals, double sigma,
                          std::mt19937_64& rng) {
    const auto [channels, length] = sample_dims(x);
    std::vector<bool> covered(length, false);
    for (const Interval& iv : intervals) {
        if (iv.begin > iv.end || iv.end > length) throw IndexError("interval outside the series");
        for (std::size_t t = iv.begin; t < iv.end; ++t) covered[t] = true;
    }
    std::vector<double> out = x.values();
    std::normal_distribution<double> noise(0.0, sigma);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t t = 0; t < length; ++t) {
            if (covered[t]) out[c * length + t] += noise(rng);
        }
    }
    return Tensor::from(x.shape(), std::move(out));
}

Tensor interval_adjust(const Tensor& x, const AugmentConfig& cfg, std::mt19937_64& rng) {
    const auto intervals = draw_intervals(sample_dims(x).second, cfg, rng);
    return interval_adjust_at(x, intervals, cfg.jitter_sigma, rng);
}

SegmentPlan draw_segment_plan(std::size_t length, const AugmentConfig& cfg, std::mt19937_64& rng) {
    const std::size_t hi = std::min(cfg.segment_count_range.second, length);
    const std::size_t lo = std::min(cfg.segment_count_range.first, hi);
    const std::size_t segments = uniform_index(lo, hi, rng);

    // s - 1 distinct cut points from [1, T - 1].
    std::vector<std::size_t> cuts(length - 1);
    std::iota(cuts.begin(), cuts.end(), std::size_t{1});
    for (std::size_t i = 0; i + 1 < segments; ++i) std::swap(cuts[i], cuts[uniform_index(i, cuts.size() - 1, rng)]);
    SegmentPlan plan;
    plan.starts.push_back(0);
    plan.starts.insert(plan.starts.end(), cuts.begin(), cuts.begin() + static_cast<std::ptrdiff_t>(segments - 1));
    std::sort(plan.starts.begin(), plan.starts.end());

    plan.order.resize(segments);
    std::iota(plan.order.begin(), plan.order.end(), std::size_t{0});
    for (std::size_t i = segments; i > 1; --i) std::swap(plan.order[i - 1], plan.order[uniform_index(0, i - 1, rng)]);
    return plan;
}

std::vector<std::size_t> plan_columns(const SegmentPlan& plan, std::size_t length) {
    std::vector<std::size_t> columns;
    columns.reserve(length);
    for (std::size_t seg : plan.order) {
        const std::size_t begin = plan.starts[seg];
        const std::size_t end = seg + 1 < plan.starts.size() ? plan.starts[seg + 1] : length;
        for (std::size_t t = begin; t < end; ++t) columns.push_back(t);
    }
    return columns;
}

Tensor sync_permute(const Tensor& x, const AugmentConfig& cfg, std::mt19937_64& rng) {
    const auto [channels, length] = sample_dims(x);
    if (length < 2) throw ShapeError("sync_permute needs T >= 2");
    const auto columns = plan_columns(draw_segment_plan(length, cfg, rng), length);
    std::vector<double> out(x.numel());
    permute_columns(x, 0, channels, columns, out);
    return Tensor::from(x.shape(), std::move(out));
}

Tensor async_permute(const Tensor& x, const AugmentConfig& cfg, std::mt19937_64& rng) {
    const auto [channels, length] = sample_dims(x);
    if (length < 2) throw ShapeError("async_permute needs T >= 2");
    std::vector<double> out(x.numel());
    for (std::size_t c = 0; c < channels; ++c) {
        permute_columns(x, c, c + 1, plan_columns(draw_segment_plan(length, cfg, rng), length), out);
    }
    return Tensor::from(x.shape(), std::move(out));
}

}  // namespace cass
