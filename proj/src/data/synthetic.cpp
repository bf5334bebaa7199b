#include <cmath>
#include <numbers>
#include <random>

#include "cass/data.hpp"
#include "cass/errors.hpp"

namespace cass {

MtsDataset make_synthetic(const SyntheticConfig& cfg) {
    if (cfg.channels < 2 || cfg.length < 8 || cfg.samples < 2) {
        throw ConfigError("synthetic fixture needs C >= 2, T >= 8, M >= 2");
    }
    const std::size_t c = cfg.channels;
    const std::size_t t = cfg.length;
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    MtsDataset ds;
    ds.name = "synthetic";
    ds.class_names = {"A", "B"};
    std::vector<double> values(cfg.samples * c * t);
    const std::size_t warmup = 8;
    for (std::size_t i = 0; i < cfg.samples; ++i) {
        const int label = static_cast<int>(i % 2);
        ds.labels.push_back(label);
        // Class A: followers copy the driver one step late with the same sign.
        // Class B: three steps late with flipped sign.
        const std::size_t lag = label == 0 ? 1 : 3;
        const double sign = label == 0 ? 1.0 : -1.0;

        std::vector<double> driver(t + warmup, 0.0);
        for (std::size_t k = 1; k < driver.size(); ++k) driver[k] = 0.8 * driver[k - 1] + 0.6 * gauss(rng);
        const double phase = std::uniform_real_distribution<double>(0.0, 1.0)(rng);

        double* x = values.data() + i * c * t;
        for (std::size_t k = 0; k < t; ++k) {
            const double s = driver[k + warmup];
            const double lagged = driver[k + warmup - lag];
            const double pos = (static_cast<double>(k) + phase) / static_cast<double>(t);
            const double trend = cfg.trend_amplitude * (label == 0 ? std::sin(std::numbers::pi * pos) : -std::sin(std::numbers::pi * pos));
            x[k] = s + cfg.noise * gauss(rng);
            for (std::size_t j = 1; j < c; ++j) {
                const double mix = (j % 2 == 1) ? sign * lagged : 0.5 * (s + sign * lagged);
                x[j * t + k] = mix + trend + cfg.noise * gauss(rng);
            }
        }
    }
    ds.series = Tensor::from({cfg.samples, c, t}, std::move(values));
    return ds;
}

}  // namespace cass
