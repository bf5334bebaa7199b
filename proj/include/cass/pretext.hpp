#pragma once

// Pretext objectives: next trend prediction (NTP), contextual similarity (CS)
// and the next value prediction (NVP) baseline.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "cass/augment.hpp"
#include "cass/encoder.hpp"
#include "cass/nn.hpp"
#include "cass/tensor.hpp"

namespace cass {

struct LossWeights {
    double alpha1 = 2.0;  // NTP
    double alpha2 = 1.0;  // CS
    double tau = 0.2;

    void validate() const;  // throws ConfigError
};

// ---- NTP ----------------------------------------------------------------

// Truncation step t is 1-based in [1, T-1]: the first t columns are kept,
// columns t..T-1 (0-based) are zero, and label j is x[j][t] >= x[j][t-1].
struct NtpInstance {
    Tensor truncated;  // [C, T]
    std::size_t t;
    std::vector<int> labels;  // C entries in {0, 1}
};

// Keeps the first t columns of x: [C, T] and zeroes the rest.
Tensor truncate_series(const Tensor& x, std::size_t t);

NtpInstance make_ntp_instance(const Tensor& x, std::size_t t);

// k distinct truncation steps; with k > T - 1 steps repeat and a warning is logged.
std::vector<NtpInstance> make_ntp_instances(const Tensor& x, std::size_t k_ntp, std::mt19937_64& rng);

// Instances for a whole batch stacked for a single encoder pass.
struct NtpBatch {
    Tensor inputs;            // [samples * k, C, T]
    std::vector<int> labels;  // samples * k * C, row-major over (instance, channel)
    std::size_t samples = 0;
};

// x: [B, C, T]
NtpBatch build_ntp_batch(const Tensor& x, std::size_t k_ntp, std::mt19937_64& rng);

// ---- CS -----------------------------------------------------------------

enum class Polarity { Original, Positive, Negative };

// Elements are grouped per origin: original, interval_adjust, sync_permute,
// async_permute, async_permute (the last two absent without negatives).
struct CsBatch {
    Tensor samples;  // [5B or 3B, C, T]
    std::vector<std::size_t> origin;
    std::vector<Polarity> polarity;

    std::size_t size() const { return origin.size(); }
};

// originals: [B, C, T]
CsBatch build_cs_batch(const Tensor& originals, const AugmentConfig& cfg, std::mt19937_64& rng,
                       bool with_negatives = true);

// Negatives become positives.
CsBatch reverse_neg_mode(CsBatch batch);

// One group per original; positives are the same-origin Positive elements.
std::vector<ContrastiveGroup> cs_groups(const CsBatch& batch);

// ---- heads and losses ---------------------------------------------------

struct PretextHeads {
    Linear ntp;       // D -> 2
    Linear cs_inner;  // rows * D -> D
    Linear cs_outer;  // D -> 128
    Linear nvp;       // D -> 1

    static constexpr std::size_t kProjectionWidth = 128;

    static PretextHeads init(const EncoderConfig& config, std::uint64_t seed);
    ParamList named_parameters() const;
};

// Sum of CE over channels and truncation points, divided by the sample count.
Tensor ntp_loss(const CatParams& params, const EncoderConfig& config, const PretextHeads& heads,
                const NtpBatch& batch, const ForwardContext& ctx = {});

// phi_1 on flat representations, then L2-normalised rows: [N, 128].
Tensor cs_projections(const Tensor& flat, const PretextHeads& heads);

// Contrastive loss on given projections (rows in batch order).
Tensor cs_loss_from_projections(const Tensor& projections, const CsBatch& batch, double tau);

Tensor cs_loss(const CatParams& params, const EncoderConfig& config, const PretextHeads& heads,
               const CsBatch& batch, double tau, const ForwardContext& ctx = {});

struct NvpBatch {
    Tensor inputs;                // [samples * points, C, T]
    std::vector<double> targets;  // samples * points * C
    std::size_t samples = 0;
};

// ceil(0.15 (T - 1)) distinct truncation points per sample; the target is the
// value right after the kept prefix.
std::size_t nvp_point_count(std::size_t length);
NvpBatch build_nvp_batch(const Tensor& x, std::mt19937_64& rng);

// Squared error summed over channels and points, divided by the sample count.
Tensor nvp_loss(const CatParams& params, const EncoderConfig& config, const PretextHeads& heads,
                const NvpBatch& batch, const ForwardContext& ctx = {});

Tensor combined_loss(const Tensor& ntp, const Tensor& cs, const LossWeights& weights);
double combined_loss(double ntp, double cs, const LossWeights& weights);

}  // namespace cass
