#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "cass/errors.hpp"
#include "cass/log.hpp"
#include "cass/pretext.hpp"
#include "gradcheck.hpp"

using namespace cass;
using cass::testing::check_gradients;
using cass::testing::random_tensor;

namespace {

EncoderConfig tiny(std::size_t c, std::size_t t, std::size_t d = 4) {
    EncoderConfig cfg;
    cfg.channels = c;
    cfg.length = t;
    cfg.width = d;
    cfg.layers = 1;
    cfg.heads = 1;
    cfg.dropout = 0.0;
    return cfg;
}

// Label oracle: 1 iff x[j][t] >= x[j][t-1] (0-based), t the number of kept steps.
std::vector<int> oracle_labels(const Tensor& x, std::size_t t) {
    std::vector<int> labels;
    for (std::size_t j = 0; j < x.size(0); ++j) labels.push_back(x.at({j, t}) >= x.at({j, t - 1}) ? 1 : 0);
    return labels;
}

Tensor unit_rows(std::size_t n, std::size_t d, std::mt19937_64& rng) {
    return l2_normalize_rows(random_tensor({n, d}, rng, false));
}

}  // namespace

// ---- NTP ----------------------------------------------------------------

TEST(Ntp, RiseAndTieExamples) {
    EXPECT_EQ(make_ntp_instance(Tensor::from({1, 3}, {1.0, 2.0, 1.5}), 1).labels, std::vector<int>{1});
    EXPECT_EQ(make_ntp_instance(Tensor::from({1, 3}, {1.0, 2.0, 1.5}), 2).labels, std::vector<int>{0});
    EXPECT_EQ(make_ntp_instance(Tensor::from({1, 3}, {2.0, 2.0, 3.0}), 1).labels, std::vector<int>{1});
}

TEST(Ntp, ConstantZeroSample) {
    std::mt19937_64 rng(1);
    for (const NtpInstance& inst : make_ntp_instances(Tensor::zeros({3, 6}), 4, rng)) {
        EXPECT_EQ(inst.labels, (std::vector<int>{1, 1, 1}));
        for (double v : inst.truncated.data()) EXPECT_EQ(v, 0.0);
    }
}

TEST(Ntp, TruncationKeepsPrefixAndZeroesTail) {
    std::mt19937_64 rng(2);
    const Tensor x = random_tensor({3, 8}, rng, false);
    for (std::size_t t = 1; t < 8; ++t) {
        const Tensor y = truncate_series(x, t);
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t s = 0; s < 8; ++s) EXPECT_EQ(y.at({c, s}), s < t ? x.at({c, s}) : 0.0);
    }
    EXPECT_THROW(truncate_series(x, 0), IndexError);
    EXPECT_THROW(truncate_series(x, 8), IndexError);
}

TEST(Ntp, LabelsMatchBruteForceOracle) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> level(-2, 2);  // coarse values force ties
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> v(24);
        for (double& e : v) e = level(rng);
        const Tensor x = Tensor::from({3, 8}, v);
        for (const NtpInstance& inst : make_ntp_instances(x, 7, rng)) {
            EXPECT_EQ(inst.labels, oracle_labels(x, inst.t));
            EXPECT_EQ(inst.truncated.values(), truncate_series(x, inst.t).values());
        }
    }
}

TEST(Ntp, StepsAreDistinctAndInRange) {
    std::mt19937_64 rng(4);
    const Tensor x = random_tensor({2, 12}, rng, false);
    for (int trial = 0; trial < 50; ++trial) {
        const auto insts = make_ntp_instances(x, 10, rng);
        ASSERT_EQ(insts.size(), 10u);
        std::set<std::size_t> steps;
        for (const auto& inst : insts) {
            EXPECT_GE(inst.t, 1u);
            EXPECT_LE(inst.t, 11u);
            steps.insert(inst.t);
        }
        EXPECT_EQ(steps.size(), 10u);
    }
}

TEST(Ntp, ShortSeriesFallsBackWithWarning) {
    log::set_quiet(true);
    std::mt19937_64 rng(5);
    const std::size_t before = log::warning_count();
    const auto insts = make_ntp_instances(Tensor::zeros({1, 4}), 10, rng);
    EXPECT_EQ(insts.size(), 10u);
    EXPECT_GT(log::warning_count(), before);
    log::set_quiet(false);
    EXPECT_THROW(make_ntp_instances(Tensor::zeros({1, 2}), 1, rng), ConfigError);
    EXPECT_THROW(make_ntp_instances(Tensor::zeros({1, 5}), 0, rng), ConfigError);
}

TEST(Ntp, BatchLayout) {
    std::mt19937_64 rng(6);
    // LSST-like C=6 with K_NTP=10: 60 CE terms per sample.
    const NtpBatch b = build_ntp_batch(random_tensor({2, 6, 36}, rng, false), 10, rng);
    EXPECT_EQ(b.samples, 2u);
    EXPECT_EQ(b.inputs.shape(), (Shape{20, 6, 36}));
    EXPECT_EQ(b.labels.size(), 2u * 60);
}

TEST(Ntp, UniformLogitsGiveClosedForm) {
    for (std::size_t samples : {1, 3}) {
        const std::size_t c = 3, k = 4;
        const EncoderConfig cfg = tiny(c, 8);
        const CatParams p = CatParams::init(cfg, 7);
        PretextHeads h = PretextHeads::init(cfg, 7);
        h.ntp.weight = Tensor::zeros({4, 2});
        h.ntp.bias = Tensor::zeros({2});
        std::mt19937_64 rng(7);
        const NtpBatch b = build_ntp_batch(random_tensor({samples, c, 8}, rng, false), k, rng);
        EXPECT_NEAR(ntp_loss(p, cfg, h, b).item(), static_cast<double>(k * c) * std::numbers::ln2, 1e-9);
    }
}

TEST(Ntp, GradientReachesEmbeddingsAndLayers) {
    const EncoderConfig cfg = tiny(2, 5);
    const CatParams p = CatParams::init(cfg, 8);
    const PretextHeads h = PretextHeads::init(cfg, 8);
    std::mt19937_64 rng(8);
    const NtpBatch b = build_ntp_batch(random_tensor({1, 2, 5}, rng, false), 2, rng);
    ParamList params = p.named_parameters(cfg);
    ntp_loss(p, cfg, h, b).backward();
    for (const auto& np : params) {
        ASSERT_TRUE(np.tensor.has_grad()) << np.name;
        double norm = 0.0;
        for (double g : np.tensor.grad()) norm += g * g;
        EXPECT_GT(norm, 0.0) << np.name;
    }
}

TEST(Ntp, TimeAwareVariantRejected) {
    EncoderConfig cfg = tiny(2, 5);
    cfg.variant = EncoderVariant::Tat;
    std::mt19937_64 rng(9);
    const NtpBatch b = build_ntp_batch(random_tensor({1, 2, 5}, rng, false), 2, rng);
    EXPECT_THROW(ntp_loss(CatParams::init(cfg, 9), cfg, PretextHeads::init(cfg, 9), b), ConfigError);
}

// ---- CS -----------------------------------------------------------------

TEST(Cs, BatchCompositionPerOrigin) {
    std::mt19937_64 rng(10);
    for (std::size_t b : {1, 4, 10}) {
        const Tensor x = random_tensor({b, 3, 16}, rng, false);
        const CsBatch batch = build_cs_batch(x, {}, rng);
        ASSERT_EQ(batch.size(), 5 * b);
        EXPECT_EQ(batch.samples.shape(), (Shape{5 * b, 3, 16}));
        for (std::size_t o = 0; o < b; ++o) {
            std::size_t counts[3] = {0, 0, 0};
            for (std::size_t i = 0; i < batch.size(); ++i)
                if (batch.origin[i] == o) ++counts[static_cast<int>(batch.polarity[i])];
            EXPECT_EQ(counts[0], 1u);
            EXPECT_EQ(counts[1], 2u);
            EXPECT_EQ(counts[2], 2u);
            // The first element of each group is the unmodified original.
            const Tensor orig = reshape(index_select(batch.samples, std::vector<std::size_t>{5 * o}), {3, 16});
            EXPECT_EQ(orig.values(), reshape(index_select(x, std::vector<std::size_t>{o}), {3, 16}).values());
        }
    }
    EXPECT_EQ(build_cs_batch(random_tensor({2, 3, 16}, rng, false), {}, rng, false).size(), 6u);
}

TEST(Cs, ReverseNegativeMode) {
    std::mt19937_64 rng(11);
    const CsBatch batch = reverse_neg_mode(build_cs_batch(random_tensor({3, 2, 12}, rng, false), {}, rng));
    EXPECT_EQ(batch.size(), 15u);
    EXPECT_EQ(std::count(batch.polarity.begin(), batch.polarity.end(), Polarity::Negative), 0);
    for (const ContrastiveGroup& g : cs_groups(batch)) EXPECT_EQ(g.positives.size(), 4u);
}

TEST(Cs, GroupsAnchorOnOriginals) {
    std::mt19937_64 rng(12);
    const CsBatch batch = build_cs_batch(random_tensor({4, 2, 12}, rng, false), {}, rng);
    const auto groups = cs_groups(batch);
    ASSERT_EQ(groups.size(), 4u);
    for (const ContrastiveGroup& g : groups) {
        EXPECT_EQ(batch.polarity[g.anchor], Polarity::Original);
        ASSERT_EQ(g.positives.size(), 2u);
        for (std::size_t p : g.positives) {
            EXPECT_EQ(batch.origin[p], batch.origin[g.anchor]);
            EXPECT_EQ(batch.polarity[p], Polarity::Positive);
        }
    }
}

TEST(Cs, IdenticalProjectionsGiveClosedForm) {
    std::mt19937_64 rng(13);
    for (std::size_t b : {1, 2, 4}) {
        const CsBatch batch = build_cs_batch(random_tensor({b, 2, 8}, rng, false), {}, rng);
        const Tensor proj = l2_normalize_rows(Tensor::full({5 * b, 16}, 1.0));
        EXPECT_NEAR(cs_loss_from_projections(proj, batch, 0.2).item(), 2.0 * std::log(5.0 * b - 1.0), 1e-6);
    }
}

TEST(Cs, SeparatedPositivesApproachZeroAsTauShrinks) {
    std::mt19937_64 rng(14);
    const CsBatch batch = build_cs_batch(random_tensor({1, 2, 8}, rng, false), {}, rng);
    // Original and positives at +e, negatives at -e.
    std::vector<double> rows;
    for (std::size_t i = 0; i < batch.size(); ++i) rows.push_back(batch.polarity[i] == Polarity::Negative ? -1.0 : 1.0);
    const Tensor proj = Tensor::from({batch.size(), 1}, rows);
    const double loose = cs_loss_from_projections(proj, batch, 1.0).item();
    const double tight = cs_loss_from_projections(proj, batch, 0.01).item();
    EXPECT_LT(tight, loose);
    // Each term tends to ln 2: the anchor's other positive shares the denominator.
    EXPECT_NEAR(tight, 2.0 * std::log(2.0), 1e-9);
}

TEST(Cs, InvariantUnderBatchReordering) {
    std::mt19937_64 rng(15);
    const CsBatch batch = build_cs_batch(random_tensor({3, 2, 8}, rng, false), {}, rng);
    const Tensor proj = unit_rows(batch.size(), 6, rng);
    std::vector<std::size_t> perm(batch.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    CsBatch shuffled = batch;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        shuffled.origin[i] = batch.origin[perm[i]];
        shuffled.polarity[i] = batch.polarity[perm[i]];
    }
    shuffled.samples = index_select(batch.samples, perm);
    EXPECT_NEAR(cs_loss_from_projections(index_select(proj, perm), shuffled, 0.2).item(),
                cs_loss_from_projections(proj, batch, 0.2).item(), 1e-12);
}

TEST(Cs, MovingPositiveTowardAnchorLowersLoss) {
    // The anchor's other positive shares the denominator, so the loss falls in
    // sim(anchor, p) only while p holds less than half of the anchor's softmax
    // mass; both interpolation points stay in that regime.
    std::mt19937_64 rng(16);
    const CsBatch batch = build_cs_batch(random_tensor({1, 2, 8}, rng, false), {}, rng);
    const Tensor proj = unit_rows(batch.size(), 6, rng);
    const ContrastiveGroup g = cs_groups(batch).front();
    const std::size_t p = g.positives.front(), d = 6;
    const double tau = 1.0;
    auto moved = [&](double lambda) {
        std::vector<double> v = proj.values();
        double norm = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            v[p * d + k] = (1 - lambda) * proj.at({p, k}) + lambda * proj.at({g.anchor, k});
            norm += v[p * d + k] * v[p * d + k];
        }
        for (std::size_t k = 0; k < d; ++k) v[p * d + k] /= std::sqrt(norm);
        return Tensor::from(proj.shape(), v);
    };
    auto share = [&](const Tensor& pr) {
        double total = 0.0, mine = 0.0;
        for (std::size_t m = 0; m < batch.size(); ++m) {
            if (m == g.anchor) continue;
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += pr.at({g.anchor, k}) * pr.at({m, k});
            total += std::exp(s / tau);
            if (m == p) mine = std::exp(s / tau);
        }
        return mine / total;
    };
    const double lambdas[] = {0.0, 0.15, 0.3};
    double previous = cs_loss_from_projections(proj, batch, tau).item();
    for (double lambda : {lambdas[1], lambdas[2]}) {
        const Tensor pr = moved(lambda);
        ASSERT_LT(share(pr), 0.5) << "lambda " << lambda;
        const double loss = cs_loss_from_projections(pr, batch, tau).item();
        EXPECT_LT(loss, previous) << "lambda " << lambda;
        previous = loss;
    }
}

TEST(Cs, RejectsNonPositiveTau) {
    const EncoderConfig cfg = tiny(2, 6);
    std::mt19937_64 rng(17);
    const CsBatch batch = build_cs_batch(random_tensor({1, 2, 6}, rng, false), {}, rng);
    EXPECT_THROW(cs_loss(CatParams::init(cfg, 1), cfg, PretextHeads::init(cfg, 1), batch, 0.0), ConfigError);
}

TEST(Cs, ProjectionsAreUnitRows) {
    const EncoderConfig cfg = tiny(3, 6);
    const PretextHeads h = PretextHeads::init(cfg, 18);
    std::mt19937_64 rng(18);
    const Tensor proj = cs_projections(random_tensor({5, 12}, rng, false), h);
    ASSERT_EQ(proj.shape(), (Shape{5, PretextHeads::kProjectionWidth}));
    for (std::size_t r = 0; r < 5; ++r) {
        double n = 0.0;
        for (std::size_t k = 0; k < PretextHeads::kProjectionWidth; ++k) n += proj.at({r, k}) * proj.at({r, k});
        EXPECT_NEAR(n, 1.0, 1e-12);
    }
}

// ---- NVP ----------------------------------------------------------------

TEST(Nvp, PointCount) {
    EXPECT_EQ(nvp_point_count(36), 6u);  // ceil(0.15 * 35)
    EXPECT_EQ(nvp_point_count(21), 3u);  // 0.15 * 20 is exactly 3
    EXPECT_EQ(nvp_point_count(128), 20u);
}

TEST(Nvp, BatchTargetsAndNonNegativeLoss) {
    const EncoderConfig cfg = tiny(2, 36);
    std::mt19937_64 rng(19);
    const Tensor x = random_tensor({2, 2, 36}, rng, false);
    const NvpBatch b = build_nvp_batch(x, rng);
    EXPECT_EQ(b.inputs.shape(), (Shape{12, 2, 36}));
    EXPECT_EQ(b.targets.size(), 24u);
    EXPECT_GE(nvp_loss(CatParams::init(cfg, 19), cfg, PretextHeads::init(cfg, 19), b).item(), 0.0);
}

TEST(Nvp, PerfectHeadOnConstantSeries) {
    const EncoderConfig cfg = tiny(2, 10);
    PretextHeads h = PretextHeads::init(cfg, 20);
    h.nvp.weight = Tensor::zeros({4, 1});
    h.nvp.bias = Tensor::from({1}, {1.5});
    std::mt19937_64 rng(20);
    const NvpBatch b = build_nvp_batch(Tensor::full({3, 2, 10}, 1.5), rng);
    EXPECT_EQ(nvp_loss(CatParams::init(cfg, 20), cfg, h, b).item(), 0.0);
}

// ---- combined ------------------------------------------------------------

TEST(Combined, DefaultsAndLinearity) {
    const LossWeights w;
    EXPECT_EQ(w.alpha1, 2.0);
    EXPECT_EQ(w.alpha2, 1.0);
    EXPECT_EQ(w.tau, 0.2);
    EXPECT_EQ(combined_loss(0.0, 0.0, w), 0.0);
    EXPECT_EQ(combined_loss(1.25, 3.5, w), 2.0 * 1.25 + 3.5);
    EXPECT_EQ(combined_loss(3.0, 0.0, w) + combined_loss(0.0, 7.0, w), combined_loss(3.0, 7.0, w));
    const LossWeights no_cs{2.0, 0.0, 0.2};
    EXPECT_EQ(combined_loss(0.75, 123.0, no_cs), 1.5);
    EXPECT_EQ(combined_loss(Tensor::scalar(1.25), Tensor::scalar(3.5), w).item(), combined_loss(1.25, 3.5, w));
}

TEST(Combined, WeightValidation) {
    EXPECT_THROW((LossWeights{0.0, 0.0, 0.2}.validate()), ConfigError);
    EXPECT_THROW((LossWeights{-1.0, 1.0, 0.2}.validate()), ConfigError);
    EXPECT_THROW((LossWeights{1.0, 1.0, 0.0}.validate()), ConfigError);
}

TEST(Combined, ZeroNtpWeightGivesNoNtpGradient) {
    const EncoderConfig cfg = tiny(2, 6);
    const CatParams p = CatParams::init(cfg, 21);
    const PretextHeads h = PretextHeads::init(cfg, 21);
    std::mt19937_64 rng(21);
    const Tensor x = random_tensor({1, 2, 6}, rng, false);
    const NtpBatch nb = build_ntp_batch(x, 2, rng);
    const CsBatch cb = build_cs_batch(x, {}, rng);
    combined_loss(ntp_loss(p, cfg, h, nb), cs_loss(p, cfg, h, cb, 0.2), LossWeights{0.0, 1.0, 0.2}).backward();
    for (double g : h.ntp.weight.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Combined, FullPipelineGradientCheck) {
    const EncoderConfig cfg = tiny(2, 4);
    const CatParams p = CatParams::init(cfg, 22);
    const PretextHeads h = PretextHeads::init(cfg, 22);
    std::mt19937_64 rng(22);
    const Tensor x = random_tensor({1, 2, 4}, rng, false);
    const NtpBatch nb = build_ntp_batch(x, 2, rng);
    const CsBatch cb = build_cs_batch(x, {}, rng);
    ParamList params = p.named_parameters(cfg);
    for (auto& np : h.named_parameters()) params.push_back(np);
    const auto report = check_gradients(
        [&] { return combined_loss(ntp_loss(p, cfg, h, nb), cs_loss(p, cfg, h, cb, 0.2), LossWeights{}); }, params);
    EXPECT_LT(report.max_rel_error, 1e-3) << report.worst;
}
