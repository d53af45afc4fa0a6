#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "irisseg/losses.hpp"
#include "oracles.hpp"

using namespace irisseg;

namespace {

LabelMask row_mask(std::initializer_list<int> vals) {
    LabelMask m(1, vals.size());
    std::size_t i = 0;
    for (int v : vals) m[i++] = static_cast<std::uint8_t>(v);
    return m;
}

// The 1x2 example: pixel 0 is iris, pixel 1 background; predictions
// ([0.2, 0.8], [0.8, 0.2]) per pixel.
ProbMap<double> two_pixel_probs() {
    ProbMap<double> y(1, 2, 2);
    y.at(0, 0) = 0.2, y.at(1, 0) = 0.8;
    y.at(0, 1) = 0.8, y.at(1, 1) = 0.2;
    return y;
}

ProbMap<double> random_probs(std::mt19937_64& gen, std::size_t h, std::size_t w) {
    std::uniform_real_distribution<double> u(0.02, 0.98);
    ProbMap<double> y(h, w, 2);
    for (std::size_t m = 0; m < y.pixels(); ++m) {
        y.at(1, m) = u(gen);
        y.at(0, m) = 1.0 - y.at(1, m);
    }
    return y;
}

LabelMask random_two_class(std::mt19937_64& gen, std::size_t h, std::size_t w) {
    for (;;) {
        auto m = oracle::random_mask(gen, h, w);
        const auto fg = std::count(m.values().begin(), m.values().end(), 1);
        if (fg > 0 && fg < static_cast<long>(m.size())) return m;
    }
}

// Largest entrywise relative error, floored at 1e-3 of the gradient scale.
double rel_error(std::span<const double> a, const std::vector<double>& n) {
    double scale = 0;
    for (std::size_t i = 0; i < a.size(); ++i) scale = std::max({scale, std::abs(a[i]), std::abs(n[i])});
    double worst = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        worst = std::max(worst, std::abs(a[i] - n[i]) / std::max({std::abs(a[i]), std::abs(n[i]), 1e-3 * scale}));
    return worst;
}

template <class F>
std::vector<double> fd(F&& loss_of, const ProbMap<double>& y, double h = 1e-5) {
    std::vector<double> x(y.values().begin(), y.values().end());
    return oracle::central_difference(
        [&](const std::vector<double>& v) {
            ProbMap<double> p = y;
            std::copy(v.begin(), v.end(), p.values().begin());
            return loss_of(p);
        },
        x, h);
}

bool tie_free(const ProbMap<double>& y, const LabelMask& t, double gap) {
    for (std::size_t c = 0; c < 2; ++c) {
        std::vector<double> e;
        for (std::size_t m = 0; m < y.pixels(); ++m) e.push_back(t[m] == c ? 1 - y.at(c, m) : y.at(c, m));
        std::sort(e.begin(), e.end());
        for (std::size_t k = 1; k < e.size(); ++k)
            if (e[k] - e[k - 1] < gap) return false;
    }
    return true;
}

}  // namespace

TEST(DiceWeights, InverseSquaredArea) {
    EXPECT_EQ(dice_weights(row_mask({1, 0}), ClassSpec::binary()), (ClassWeights{1.0, 1.0}));
    EXPECT_EQ(dice_weights(LabelMask(2, 2), ClassSpec::binary()), (ClassWeights{1.0 / 16, 0.0}));
    LabelMask half(4, 4);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 4; ++c) half(r, c) = 1;
    EXPECT_EQ(dice_weights(half, ClassSpec::binary()), (ClassWeights{1.0 / 64, 1.0 / 64}));
}

TEST(DiceLoss, HandValue) {
    const auto r = generalized_dice_loss(two_pixel_probs(), row_mask({1, 0}));
    EXPECT_NEAR(r.value, 1.0 - 3.2 / 3.36, 1e-12);
    EXPECT_NEAR(r.value, 0.047619, 1e-6);
}

TEST(DiceLoss, PerfectMatchIsExactOptimum) {
    std::mt19937_64 gen(5);
    for (std::size_t size : {4, 16, 64, 256}) {
        const auto t = oracle::random_blob(gen, size, size);
        const auto r = generalized_dice_loss(one_hot(t, ClassSpec::binary()), t);
        EXPECT_LE(std::abs(r.value), 1e-6);
        for (double g : r.grad.values()) EXPECT_LE(std::abs(g), 1e-5);
    }
    LabelMask half(64, 64);
    for (std::size_t i = 0; i < half.size() / 2; ++i) half[i] = 1;
    EXPECT_LE(generalized_dice_loss(one_hot(half, ClassSpec::binary()), half).value, 1e-6);
}

TEST(DiceLoss, GradientMatchesFiniteDifferences) {
    std::mt19937_64 gen(17);
    for (int i = 0; i < 100; ++i) {
        const auto t = random_two_class(gen, 4, 4);
        const auto y = random_probs(gen, 4, 4);
        const auto r = generalized_dice_loss(y, t);
        const auto n = fd([&](const ProbMap<double>& p) { return generalized_dice_loss(p, t).value; }, y);
        EXPECT_LE(rel_error(r.grad.values(), n), 1e-4);
        EXPECT_GE(r.value, 0.0);
        EXPECT_LE(r.value, 1.0);
    }
}

TEST(DiceLoss, SpatialPermutationInvariance) {
    std::mt19937_64 gen(31);
    const auto t = random_two_class(gen, 5, 5);
    const auto y = random_probs(gen, 5, 5);
    std::vector<std::size_t> perm(25);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), gen);
    LabelMask tp(5, 5);
    ProbMap<double> yp(5, 5, 2);
    for (std::size_t m = 0; m < 25; ++m) {
        tp[m] = t[perm[m]];
        for (std::size_t n = 0; n < 2; ++n) yp.at(n, m) = y.at(n, perm[m]);
    }
    EXPECT_NEAR(generalized_dice_loss(y, t).value, generalized_dice_loss(yp, tp).value, 1e-14);
}

TEST(DiceLoss, DimensionMismatch) {
    EXPECT_THROW(generalized_dice_loss(ProbMap<double>(2, 2, 2), LabelMask(2, 3)), DataError);
}

TEST(CrossEntropy, Values) {
    ProbMap<double> y(1, 1, 2);
    y.at(0, 0) = 0.5, y.at(1, 0) = 0.5;
    EXPECT_NEAR(cross_entropy_loss(y, row_mask({1})).value, std::log(2.0), 1e-7);
    std::mt19937_64 gen(3);
    const auto t = oracle::random_blob(gen, 8, 8);
    EXPECT_LE(cross_entropy_loss(one_hot(t, ClassSpec::binary()), t).value, 1e-6);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
    std::mt19937_64 gen(19);
    for (int i = 0; i < 100; ++i) {
        const auto t = random_two_class(gen, 4, 4);
        const auto y = random_probs(gen, 4, 4);
        const auto r = cross_entropy_loss(y, t);
        EXPECT_LE(rel_error(r.grad.values(), fd([&](const auto& p) { return cross_entropy_loss(p, t).value; }, y)),
                  1e-4);
        EXPECT_GE(r.value, 0.0);
        // only true-class entries carry gradient
        for (std::size_t m = 0; m < 16; ++m) EXPECT_EQ(r.grad.at(1 - t[m], m), 0.0);
    }
}

TEST(DiceCe, EndpointsAreExactComponents) {
    std::mt19937_64 gen(23);
    const auto t = random_two_class(gen, 4, 4);
    const auto y = random_probs(gen, 4, 4);
    const auto dice = generalized_dice_loss(y, t), ce = cross_entropy_loss(y, t);
    const auto a1 = dice_ce_loss(y, t, 1.0), a0 = dice_ce_loss(y, t, 0.0);
    EXPECT_EQ(a1.value, dice.value);
    EXPECT_EQ(a1.grad, dice.grad);
    EXPECT_EQ(a0.value, ce.value);
    EXPECT_EQ(a0.grad, ce.grad);
}

TEST(DiceCe, HalfMixOnTwoPixelExample) {
    const auto y = two_pixel_probs();
    const auto t = row_mask({1, 0});
    // CE: both true-class probabilities are 0.8
    const double ce = -std::log(0.8 + 1e-8);
    EXPECT_NEAR(dice_ce_loss(y, t, 0.5).value, 0.5 * (1 - 3.2 / 3.36) + 0.5 * ce, 1e-12);
    EXPECT_THROW(dice_ce_loss(y, t, 1.5), ConfigError);
}

TEST(LovaszGrad, SmallCases) {
    const std::uint8_t one[] = {1};
    EXPECT_EQ(lovasz_grad(one), std::vector<double>{1.0});
    const std::uint8_t zeros[] = {0, 0, 0};
    EXPECT_EQ(lovasz_grad(zeros), std::vector<double>(3, 0.0));
    EXPECT_THROW(lovasz_grad({}), DataError);
}

TEST(LovaszGrad, PrefixSumsAreJaccardComplements) {
    std::mt19937_64 gen(41);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::uint8_t> gt(6);
        std::vector<int> truth(6);
        for (int i = 0; i < 6; ++i) truth[i] = gt[i] = static_cast<std::uint8_t>(gen() % 2);
        if (std::count(truth.begin(), truth.end(), 1) == 0) continue;
        const auto g = lovasz_grad(gt);
        double prefix = 0;
        std::vector<int> mistakes;
        for (int k = 0; k < 6; ++k) {
            prefix += g[k];
            mistakes.push_back(k);
            EXPECT_NEAR(prefix, oracle::jaccard_complement(truth, mistakes), 1e-14);
        }
    }
}

TEST(LovaszSoftmax, PerfectPredictionIsZero) {
    std::mt19937_64 gen(2);
    const auto t = oracle::random_blob(gen, 16, 16);
    EXPECT_EQ(lovasz_softmax_loss(one_hot(t, ClassSpec::binary()), t).value, 0.0);
}

TEST(LovaszSoftmax, MatchesLovaszExtensionOracle) {
    auto check = [](const ProbMap<double>& y, const LabelMask& t) {
        double sum = 0;
        int present = 0;
        for (std::size_t c = 0; c < y.classes(); ++c) {
            std::vector<int> truth(y.pixels());
            std::vector<double> err(y.pixels());
            for (std::size_t m = 0; m < y.pixels(); ++m) {
                truth[m] = t[m] == c;
                err[m] = truth[m] ? 1 - y.at(c, m) : y.at(c, m);
            }
            if (std::count(truth.begin(), truth.end(), 1) == 0) continue;
            sum += oracle::lovasz_extension(truth, err);
            ++present;
        }
        EXPECT_NEAR(lovasz_softmax_loss(y, t).value, sum / present, 1e-14);
    };
    check(two_pixel_probs(), row_mask({1, 0}));
    std::mt19937_64 gen(43);
    for (int i = 0; i < 50; ++i) {
        const auto t = oracle::random_mask(gen, 3, 3);
        if (std::count(t.values().begin(), t.values().end(), 0) == 9) continue;
        check(random_probs(gen, 3, 3), t);
    }
}

TEST(LovaszSoftmax, GradientMatchesFiniteDifferencesAwayFromTies) {
    std::mt19937_64 gen(47);
    int checked = 0;
    while (checked < 100) {
        const auto t = random_two_class(gen, 4, 4);
        const auto y = random_probs(gen, 4, 4);
        if (!tie_free(y, t, 1e-3)) continue;
        const auto r = lovasz_softmax_loss(y, t);
        EXPECT_LE(rel_error(r.grad.values(), fd([&](const auto& p) { return lovasz_softmax_loss(p, t).value; }, y)),
                  1e-3);
        EXPECT_GE(r.value, 0.0);
        EXPECT_LE(r.value, 1.0);
        ++checked;
    }
}

TEST(SignedDistance, CenterPixel) {
    LabelMask m(3, 3);
    m(1, 1) = 1;
    const auto s = signed_distance_transform(m, 1);
    ASSERT_FALSE(s.degenerate);
    EXPECT_EQ(s.phi(1, 1), 0.0);
    EXPECT_EQ(s.phi(0, 1), 1.0);
    EXPECT_EQ(s.phi(1, 2), 1.0);
    EXPECT_EQ(s.phi(0, 0), std::sqrt(2.0));
    EXPECT_EQ(s.phi(2, 2), std::sqrt(2.0));
}

TEST(SignedDistance, DegenerateMasks) {
    EXPECT_TRUE(signed_distance_transform(LabelMask(4, 4, 1), 1).degenerate);
    EXPECT_TRUE(signed_distance_transform(LabelMask(4, 4, 0), 1).degenerate);
}

TEST(SignedDistance, RandomBlobsMatchExhaustiveSearchExactly) {
    std::mt19937_64 gen(53);
    for (int i = 0; i < 40; ++i) {
        const auto m = i % 4 == 0 ? oracle::random_mask(gen, 16, 16) : oracle::random_blob(gen, 16, 16);
        const auto want = oracle::signed_distance(m, 1);
        const auto got = signed_distance_transform(m, 1);
        ASSERT_EQ(got.degenerate, !want.has_value());
        if (!want) continue;
        for (std::size_t k = 0; k < m.size(); ++k) ASSERT_EQ(got.phi[k], (*want)[k]) << "pixel " << k;
    }
}

TEST(SignedDistance, NonSquareShapes) {
    std::mt19937_64 gen(59);
    for (auto [h, w] : {std::pair{1, 9}, {9, 1}, {5, 13}, {13, 4}}) {
        const auto m = oracle::random_mask(gen, h, w);
        const auto want = oracle::signed_distance(m, 1);
        const auto got = signed_distance_transform(m, 1);
        if (!want) continue;
        for (std::size_t k = 0; k < m.size(); ++k) EXPECT_EQ(got.phi[k], (*want)[k]);
    }
}

TEST(BoundaryLoss, MinimumAndHalfValues) {
    std::mt19937_64 gen(61);
    const auto t = oracle::random_blob(gen, 12, 12);
    const auto s = signed_distance_transform(t, 1);
    ASSERT_FALSE(s.degenerate);
    const double M = 144;
    ProbMap<double> best(12, 12, 2), half(12, 12, 2, 0.5);
    double phi_sum = 0;
    for (std::size_t m = 0; m < 144; ++m) {
        best.at(1, m) = s.phi[m] < 0 ? 1.0 : 0.0;
        best.at(0, m) = 1.0 - best.at(1, m);
        phi_sum += s.phi[m];
    }
    EXPECT_NEAR(boundary_loss(best, s).value, boundary_loss_minimum(s), 1e-14);
    EXPECT_NEAR(boundary_loss(half, s).value, phi_sum / (2 * M), 1e-14);
    EXPECT_THROW(boundary_loss(half, signed_distance_transform(LabelMask(12, 12), 1)), DataError);
}

TEST(BoundaryLoss, GradientAndLinearity) {
    std::mt19937_64 gen(67);
    for (int i = 0; i < 100; ++i) {
        const auto t = random_two_class(gen, 4, 4);
        const auto s = signed_distance_transform(t, 1);
        const auto y1 = random_probs(gen, 4, 4), y2 = random_probs(gen, 4, 4);
        const auto r = boundary_loss(y1, s);
        EXPECT_LE(rel_error(r.grad.values(), fd([&](const auto& p) { return boundary_loss(p, s).value; }, y1)), 1e-6);
        // a = 0.25 keeps the mixture exactly representable
        ProbMap<double> mix(4, 4, 2);
        for (std::size_t k = 0; k < mix.size(); ++k)
            mix.values()[k] = 0.25 * y1.values()[k] + 0.75 * y2.values()[k];
        EXPECT_NEAR(boundary_loss(mix, s).value,
                    0.25 * boundary_loss(y1, s).value + 0.75 * boundary_loss(y2, s).value, 1e-15);
    }
}

TEST(BoundaryDice, EndpointsAndMix) {
    std::mt19937_64 gen(71);
    const auto t = random_two_class(gen, 4, 4);
    const auto y = random_probs(gen, 4, 4);
    const auto s = signed_distance_transform(t, 1);
    const auto dice = generalized_dice_loss(y, t);
    const auto bnd = boundary_loss(y, s);
    EXPECT_EQ(boundary_dice_loss(y, t, 1.0).value, dice.value);
    EXPECT_EQ(boundary_dice_loss(y, t, 1.0).grad, dice.grad);
    EXPECT_EQ(boundary_dice_loss(y, t, 0.0).value, bnd.value);
    EXPECT_EQ(boundary_dice_loss(y, t, 0.0).grad, bnd.grad);
    EXPECT_NEAR(boundary_dice_loss(y, t, 0.5).value, 0.5 * dice.value + 0.5 * bnd.value, 1e-15);
}

TEST(BoundaryDice, DegenerateFallsBackToDice) {
    const LabelMask t(4, 4, 0);
    ProbMap<double> y(4, 4, 2, 0.5);
    const auto r = boundary_dice_loss(y, t, 0.5);
    EXPECT_TRUE(r.boundary_fallback);
    EXPECT_EQ(r.value, generalized_dice_loss(y, t).value);
}

TEST(BoundaryDice, GradientMatchesFiniteDifferences) {
    std::mt19937_64 gen(73);
    for (int i = 0; i < 100; ++i) {
        const auto t = random_two_class(gen, 4, 4);
        const auto y = random_probs(gen, 4, 4);
        const auto r = boundary_dice_loss(y, t, 0.5);
        EXPECT_LE(rel_error(r.grad.values(), fd([&](const auto& p) { return boundary_dice_loss(p, t, 0.5).value; }, y)),
                  1e-4);
    }
}

TEST(EvaluateLoss, DispatchAndSpecValidation) {
    std::mt19937_64 gen(79);
    const auto t = random_two_class(gen, 4, 4);
    const auto y = random_probs(gen, 4, 4);
    LossSpec spec;
    for (auto k : kAllLosses) {
        spec.variant = k;
        EXPECT_TRUE(std::isfinite(evaluate_loss(spec, y, t).value)) << loss_key(k);
        EXPECT_EQ(parse_loss_kind(loss_key(k)), k);
    }
    EXPECT_THROW(parse_loss_kind("focal"), ConfigError);
    spec.alpha = -0.1;
    EXPECT_THROW(spec.validate(), ConfigError);
    // pure boundary on a degenerate target contributes nothing
    spec = {};
    spec.variant = LossKind::boundary;
    const auto r = evaluate_loss(spec, y, LabelMask(4, 4));
    EXPECT_TRUE(r.boundary_fallback);
    EXPECT_EQ(r.value, 0.0);
}

TEST(FloatInstantiation, AgreesWithDouble) {
    std::mt19937_64 gen(83);
    const auto t = random_two_class(gen, 8, 8);
    const auto y = random_probs(gen, 8, 8);
    ProbMap<float> yf(8, 8, 2);
    for (std::size_t k = 0; k < y.size(); ++k) yf.values()[k] = static_cast<float>(y.values()[k]);
    LossSpec spec;
    for (auto k : kAllLosses) {
        spec.variant = k;
        EXPECT_NEAR(evaluate_loss(spec, yf, t).value, evaluate_loss(spec, y, t).value, 1e-5) << loss_key(k);
    }
}
