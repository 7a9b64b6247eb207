#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "cavspin/regression.hpp"
#include "cavspin/units.hpp"

using namespace cavspin;
using units::hz_to_rad;
using units::mhz_to_rad;

namespace {

CouplingVsN dpph_points()
{
    CouplingVsN d;
    d.N = {7.8e14, 3.1e15, 1.2e16, 1.9e16};
    for (double g : {1.15, 2.0, 4.9, 5.9})
        d.g_c.push_back(mhz_to_rad(g));
    return d;
}

PositionProfile sample_profile(const RectifiedSinusoid& s, double z0, double z1, double step)
{
    PositionProfile p;
    for (double z = z0; z <= z1 + 1e-12; z += step) {
        p.position.push_back(z);
        p.g_c.push_back(s(z));
    }
    return p;
}

} // namespace

TEST(SqrtN, DpphPoints)
{
    const auto fit = sqrtN_regression(dpph_points());
    const double gs_hz = units::rad_to_hz(fit.fit.value("g_s"));
    EXPECT_GE(gs_hz, 0.040);
    EXPECT_LE(gs_hz, 0.046);
    EXPECT_TRUE(fit.through_origin);
    EXPECT_FALSE(fit.weighted);
    EXPECT_GT(fit.fit.sigma("g_s"), 0.0);
}

TEST(SqrtN, ExactDataHasZeroResiduals)
{
    CouplingVsN d;
    const double gs = hz_to_rad(0.049);
    for (double n : {1e14, 3e14, 1e15, 4e15, 2e16}) {
        d.N.push_back(n);
        d.g_c.push_back(gs * std::sqrt(n));
    }
    const auto fit = sqrtN_regression(d);
    EXPECT_NEAR(fit.fit.value("g_s") / gs, 1.0, 1e-12);
    for (double r : fit.residuals)
        EXPECT_LE(std::abs(r), 1e-12 * d.g_c.back());
}

TEST(SqrtN, SinglePointIsExact)
{
    CouplingVsN d;
    d.N = {4e16};
    d.g_c = {mhz_to_rad(3.0)};
    const auto fit = sqrtN_regression(d);
    EXPECT_DOUBLE_EQ(fit.fit.value("g_s"), mhz_to_rad(3.0) / 2e8);
}

TEST(SqrtN, LinearInCoupling)
{
    auto d = dpph_points();
    const double a = sqrtN_regression(d).fit.value("g_s");
    for (double& g : d.g_c)
        g *= 2.0;
    EXPECT_EQ(sqrtN_regression(d).fit.value("g_s"), 2.0 * a);
}

TEST(SqrtN, ExcludedPointsDoNotEnterTheFit)
{
    auto d = dpph_points();
    d.excluded = {true, false, false, false};
    const auto with_flag = sqrtN_regression(d);
    auto trimmed = dpph_points();
    trimmed.N.erase(trimmed.N.begin());
    trimmed.g_c.erase(trimmed.g_c.begin());
    EXPECT_DOUBLE_EQ(with_flag.fit.value("g_s"), sqrtN_regression(trimmed).fit.value("g_s"));
    EXPECT_EQ(with_flag.residuals.size(), 4u);
    EXPECT_EQ(with_flag.fit.data_points, 3u);
}

TEST(SqrtN, WeightsMatchClosedForm)
{
    auto d = dpph_points();
    d.weight = {1.0, 2.0, 3.0, 4.0};
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < 4; ++k) {
        num += d.weight[k] * d.g_c[k] * std::sqrt(d.N[k]);
        den += d.weight[k] * d.N[k];
    }
    const auto fit = sqrtN_regression(d);
    EXPECT_TRUE(fit.weighted);
    EXPECT_NEAR(fit.fit.value("g_s"), num / den, 1e-14 * num / den);
}

TEST(SqrtN, RejectsBadData)
{
    CouplingVsN empty;
    EXPECT_THROW(sqrtN_regression(empty), Error);
    auto d = dpph_points();
    d.N[1] = 0.0;
    EXPECT_THROW(sqrtN_regression(d), Error);
    auto e = dpph_points();
    e.excluded = {true, true, true, true};
    EXPECT_THROW(sqrtN_regression(e), Error);
}

TEST(Sinusoid, NoiselessRoundTrip)
{
    const RectifiedSinusoid truth{mhz_to_rad(1.2), 0.046, 0.7, mhz_to_rad(0.05)};
    const auto fit = fit_position_sinusoid(sample_profile(truth, -0.015, 0.015, 0.5e-3));
    ASSERT_TRUE(fit.fit.converged) << fit.fit.termination;
    EXPECT_NEAR(fit.curve.amplitude / truth.amplitude, 1.0, 1e-6);
    EXPECT_NEAR(fit.curve.period / truth.period, 1.0, 1e-6);
    EXPECT_NEAR(fit.curve.phase, truth.phase, 1e-6);
    EXPECT_NEAR(fit.curve.offset / truth.offset, 1.0, 1e-6);
}

TEST(Sinusoid, PhaseIsWrapped)
{
    // phase + pi describes the same rectified curve
    const RectifiedSinusoid truth{1.0, 0.04, 0.3 + std::numbers::pi, 0.0};
    const auto fit = fit_position_sinusoid(sample_profile(truth, -0.02, 0.02, 0.5e-3));
    EXPECT_GE(fit.curve.phase, 0.0);
    EXPECT_LT(fit.curve.phase, std::numbers::pi);
    EXPECT_NEAR(fit.curve.phase, 0.3, 1e-6);
}

TEST(Sinusoid, ConstantProfileIsFlagged)
{
    PositionProfile p;
    for (int k = 0; k < 20; ++k) {
        p.position.push_back(1e-3 * k);
        p.g_c.push_back(mhz_to_rad(0.9));
    }
    const auto fit = fit_position_sinusoid(p);
    EXPECT_TRUE(fit.flat);
    EXPECT_TRUE(fit.fit.degenerate);
    EXPECT_EQ(fit.curve.amplitude, 0.0);
    EXPECT_DOUBLE_EQ(fit.curve.offset, mhz_to_rad(0.9));
}

TEST(Sinusoid, PeakNearGridArgmax)
{
    const RectifiedSinusoid truth{mhz_to_rad(1.0), 0.05, 1.1, mhz_to_rad(0.1)};
    const auto p = sample_profile(truth, -0.02, 0.02, 0.2e-3);
    const auto fit = fit_position_sinusoid(p);
    const auto k = static_cast<std::size_t>(std::max_element(p.g_c.begin(), p.g_c.end()) - p.g_c.begin());
    const double z_grid = p.position[k];
    EXPECT_LT(std::abs(fit.curve.nearest_peak(z_grid) - z_grid), 0.5e-3);
}

TEST(Sinusoid, NoisyProfileWithinUncertainty)
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> noise(0.0, 0.01);
    const RectifiedSinusoid truth{mhz_to_rad(1.0), 0.05, 1.1, 0.0};
    auto p = sample_profile(truth, -0.02, 0.02, 0.5e-3);
    for (double& g : p.g_c)
        g += noise(rng) * truth.amplitude;
    const auto fit = fit_position_sinusoid(p);
    ASSERT_TRUE(fit.fit.converged);
    EXPECT_LT(std::abs(fit.curve.period - truth.period), 4.0 * fit.fit.sigma("period"));
    EXPECT_NEAR(fit.curve.amplitude / truth.amplitude, 1.0, 0.05);
}

TEST(Sinusoid, TooFewPoints)
{
    PositionProfile p{{0.0, 1e-3, 2e-3}, {1.0, 2.0, 1.0}};
    EXPECT_THROW(fit_position_sinusoid(p), Error);
}

TEST(Averaging, FullRectifiedPeriodRms)
{
    const RectifiedSinusoid s{2.0, 0.04, 0.4, 0.0};
    // |sin| has period lambda / 2; any whole number of half-periods gives A/sqrt(2).
    EXPECT_NEAR(average_coupling_over_length(s, 0.02, 0.0123), 2.0 / std::sqrt(2.0), 1e-10);
    EXPECT_NEAR(average_coupling_over_length(s, 0.06, -0.003), 2.0 / std::sqrt(2.0), 1e-10);
    EXPECT_NEAR(mean_coupling_over_length(s, 0.02, 0.0), 2.0 * 2.0 / std::numbers::pi, 1e-10);
}

TEST(Averaging, ArbitraryIntervalMatchesClosedForm)
{
    // rms^2 of A|sin(wz + p)| + c over [a, b]:
    // A^2 (L/2 - (sin 2u_b - sin 2u_a)/(4w)) + 2Ac int|sin| + c^2 L.
    const double A = 1.3, lambda = 0.05, phase = 0.9, c = 0.2;
    const RectifiedSinusoid s{A, lambda, phase, c};
    const double w = 2.0 * std::numbers::pi / lambda;
    const double a = -0.004, b = 0.006;  // stays inside one lobe: sin > 0 throughout
    ASSERT_GT(std::sin(w * a + phase), 0.0);
    ASSERT_GT(std::sin(w * b + phase), 0.0);
    const double L = b - a;
    const double sin2 = 0.5 * L - (std::sin(2.0 * (w * b + phase)) - std::sin(2.0 * (w * a + phase))) / (4.0 * w);
    const double sin1 = (std::cos(w * a + phase) - std::cos(w * b + phase)) / w;
    const double expect = std::sqrt((A * A * sin2 + 2.0 * A * c * sin1 + c * c * L) / L);
    EXPECT_NEAR(average_coupling_over_length(s, L, 0.5 * (a + b)), expect, 1e-10 * expect);
}

TEST(Averaging, DegenerateCasesExact)
{
    const RectifiedSinusoid s{1.0, 0.04, 0.3, 0.1};
    EXPECT_EQ(average_coupling_over_length(s, 0.0, 0.007), s(0.007));
    const RectifiedSinusoid flat{0.0, 0.04, 0.3, 0.75};
    EXPECT_EQ(average_coupling_over_length(flat, 0.01, 0.0), 0.75);
    EXPECT_THROW(average_coupling_over_length(s, -1.0, 0.0), Error);
}

TEST(Averaging, RmsExceedsMean)
{
    const RectifiedSinusoid s{1.0, 0.04, 0.3, 0.0};
    EXPECT_GT(average_coupling_over_length(s, 0.013, 0.002), mean_coupling_over_length(s, 0.013, 0.002));
}
