#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "cavspin/fits.hpp"
#include "cavspin/nlls.hpp"
#include "cavspin/regression.hpp"

using namespace cavspin;
using units::mhz_to_rad;

namespace {

const double omega_x = mhz_to_rad(9750.0);
const double b_dpph = units::gauss_to_tesla(3470.9);
const double m_default = units::default_m0_over_hbar;

CurveModel line_through_origin()
{
    CurveModel c;
    c.value = [](double x, std::span<const double> p) { return p[0] * x; };
    c.gradient = [](double x, std::span<const double>, std::span<double> g) { g[0] = x; };
    return c;
}

CurveModel straight_line()
{
    CurveModel c;
    c.value = [](double x, std::span<const double> p) { return p[0] + p[1] * x; };
    return c;
}

std::vector<FieldSample> dispersive_track(double g, double gs, std::size_t n, double sigma, std::mt19937_64* rng)
{
    std::vector<FieldSample> out;
    std::normal_distribution<double> noise(0.0, sigma);
    for (double b : linspace(b_dpph - units::gauss_to_tesla(8.0), b_dpph + units::gauss_to_tesla(8.0), n)) {
        double w = dispersive_shift(m_default * (b - b_dpph), omega_x, g, gs);
        if (rng)
            w += noise(*rng);
        out.push_back({b, w, 1.0});
    }
    return out;
}

} // namespace

TEST(Nlls, LinearModelExactData)
{
    std::vector<DataPoint> data;
    for (int k = 1; k <= 10; ++k)
        data.push_back({double(k), 3.25 * k, 1.0});
    const auto fit = nlls_solve(line_through_origin(), data, {{"a", 1.0, Bound::free}});
    EXPECT_TRUE(fit.converged);
    EXPECT_NEAR(fit.value("a"), 3.25, 3.25e-12);
}

TEST(Nlls, MatchesClosedFormWeightedLeastSquares)
{
    std::mt19937_64 rng(42);
    std::normal_distribution<double> noise(0.0, 0.3);
    std::uniform_real_distribution<double> wdist(0.5, 4.0);
    std::vector<DataPoint> data;
    for (int k = 0; k < 40; ++k) {
        const double x = 0.25 * k;
        data.push_back({x, 1.5 - 0.7 * x + noise(rng), wdist(rng)});
    }
    // Normal equations of the weighted straight-line fit.
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (const auto& d : data) {
        sw += d.weight;
        sx += d.weight * d.x;
        sy += d.weight * d.y;
        sxx += d.weight * d.x * d.x;
        sxy += d.weight * d.x * d.y;
    }
    const double det = sw * sxx - sx * sx;
    const double slope = (sw * sxy - sx * sy) / det;
    const double intercept = (sxx * sy - sx * sxy) / det;

    const auto fit = nlls_solve(straight_line(), data, {{"a", 0.0, Bound::free}, {"b", 0.0, Bound::free}});
    EXPECT_TRUE(fit.converged);
    EXPECT_NEAR(fit.value("a"), intercept, 1e-10 * std::abs(intercept));
    EXPECT_NEAR(fit.value("b"), slope, 1e-10 * std::abs(slope));
}

TEST(Nlls, DispersiveRoundTripNoiseless)
{
    const double g = mhz_to_rad(1.15), gs = mhz_to_rad(2.85);
    const auto track = dispersive_track(g, gs, 61, 0.0, nullptr);
    const auto fit = fit_dispersive_track(track);
    ASSERT_TRUE(fit.converged) << fit.termination;
    EXPECT_NEAR(fit.value("g_c") / g, 1.0, 1e-8);
    EXPECT_NEAR(fit.value("gamma_s") / gs, 1.0, 1e-8);
    EXPECT_NEAR(fit.value("omega_c") / omega_x, 1.0, 1e-8);
    EXPECT_NEAR(fit.value("B_r") / b_dpph, 1.0, 1e-8);
}

TEST(Nlls, DispersiveMonteCarloCoverage)
{
    const double g = mhz_to_rad(1.15), gs = mhz_to_rad(2.85);
    const double sigma = mhz_to_rad(0.02);
    int covered = 0;
    for (int seed = 0; seed < 100; ++seed) {
        std::mt19937_64 rng(1000 + seed);
        const auto fit = fit_dispersive_track(dispersive_track(g, gs, 61, sigma, &rng));
        ASSERT_TRUE(fit.converged);
        const bool ok = std::abs(fit.value("g_c") - g) < 3.0 * fit.sigma("g_c") &&
                        std::abs(fit.value("gamma_s") - gs) < 3.0 * fit.sigma("gamma_s");
        covered += ok;
    }
    EXPECT_GE(covered, 95);
}

TEST(Nlls, ErrorShrinksAsInverseSqrtOfPoints)
{
    const double g = mhz_to_rad(1.15), gs = mhz_to_rad(2.85);
    const double sigma = mhz_to_rad(0.02);
    auto rms_error = [&](std::size_t n) {
        double s = 0.0;
        const int seeds = 60;
        for (int seed = 0; seed < seeds; ++seed) {
            std::mt19937_64 rng(7000 + seed);
            const auto fit = fit_dispersive_track(dispersive_track(g, gs, n, sigma, &rng));
            s += std::pow(fit.value("g_c") - g, 2);
        }
        return std::sqrt(s / seeds);
    };
    const double ratio = rms_error(61) / rms_error(244);
    EXPECT_GT(ratio, 2.0 / 1.5);
    EXPECT_LT(ratio, 2.0 * 1.5);
}

TEST(Nlls, FixedParametersStayPut)
{
    std::vector<DataPoint> data;
    for (int k = 0; k < 10; ++k)
        data.push_back({double(k), 2.0 + 0.5 * k, 1.0});
    const auto fit = nlls_solve(straight_line(), data, {{"a", 1.0, Bound::fixed}, {"b", 0.0, Bound::free}});
    EXPECT_EQ(fit.value("a"), 1.0);
    EXPECT_EQ(fit.variances[0], 0.0);
    EXPECT_TRUE(fit.is_fixed("a"));
    EXPECT_GT(fit.variances[1], 0.0);
}

TEST(Nlls, PositiveParametersStayPositive)
{
    // Best unconstrained slope is negative; the positive bound drives it to 0+.
    std::vector<DataPoint> data;
    for (int k = 1; k <= 10; ++k)
        data.push_back({double(k), -1.0 * k, 1.0});
    const auto fit = nlls_solve(line_through_origin(), data, {{"a", 1.0, Bound::positive}});
    EXPECT_GT(fit.value("a"), 0.0);
    EXPECT_LT(fit.value("a"), 1e-3);
}

TEST(Nlls, SingularNormalEquationsReported)
{
    CurveModel dead;
    dead.value = [](double x, std::span<const double> p) { return p[0] * x; };
    std::vector<DataPoint> data{{1, 1, 1}, {2, 2, 1}, {3, 3, 1}};
    try {
        nlls_solve(dead, data, {{"a", 1.0, Bound::free}, {"unused", 1.0, Bound::free}});
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::fit);
        EXPECT_NE(std::string(e.what()).find("condition number"), std::string::npos);
    }
}

TEST(Nlls, IterationCapReturnsBestPoint)
{
    const double g = mhz_to_rad(1.15), gs = mhz_to_rad(2.85);
    const auto track = dispersive_track(g, gs, 61, 0.0, nullptr);
    NllsOptions opt;
    opt.max_iterations = 2;
    const std::array<double, 4> far{0.5 * g, 2.0 * gs, omega_x + mhz_to_rad(0.1), b_dpph + 1e-4};
    const auto fit = fit_dispersive_track(track, {}, far, opt);
    EXPECT_FALSE(fit.converged);
    EXPECT_EQ(fit.termination, "iteration cap");
    const auto start = fit_dispersive_track(track, {}, far, NllsOptions{.max_iterations = 0});
    EXPECT_LE(fit.residual_norm, start.residual_norm);
}

TEST(Nlls, PreconditionsEnforced)
{
    std::vector<DataPoint> one{{1.0, 1.0, 1.0}};
    EXPECT_THROW(nlls_solve(straight_line(), one, {{"a", 0.0, Bound::free}, {"b", 0.0, Bound::free}}), Error);
    std::vector<DataPoint> data{{1, 1, 1}, {2, 2, 1}};
    EXPECT_THROW(nlls_solve(line_through_origin(), data, {{"a", -1.0, Bound::positive}}), Error);
}

TEST(Nlls, Deterministic)
{
    std::mt19937_64 rng(5);
    const auto track = dispersive_track(mhz_to_rad(1.15), mhz_to_rad(2.85), 61, mhz_to_rad(0.02), &rng);
    const auto a = fit_dispersive_track(track);
    const auto b = fit_dispersive_track(track);
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(a.variances, b.variances);
}

// ---- analytic Jacobians against central differences ----

namespace {

// Richardson-extrapolated central differences with steps of 2e-3 and 1e-3 of
// a per-parameter typical scale (an offset like omega_c is stepped on the
// scale of the linewidth, not of itself).
void check_gradient(const CurveModel& model, std::span<const double> p, std::span<const double> typical, double x)
{
    std::vector<double> analytic(p.size());
    model.gradient(x, p, analytic);
    std::vector<double> q(p.begin(), p.end());
    auto central = [&](std::size_t j, double h) {
        q[j] = p[j] + h;
        const double up = model.value(x, q);
        q[j] = p[j] - h;
        const double down = model.value(x, q);
        q[j] = p[j];
        return (up - down) / (2.0 * h);
    };
    double largest = 0.0;
    std::vector<double> fd(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double h = 2e-3 * typical[j];
        fd[j] = (4.0 * central(j, 0.5 * h) - central(j, h)) / 3.0;
        largest = std::max(largest, std::abs(analytic[j]) * typical[j]);
    }
    // Relative error per entry, floored at 1e-3 of the largest scaled sensitivity.
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double scale = std::max(std::abs(analytic[j]), 1e-3 * largest / typical[j]);
        ASSERT_NEAR(analytic[j], fd[j], 1e-5 * scale) << "parameter " << j << " at x = " << x;
    }
}

} // namespace

class GradientCheck : public ::testing::Test
{
protected:
    std::mt19937_64 rng{99};
    double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }
};

TEST_F(GradientCheck, Dispersive)
{
    const auto model = models::dispersive(m_default);
    for (int k = 0; k < 100; ++k) {
        const std::vector<double> p{mhz_to_rad(uniform(0.1, 5)), mhz_to_rad(uniform(0.1, 5)), omega_x, b_dpph};
        const std::vector<double> typical{p[0], p[1], p[1], p[1] / m_default};
        check_gradient(model, p, typical, b_dpph + units::gauss_to_tesla(uniform(-5, 5)));
    }
}

TEST_F(GradientCheck, Linewidth)
{
    const auto model = models::linewidth(m_default);
    for (int k = 0; k < 100; ++k) {
        const std::vector<double> p{mhz_to_rad(uniform(0.1, 5)), mhz_to_rad(uniform(0.1, 5)),
                                    mhz_to_rad(uniform(0.1, 5)), b_dpph};
        const std::vector<double> typical{p[0], p[1], p[2], p[1] / m_default};
        check_gradient(model, p, typical, b_dpph + units::gauss_to_tesla(uniform(-5, 5)));
    }
}

TEST_F(GradientCheck, BareCavity)
{
    const auto model = models::bare_cavity();
    for (int k = 0; k < 100; ++k) {
        const double kc = mhz_to_rad(uniform(0.5, 5));
        const std::vector<double> p{omega_x, kc, kc * uniform(0.5, 1.5)};
        const std::vector<double> typical{kc, kc, kc};
        check_gradient(model, p, typical, omega_x + mhz_to_rad(uniform(-10, 10)));
    }
}

TEST_F(GradientCheck, RectifiedSinusoid)
{
    const auto model = rectified_sinusoid_model();
    for (int k = 0; k < 100; ++k) {
        const std::vector<double> p{uniform(0.5, 2.0), uniform(0.02, 0.05), uniform(0.0, 3.0), uniform(-0.2, 0.2)};
        double z = uniform(-0.02, 0.02);
        // stay away from the kinks of |sin|
        const double u = 2.0 * std::numbers::pi * z / p[1] + p[2];
        if (std::abs(std::sin(u)) < 1e-3)
            z += 1e-4;
        const std::vector<double> typical{p[0], p[1], 1.0, p[0]};
        check_gradient(model, p, typical, z);
    }
}

TEST_F(GradientCheck, RabiBranches)
{
    DipTrack track;
    for (double b : linspace(b_dpph - 1e-3, b_dpph + 1e-3, 20)) {
        const auto br = rabi_branches(m_default * (b - b_dpph), omega_x, mhz_to_rad(5.9));
        track.push(b, br.lower, BranchTag::lower);
        track.push(b, br.upper, BranchTag::upper);
    }
    // Rebuild the problem the fitter uses and compare its Jacobian with FD.
    const auto d = detail::branch_data(track);
    for (int k = 0; k < 100; ++k) {
        const std::vector<double> p{mhz_to_rad(uniform(0.5, 8)), omega_x + mhz_to_rad(uniform(-1, 1)),
                                    b_dpph + uniform(-2e-4, 2e-4)};
        auto predict = [&](std::span<const double> q, std::span<double> out) {
            for (std::size_t i = 0; i < d.field.size(); ++i) {
                const auto br = rabi_branches(m_default * (d.field[i] - q[2]), q[1], q[0]);
                out[i] = d.sign[i] > 0 ? br.upper : br.lower;
            }
        };
        const auto fd = finite_difference_jacobian(predict, d.field.size(), p, 1e-7);
        for (std::size_t i = 0; i < d.field.size(); ++i) {
            const double delta = m_default * (d.field[i] - p[2]);
            const double root = std::hypot(delta, 2.0 * p[0]);
            const double dg = d.sign[i] * 2.0 * p[0] / root;
            const double dbr = -m_default * (0.5 + d.sign[i] * 0.5 * delta / root);
            ASSERT_NEAR(fd(Eigen::Index(i), 0), dg, 1e-5 * std::max(1.0, std::abs(dg)));
            ASSERT_NEAR(fd(Eigen::Index(i), 1), 1.0, 1e-5);
            ASSERT_NEAR(fd(Eigen::Index(i), 2) / dbr, 1.0, 1e-5);
        }
    }
}
