#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "yardsale/analysis.hpp"
#include "yardsale/domain.hpp"
#include "yardsale/fokker_planck.hpp"

using namespace yardsale;

namespace {

// Inverse-CDF draws from Pareto(alpha, w_min): w = w_min u^(-1/alpha).
std::vector<double> pareto_sample(double alpha, double w_min, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> s(n);
    for (double& x : s) x = w_min * std::pow(1.0 - u(gen), -1.0 / alpha);
    return s;
}

std::vector<double> log_points(double lo, double hi, std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i)
        w[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
    return w;
}

}  // namespace

TEST(ParetoReference, BelowThresholdIsOne) { EXPECT_EQ(pareto_reference(0.5, 1.7, 1.0), 1.0); }

TEST(ParetoReference, BranchesAgreeAtThreshold) { EXPECT_EQ(pareto_reference(1.0, 2.5, 1.0), 1.0); }

TEST(ParetoReference, DecadeAboveThreshold) { EXPECT_NEAR(pareto_reference(10.0, 1.0, 1.0), 0.1, 1e-15); }

TEST(ParetoReference, MonotoneAndScaleInvariant) {
    double prev = 1.0;
    for (double w : log_points(0.1, 100.0, 200)) {
        const double a = pareto_reference(w, 1.3, 2.0);
        EXPECT_LE(a, prev);
        prev = a;
        EXPECT_NEAR(pareto_reference(3.7 * w, 1.3, 3.7 * 2.0), a, 1e-14);
    }
}

TEST(ParetoReference, RejectsInvalidParameters) {
    EXPECT_THROW(pareto_reference(1.0, 0.0, 1.0), ArgumentError);
    EXPECT_THROW(pareto_reference(1.0, 1.0, -1.0), ArgumentError);
    EXPECT_THROW(pareto_reference(-1.0, 1.0, 1.0), ArgumentError);
}

TEST(FitParetoTail, ExactInverseSquare) {
    const auto w = log_points(2.0, 200.0, 50);
    std::vector<double> a(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) a[i] = (2.0 / w[i]) * (2.0 / w[i]);
    const ParetoFit f = fit_pareto_tail(w, a, {2.0, 200.0});
    EXPECT_NEAR(f.alpha, 2.0, 1e-6);
    EXPECT_NEAR(f.w_min, 2.0, 1e-6);
    EXPECT_NEAR(f.r2, 1.0, 1e-12);
    EXPECT_EQ(f.points_used, 50u);
    EXPECT_EQ(f.method, "loglog");
}

TEST(FitParetoTail, RecoversReferenceToSixDigits) {
    for (double alpha : {0.7, 1.5, 3.2}) {
        for (double w_min : {0.3, 1.0, 40.0}) {
            const auto w = log_points(w_min, 1000.0 * w_min, 80);
            std::vector<double> a(w.size());
            for (std::size_t i = 0; i < w.size(); ++i) a[i] = pareto_reference(w[i], alpha, w_min);
            const ParetoFit f = fit_pareto_tail(w, a, {w_min, 1000.0 * w_min});
            EXPECT_NEAR(f.alpha / alpha, 1.0, 1e-6);
            EXPECT_NEAR(f.w_min / w_min, 1.0, 1e-6);
        }
    }
}

TEST(FitParetoTail, TooFewPoints) {
    const auto w = log_points(1.0, 10.0, 9);
    std::vector<double> a(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) a[i] = 1.0 / w[i];
    EXPECT_THROW(fit_pareto_tail(w, a, {1.0, 10.0}), FitError);
}

TEST(FitParetoTail, ExcludesNonpositiveTail) {
    const auto w = log_points(1.0, 100.0, 30);
    std::vector<double> a(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) a[i] = i >= 25 ? 0.0 : 1.0 / w[i];
    const ParetoFit f = fit_pareto_tail(w, a, {1.0, 100.0});
    EXPECT_EQ(f.points_excluded, 5u);
    EXPECT_EQ(f.points_used, 25u);
    EXPECT_NEAR(f.alpha, 1.0, 1e-12);
}

TEST(HillEstimator, RecoversParetoIndex) {
    const auto s = pareto_sample(1.5, 1.0, 100000, 2024);
    const HillEstimate h = hill_estimator(s, 1000);
    EXPECT_EQ(h.k, 1000u);
    EXPECT_NEAR(h.stderr_alpha, h.alpha / std::sqrt(1000.0), 1e-15);
    EXPECT_LE(std::abs(h.alpha - 1.5), 3.0 * h.stderr_alpha);
}

TEST(HillEstimator, TiesAreDegenerate) {
    const std::vector<double> s(50, 2.0);
    EXPECT_THROW(hill_estimator(s, 10), EstimatorError);
}

TEST(HillEstimator, RejectsInvalidK) {
    const auto s = pareto_sample(1.5, 1.0, 100, 1);
    EXPECT_THROW(hill_estimator(s, 100), ArgumentError);
    EXPECT_THROW(hill_estimator(s, 1), ArgumentError);
}

TEST(HillEstimator, AgreesWithLogLogFitOnParetoSamples) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto s = pareto_sample(1.5, 1.0, 100000, seed);
        const TailCurve t = tail_from_sample(s);
        std::vector<double> sorted(s);
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        const double hi = sorted[100]; // A = 1e-3
        const ParetoFit f = fit_pareto_tail(t.w, t.tail, {1.0, hi});
        std::size_t k = 0;
        for (double x : s) k += x > 2.0;
        const HillEstimate h = hill_estimator(s, k);
        const double sigma = std::hypot(f.stderr_alpha, h.stderr_alpha);
        EXPECT_LE(std::abs(f.alpha - h.alpha), 3.0 * sigma) << "seed " << seed;
    }
}

TEST(TailFromSample, StrictInequality) {
    const std::vector<double> s = {3.0, 1.0, 2.0, 2.0};
    const TailCurve t = tail_from_sample(s);
    EXPECT_EQ(t.w, (std::vector<double>{1.0, 2.0, 3.0}));
    EXPECT_EQ(t.tail, (std::vector<double>{0.75, 0.25, 0.0}));
}

TEST(DefaultFitWindow, SpansModeToNoiseFloor) {
    const WealthGrid g = make_log_grid(1e-2, 1e3, 800);
    const DensityField p = DensityField::from_function(g, [](double w) { return std::pow(1.0 + w, -2.5); });
    const FitWindow win = default_fit_window(p, 1e4);
    const MomentSet m = moments(p);
    std::size_t mode = 0;
    for (std::size_t i = 1; i < g.size(); ++i)
        if (g[i] * p[i] > g[mode] * p[mode]) mode = i;
    EXPECT_EQ(win.lo, g[mode]);
    const std::size_t end = g.locate(win.hi);
    EXPECT_LE(m.tail_fraction[end], 1e-3);
    EXPECT_GT(m.tail_fraction[end - 1], 1e-3);
}

TEST(SampleFromDensity, ReproducesTheDensity) {
    const WealthGrid g = make_log_grid(1e-2, 1e3, 600);
    const DensityField p = lognormal_density(g, 1.0, 0.5);
    const auto s = sample_from_density(p, 200000, 4);
    EXPECT_EQ(s, sample_from_density(p, 200000, 4));
    for (double x : s) {
        ASSERT_GE(x, g.front());
        ASSERT_LE(x, g.back());
    }
    double mean = 0.0;
    for (double x : s) mean += x;
    mean /= static_cast<double>(s.size());
    EXPECT_NEAR(mean, first_moment(p), 0.01);
    EXPECT_LT(binned_l1_distance(s, p, 1e-2, 1e3, 40), 0.02);
    const MomentSet m = moments(p);
    for (std::size_t i : {200u, 300u, 350u})
        EXPECT_NEAR(empirical_tail(s, g[i]), m.tail_fraction[i], 0.005);
}

TEST(BinnedL1, OutOfRangeSamplesCountFully) {
    const WealthGrid g = make_linear_grid(1.0, 2.0, 11);
    const DensityField p = DensityField::from_function(g, [](double) { return 1.0; });
    const std::vector<double> far = {5.0, 6.0};
    EXPECT_NEAR(binned_l1_distance(far, p, 1.0, 2.0, 4), 2.0, 1e-12);
}

TEST(Lorenz, EqualWealthIsTheDiagonal) {
    const auto c = lorenz_curve(make_equal_population(8, 2.0));
    ASSERT_EQ(c.size(), 9u);
    for (std::size_t k = 0; k < c.size(); ++k) {
        EXPECT_NEAR(c[k].first, k / 8.0, 1e-15);
        EXPECT_NEAR(c[k].second, k / 8.0, 1e-15);
    }
}

TEST(Lorenz, SingleHolder) {
    const std::vector<double> w = {0.0, 0.0, 0.0, 1.0};
    const auto c = lorenz_curve(w);
    EXPECT_EQ(c[3], std::make_pair(0.75, 0.0));
    EXPECT_EQ(c[4], std::make_pair(1.0, 1.0));
}

TEST(Lorenz, ZeroWealthUndefined) {
    EXPECT_THROW(lorenz_curve(make_equal_population(3, 0.0)), UndefinedMetricError);
}

TEST(Lorenz, ConvexAndReproducesGini) {
    std::mt19937_64 gen(8);
    std::lognormal_distribution<double> d(0.0, 1.1);
    std::vector<double> w(5000);
    for (double& x : w) x = d(gen);
    const auto c = lorenz_curve(w);
    EXPECT_EQ(c.front(), std::make_pair(0.0, 0.0));
    EXPECT_EQ(c.back(), std::make_pair(1.0, 1.0));
    for (std::size_t k = 1; k + 1 < c.size(); ++k) {
        const double left = (c[k].second - c[k - 1].second) / (c[k].first - c[k - 1].first);
        const double right = (c[k + 1].second - c[k].second) / (c[k + 1].first - c[k].first);
        EXPECT_LE(left, right * (1.0 + 1e-9));
    }
    EXPECT_NEAR(gini_from_lorenz(c), gini(w), 1e-9);
}
