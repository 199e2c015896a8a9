#pragma once

// Pareto-law diagnostics: complementary CDFs from densities and samples,
// two independent tail-index estimators (log-log regression and Hill), the
// reference Pareto form, and Lorenz curves.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "yardsale/domain.hpp"
#include "yardsale/errors.hpp"
#include "yardsale/rng.hpp"

namespace yardsale {

struct FitWindow {
    double lo = 0.0;
    double hi = 0.0;
};

struct ParetoFit {
    double alpha = 0.0;
    double w_min = 0.0;
    FitWindow window;
    double r2 = 0.0;
    double stderr_alpha = 0.0;
    std::size_t points_used = 0;
    std::size_t points_excluded = 0; // nonpositive A inside the window
    std::string method = "loglog";
};

struct HillEstimate {
    double alpha = 0.0;
    double stderr_alpha = 0.0;
    double threshold = 0.0; // w_(k+1)
    std::size_t k = 0;
};

/// Classical Pareto complementary CDF: 1 below w_min, (w_min / w)^alpha above.
inline double pareto_reference(double w, double alpha, double w_min) {
    detail::require(alpha > 0.0, "pareto_reference: alpha must be > 0");
    detail::require(w_min > 0.0, "pareto_reference: w_min must be > 0");
    detail::require(w >= 0.0, "pareto_reference: w must be >= 0");
    return w < w_min ? 1.0 : std::pow(w_min / w, alpha);
}

/// Least-squares line through (ln w, ln A) for points inside the window.
inline ParetoFit fit_pareto_tail(std::span<const double> w, std::span<const double> tail, FitWindow window) {
    detail::require(w.size() == tail.size(), "fit_pareto_tail: w and A must have equal length");
    detail::require(window.lo > 0.0 && window.hi > window.lo, "fit_pareto_tail: require 0 < lo < hi");

    std::vector<double> x, y;
    std::size_t excluded = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] < window.lo || w[i] > window.hi) continue;
        if (!(tail[i] > 0.0)) {
            ++excluded;
            continue;
        }
        x.push_back(std::log(w[i]));
        y.push_back(std::log(tail[i]));
    }
    if (x.size() < 10)
        throw FitError("fit_pareto_tail: need at least 10 points with A > 0 in the window, found " +
                       std::to_string(x.size()));

    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0)) throw FitError("fit_pareto_tail: all points share one abscissa");
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    if (!(slope < 0.0)) throw FitError("fit_pareto_tail: tail is not decreasing in the window");

    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = y[i] - (intercept + slope * x[i]);
        sse += e * e;
    }

    ParetoFit fit;
    fit.alpha = -slope;
    fit.w_min = std::exp(intercept / fit.alpha);
    fit.window = window;
    fit.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
    fit.stderr_alpha = std::sqrt(sse / (n - 2.0) / sxx);
    fit.points_used = x.size();
    fit.points_excluded = excluded;
    return fit;
}

/// Hill estimator over the k largest order statistics:
/// alpha = k / sum_{i<=k} ln(w_(i) / w_(k+1)), stderr = alpha / sqrt(k).
inline HillEstimate hill_estimator(std::span<const double> sample, std::size_t k) {
    detail::require(k >= 2, "hill_estimator: k must be >= 2");
    detail::require(k < sample.size(), "hill_estimator: k must be smaller than the sample size");
    std::vector<double> sorted(sample.begin(), sample.end());
    std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k + 1), sorted.end(),
                      std::greater<>());
    const double threshold = sorted[k];
    if (!(threshold > 0.0)) throw EstimatorError("hill_estimator: threshold order statistic must be positive");
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) sum += std::log(sorted[i] / threshold);
    if (!(sum > 0.0)) throw EstimatorError("hill_estimator: top order statistics are tied (zero log-spacing)");
    HillEstimate est;
    est.k = k;
    est.alpha = static_cast<double>(k) / sum;
    est.stderr_alpha = est.alpha / std::sqrt(static_cast<double>(k));
    est.threshold = threshold;
    return est;
}

/// Complementary CDF samples (w_i, A(w_i)) of a density.
struct TailCurve {
    std::vector<double> w;
    std::vector<double> tail;
};

inline TailCurve tail_from_density(const DensityField& p) {
    const MomentSet m = moments(p);
    const auto nodes = p.grid().nodes();
    return TailCurve{std::vector<double>(nodes.begin(), nodes.end()), m.tail_fraction};
}

/// Empirical complementary CDF (strict inequality) at every distinct value.
inline TailCurve tail_from_sample(std::span<const double> sample) {
    detail::require(!sample.empty(), "tail_from_sample: empty sample");
    std::vector<double> sorted(sample.begin(), sample.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    TailCurve out;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
        out.w.push_back(sorted[i]);
        out.tail.push_back(static_cast<double>(sorted.size() - 1 - i) / n);
    }
    return out;
}

/// Window from the mode of w P(w) up to where A(w) first drops to
/// 10 / n_agents (the finite-population noise floor).
inline FitWindow default_fit_window(const DensityField& p, double n_agents) {
    detail::require(n_agents > 10.0, "default_fit_window: n_agents must exceed 10");
    const auto w = p.grid().nodes();
    std::size_t mode = 0;
    for (std::size_t i = 1; i < p.size(); ++i)
        if (w[i] * p[i] > w[mode] * p[mode]) mode = i;
    const MomentSet m = moments(p);
    const double floor = 10.0 / n_agents;
    std::size_t end = p.size() - 1;
    for (std::size_t i = mode; i < p.size(); ++i) {
        if (m.tail_fraction[i] <= floor) {
            end = i;
            break;
        }
    }
    detail::require(end > mode, "default_fit_window: empty window above the mode");
    return FitWindow{w[mode], w[end]};
}

/// Same rule for a sample: from the mode of the log-binned histogram to the
/// value exceeded by 10 agents.
inline FitWindow default_fit_window(std::span<const double> sample, const WealthGrid& grid) {
    detail::require(sample.size() > 10, "default_fit_window: sample needs more than 10 values");
    return default_fit_window(density_from_sample(sample, grid), static_cast<double>(sample.size()));
}

/// Inverse-CDF draws from the piecewise-linear interpolant of a density.
inline std::vector<double> sample_from_density(const DensityField& p, std::size_t n, std::uint64_t seed) {
    const auto w = p.grid().nodes();
    const auto dw = p.grid().spacing();
    std::vector<double> cdf(p.size(), 0.0);
    for (std::size_t i = 1; i < p.size(); ++i) cdf[i] = cdf[i - 1] + 0.5 * dw[i - 1] * (p[i - 1] + p[i]);
    const double total = cdf.back();
    if (!(total > 0.0)) throw DegenerateDensityError("sample_from_density: density has no mass");

    RandomStream rng(seed, Stream::sampling);
    std::vector<double> out(n);
    for (double& x : out) {
        const double target = rng.uniform() * total;
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), target);
        const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), p.size() - 1) - 1;
        // Solve the quadratic for the linear density segment [w_i, w_{i+1}].
        const double need = target - cdf[i];
        const double slope = (p[i + 1] - p[i]) / dw[i];
        double t;
        if (std::abs(slope) * dw[i] < 1e-12 * std::max(p[i], 1e-300)) {
            t = p[i] > 0.0 ? need / p[i] : 0.5 * dw[i];
        } else {
            const double disc = std::max(0.0, p[i] * p[i] + 2.0 * slope * need);
            t = 2.0 * need / (p[i] + std::sqrt(disc));
        }
        x = w[i] + std::clamp(t, 0.0, dw[i]);
    }
    return out;
}

/// L1 distance between the normalized histogram of a sample and the mass
/// of a density over log-spaced bins on [lo, hi], in units of N. Sample
/// values outside [lo, hi) contribute their full weight.
inline double binned_l1_distance(std::span<const double> sample, const DensityField& p, double lo, double hi,
                                 std::size_t bins) {
    detail::require(!sample.empty(), "binned_l1_distance: empty sample");
    detail::require(lo > 0.0 && hi > lo && bins >= 1, "binned_l1_distance: invalid binning");
    const double log_lo = std::log(lo);
    const double width = (std::log(hi) - log_lo) / static_cast<double>(bins);
    std::vector<double> counts(bins, 0.0);
    double outside = 0.0;
    for (double x : sample) {
        if (!(x >= lo && x < hi)) {
            outside += 1.0;
            continue;
        }
        const auto b = std::min(bins - 1, static_cast<std::size_t>((std::log(x) - log_lo) / width));
        counts[b] += 1.0;
    }
    const double n_sample = static_cast<double>(sample.size());
    const double n_density = zeroth_moment(p);
    if (!(n_density > 0.0)) throw DegenerateDensityError("binned_l1_distance: density has no mass");
    double l1 = outside / n_sample;
    for (std::size_t b = 0; b < bins; ++b) {
        const double a = std::exp(log_lo + width * static_cast<double>(b));
        const double c = std::exp(log_lo + width * static_cast<double>(b + 1));
        l1 += std::abs(counts[b] / n_sample - mass_between(p, a, c) / n_density);
    }
    return l1;
}

/// Lorenz curve: cumulative population share vs cumulative wealth share
/// over agents sorted by wealth, starting at (0, 0) and ending at (1, 1).
inline std::vector<std::pair<double, double>> lorenz_curve(std::span<const double> wealths) {
    detail::require(!wealths.empty(), "lorenz_curve: empty population");
    std::vector<double> sorted(wealths.begin(), wealths.end());
    std::sort(sorted.begin(), sorted.end());
    double total = 0.0;
    for (double x : sorted) total += x;
    if (!(total > 0.0)) throw UndefinedMetricError("lorenz_curve: total wealth is zero");
    const double n = static_cast<double>(sorted.size());
    std::vector<std::pair<double, double>> curve;
    curve.reserve(sorted.size() + 1);
    curve.emplace_back(0.0, 0.0);
    double running = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        running += sorted[i];
        curve.emplace_back(static_cast<double>(i + 1) / n, running / total);
    }
    curve.back() = {1.0, 1.0};
    return curve;
}

inline std::vector<std::pair<double, double>> lorenz_curve(const Population& pop) {
    return lorenz_curve(std::span<const double>(pop.wealths));
}

/// 1 - 2 * (area under the Lorenz curve), trapezoidal.
inline double gini_from_lorenz(std::span<const std::pair<double, double>> curve) {
    detail::require(curve.size() >= 2, "gini_from_lorenz: curve needs at least 2 points");
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i)
        area += 0.5 * (curve[i].first - curve[i - 1].first) * (curve[i].second + curve[i - 1].second);
    return 1.0 - 2.0 * area;
}

}  // namespace yardsale
