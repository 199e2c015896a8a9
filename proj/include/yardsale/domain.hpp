#pragma once

// Core value types shared by the simulator, the PDE solvers and the
// diagnostics: the wealth grid, densities on it, agent populations, model
// parameters, and the moment functionals A(w) (tail fraction) and B(w)
// (incomplete second moment).
//
// Quadrature is trapezoidal on the (generally nonuniform) grid. The
// trapezoid weight of node i equals the width of the control volume around
// it, which is what makes the finite-volume solver conserve the discrete
// agent count exactly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "yardsale/errors.hpp"

namespace yardsale {

/// Strictly increasing, positive discretization of the wealth axis.
///
/// Copies share the node storage; a grid is immutable after construction.
class WealthGrid {
public:
    explicit WealthGrid(std::vector<double> nodes) {
        detail::require(nodes.size() >= 3, "WealthGrid: need at least 3 nodes");
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            detail::require(std::isfinite(nodes[i]) && nodes[i] > 0.0,
                            "WealthGrid: nodes must be finite and positive");
            if (i > 0)
                detail::require(nodes[i] > nodes[i - 1], "WealthGrid: nodes must be strictly increasing");
        }
        auto data = std::make_shared<Data>();
        const std::size_t m = nodes.size();
        data->spacing.resize(m - 1);
        for (std::size_t i = 0; i + 1 < m; ++i) data->spacing[i] = nodes[i + 1] - nodes[i];
        data->weights.assign(m, 0.0);
        for (std::size_t i = 0; i + 1 < m; ++i) {
            data->weights[i] += 0.5 * data->spacing[i];
            data->weights[i + 1] += 0.5 * data->spacing[i];
        }
        data->nodes = std::move(nodes);
        data_ = std::move(data);
    }

    std::size_t size() const noexcept { return data_->nodes.size(); }
    double operator[](std::size_t i) const noexcept { return data_->nodes[i]; }
    double front() const noexcept { return data_->nodes.front(); }
    double back() const noexcept { return data_->nodes.back(); }

    std::span<const double> nodes() const noexcept { return data_->nodes; }
    /// w[i+1] - w[i], one entry per cell face (size M-1).
    std::span<const double> spacing() const noexcept { return data_->spacing; }
    /// Trapezoid weights; also the control-volume widths (size M).
    std::span<const double> weights() const noexcept { return data_->weights; }

    /// Index of the last node <= w, clamped to [0, M-2].
    std::size_t locate(double w) const noexcept {
        const auto& n = data_->nodes;
        auto it = std::upper_bound(n.begin(), n.end(), w);
        std::size_t idx = it == n.begin() ? 0 : static_cast<std::size_t>(it - n.begin()) - 1;
        return std::min(idx, n.size() - 2);
    }

    friend bool operator==(const WealthGrid& a, const WealthGrid& b) {
        return a.data_ == b.data_ || a.data_->nodes == b.data_->nodes;
    }

private:
    struct Data {
        std::vector<double> nodes;
        std::vector<double> spacing;
        std::vector<double> weights;
    };
    std::shared_ptr<const Data> data_;
};

/// Geometrically spaced nodes from w_lo to w_hi inclusive.
inline WealthGrid make_log_grid(double w_lo, double w_hi, std::size_t count) {
    detail::require(std::isfinite(w_lo) && std::isfinite(w_hi) && w_lo > 0.0 && w_hi > w_lo,
                    "make_log_grid: require 0 < w_lo < w_hi");
    detail::require(count >= 3, "make_log_grid: require at least 3 nodes");
    std::vector<double> nodes(count);
    const double log_lo = std::log(w_lo);
    const double step = (std::log(w_hi) - log_lo) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) nodes[i] = std::exp(log_lo + step * static_cast<double>(i));
    nodes.front() = w_lo;
    nodes.back() = w_hi;
    return WealthGrid(std::move(nodes));
}

/// Evenly spaced nodes from w_lo to w_hi inclusive.
inline WealthGrid make_linear_grid(double w_lo, double w_hi, std::size_t count) {
    detail::require(w_lo > 0.0 && w_hi > w_lo, "make_linear_grid: require 0 < w_lo < w_hi");
    detail::require(count >= 3, "make_linear_grid: require at least 3 nodes");
    std::vector<double> nodes(count);
    const double step = (w_hi - w_lo) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) nodes[i] = w_lo + step * static_cast<double>(i);
    nodes.back() = w_hi;
    return WealthGrid(std::move(nodes));
}

/// Nonnegative density P(w_i) (agents per unit wealth) on a grid.
class DensityField {
public:
    DensityField(WealthGrid grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
        detail::require(values_.size() == grid_.size(), "DensityField: one value per grid node required");
        for (double v : values_)
            detail::require(std::isfinite(v) && v >= 0.0, "DensityField: values must be finite and nonnegative");
    }

    template <typename F>
    static DensityField from_function(const WealthGrid& grid, F&& f) {
        std::vector<double> values(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) values[i] = f(grid[i]);
        return DensityField(grid, std::move(values));
    }

    const WealthGrid& grid() const noexcept { return grid_; }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const noexcept { return values_[i]; }
    std::size_t size() const noexcept { return values_.size(); }

    DensityField scaled(double factor) const {
        std::vector<double> v(values_);
        for (double& x : v) x *= factor;
        return DensityField(grid_, std::move(v));
    }

private:
    WealthGrid grid_;
    std::vector<double> values_;
};

/// Closed population of agents.
struct Population {
    std::vector<double> wealths;
    std::uint64_t rng_seed = 0;

    std::size_t size() const noexcept { return wealths.size(); }
    double total() const noexcept { return std::accumulate(wealths.begin(), wealths.end(), 0.0); }
};

/// All agents at the same wealth.
inline Population make_equal_population(std::size_t n_agents, double wealth, std::uint64_t seed = 0) {
    detail::require(wealth >= 0.0, "make_equal_population: wealth must be nonnegative");
    return Population{std::vector<double>(n_agents, wealth), seed};
}

struct ModelParams {
    double beta = 0.1;        // stake as a fraction of the poorer agent's wealth
    double chi = 0.1;         // tax rate per transaction time, tau / beta^2
    std::size_t n_agents = 10000;
    double mean_wealth = 1.0; // W / N

    /// Tax fraction applied per transaction sweep.
    double tau() const noexcept { return chi * beta * beta; }

    void validate() const {
        detail::require(beta > 0.0 && beta < 1.0, "beta must lie in (0, 1)");
        detail::require(std::isfinite(chi) && chi >= 0.0, "chi must be >= 0");
        detail::require(n_agents >= 2, "n_agents must be >= 2");
        detail::require(std::isfinite(mean_wealth) && mean_wealth > 0.0, "mean_wealth must be > 0");
    }
};

struct MomentSet {
    double n_total = 0.0;                // zeroth moment
    double w_total = 0.0;                // first moment
    std::vector<double> tail_fraction;   // A(w_i)
    std::vector<double> incomplete_m2;   // B(w_i)

    double mean_wealth() const noexcept { return w_total / n_total; }
};

/// Trapezoidal integral of f(w_i) sampled on the grid.
inline double trapezoid(const WealthGrid& grid, std::span<const double> f) {
    detail::require(f.size() == grid.size(), "trapezoid: size mismatch");
    const auto weights = grid.weights();
    double sum = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) sum += weights[i] * f[i];
    return sum;
}

inline double zeroth_moment(const DensityField& p) { return trapezoid(p.grid(), p.values()); }

inline double first_moment(const DensityField& p) {
    const auto w = p.grid().nodes();
    const auto weights = p.grid().weights();
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += weights[i] * w[i] * p[i];
    return sum;
}

inline double second_moment(const DensityField& p) {
    const auto w = p.grid().nodes();
    const auto weights = p.grid().weights();
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += weights[i] * w[i] * w[i] * p[i];
    return sum;
}

/// N, W, A(w_i) and B(w_i) of a density.
///
/// A is accumulated backward from the top node so A(last) = 0 and A is
/// nonincreasing by construction; B is accumulated forward from the first
/// node, so mass outside the grid counts as zero.
inline MomentSet moments(const DensityField& p) {
    const WealthGrid& grid = p.grid();
    const auto w = grid.nodes();
    const auto dw = grid.spacing();
    const std::size_t m = grid.size();

    MomentSet out;
    out.n_total = zeroth_moment(p);
    if (!(out.n_total > 0.0) || !std::isfinite(out.n_total))
        throw DegenerateDensityError("moments: density has no mass (N_total = 0)");
    out.w_total = first_moment(p);

    const double inv_n = 1.0 / out.n_total;
    out.tail_fraction.assign(m, 0.0);
    double upper = 0.0;
    for (std::size_t i = m - 1; i-- > 0;) {
        upper += 0.5 * dw[i] * (p[i] + p[i + 1]);
        out.tail_fraction[i] = std::min(1.0, upper * inv_n);
    }

    out.incomplete_m2.assign(m, 0.0);
    double lower = 0.0;
    for (std::size_t i = 1; i < m; ++i) {
        lower += 0.25 * dw[i - 1] * (w[i - 1] * w[i - 1] * p[i - 1] + w[i] * w[i] * p[i]);
        out.incomplete_m2[i] = lower * inv_n;
    }
    return out;
}

/// Gini coefficient sum_ij |w_i - w_j| / (2 N^2 mean), evaluated in
/// O(N log N) on the sorted vector.
inline double gini(std::span<const double> wealths) {
    detail::require(!wealths.empty(), "gini: empty population");
    std::vector<double> sorted(wealths.begin(), wealths.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double total = 0.0;
    double weighted = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        total += sorted[i];
        weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * sorted[i];
    }
    if (!(total > 0.0)) throw UndefinedMetricError("gini: total wealth is zero");
    return std::clamp(weighted / (n * total), 0.0, 1.0);
}

inline double gini(const Population& pop) { return gini(std::span<const double>(pop.wealths)); }

/// Fraction of agents with wealth strictly greater than w.
inline double empirical_tail(std::span<const double> wealths, double w) {
    detail::require(!wealths.empty(), "empirical_tail: empty population");
    const auto above = std::count_if(wealths.begin(), wealths.end(), [w](double x) { return x > w; });
    return static_cast<double>(above) / static_cast<double>(wealths.size());
}

inline double empirical_tail(const Population& pop, double w) {
    return empirical_tail(std::span<const double>(pop.wealths), w);
}

/// Histogram of a sample on the grid by linear (cloud-in-cell) deposition.
///
/// Each sample is split between its two neighbouring nodes with hat-function
/// weights, so the trapezoidal N and W of the result equal the sample count
/// and sample total exactly. Samples outside [w_lo, w_hi] are dropped.
inline DensityField density_from_sample(std::span<const double> sample, const WealthGrid& grid) {
    const auto w = grid.nodes();
    const auto dw = grid.spacing();
    const auto weights = grid.weights();
    std::vector<double> mass(grid.size(), 0.0);
    for (double x : sample) {
        if (x < grid.front() || x > grid.back()) continue;
        const std::size_t i = grid.locate(x);
        const double frac = (x - w[i]) / dw[i];
        mass[i] += 1.0 - frac;
        mass[i + 1] += frac;
    }
    for (std::size_t i = 0; i < mass.size(); ++i) mass[i] /= weights[i];
    return DensityField(grid, std::move(mass));
}

/// Integral of the piecewise-linear interpolant of P over [a, b] ∩ grid.
inline double mass_between(const DensityField& p, double a, double b) {
    const WealthGrid& grid = p.grid();
    a = std::max(a, grid.front());
    b = std::min(b, grid.back());
    if (!(b > a)) return 0.0;
    const auto w = grid.nodes();
    auto value_at = [&](double x) {
        const std::size_t i = grid.locate(x);
        const double frac = (x - w[i]) / (w[i + 1] - w[i]);
        return p[i] + frac * (p[i + 1] - p[i]);
    };
    const std::size_t ia = grid.locate(a);
    const std::size_t ib = grid.locate(b);
    if (ia == ib) return 0.5 * (b - a) * (value_at(a) + value_at(b));
    double sum = 0.5 * (w[ia + 1] - a) * (value_at(a) + p[ia + 1]);
    for (std::size_t i = ia + 1; i < ib; ++i) sum += 0.5 * (w[i + 1] - w[i]) * (p[i] + p[i + 1]);
    sum += 0.5 * (b - w[ib]) * (p[ib] + value_at(b));
    return sum;
}

/// Weighted L1 distance sum_i h_i |P_i - Q_i| on a shared grid.
inline double l1_distance(const DensityField& p, const DensityField& q) {
    detail::require(p.grid() == q.grid(), "l1_distance: densities live on different grids");
    const auto weights = p.grid().weights();
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) sum += weights[i] * std::abs(p[i] - q[i]);
    return sum;
}

}  // namespace yardsale
