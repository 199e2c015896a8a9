#pragma once

// Stationary solutions of the Fokker-Planck equation with redistribution.
//
// Setting dP/dt = 0 and integrating once gives the zero-flux condition
//
//     d/dw[(w^2 A / 2 + B) P] - chi (W/N - w) P = 0,
//
// which is nonlinear through A and B. solve_steady() freezes A and B from
// the current iterate, integrates the resulting linear first-order equation
// upward from the bottom node, renormalizes, and mixes with the previous
// iterate (damped Picard iteration). The upward integration sets the same
// two-point face fluxes used by the time-dependent solver to zero, so a
// converged solution is also a discrete steady state of step_fp() and
// residual_sss() measures exactly the quantity the integration annihilates.
//
// Where A ~ 1 and B ~ 0 the equation reduces to one with the closed-form
// solution C w^-(2+2chi) exp(-2 chi (W/N) / w), which is non-analytic at
// w = 0 and seeds the integration.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "yardsale/domain.hpp"
#include "yardsale/errors.hpp"
#include "yardsale/fokker_planck.hpp"

namespace yardsale {

struct AsymptoticSolution {
    double c = 1.0; // wealth^(1 + 2 chi)
    double chi = 0.1;
    double mean_wealth = 1.0;
};

/// ln of C w^-(2+2chi) exp(-2 chi (W/N) / w); finite where the density
/// itself underflows.
inline double log_asymptotic_low_w(double w, const AsymptoticSolution& sol) {
    detail::require(w > 0.0, "asymptotic_low_w: w must be > 0");
    detail::require(sol.c > 0.0, "asymptotic_low_w: C must be > 0");
    detail::require(sol.chi >= 0.0, "asymptotic_low_w: chi must be >= 0");
    return std::log(sol.c) - (2.0 + 2.0 * sol.chi) * std::log(w) - 2.0 * sol.chi * sol.mean_wealth / w;
}

inline double asymptotic_low_w(double w, const AsymptoticSolution& sol) {
    return std::exp(log_asymptotic_low_w(w, sol));
}

/// Location of the maximum of the asymptotic form: 2 chi (W/N) / (2 + 2 chi).
inline double asymptotic_peak(const AsymptoticSolution& sol) {
    return 2.0 * sol.chi * sol.mean_wealth / (2.0 + 2.0 * sol.chi);
}

struct StationarityResidual {
    std::vector<double> face;      // -F at each interior face (M-1)
    std::vector<double> node;      // mean of the adjacent face values (M)
    std::vector<double> face_scale; // |diffusive| + |drift| parts of F per face
    double norm = 0.0;             // sum_f dw_f |F_f| / N_total
    double scale = 0.0;            // sum_f dw_f face_scale_f / N_total

    /// norm / scale restricted to faces [first, last).
    double relative(std::size_t first, std::size_t last) const {
        double num = 0.0, den = 0.0;
        for (std::size_t f = first; f < last && f < face.size(); ++f) {
            num += std::abs(face[f]);
            den += face_scale[f];
        }
        return den > 0.0 ? num / den : 0.0;
    }
};

/// Pointwise residual of the once-integrated stationary equation under the
/// solver's face discretization, with W/N supplied explicitly.
inline StationarityResidual residual_sss(const DensityField& p, double chi, double mean_wealth) {
    detail::require(std::isfinite(chi) && chi >= 0.0, "residual_sss: chi must be >= 0");
    const WealthGrid& grid = p.grid();
    const MomentSet m = moments(p);
    const std::vector<double> d = diffusion_coefficient(grid, m);
    const auto fluxes = detail::face_fluxes(grid, p.values(), d, chi, mean_wealth);
    const auto dw = grid.spacing();
    const std::size_t faces = fluxes.total.size();

    StationarityResidual r;
    r.face.resize(faces);
    r.face_scale.resize(faces);
    double norm = 0.0, scale = 0.0;
    for (std::size_t f = 0; f < faces; ++f) {
        r.face[f] = -fluxes.total[f];
        r.face_scale[f] = std::abs(fluxes.diffusive[f]) + std::abs(fluxes.drift[f]);
        norm += dw[f] * std::abs(fluxes.total[f]);
        scale += dw[f] * r.face_scale[f];
    }
    r.norm = norm / m.n_total;
    r.scale = scale / m.n_total;
    r.node.assign(grid.size(), 0.0);
    r.node.front() = r.face.front();
    r.node.back() = r.face.back();
    for (std::size_t i = 1; i + 1 < grid.size(); ++i) r.node[i] = 0.5 * (r.face[i - 1] + r.face[i]);
    return r;
}

/// Residual with W/N taken from the density itself.
inline StationarityResidual residual_sss(const DensityField& p, double chi) {
    const MomentSet m = moments(p);
    return residual_sss(p, chi, m.mean_wealth());
}

struct SteadyIteration {
    std::size_t iteration = 0;
    double l1_change = 0.0;
    double residual_norm = 0.0;
};

struct SteadyStateResult {
    DensityField density;
    double residual_norm = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    double achieved_mean_wealth = 0.0; // diagnostic; W/N of the result
    std::vector<SteadyIteration> history;
};

struct SteadyOptions {
    double tol = 1e-8;
    std::size_t max_iter = 500;
    double damping = 0.5;
};

namespace detail {

/// ln(P_{i+1} / P_i) making the face flux vanish with D frozen.
///
/// The face diffusivity depends on the ratio itself, so the scalar
/// condition is solved by fixed-point iteration on the ratio.
inline double zero_flux_log_ratio(double w_l, double w_r, double d_l, double d_r, double chi, double mean_wealth) {
    auto log_ratio_for = [&](double weight_r) {
        const auto [left, right] = face_coefficients(w_l, w_r, 1.0 - weight_r, weight_r, d_l, d_r, chi, mean_wealth);
        return std::log(left) - std::log(right);
    };
    double lr = log_ratio_for(0.5);
    for (int k = 0; k < 100; ++k) {
        // P_{i+1} / (P_i + P_{i+1}), evaluated stably for large |ln r|.
        const double weight_r = lr > 0.0 ? 1.0 / (1.0 + std::exp(-lr)) : std::exp(lr) / (1.0 + std::exp(lr));
        const double next = log_ratio_for(weight_r);
        const bool done = std::abs(next - lr) <= 1e-15 * std::max(1.0, std::abs(lr));
        lr = next;
        if (done) break;
    }
    return lr;
}

}  // namespace detail

/// Zero-flux density for frozen D, seeded by the asymptotic form at the
/// bottom node and normalized to n_total.
inline DensityField integrate_zero_flux(const WealthGrid& grid, std::span<const double> d, double chi,
                                        double mean_wealth, double n_total = 1.0) {
    const auto w = grid.nodes();
    std::vector<double> log_p(grid.size());
    log_p[0] = log_asymptotic_low_w(w[0], AsymptoticSolution{1.0, chi, mean_wealth});
    for (std::size_t i = 0; i + 1 < grid.size(); ++i)
        log_p[i + 1] = log_p[i] + detail::zero_flux_log_ratio(w[i], w[i + 1], d[i], d[i + 1], chi, mean_wealth);
    const double peak = *std::max_element(log_p.begin(), log_p.end());
    std::vector<double> values(grid.size());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::exp(log_p[i] - peak);
    DensityField p(grid, std::move(values));
    return p.scaled(n_total / zeroth_moment(p));
}

/// Normalized asymptotic form on the grid; the solver's initial iterate.
inline DensityField asymptotic_density(const WealthGrid& grid, double chi, double mean_wealth, double n_total = 1.0) {
    const AsymptoticSolution sol{1.0, chi, mean_wealth};
    std::vector<double> log_p(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) log_p[i] = log_asymptotic_low_w(grid[i], sol);
    const double peak = *std::max_element(log_p.begin(), log_p.end());
    std::vector<double> values(grid.size());
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::exp(log_p[i] - peak);
    DensityField p(grid, std::move(values));
    return p.scaled(n_total / zeroth_moment(p));
}

struct AsymptoteComparison {
    double c = 0.0;               // least-squares C in log space
    double max_relative_error = 0.0;
    std::size_t points = 0;
    double w_hi = 0.0;            // largest node in the comparison region
};

/// Compare P with the low-w closed form where A > a_min and
/// B < b_max_rel * W/N, with a single C fitted over that region. Nodes where
/// P has underflowed to zero or to a subnormal double carry no relative
/// precision and are left out.
inline AsymptoteComparison compare_to_asymptote(const DensityField& p, double chi, double mean_wealth,
                                                double a_min = 0.999, double b_max_rel = 1e-3) {
    const MomentSet m = moments(p);
    const AsymptoticSolution unit{1.0, chi, mean_wealth};
    std::vector<std::size_t> region;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (m.tail_fraction[i] > a_min && m.incomplete_m2[i] < b_max_rel * mean_wealth &&
            p[i] >= std::numeric_limits<double>::min())
            region.push_back(i);
    if (region.size() < 3)
        throw ArgumentError("compare_to_asymptote: fewer than 3 nodes in the low-w region");

    double log_c = 0.0;
    for (std::size_t i : region) log_c += std::log(p[i]) - log_asymptotic_low_w(p.grid()[i], unit);
    log_c /= static_cast<double>(region.size());

    AsymptoteComparison out;
    out.c = std::exp(log_c);
    out.points = region.size();
    for (std::size_t i : region) {
        const double model = std::exp(log_c + log_asymptotic_low_w(p.grid()[i], unit));
        out.max_relative_error = std::max(out.max_relative_error, std::abs(p[i] / model - 1.0));
        out.w_hi = std::max(out.w_hi, p.grid()[i]);
    }
    return out;
}

/// Damped Picard iteration for the stationary density with N_total = 1.
inline SteadyStateResult solve_steady(const ModelParams& params, const WealthGrid& grid,
                                      const SteadyOptions& options = {}) {
    if (!(params.chi > 0.0))
        throw NoSteadyStateError("solve_steady: no stationary density exists for chi = 0 (wealth condenses)");
    detail::require(std::isfinite(params.chi), "solve_steady: chi must be finite");
    detail::require(params.mean_wealth > 0.0, "solve_steady: mean_wealth must be > 0");
    detail::require(options.tol > 0.0, "solve_steady: tol must be > 0");
    detail::require(options.max_iter >= 1, "solve_steady: max_iter must be >= 1");
    detail::require(options.damping > 0.0 && options.damping <= 1.0, "solve_steady: damping must lie in (0, 1]");

    const double chi = params.chi;
    const double mean = params.mean_wealth;
    const auto h = grid.weights();
    DensityField current = asymptotic_density(grid, chi, mean);
    std::vector<SteadyIteration> history;
    bool converged = false;
    std::size_t iter = 0;
    double residual = std::numeric_limits<double>::infinity();

    while (iter < options.max_iter) {
        ++iter;
        const std::vector<double> d = diffusion_coefficient(grid, moments(current));
        const DensityField fresh = integrate_zero_flux(grid, d, chi, mean);
        std::vector<double> mixed(grid.size());
        double change = 0.0;
        for (std::size_t i = 0; i < mixed.size(); ++i) {
            mixed[i] = (1.0 - options.damping) * current[i] + options.damping * fresh[i];
            change += h[i] * std::abs(mixed[i] - current[i]);
        }
        current = DensityField(grid, std::move(mixed));
        residual = residual_sss(current, chi, mean).norm;
        history.push_back({iter, change, residual});
        if (change < options.tol && residual <= options.tol) {
            converged = true;
            break;
        }
    }

    const MomentSet m = moments(current);
    return SteadyStateResult{std::move(current), residual, iter, converged, m.mean_wealth(), std::move(history)};
}

}  // namespace yardsale
