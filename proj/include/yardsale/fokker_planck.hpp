#pragma once

// Explicit finite-volume integrator for the nonlinear Fokker-Planck equation
//
//     dP/dt = -chi d/dw[(W/N - w) P] + d^2/dw^2[D P],   D = w^2 A / 2 + B,
//
// written in flux form dP/dt = -dF/dw with F = chi (W/N - w) P - d(D P)/dw.
// Time is measured in units where beta^2 is absorbed (one MC step equals
// beta^2 time units). A and B are recomputed from the evolving density
// before every step.
//
// Control volumes surround the nodes, with faces at cell midpoints and
// zero flux through both grid ends. Every face flux has the two-point form
//
//     F = L * P_i - R * P_{i+1},   L, R >= 0,
//
// so an explicit step is positivity preserving whenever dt times the total
// outflow coefficient of each cell stays below one (stable_time_step()).
// The coefficients come from exponential fitting (Scharfetter-Gummel) of
// the flux of u = D P with x = v dw / D_face and Bern(x) = x / (e^x - 1):
//
//     L = Bern(-x) D_i / dw + chi dw / 4,   R = Bern(x) D_{i+1} / dw + chi dw / 4.
//
// For |x| << 1 this is the centered flux; for |x| >> 1 it is upwind. D_face
// is the P-weighted mean (u_i + u_{i+1}) / (P_i + P_{i+1}) for small |x| and
// the geometric mean for large |x| (face_diffusivity()). The chi dw / 4 term
// turns the midpoint drift chi (W/N - w_face) P_face into
// chi [W/N (P_i + P_{i+1}) - (w_i P_i + w_{i+1} P_{i+1})] / 2 at leading
// order. Together these cancel the O(dw^2) contribution of the drift to the
// first moment wherever |x| is small. N is conserved to rounding by
// telescoping.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "yardsale/domain.hpp"
#include "yardsale/errors.hpp"

namespace yardsale {

/// Regularizes D in the diffusive time-step bound where D vanishes.
inline constexpr double kDiffusionFloor = 1e-30;
/// Cell Peclet number around which the face diffusivity switches from the
/// P-weighted to the geometric mean.
inline constexpr double kPecletSwitch = 0.05;

struct FpConfig {
    ModelParams params;
    WealthGrid grid = make_log_grid(1e-4, 1e3, 2000);
    double cfl_safety = 0.9;
    double t_end = 50.0;
    double record_every = 1.0;
    double w_drift_abort = 1e-3; // relative drift of W that aborts evolve(); <= 0 disables
    double steady_tol = 0.0;     // > 0: stop once L1 change between records < steady_tol * N
    bool keep_densities = true;

    void validate() const {
        detail::require(std::isfinite(params.chi) && params.chi >= 0.0, "FpConfig: chi must be >= 0");
        detail::require(cfl_safety > 0.0 && cfl_safety <= 1.0, "FpConfig: cfl_safety must lie in (0, 1]");
        detail::require(std::isfinite(t_end) && t_end >= 0.0, "FpConfig: t_end must be >= 0");
        detail::require(record_every > 0.0, "FpConfig: record_every must be > 0");
    }
};

struct FpState {
    DensityField density;
    double time = 0.0;
    MomentSet moments;
    // Diagnostics of the step that produced this state.
    double last_dt = 0.0;
    double boundary_flux_lo = 0.0;
    double boundary_flux_hi = 0.0;
    std::size_t clipped_nodes = 0;

    static FpState at(DensityField density, double time = 0.0) {
        MomentSet m = yardsale::moments(density);
        return FpState{std::move(density), time, std::move(m)};
    }
};

namespace detail {

/// x / (e^x - 1), continuous at 0.
inline double bernoulli(double x) noexcept {
    if (std::abs(x) < 1e-2) {
        const double x2 = x * x;
        return 1.0 - 0.5 * x + x2 / 12.0 - x2 * x2 / 720.0;
    }
    return x / std::expm1(x);
}

/// F_f = left[f] * P_f - right[f] * P_{f+1} at the M-1 interior faces.
struct FaceCoefficients {
    std::vector<double> left;
    std::vector<double> right;
};

/// Coefficients of one face; (left, right).
// Face diffusivity. Starts from the P-weighted mean d_pw, which keeps the
// drift centred and the first moment conserved to high order when the cell
// Peclet number x = v dw / d_pw is small. For |x| well above kPecletSwitch
// it becomes the geometric mean, for which v dw / sqrt(d_l d_r) is the exact
// integral of v / D where D ~ w^2; there P changes by many e-folds per cell
// and d_pw would bias every cell by O(dw / w).
inline double face_diffusivity(double d_l, double d_r, double p_l, double p_r, double v, double dw) {
    const double mass = p_l + p_r;
    const double d_pw = mass > 1e-250 ? (d_l * p_l + d_r * p_r) / mass : 0.5 * (d_l + d_r);
    if (!(d_l > 0.0 && d_r > 0.0 && d_pw > 0.0)) return d_pw;
    const double y = v * dw / (d_pw * kPecletSwitch);
    const double s = y * y * y * y / (1.0 + y * y * y * y);
    return 1.0 / ((1.0 - s) / d_pw + s / std::sqrt(d_l * d_r));
}

inline std::pair<double, double> face_coefficients(double w_l, double w_r, double p_l, double p_r, double d_l,
                                                   double d_r, double chi, double mean_wealth) {
    const double dw = w_r - w_l;
    const double v = chi * (mean_wealth - 0.5 * (w_l + w_r));
    const double c = 0.25 * chi * dw;
    const double d_face = face_diffusivity(d_l, d_r, p_l, p_r, v, dw);
    if (!(d_face > kDiffusionFloor)) return {std::max(v, 0.0) + c, std::max(-v, 0.0) + c};
    const double x = v * dw / d_face;
    const double b_pos = bernoulli(x);
    const double b_neg = b_pos + x; // Bern(-x) = Bern(x) + x
    return {b_neg * d_l / dw + c, b_pos * d_r / dw + c};
}

inline FaceCoefficients face_coefficients(const WealthGrid& grid, std::span<const double> p, std::span<const double> d,
                                          double chi, double mean_wealth) {
    const auto w = grid.nodes();
    const std::size_t faces = grid.size() - 1;
    FaceCoefficients out;
    out.left.resize(faces);
    out.right.resize(faces);
    for (std::size_t f = 0; f < faces; ++f) {
        const auto [l, r] = face_coefficients(w[f], w[f + 1], p[f], p[f + 1], d[f], d[f + 1], chi, mean_wealth);
        out.left[f] = l;
        out.right[f] = r;
    }
    return out;
}

struct FaceFluxes {
    std::vector<double> total;     // F at face f+1/2
    std::vector<double> diffusive; // (u_f - u_{f+1}) / dw
    std::vector<double> drift;     // total - diffusive
};

inline FaceFluxes face_fluxes(const WealthGrid& grid, std::span<const double> p, std::span<const double> d, double chi,
                              double mean_wealth) {
    const auto dw = grid.spacing();
    const auto coeff = face_coefficients(grid, p, d, chi, mean_wealth);
    const std::size_t faces = grid.size() - 1;
    FaceFluxes out;
    out.total.resize(faces);
    out.diffusive.resize(faces);
    out.drift.resize(faces);
    for (std::size_t f = 0; f < faces; ++f) {
        out.total[f] = coeff.left[f] * p[f] - coeff.right[f] * p[f + 1];
        out.diffusive[f] = (d[f] * p[f] - d[f + 1] * p[f + 1]) / dw[f];
        out.drift[f] = out.total[f] - out.diffusive[f];
    }
    return out;
}

}  // namespace detail

/// D(w_i) = w_i^2 A(w_i) / 2 + B(w_i) from precomputed moments.
inline std::vector<double> diffusion_coefficient(const WealthGrid& grid, const MomentSet& m) {
    std::vector<double> d(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        d[i] = 0.5 * grid[i] * grid[i] * m.tail_fraction[i] + m.incomplete_m2[i];
    return d;
}

/// D(w_i) = w_i^2 A(w_i) / 2 + B(w_i). The beta^2 factor of the second
/// jump moment is absorbed into the time unit.
inline std::vector<double> diffusion_coefficient(const DensityField& p) {
    return diffusion_coefficient(p.grid(), moments(p));
}

/// Largest explicit step keeping every updated node nonnegative, scaled by
/// cfl_safety, and also within the plain diffusive bound dw^2 / (2 D + eps)
/// and the drift bound dw / |v|.
inline double stable_time_step(const WealthGrid& grid, const detail::FaceCoefficients& coeff,
                               std::span<const double> d, double chi, double mean_wealth, double cfl_safety) {
    const auto w = grid.nodes();
    const auto dw = grid.spacing();
    const auto h = grid.weights();
    const std::size_t m = grid.size();
    double max_rate = 0.0;
    double diffusive_bound = std::numeric_limits<double>::infinity();
    double drift_bound = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
        const double out = (i + 1 < m ? coeff.left[i] : 0.0) + (i > 0 ? coeff.right[i - 1] : 0.0);
        max_rate = std::max(max_rate, out / h[i]);

        const double local_dw = i == 0 ? dw[0] : (i + 1 == m ? dw[m - 2] : std::min(dw[i - 1], dw[i]));
        diffusive_bound = std::min(diffusive_bound, local_dw * local_dw / (2.0 * d[i] + kDiffusionFloor));
        const double speed = std::abs(chi * (mean_wealth - w[i]));
        if (speed > 0.0) drift_bound = std::min(drift_bound, local_dw / speed);
    }
    const double positivity_bound = max_rate > 0.0 ? 1.0 / max_rate : std::numeric_limits<double>::infinity();
    return cfl_safety * std::min({positivity_bound, diffusive_bound, drift_bound});
}

inline double stable_time_step(const FpState& state, const FpConfig& cfg) {
    const WealthGrid& grid = state.density.grid();
    const std::vector<double> d = diffusion_coefficient(grid, state.moments);
    const double chi = cfg.params.chi;
    const double mean = cfg.params.mean_wealth;
    const double cfl_safety = cfg.cfl_safety;
    return stable_time_step(grid, detail::face_coefficients(grid, state.density.values(), d, chi, mean), d, chi, mean,
                            cfl_safety);
}

/// Advance one explicit step of at most dt_limit.
///
/// The drift uses cfg.params.mean_wealth as W/N. The continuum dynamics
/// conserves W/N, whereas the discrete first moment is conserved only to
/// O(dw^2); feeding it back into the drift would let that error compound
/// through the scale invariance of the equation.
inline FpState step_fp(const FpState& state, const FpConfig& cfg,
                       double dt_limit = std::numeric_limits<double>::infinity()) {
    const WealthGrid& grid = state.density.grid();
    const auto p = state.density.values();
    const auto h = grid.weights();
    const std::size_t m = grid.size();
    const double chi = cfg.params.chi;
    const double mean = cfg.params.mean_wealth;

    const std::vector<double> d = diffusion_coefficient(grid, state.moments);
    const auto coeff = detail::face_coefficients(grid, p, d, chi, mean);
    const double dt_stable = stable_time_step(grid, coeff, d, chi, mean, cfg.cfl_safety);
    if (!(dt_stable > 0.0) || !std::isfinite(dt_stable))
        throw InstabilityError("step_fp: no positive time step satisfies the explicit positivity bound");
    const double dt = std::min(dt_stable, dt_limit);

    std::vector<double> next(m);
    double flux_in = 0.0; // through face i-1/2
    double flux_lo = 0.0;
    double flux_hi = 0.0;
    double peak = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double flux_out = i + 1 < m ? coeff.left[i] * p[i] - coeff.right[i] * p[i + 1] : 0.0;
        if (i == 0) flux_lo = flux_out;
        if (i + 2 == m) flux_hi = flux_out;
        next[i] = p[i] + dt * (flux_in - flux_out) / h[i];
        if (!std::isfinite(next[i]))
            throw InstabilityError("step_fp: non-finite density; explicit positivity bound dt <= cfl / max outflow "
                                   "rate violated");
        peak = std::max(peak, next[i]);
        flux_in = flux_out;
    }
    std::size_t clipped = 0;
    for (double& v : next) {
        if (v < 0.0) {
            if (v < -1e-12 * peak)
                throw InstabilityError("step_fp: negative density beyond rounding; explicit positivity bound dt <= "
                                       "cfl / max outflow rate violated");
            v = 0.0;
            ++clipped;
        }
    }

    FpState out = FpState::at(DensityField(grid, std::move(next)), state.time + dt);
    out.last_dt = dt;
    out.boundary_flux_lo = flux_lo;
    out.boundary_flux_hi = flux_hi;
    out.clipped_nodes = clipped;
    return out;
}

/// Narrow log-normal normalized to N_total = n_total, with the discrete
/// first moment placed at mean_wealth by shifting the log-location.
inline DensityField lognormal_density(const WealthGrid& grid, double mean_wealth = 1.0, double sigma = 0.1,
                                      double n_total = 1.0) {
    detail::require(mean_wealth > 0.0 && sigma > 0.0 && n_total > 0.0, "lognormal_density: invalid parameters");
    double mu = std::log(mean_wealth) - 0.5 * sigma * sigma;
    auto build = [&](double location) {
        return DensityField::from_function(grid, [&](double w) {
            const double z = (std::log(w) - location) / sigma;
            return std::exp(-0.5 * z * z) / (w * sigma * std::sqrt(2.0 * M_PI));
        });
    };
    DensityField p = build(mu);
    for (int iter = 0; iter < 50; ++iter) {
        const double n = zeroth_moment(p);
        if (!(n > 0.0)) throw DegenerateDensityError("lognormal_density: no mass on the grid");
        const double achieved = first_moment(p) / n;
        if (std::abs(achieved / mean_wealth - 1.0) < 1e-15) break;
        mu -= std::log(achieved / mean_wealth);
        p = build(mu);
    }
    return p.scaled(n_total / zeroth_moment(p));
}

struct FpRecord {
    double time = 0.0;
    std::optional<std::vector<double>> density;
    double n_total = 0.0;
    double w_total = 0.0;
    double boundary_flux_lo = 0.0;
    double boundary_flux_hi = 0.0;
    double l1_change = 0.0; // vs previous record, weighted L1
};

struct FpEvolution {
    std::vector<FpRecord> records;
    FpState final_state;
    std::size_t steps = 0;
    bool reached_steady = false;
    double max_relative_w_drift = 0.0;
};

using FpObserver = std::function<void(const FpRecord&, const FpState&)>;

/// Integrate from P0 to cfg.t_end, recording every cfg.record_every time
/// units (and at t_end). W/N in the drift is taken from P0. The observer,
/// if any, sees every record as soon as it is taken.
inline FpEvolution evolve(FpConfig cfg, const DensityField& p0, const FpObserver& observer = {}) {
    cfg.validate();
    detail::require(p0.grid() == cfg.grid, "evolve: initial density must live on cfg.grid");

    FpState state = FpState::at(p0, 0.0);
    cfg.params.mean_wealth = state.moments.mean_wealth();
    const double w0 = state.moments.w_total;
    auto make_record = [&](const FpState& s, double l1_change) {
        FpRecord r;
        r.time = s.time;
        if (cfg.keep_densities) r.density = std::vector<double>(s.density.values().begin(), s.density.values().end());
        r.n_total = s.moments.n_total;
        r.w_total = s.moments.w_total;
        r.boundary_flux_lo = s.boundary_flux_lo;
        r.boundary_flux_hi = s.boundary_flux_hi;
        r.l1_change = l1_change;
        return r;
    };

    std::vector<FpRecord> records;
    records.push_back(make_record(state, 0.0));
    if (observer) observer(records.back(), state);
    DensityField last_recorded = state.density;
    std::size_t steps = 0;
    bool steady = false;
    double max_drift = 0.0;
    std::size_t next_index = 1;

    while (state.time < cfg.t_end && !steady) {
        const double next_record = std::min(cfg.t_end, static_cast<double>(next_index) * cfg.record_every);
        while (state.time < next_record) {
            state = step_fp(state, cfg, next_record - state.time);
            ++steps;
            if (next_record - state.time < 1e-12 * std::max(1.0, next_record)) state.time = next_record;
            const double drift = std::abs(state.moments.w_total / w0 - 1.0);
            max_drift = std::max(max_drift, drift);
            if (cfg.w_drift_abort > 0.0 && drift > cfg.w_drift_abort)
                throw ConservationError("evolve: relative drift of W exceeded " + std::to_string(cfg.w_drift_abort) +
                                        " at t = " + std::to_string(state.time));
        }
        const double change = l1_distance(state.density, last_recorded);
        records.push_back(make_record(state, change));
        if (observer) observer(records.back(), state);
        last_recorded = state.density;
        ++next_index;
        if (cfg.steady_tol > 0.0 && change < cfg.steady_tol * state.moments.n_total) steady = true;
    }
    return FpEvolution{std::move(records), std::move(state), steps, steady, max_drift};
}

}  // namespace yardsale
