#pragma once

// Agent-based Yard-Sale simulation.
//
// One step is one transaction time: the population is split into a uniform
// random perfect matching, every pair transacts once with an independent
// fair coin, and then a flat tax tau = chi * beta^2 is levied and returned
// in equal shares. The random state travels with the population
// (Population::rng_seed), so step() is a pure function of its inputs.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "yardsale/domain.hpp"
#include "yardsale/errors.hpp"
#include "yardsale/rng.hpp"

namespace yardsale {

struct TransactionOutcome {
    double delta = 0.0;            // wealth moved to the first agent
    bool winner_was_first = false; // r = +1
};

enum class PairingScheme {
    random_matching, // one uniform perfect matching per step
};

struct McConfig {
    ModelParams params;
    std::size_t steps = 1;
    PairingScheme pairing = PairingScheme::random_matching;
    std::size_t record_every = 1;
    std::uint64_t rng_seed = 0;
    std::uint64_t replica = 0;
    bool keep_snapshots = true;

    void validate() const {
        params.validate();
        detail::require(steps >= 1, "McConfig: steps must be >= 1");
        detail::require(record_every >= 1, "McConfig: record_every must be >= 1");
    }
};

/// Signed transfer to the first agent: beta * r * min(w, w').
inline TransactionOutcome transaction_delta(double w, double w_prime, int r, double beta) {
    detail::require(r == 1 || r == -1, "transact: r must be +1 or -1");
    return {beta * static_cast<double>(r) * std::min(w, w_prime), r == 1};
}

/// Post-transaction wealths (w + delta, w' - delta).
inline std::pair<double, double> transact(double w, double w_prime, int r, double beta) {
    detail::require(w >= 0.0 && w_prime >= 0.0, "transact: wealths must be nonnegative");
    detail::require(beta > 0.0 && beta < 1.0, "transact: beta must lie in (0, 1)");
    const double delta = transaction_delta(w, w_prime, r, beta).delta;
    return {w + delta, w_prime - delta};
}

namespace detail {

inline void redistribute_in_place(std::vector<double>& wealths, double tau) {
    if (tau == 0.0 || wealths.empty()) return;
    const double mean = std::accumulate(wealths.begin(), wealths.end(), 0.0) / static_cast<double>(wealths.size());
    const double keep = 1.0 - tau;
    const double grant = tau * mean;
    for (double& w : wealths) w = keep * w + grant;
}

}  // namespace detail

/// Flat tax at rate tau with equal per-capita return: w -> w + tau (W/N - w).
inline Population redistribute(Population pop, double tau) {
    detail::require(std::isfinite(tau) && tau >= 0.0, "redistribute: tau must be >= 0");
    detail::require(tau <= 1.0, "redistribute: tau must be <= 1");
    detail::redistribute_in_place(pop.wealths, tau);
    return pop;
}

/// Advance one transaction time.
inline Population step(Population pop, const McConfig& cfg) {
    const std::size_t n = pop.size();
    detail::require(n >= 2, "step: population needs at least 2 agents");
    const double beta = cfg.params.beta;
    detail::require(beta > 0.0 && beta < 1.0, "step: beta must lie in (0, 1)");
    const double tau = cfg.params.tau();
    detail::require(tau >= 0.0 && tau <= 1.0, "step: chi * beta^2 must lie in [0, 1]");

    RandomStream pairing(pop.rng_seed, Stream::pairing);
    CoinSource coins(RandomStream(pop.rng_seed, Stream::coins));

    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    for (std::size_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(pairing.below(i + 1));
        std::swap(order[i], order[j]);
    }

    auto& w = pop.wealths;
    for (std::size_t k = 0; k + 1 < n; k += 2) {
        double& a = w[order[k]];
        double& b = w[order[k + 1]];
        const double stake = beta * std::min(a, b);
        const double delta = coins.flip() > 0 ? stake : -stake;
        a += delta;
        b -= delta;
    }
    detail::redistribute_in_place(w, tau);
    pop.rng_seed = mix_seed(pop.rng_seed);
    return pop;
}

struct McRecord {
    std::size_t step = 0;
    std::optional<std::vector<double>> snapshot;
    double gini = 0.0;
    double mean = 0.0;
    double second_moment = 0.0; // mean of w^2
};

struct McRun {
    std::vector<McRecord> records;
    Population final_state;
};

inline McRecord make_record(std::size_t step_index, const Population& pop, bool keep_snapshot) {
    McRecord rec;
    rec.step = step_index;
    const double n = static_cast<double>(pop.size());
    double sum = 0.0;
    double sum_sq = 0.0;
    for (double x : pop.wealths) {
        sum += x;
        sum_sq += x * x;
    }
    rec.mean = sum / n;
    rec.second_moment = sum_sq / n;
    rec.gini = gini(pop);
    if (keep_snapshot) rec.snapshot = pop.wealths;
    return rec;
}

/// Seed a run's population from (rng_seed, replica).
inline std::uint64_t run_seed(std::uint64_t rng_seed, std::uint64_t replica) {
    return mix_seed(rng_seed ^ mix_seed(replica + 0x5851f42d4c957f2dULL));
}

/// Simulate cfg.steps transaction times, recording at step 0, every
/// record_every steps, and at the final step.
inline McRun run(const McConfig& cfg, Population initial) {
    cfg.validate();
    detail::require(initial.size() >= 2, "run: population needs at least 2 agents");
    for (double x : initial.wealths) detail::require(x >= 0.0 && std::isfinite(x), "run: negative or non-finite wealth");

    McRun out;
    Population pop = std::move(initial);
    pop.rng_seed = run_seed(cfg.rng_seed, cfg.replica);
    out.records.push_back(make_record(0, pop, cfg.keep_snapshots));
    for (std::size_t s = 1; s <= cfg.steps; ++s) {
        pop = step(std::move(pop), cfg);
        if (s % cfg.record_every == 0 || s == cfg.steps) out.records.push_back(make_record(s, pop, cfg.keep_snapshots));
    }
    out.final_state = std::move(pop);
    return out;
}

/// Sample statistics of the transfer to a tagged agent of wealth w whose
/// partners are drawn uniformly from a frozen population.
struct StepStatistics {
    double mean_delta = 0.0;
    double mean_delta_sq = 0.0;
    double stderr_delta = 0.0;
    double stderr_delta_sq = 0.0;
    std::size_t samples = 0;
};

inline StepStatistics probe_step_statistics(double w, std::span<const double> partners, double beta,
                                            std::size_t samples, std::uint64_t seed) {
    detail::require(!partners.empty(), "probe_step_statistics: empty partner population");
    detail::require(samples >= 2, "probe_step_statistics: need at least 2 samples");
    RandomStream pick(seed, Stream::sampling);
    CoinSource coins(RandomStream(seed, Stream::coins));
    double s1 = 0.0, s2 = 0.0, s4 = 0.0;
    for (std::size_t k = 0; k < samples; ++k) {
        const double partner = partners[pick.below(partners.size())];
        const double d = transaction_delta(w, partner, coins.flip(), beta).delta;
        const double d2 = d * d;
        s1 += d;
        s2 += d2;
        s4 += d2 * d2;
    }
    const double n = static_cast<double>(samples);
    StepStatistics st;
    st.samples = samples;
    st.mean_delta = s1 / n;
    st.mean_delta_sq = s2 / n;
    st.stderr_delta = std::sqrt(std::max(0.0, s2 / n - st.mean_delta * st.mean_delta) / n);
    st.stderr_delta_sq = std::sqrt(std::max(0.0, s4 / n - st.mean_delta_sq * st.mean_delta_sq) / n);
    return st;
}

}  // namespace yardsale
