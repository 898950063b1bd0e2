#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "coalflow/coalesce.hpp"

// One-dimensional coalescing systems: rescaled lattice random walks on
// L_eta = sigma^-1 eta Z x eta^2 Z, discretised coalescing Brownian motion,
// killed systems for the coming-down-from-infinity experiments, pair-meeting
// tails, and the red/blue decoupling used for joint tube crossings.
//
// Walks read their steps from a site-time noise field: every lattice point
// (x, t) carries one draw and every walk at (x, t) uses it. Walks that meet
// therefore move together forever, and a whole system is a deterministic
// function of (spec, seed).

namespace coalflow::walk1d {

struct StepDistribution {
    std::vector<int> steps;
    std::vector<double> probs;
    double sigma2 = 0.0;  // derived from the table

    // P(0) = 1/2, P(+-1) = 1/4; sigma2 = 1/2. The plain +-1 walk is periodic
    // and rejected by validate().
    static StepDistribution lazy();
    // P(+-1) = p/2, P(0) = 1 - p for p in (0, 1); sigma2 = p.
    static StepDistribution two_point(double move_prob);
    static StepDistribution table(std::vector<int> steps, std::vector<double> probs);

    // Checks: probabilities sum to 1, mean zero to 1e-12, at least two support
    // points, and gcd of support shifts equal to 1 (aperiodicity).
    void validate() const;

    int sample(double u) const;  // u uniform in [0,1)
};

struct WalkSpec {
    double eta = 1.0;  // mesh, in (0, 1]
    StepDistribution step = StepDistribution::lazy();
    double horizon = 1.0;
    std::optional<std::array<double, 2>> kill;  // closed interval; exit kills

    double sigma() const;
    double space_step() const { return eta / sigma(); }  // sigma^-1 eta
    double time_step() const { return eta * eta; }
    void validate() const;
};

struct KilledCount {
    double K = 0.0;
    int n = 0;
    double delta = 0.0;
    std::int64_t survivors = 0;  // U, distinct particles at step ceil(delta n^2)
};

// Maps an (x, t) point onto the rescaled lattice; throws when off-lattice.
std::array<std::int64_t, 2> to_lattice(const WalkSpec& spec, double x, double t);

// Coalescing rescaled walks from the given lattice space-time points, run to
// spec.horizon, merge records included. Killed paths end at their kill time
// (alive_until is set accordingly).
CoalescingSystem simulate_coalescing_walks(const WalkSpec& spec,
                                           std::span<const std::array<double, 2>> starts,
                                           std::uint64_t seed);

// Discretised coalescing Brownian motion: independent Gaussian increments of
// variance dt per step, merged with the Brownian-bridge rule; after merging
// paths share their tail. Start times must lie on the dt grid.
CoalescingSystem simulate_coalescing_bm(std::span<const std::array<double, 2>> starts, double dt,
                                        double horizon, std::uint64_t seed);

// One particle per integer site in [-Kn, Kn], unscaled lattice walks killed
// upon leaving the interval (a particle exactly on the boundary survives),
// coalescing by shared site-time noise. Returns the number of distinct
// survivors after ceil(delta n^2) steps. survivor_series, when given,
// receives the count after every step.
KilledCount killed_survivor_count(double K, int n, double delta, const StepDistribution& step,
                                  std::uint64_t seed, std::vector<std::int64_t>* survivor_series = nullptr);

// Empirical P(two independent walks from x and y have not met by t) for each
// t in t_steps (integer step counts). taus, when given, receives every
// replica's meeting step (max t + 1 when censored).
std::vector<double> pair_meeting_tail(std::int64_t x, std::int64_t y,
                                      std::span<const std::int64_t> t_steps, int samples,
                                      const StepDistribution& step, std::uint64_t seed,
                                      std::vector<std::int64_t>* taus = nullptr);

struct CrossMerge {
    std::size_t blue = 0;
    std::size_t red = 0;
    double time = 0.0;
};

struct RedBlueSystem {
    CoalescingSystem blue;
    CoalescingSystem red;
    std::vector<CrossMerge> cross_merges;
    double window_begin = 0.0;  // red consumes the auxiliary field on
    double window_end = 0.0;    // jump times in [window_begin, window_end)
};

// The decoupling coupling: blue particles start from every lattice site in
// [-K, K] at time floor_eta(s), red ones at floor_eta(s_prime). During the
// window [floor_eta(s_prime), floor_eta(s_prime + delta)) red particles read
// the auxiliary noise field, which blocks red/blue coalescence; afterwards
// the shared field merges them on contact. Particles are killed on leaving
// [-K, K].
RedBlueSystem red_blue_coupling(const WalkSpec& spec, double s, double s_prime, double delta,
                                double K, std::uint64_t seed);

}  // namespace coalflow::walk1d
