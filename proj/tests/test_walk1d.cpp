#include "doctest.h"

#include <cmath>

#include "coalflow/walk1d.hpp"
#include "oracles.hpp"

using namespace coalflow;
using walk1d::StepDistribution;
using walk1d::WalkSpec;

TEST_CASE("step distribution validation") {
    auto lazy = StepDistribution::lazy();
    CHECK(lazy.sigma2 == doctest::Approx(0.5));

    // plain +-1 is periodic: gcd of support shifts is 2
    CHECK_THROWS_AS(StepDistribution::table({-1, 1}, {0.5, 0.5}), std::invalid_argument);
    // nonzero mean
    CHECK_THROWS_AS(StepDistribution::table({0, 1}, {0.5, 0.5}), std::invalid_argument);
    // probabilities must sum to one
    CHECK_THROWS_AS(StepDistribution::table({-1, 0, 1}, {0.3, 0.3, 0.3}), std::invalid_argument);

    auto tp = StepDistribution::two_point(0.3);
    CHECK(tp.sigma2 == doctest::Approx(0.3));
    CHECK_THROWS_AS(StepDistribution::two_point(1.0), std::invalid_argument);

    // an asymmetric aperiodic table is fine
    CHECK_NOTHROW(StepDistribution::table({-1, 0, 2}, {0.4, 0.4, 0.2}));
    // but {-2, 1} alone is periodic with period 3
    CHECK_THROWS_AS(StepDistribution::table({-2, 1}, {1.0 / 3, 2.0 / 3}), std::invalid_argument);
}

TEST_CASE("off-lattice starts are rejected") {
    WalkSpec spec;
    spec.eta = 0.5;
    CHECK_NOTHROW(walk1d::to_lattice(spec, spec.space_step() * 3, spec.time_step() * 2));
    CHECK_THROWS_AS(walk1d::to_lattice(spec, 0.1234, 0.0), std::invalid_argument);
    std::vector<std::array<double, 2>> bad{{0.1234, 0.0}};
    CHECK_THROWS_AS(walk1d::simulate_coalescing_walks(spec, bad, 1), std::invalid_argument);
}

TEST_CASE("single walk: no merge record, correct lattice geometry") {
    WalkSpec spec;
    spec.eta = 0.25;
    spec.horizon = 1.0;
    std::vector<std::array<double, 2>> starts{{0.0, 0.0}};
    auto sys = walk1d::simulate_coalescing_walks(spec, starts, 42);
    REQUIRE(sys.size() == 1);
    CHECK_FALSE(sys.merge(0).merged());
    const auto& p = sys.free_path(0);
    CHECK(p.times.size() == 17);  // horizon / eta^2 + 1 samples
    double a = spec.space_step();
    for (std::size_t k = 1; k < p.times.size(); ++k) {
        double jump = std::abs(p.coords[k] - p.coords[k - 1]) / a;
        CHECK((jump == 0.0 || jump == doctest::Approx(1.0)));
    }
}

TEST_CASE("two walks from the same point merge at time zero") {
    WalkSpec spec;
    spec.eta = 0.5;
    std::vector<std::array<double, 2>> starts{{0.0, 0.0}, {0.0, 0.0}};
    auto sys = walk1d::simulate_coalescing_walks(spec, starts, 7);
    REQUIRE(sys.merge(1).merged());
    CHECK(sys.merge(1).tau == 0.0);
}

TEST_CASE("adjacent walks: empirical merge probability matches the difference-chain DP") {
    // walks from lattice sites 0 and 1; the difference chain absorbs at 0
    WalkSpec spec;
    spec.eta = 1.0;
    spec.horizon = 16.0;  // 16 steps at eta = 1
    const std::int64_t t_check = 16;
    double expect = 1.0 - oracles::pair_tail_dp(spec.step, 1, t_check);

    const int samples = 100000;
    int merged = 0;
    double a = spec.space_step();
    std::vector<std::array<double, 2>> starts{{0.0, 0.0}, {a, 0.0}};
    for (int i = 0; i < samples; ++i) {
        auto sys = walk1d::simulate_coalescing_walks(spec, starts, 1000 + static_cast<std::uint64_t>(i));
        if (sys.merge(1).merged()) ++merged;
    }
    double p_hat = static_cast<double>(merged) / samples;
    double se = std::sqrt(expect * (1 - expect) / samples);
    CHECK(std::abs(p_hat - expect) < 3 * se);
}

TEST_CASE("brownian increments have variance dt (chi-square bound)") {
    const double dt = 1.0 / 128.0;
    std::vector<std::array<double, 2>> starts{{0.0, 0.0}};
    auto sys = walk1d::simulate_coalescing_bm(starts, dt, 781.25 /* 1e5 steps */, 99);
    const auto& p = sys.free_path(0);
    REQUIRE(p.times.size() > 100000);
    double s2 = 0.0;
    std::size_t n = p.times.size() - 1;
    for (std::size_t k = 1; k <= n; ++k) {
        double inc = p.coords[k] - p.coords[k - 1];
        s2 += inc * inc;
    }
    s2 /= static_cast<double>(n);
    // Var(sample var) ~ 2 dt^2 / n for Gaussian increments
    double se = dt * std::sqrt(2.0 / static_cast<double>(n));
    CHECK(std::abs(s2 - dt) < 3 * se);
}

TEST_CASE("bm pair from 0 and 1: meeting tail matches the reflection principle") {
    // P(tau > t) = erf(1 / (2 sqrt(t))); the bridge rule makes the grid
    // restriction exact in law, so dt only has to be moderate
    const double dt = 1.0 / 64.0;
    const int samples = 100000;
    const double checks[3] = {0.25, 1.0, 4.0};
    int exceed[3] = {0, 0, 0};
    std::vector<std::array<double, 2>> starts{{0.0, 0.0}, {1.0, 0.0}};
    for (int i = 0; i < samples; ++i) {
        auto sys = walk1d::simulate_coalescing_bm(starts, dt, 4.0, 50000 + static_cast<std::uint64_t>(i));
        double tau = sys.merge(1).merged() ? sys.merge(1).tau : kInfTime;
        for (int c = 0; c < 3; ++c)
            if (tau > checks[c]) ++exceed[c];
    }
    for (int c = 0; c < 3; ++c) {
        double expect = oracles::bm_pair_tail_exact(checks[c]);
        double p_hat = static_cast<double>(exceed[c]) / samples;
        double se = std::sqrt(expect * (1 - expect) / samples);
        INFO("t = ", checks[c], " expect ", expect, " got ", p_hat);
        CHECK(std::abs(p_hat - expect) < 3 * se);
    }
}

TEST_CASE("killed system: huge delta leaves at most one survivor") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto kc = walk1d::killed_survivor_count(1.0, 4, 50.0, StepDistribution::lazy(), seed);
        CHECK(kc.survivors <= 1);
    }
}

TEST_CASE("killed 3-particle system matches the exhaustive one-step law") {
    auto law = oracles::killed_three_particle_law(StepDistribution::lazy());
    const int samples = 100000;
    int counts[4] = {0, 0, 0, 0};
    for (int i = 0; i < samples; ++i) {
        auto kc = walk1d::killed_survivor_count(1.0, 1, 1.0, StepDistribution::lazy(),
                                                7000 + static_cast<std::uint64_t>(i));
        REQUIRE(kc.survivors <= 3);
        ++counts[kc.survivors];
    }
    for (int u = 0; u <= 3; ++u) {
        double p_hat = static_cast<double>(counts[u]) / samples;
        double se = std::sqrt(law[static_cast<std::size_t>(u)] * (1 - law[static_cast<std::size_t>(u)]) / samples) + 1e-12;
        INFO("U = ", u, " expect ", law[static_cast<std::size_t>(u)], " got ", p_hat);
        CHECK(std::abs(p_hat - law[static_cast<std::size_t>(u)]) < 3 * se);
    }
}

TEST_CASE("killed survivor count is nonincreasing in time, per realization") {
    for (std::uint64_t seed = 40; seed < 60; ++seed) {
        std::vector<std::int64_t> series;
        walk1d::killed_survivor_count(1.0, 16, 0.5, StepDistribution::lazy(), seed, &series);
        for (std::size_t k = 1; k < series.size(); ++k) CHECK(series[k] <= series[k - 1]);
    }
}

TEST_CASE("pair meeting tail: trivial and DP-checked values") {
    auto lazy = StepDistribution::lazy();
    std::vector<std::int64_t> ts{1, 4};

    auto same = walk1d::pair_meeting_tail(3, 3, ts, 100, lazy, 5);
    CHECK(same[0] == 0.0);
    CHECK(same[1] == 0.0);

    const int samples = 100000;
    auto tails = walk1d::pair_meeting_tail(0, 1, ts, samples, lazy, 314);
    double expect = oracles::pair_tail_dp(lazy, 1, 4);
    double se = std::sqrt(expect * (1 - expect) / samples);
    CHECK(std::abs(tails[1] - expect) < 3 * se);
}

TEST_CASE("rescaled walk has unit variance at time 1") {
    WalkSpec spec;
    spec.eta = 1.0 / 32.0;
    spec.horizon = 1.0;
    const int samples = 100000;
    // single walk per replica; position at time 1
    double sum = 0.0, sum2 = 0.0;
    std::vector<std::array<double, 2>> starts{{0.0, 0.0}};
    for (int i = 0; i < samples; ++i) {
        auto sys = walk1d::simulate_coalescing_walks(spec, starts, 90000 + static_cast<std::uint64_t>(i));
        double x = sys.free_path(0).eval1(1.0);
        sum += x;
        sum2 += x * x;
    }
    double mean = sum / samples;
    double var = sum2 / samples - mean * mean;
    double se = std::sqrt(2.0 / samples);  // Gaussian-limit sd of the sample variance of a unit variate
    CHECK(std::abs(var - 1.0) < 3 * se);
}

TEST_CASE("shared noise coalescence is absorbing for walks") {
    WalkSpec spec;
    spec.eta = 0.5;
    spec.horizon = 4.0;
    std::vector<std::array<double, 2>> starts;
    double a = spec.space_step();
    for (int i = -3; i <= 3; ++i) starts.push_back({i * a, 0.0});
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        auto sys = walk1d::simulate_coalescing_walks(spec, starts, seed);
        for (std::size_t i = 0; i < sys.size(); ++i)
            for (std::size_t j = i + 1; j < sys.size(); ++j) {
                const auto& pi = sys.free_path(i);
                const auto& pj = sys.free_path(j);
                bool met = false;
                for (std::size_t k = 0; k < pi.times.size(); ++k) {
                    if (met) CHECK(pi.coords[k] == pj.coords[k]);
                    if (pi.coords[k] == pj.coords[k]) met = true;
                }
            }
    }
}

TEST_CASE("red/blue coupling honors the decoupling window") {
    WalkSpec spec;
    spec.eta = 0.25;
    spec.horizon = 2.0;

    SUBCASE("window covering the whole horizon blocks every cross merge") {
        auto rb = walk1d::red_blue_coupling(spec, 0.0, 0.25, 10.0, 1.0, 11);
        CHECK(rb.cross_merges.empty());
    }

    SUBCASE("zero-length window degenerates to the shared-noise system") {
        auto rb = walk1d::red_blue_coupling(spec, 0.0, 0.25, 0.0, 1.0, 12);
        CHECK(rb.window_end == rb.window_begin);
        // shared noise from the red start on: a red and a blue on the same
        // site at the red start time coalesce immediately
        for (const auto& cm : rb.cross_merges) CHECK(cm.time >= rb.window_begin);
        CHECK(!rb.cross_merges.empty());
    }

    SUBCASE("no cross-colour merge time falls inside the window") {
        for (std::uint64_t seed = 0; seed < 50; ++seed) {
            auto rb = walk1d::red_blue_coupling(spec, 0.0, 0.25, 0.5, 1.0, seed);
            for (const auto& cm : rb.cross_merges) {
                CHECK(cm.time >= rb.window_end);
            }
        }
    }

    SUBCASE("red walks really consume the auxiliary field inside the window") {
        // red and blue walks co-located inside the window are driven by
        // different draws: their next moves must disagree some of the time
        int colocated = 0, diverged = 0;
        for (std::uint64_t seed = 0; seed < 40; ++seed) {
            auto rb = walk1d::red_blue_coupling(spec, 0.0, 0.25, 1.5, 1.0, seed);
            const auto& blue = rb.blue;
            const auto& red = rb.red;
            for (std::size_t b = 0; b < blue.size(); ++b)
                for (std::size_t r = 0; r < red.size(); ++r) {
                    const auto& pb = blue.free_path(b);
                    const auto& pr = red.free_path(r);
                    for (std::size_t k = 0; k + 1 < pr.times.size(); ++k) {
                        double t = pr.times[k];
                        if (t < rb.window_begin || t >= rb.window_end) continue;
                        if (t < pb.times.front() || t + 1e-12 > pb.times.back()) continue;
                        auto bi = static_cast<std::size_t>(std::llround((t - pb.times.front()) / spec.time_step()));
                        if (bi + 1 >= pb.times.size()) continue;
                        if (pb.coords[bi] == pr.coords[k]) {
                            ++colocated;
                            if (pb.coords[bi + 1] != pr.coords[k + 1]) ++diverged;
                        }
                    }
                }
        }
        CHECK(colocated > 100);
        CHECK(diverged > colocated / 10);
    }
}
