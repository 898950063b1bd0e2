#include "doctest.h"

#include <cmath>
#include <map>

#include "coalflow/coalesce.hpp"
#include "coalflow/rng.hpp"
#include "oracles.hpp"

using namespace coalflow;
using geom::PolyTube;
using geom::SampledPath;

namespace {

CoalesceOptions grid_opts(bool shared = false) {
    CoalesceOptions o;
    o.mode = MeetMode::grid_equality;
    o.shared_noise = shared;
    return o;
}

// Lattice paths from a shared site-time noise table (steps in {-1,0,1}).
struct NoiseTable {
    std::vector<std::map<std::int64_t, int>> draws;  // per step, per site
    NoiseTable(std::uint64_t seed, std::int64_t steps, std::int64_t lo, std::int64_t hi) {
        NoiseField f(seed, 1);
        draws.resize(static_cast<std::size_t>(steps));
        for (std::int64_t k = 0; k < steps; ++k)
            for (std::int64_t x = lo; x <= hi; ++x) {
                double u = f.uniform(x, k);
                draws[static_cast<std::size_t>(k)][x] = u < 0.25 ? -1 : (u < 0.75 ? 0 : 1);
            }
    }
};

SampledPath lattice_path(const NoiseTable& nt, std::int64_t start, std::int64_t steps) {
    std::vector<double> ts, xs;
    std::int64_t pos = start;
    for (std::int64_t k = 0; k <= steps; ++k) {
        ts.push_back(static_cast<double>(k));
        xs.push_back(static_cast<double>(pos));
        if (k < steps) pos += nt.draws[static_cast<std::size_t>(k)].at(pos);
    }
    return SampledPath::line1d(std::move(ts), std::move(xs));
}

}  // namespace

TEST_CASE("two identical free paths merge at the second start") {
    auto p = SampledPath::line1d({0, 1, 2}, {0, 1, 0});
    auto sys = coalesce({p, p}, grid_opts());
    CHECK(sys.merge(0).tau == kInfTime);
    REQUIRE(sys.merge(1).merged());
    CHECK(sys.merge(1).tau == 0.0);
    CHECK(sys.merge(1).target == 0);
    // coalesced path 2 equals path 1 from its start
    for (double t : {0.0, 0.5, 1.0, 2.0}) CHECK(sys.eval_coalesced1(1, t) == p.eval1(t));
}

TEST_CASE("paths that never meet keep infinite merge times and their own samples") {
    auto a = SampledPath::line1d({0, 1, 2}, {0, 0, 0});
    auto b = SampledPath::line1d({0, 1, 2}, {5, 5, 5});
    auto sys = coalesce({a, b}, grid_opts());
    CHECK_FALSE(sys.merge(1).merged());
    CHECK(sys.coalesced_path(1).coords == b.coords);
}

TEST_CASE("grid mismatch is rejected") {
    auto a = SampledPath::line1d({0, 1}, {0, 0});
    auto b = SampledPath::line1d({0, 0.3}, {5, 5});
    CHECK_THROWS_AS(coalesce({a, b}, grid_opts()), std::invalid_argument);
}

TEST_CASE("lattice walks match the brute-force occupancy oracle") {
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        NoiseTable nt(seed, 40, -30, 40);
        std::vector<std::int64_t> starts{0, 1, 2};
        std::vector<SampledPath> paths;
        for (auto s : starts) paths.push_back(lattice_path(nt, s, 40));
        auto sys = coalesce(paths, grid_opts(true));

        auto oracle = oracles::occupancy_merge_steps(starts, 40, nt.draws);
        for (std::size_t j = 0; j < starts.size(); ++j) {
            if (oracle[j] < 0) {
                CHECK_FALSE(sys.merge(j).merged());
            } else {
                REQUIRE(sys.merge(j).merged());
                CHECK(sys.merge(j).tau == static_cast<double>(oracle[j]));
            }
        }

        // shared-noise and literal label-order scans agree
        auto literal = coalesce(paths, grid_opts(false));
        for (std::size_t j = 0; j < starts.size(); ++j) {
            CHECK(literal.merge(j).tau == sys.merge(j).tau);
            CHECK(literal.merge(j).target == sys.merge(j).target);
        }
    }
}

TEST_CASE("merge targets carry the lowest qualifying label") {
    // three walks; 2 meets the already-merged pair: target must be the
    // minimum label sitting at the meeting point
    for (std::uint64_t seed = 100; seed < 130; ++seed) {
        NoiseTable nt(seed, 60, -40, 50);
        std::vector<SampledPath> paths;
        for (std::int64_t s : {0, 1, 2, 3}) paths.push_back(lattice_path(nt, s, 60));
        auto sys = coalesce(paths, grid_opts(true));
        for (std::size_t j = 1; j < 4; ++j) {
            if (!sys.merge(j).merged()) continue;
            double tau = sys.merge(j).tau;
            auto idx = static_cast<std::size_t>(tau);
            // exhaustive rescan: lowest i with equal coalesced position
            std::size_t expected = j;
            for (std::size_t i = 0; i < j; ++i)
                if (sys.eval_coalesced1(i, tau) == paths[j].eval1(tau)) {
                    expected = i;
                    break;
                }
            CHECK(static_cast<std::size_t>(sys.merge(j).target) == expected);
            (void)idx;
        }
    }
}

TEST_CASE("coalescence is absorbing: merged paths agree on every later sample") {
    NoiseTable nt(77, 80, -50, 60);
    std::vector<SampledPath> paths;
    for (std::int64_t s : {0, 1, 3, 6}) paths.push_back(lattice_path(nt, s, 80));
    auto sys = coalesce(paths, grid_opts(true));
    for (std::size_t j = 1; j < 4; ++j) {
        if (!sys.merge(j).merged()) continue;
        auto target = static_cast<std::size_t>(sys.merge(j).target);
        for (double t = sys.merge(j).tau; t <= 80.0; t += 1.0)
            CHECK(sys.eval_coalesced1(j, t) == sys.eval_coalesced1(target, t));
    }
}

TEST_CASE("crossing sets: trivial cases and the per-path oracle") {
    auto still = SampledPath::line1d({0, 1}, {0, 0});
    CoalescingSystem sys = coalesce({still}, grid_opts());

    CHECK(crossing_set(sys, {}).empty());

    PolyTube t = PolyTube::box1d(-1, 1, 0, 1);
    std::vector<PolyTube> tubes{t};
    auto cs = crossing_set(sys, tubes);
    REQUIRE(cs.size() == 1);
    CHECK(cs[0] == 1);

    // random 5-walk system vs brute-force per-path loop on 3 small tubes
    for (std::uint64_t seed = 5; seed < 25; ++seed) {
        NoiseTable nt(seed, 30, -40, 45);
        std::vector<SampledPath> paths;
        for (std::int64_t s : {-2, -1, 0, 1, 2}) paths.push_back(lattice_path(nt, s, 30));
        auto walk_sys = coalesce(paths, grid_opts(true));
        std::vector<PolyTube> small{PolyTube::box1d(-3, 3, 2, 11), PolyTube::box1d(0, 4, 5, 17),
                                    PolyTube::box1d(-6, -1, 1, 9)};
        auto got = crossing_set(walk_sys, small);
        for (std::size_t k = 0; k < small.size(); ++k) {
            bool expect = false;
            for (std::size_t j = 0; j < walk_sys.size(); ++j)
                expect = expect || geom::crosses(walk_sys.coalesced_path(j), small[k]);
            CHECK(static_cast<bool>(got[k]) == expect);
        }
    }
}

TEST_CASE("crossing sets are monotone in the path prefix, exactly") {
    for (std::uint64_t seed = 60; seed < 90; ++seed) {
        NoiseTable nt(seed, 30, -40, 45);
        std::vector<SampledPath> paths;
        for (std::int64_t s : {-2, -1, 0, 1, 2, 3}) paths.push_back(lattice_path(nt, s, 30));
        auto sys = coalesce(paths, grid_opts(true));
        std::vector<PolyTube> tubes{PolyTube::box1d(-3, 3, 2, 11), PolyTube::box1d(0, 5, 5, 17)};
        std::vector<char> prev(tubes.size(), 0);
        for (std::size_t n = 1; n <= sys.size(); ++n) {
            auto cur = crossing_set(sys, tubes, geom::kDefaultCrossTol, n);
            for (std::size_t k = 0; k < tubes.size(); ++k) {
                if (prev[k]) CHECK(cur[k]);
            }
            prev = cur;
        }
    }
}

TEST_CASE("bridge mode: sign crossings merge with certainty at the crossing time") {
    auto a = SampledPath::line1d({0, 1, 2}, {0, 0, 0});
    auto b = SampledPath::line1d({0, 1, 2}, {1, -1, -1});
    CoalesceOptions o;
    o.mode = MeetMode::bridge_1d;
    o.seed = 9;
    auto sys = coalesce({a, b}, o);
    REQUIRE(sys.merge(1).merged());
    CHECK(sys.merge(1).tau == doctest::Approx(0.5));
    CHECK(sys.merge(1).target == 0);
    // after the merge, path 1 follows path 0 exactly
    CHECK(sys.eval_coalesced1(1, 1.0) == 0.0);
    CHECK(sys.eval_coalesced1(1, 0.25) == doctest::Approx(0.5));  // own line before the meet
}

TEST_CASE("bridge mode: same-sign gaps merge with the bridge probability") {
    // endpoints one apart with gaps d1 = d2 = 1, dt = 1, sigma2_rel = 2:
    // p = exp(-2*1*1/(2*1)) = exp(-1)
    const double expect = std::exp(-1.0);
    int hits = 0;
    const int trials = 20000;
    for (int i = 0; i < trials; ++i) {
        auto a = SampledPath::line1d({0, 1}, {0, 0});
        auto b = SampledPath::line1d({0, 1}, {1, 1});
        CoalesceOptions o;
        o.mode = MeetMode::bridge_1d;
        o.seed = 1000 + static_cast<std::uint64_t>(i);
        auto sys = coalesce({a, b}, o);
        if (sys.merge(1).merged()) ++hits;
    }
    double p_hat = static_cast<double>(hits) / trials;
    double se = std::sqrt(expect * (1 - expect) / trials);
    CHECK(std::abs(p_hat - expect) < 3 * se);
}

TEST_CASE("label exchangeability holds in distribution for lattice walks") {
    // same tube, two label orders of the same starting set; the crossing law
    // must agree (two-proportion z-test at 3 sigma)
    PolyTube tube = PolyTube::box1d(-2, 4, 3, 12);
    auto run = [&](bool reversed, std::uint64_t seed) {
        NoiseTable nt(seed, 24, -40, 45);
        std::vector<std::int64_t> starts{-2, 0, 2};
        if (reversed) std::reverse(starts.begin(), starts.end());
        std::vector<SampledPath> paths;
        for (auto s : starts) paths.push_back(lattice_path(nt, s, 24));
        auto sys = coalesce(paths, grid_opts(true));
        std::vector<PolyTube> tubes{tube};
        return crossing_set(sys, tubes)[0] != 0;
    };
    int n = 10000, h1 = 0, h2 = 0;
    for (int i = 0; i < n; ++i) {
        if (run(false, 1000 + static_cast<std::uint64_t>(i))) ++h1;
        if (run(true, 500000 + static_cast<std::uint64_t>(i))) ++h2;
    }
    double p1 = static_cast<double>(h1) / n, p2 = static_cast<double>(h2) / n;
    double pool = (p1 + p2) / 2;
    double se = std::sqrt(2 * pool * (1 - pool) / n);
    CHECK(std::abs(p1 - p2) < 3 * se);
}

TEST_CASE("prefix stability: the first n coalesced paths ignore later ones") {
    NoiseTable nt(3141, 40, -40, 50);
    std::vector<SampledPath> paths;
    for (std::int64_t s : {0, 1, 2, 4, 7}) paths.push_back(lattice_path(nt, s, 40));
    auto full = coalesce(paths, grid_opts(true));
    auto prefix = coalesce({paths.begin(), paths.begin() + 3}, grid_opts(true));
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(full.merge(j).tau == prefix.merge(j).tau);
        CHECK(full.merge(j).target == prefix.merge(j).target);
    }
}
