#pragma once

// Independent oracles used by the tests. Everything here recomputes expected
// values by brute force (dense sampling, dynamic programming, exhaustive
// enumeration) and deliberately avoids the implementation paths it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "coalflow/geometry.hpp"
#include "coalflow/walk1d.hpp"

namespace oracles {

using coalflow::geom::PolyTube;
using coalflow::geom::SampledPath;

// --- dense-time-sampling crossing oracle -------------------------------------

// Distance from a space-time point to the tube body (union of boxes).
inline double body_distance(const PolyTube& tube, const std::vector<double>& pt) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& b : tube.pieces) best = std::min(best, std::sqrt(b.distance2(pt)));
    return best;
}

// Depth of a point inside the body: max over boxes of the min margin to that
// box's boundary (0 when outside every box). A sufficient inscribed radius.
inline double body_depth(const PolyTube& tube, const std::vector<double>& pt) {
    double best = 0.0;
    for (const auto& b : tube.pieces) {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < b.lo.size(); ++i)
            m = std::min({m, pt[i] - b.lo[i], b.hi[i] - pt[i]});
        best = std::max(best, m);
    }
    return std::max(best, 0.0);
}

struct DenseCrossing {
    bool crossed = false;
    double margin = 0.0;  // decision confidence; small = near the boundary
};

// Evaluates the crossing definition by sampling the trajectory on a dense
// time mesh. margin is the smallest signed clearance seen: for a crossing,
// the minimum of depths and face margins; for a non-crossing, the largest
// violation distance.
inline DenseCrossing dense_crossing_oracle(const SampledPath& path, const PolyTube& tube, double mesh) {
    DenseCrossing out;
    const auto d = static_cast<std::size_t>(path.dim);
    std::vector<double> x(d), pt(d + 1);

    auto face_margin = [&](const std::vector<coalflow::geom::Box>& face, double t) {
        path.eval(t, x.data());
        double dist = std::numeric_limits<double>::infinity();
        double depth = 0.0;
        for (const auto& b : face) {
            dist = std::min(dist, std::sqrt(b.distance2(x)));
            double m = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < b.lo.size(); ++i) m = std::min({m, x[i] - b.lo[i], b.hi[i] - x[i]});
            depth = std::max(depth, m);
        }
        return dist > 0.0 ? -dist : std::max(depth, 0.0);
    };

    if (path.start_time() > tube.t0) {
        out.crossed = false;
        out.margin = path.start_time() - tube.t0;
        return out;
    }
    double lower = face_margin(tube.lower_face, tube.t0);
    double upper = face_margin(tube.upper_face, tube.t1);
    double interior = std::numeric_limits<double>::infinity();
    double worst_violation = 0.0;
    auto steps = static_cast<long>(std::ceil((tube.t1 - tube.t0) / mesh));
    for (long i = 0; i <= steps; ++i) {
        double t = tube.t0 + (tube.t1 - tube.t0) * static_cast<double>(i) / static_cast<double>(steps);
        path.eval(t, x.data());
        for (std::size_t c = 0; c < d; ++c) pt[c] = x[c];
        pt[d] = t;
        double depth = body_depth(tube, pt);
        if (depth > 0.0) {
            interior = std::min(interior, depth);
        } else {
            worst_violation = std::max(worst_violation, body_distance(tube, pt));
            interior = std::min(interior, 0.0);
        }
    }
    bool ok = lower >= 0.0 && upper >= 0.0 && worst_violation == 0.0;
    out.crossed = ok;
    if (ok)
        out.margin = std::min({lower, upper, interior});
    else
        out.margin = std::max({-lower, -upper, worst_violation});
    return out;
}

// --- difference-chain dynamic programming -------------------------------------

// Exact P(two independent walks started gap apart have not met within t
// steps): convolve the signed difference distribution, absorb at zero.
inline double pair_tail_dp(const coalflow::walk1d::StepDistribution& step, std::int64_t gap,
                           std::int64_t t_steps) {
    std::map<std::int64_t, double> diff;  // law of xi - xi'
    for (std::size_t i = 0; i < step.steps.size(); ++i)
        for (std::size_t j = 0; j < step.steps.size(); ++j)
            diff[step.steps[i] - step.steps[j]] += step.probs[i] * step.probs[j];

    std::map<std::int64_t, double> state;
    state[std::llabs(gap)] = 1.0;
    if (gap == 0) return 0.0;
    double alive = 1.0;
    for (std::int64_t k = 0; k < t_steps; ++k) {
        std::map<std::int64_t, double> next;
        for (const auto& [pos, p] : state)
            for (const auto& [dv, dp] : diff) {
                std::int64_t q = pos + dv;
                if (q == 0)
                    alive -= p * dp;
                else
                    next[q] += p * dp;
            }
        state.swap(next);
    }
    return alive;
}

// --- reflection principle ------------------------------------------------------

// P(two independent standard Brownian motions from 0 and 1 have not met by t).
inline double bm_pair_tail_exact(double t) { return std::erf(1.0 / (2.0 * std::sqrt(t))); }

// --- exhaustive killed 3-particle enumeration ----------------------------------

// Exact law of the survivor count U for K=1, n=1, delta in (0,1]: one step of
// three particles at -1, 0, 1 with independent site draws, killed outside
// [-1, 1], merged on shared sites. Returns P(U = u) for u = 0..3.
inline std::vector<double> killed_three_particle_law(const coalflow::walk1d::StepDistribution& step) {
    std::vector<double> law(4, 0.0);
    const auto m = step.steps.size();
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = 0; b < m; ++b)
            for (std::size_t c = 0; c < m; ++c) {
                double p = step.probs[a] * step.probs[b] * step.probs[c];
                std::vector<std::int64_t> pos;
                std::int64_t xs[3] = {-1 + step.steps[a], 0 + step.steps[b], 1 + step.steps[c]};
                for (std::int64_t x : xs)
                    if (x >= -1 && x <= 1) pos.push_back(x);
                std::sort(pos.begin(), pos.end());
                pos.erase(std::unique(pos.begin(), pos.end()), pos.end());
                law[pos.size()] += p;
            }
    return law;
}

// --- brute-force occupancy coalescence -----------------------------------------

// Site-occupancy simulation of coalescing lattice walks under a shared noise
// table: tracks which original labels sit on each site, merging occupants.
// Returns, for each walk, the step index at which it first shared a site with
// a lower label (-1 when never).
inline std::vector<std::ptrdiff_t> occupancy_merge_steps(
    const std::vector<std::int64_t>& starts, std::int64_t steps,
    const std::vector<std::map<std::int64_t, int>>& noise) {
    const std::size_t n = starts.size();
    std::vector<std::int64_t> pos(starts);
    std::vector<std::ptrdiff_t> merge_step(n, -1);
    for (std::int64_t k = 0; k <= steps; ++k) {
        std::map<std::int64_t, std::size_t> first_on_site;
        for (std::size_t j = 0; j < n; ++j) {
            auto [it, fresh] = first_on_site.emplace(pos[j], j);
            if (!fresh && merge_step[j] < 0 && it->second < j) merge_step[j] = static_cast<std::ptrdiff_t>(k);
        }
        if (k == steps) break;
        for (std::size_t j = 0; j < n; ++j) pos[j] += noise[static_cast<std::size_t>(k)].at(pos[j]);
    }
    return merge_step;
}

}  // namespace oracles
