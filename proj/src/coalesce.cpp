#include "coalflow/coalesce.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <unordered_map>

#include "coalflow/rng.hpp"

namespace coalflow {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

// Common grid step shared by all sample times (anchored at 0). Returns 0 when
// no path has two samples.
double common_grid_step(const std::vector<geom::SampledPath>& paths) {
    double dt = 0.0;
    for (const auto& p : paths)
        for (std::size_t k = 1; k < p.times.size(); ++k) {
            double step = p.times[k] - p.times[k - 1];
            if (dt == 0.0 || step < dt) dt = step;
        }
    if (dt == 0.0) return 0.0;
    for (const auto& p : paths)
        for (double t : p.times) {
            double ticks = t / dt;
            if (std::abs(ticks - std::llround(ticks)) > 1e-6) fail("coalesce: grid mismatch");
        }
    return dt;
}

std::int64_t tick_of(double t, double dt) { return std::llround(t / dt); }

struct PosKey {
    std::uint64_t a = 0, b = 0;
    bool operator==(const PosKey& o) const { return a == o.a && b == o.b; }
};
struct PosKeyHash {
    std::size_t operator()(const PosKey& k) const { return mix64(k.a ^ mix64(k.b)); }
};

PosKey key_of(const double* p, int dim) {
    PosKey k;
    std::memcpy(&k.a, p, sizeof(double));
    if (dim > 1) std::memcpy(&k.b, p + 1, sizeof(double));
    return k;
}

}  // namespace

// ---------------------------------------------------------------------------
// Coalesced-path evaluation

std::size_t CoalescingSystem::resolve(std::size_t j, double t) const {
    while (merges_[j].merged() && merges_[j].tau <= t) j = static_cast<std::size_t>(merges_[j].target);
    return j;
}

void CoalescingSystem::eval_coalesced(std::size_t j, double t, double* out) const {
    j = resolve(j, t);
    const MergeRecord& m = merges_[j];
    if (m.merged() && t >= m.junction_time && m.junction_time < m.tau) {
        const auto d = static_cast<std::size_t>(free_[j].dim);
        std::vector<double> own(d);
        free_[j].eval(m.junction_time, own.data());
        double w = (t - m.junction_time) / (m.tau - m.junction_time);
        for (std::size_t i = 0; i < d; ++i) out[i] = own[i] + w * (m.meet_pos[i] - own[i]);
        return;
    }
    free_[j].eval(t, out);
}

double CoalescingSystem::eval_coalesced1(std::size_t j, double t) const {
    double x;
    eval_coalesced(j, t, &x);
    return x;
}

void CoalescingSystem::coalesced_breakpoints(std::size_t j, double a, double b, std::vector<double>& out) const {
    while (true) {
        const MergeRecord& m = merges_[j];
        double stop = m.merged() ? std::min(b, m.tau) : b;
        const auto& ts = free_[j].times;
        auto lo = std::upper_bound(ts.begin(), ts.end(), a);
        auto hi = std::lower_bound(ts.begin(), ts.end(), stop);
        out.insert(out.end(), lo, hi);
        if (!m.merged() || m.tau >= b) return;
        if (m.tau > a) out.push_back(m.tau);
        a = m.tau;
        j = static_cast<std::size_t>(m.target);
    }
}

geom::SampledPath CoalescingSystem::coalesced_path(std::size_t j) const {
    const auto d = static_cast<std::size_t>(free_[j].dim);
    double start = free_[j].start_time();
    double end = free_[resolve(j, kInfTime)].end_time();
    geom::SampledPath out;
    out.dim = free_[j].dim;
    out.times.push_back(start);
    if (end > start) {
        coalesced_breakpoints(j, start, end, out.times);
        out.times.push_back(end);
    }
    out.coords.resize(out.times.size() * d);
    for (std::size_t k = 0; k < out.times.size(); ++k) eval_coalesced(j, out.times[k], out.coords.data() + k * d);
    return out;
}

// ---------------------------------------------------------------------------
// Build

namespace {

// Merge-structure scan for site-time-noise systems: paths equal at one grid
// time are equal forever, so one pass over ticks with position buckets finds
// every (tau_j, I_j).
void scan_shared_noise(const std::vector<geom::SampledPath>& paths, double dt,
                       std::vector<MergeRecord>& merges) {
    if (paths.empty() || dt == 0.0) return;
    const int dim = paths.front().dim;
    std::int64_t lo = 0, hi = 0;
    std::vector<std::int64_t> start_tick(paths.size()), end_tick(paths.size());
    for (std::size_t j = 0; j < paths.size(); ++j) {
        start_tick[j] = tick_of(paths[j].start_time(), dt);
        end_tick[j] = tick_of(paths[j].end_time(), dt);
        if (j == 0 || start_tick[j] < lo) lo = start_tick[j];
        if (j == 0 || end_tick[j] > hi) hi = end_tick[j];
    }
    std::unordered_map<PosKey, std::size_t, PosKeyHash> bucket;
    std::size_t unmerged = paths.size();
    for (std::int64_t tk = lo; tk <= hi && unmerged > 1; ++tk) {
        bucket.clear();
        double t = static_cast<double>(tk) * dt;
        for (std::size_t j = 0; j < paths.size(); ++j) {
            if (tk < start_tick[j] || tk > end_tick[j]) continue;
            std::size_t idx = static_cast<std::size_t>(tk - start_tick[j]) * static_cast<std::size_t>(dim);
            PosKey key = key_of(paths[j].coords.data() + idx, dim);
            auto [it, inserted] = bucket.emplace(key, j);
            if (!inserted && !merges[j].merged()) {
                merges[j].tau = t;
                merges[j].target = static_cast<std::ptrdiff_t>(it->second);
                merges[j].junction_time = t;
                merges[j].meet_pos.assign(paths[j].coords.begin() + static_cast<std::ptrdiff_t>(idx),
                                          paths[j].coords.begin() + static_cast<std::ptrdiff_t>(idx + static_cast<std::size_t>(dim)));
                --unmerged;
            }
        }
    }
}

}  // namespace

CoalescingSystem CoalescingSystem::build(std::vector<geom::SampledPath> free_paths, const CoalesceOptions& opts) {
    CoalescingSystem sys;
    for (const auto& p : free_paths) {
        p.validate();
        if (p.dim != free_paths.front().dim) fail("coalesce: mixed path dimensions");
    }
    sys.free_ = std::move(free_paths);
    const std::size_t n = sys.free_.size();
    sys.merges_.assign(n, MergeRecord{});
    sys.alive_until.assign(n, kInfTime);
    if (n <= 1) return sys;

    if (opts.mode == MeetMode::grid_equality) {
        double dt = common_grid_step(sys.free_);
        if (dt == 0.0) return sys;
        if (opts.shared_noise) {
            scan_shared_noise(sys.free_, dt, sys.merges_);
            return sys;
        }
        // Literal label-order scan against coalesced predecessors.
        const int dim = sys.free_.front().dim;
        std::vector<double> pos(static_cast<std::size_t>(dim)), mine(static_cast<std::size_t>(dim));
        for (std::size_t j = 1; j < n; ++j) {
            const auto& pj = sys.free_[j];
            std::int64_t t_start = tick_of(pj.start_time(), dt);
            std::int64_t t_end = tick_of(pj.end_time(), dt);
            bool merged = false;
            for (std::int64_t tk = t_start; tk <= t_end && !merged; ++tk) {
                double t = static_cast<double>(tk) * dt;
                std::size_t idx = static_cast<std::size_t>(tk - t_start) * static_cast<std::size_t>(dim);
                std::copy_n(pj.coords.begin() + static_cast<std::ptrdiff_t>(idx), dim, mine.begin());
                for (std::size_t i = 0; i < j; ++i) {
                    if (sys.free_[i].start_time() > t) continue;
                    sys.eval_coalesced(i, t, pos.data());
                    if (std::equal(mine.begin(), mine.end(), pos.begin())) {
                        sys.merges_[j].tau = t;
                        sys.merges_[j].target = static_cast<std::ptrdiff_t>(i);
                        sys.merges_[j].junction_time = t;
                        sys.merges_[j].meet_pos = mine;
                        merged = true;
                        break;
                    }
                }
            }
        }
        return sys;
    }

    // bridge_1d
    if (sys.free_.front().dim != 1) fail("coalesce: bridge_1d requires dimension 1");
    double dt = common_grid_step(sys.free_);
    if (dt == 0.0) return sys;
    if (!(opts.sigma2_rel > 0.0)) fail("coalesce: sigma2_rel must be positive");

    std::vector<std::size_t> roots;
    for (std::size_t j = 1; j < n; ++j) {
        RngStream coins(opts.seed, j);
        const auto& pj = sys.free_[j];
        bool merged = false;
        for (std::size_t k = 0; k + 1 <= pj.times.size() && !merged; ++k) {
            double ta = pj.times[k];
            bool last = (k + 1 == pj.times.size());
            double tb = last ? ta : pj.times[k + 1];
            double xa = pj.coords[k];
            double xb = last ? xa : pj.coords[k + 1];

            // Distinct live trajectories among the predecessors at ta; one
            // meeting test (and at most one coin) per trajectory.
            roots.clear();
            for (std::size_t i = 0; i < j; ++i) {
                if (sys.free_[i].start_time() > ta) continue;
                std::size_t r = sys.resolve(i, ta);
                if (std::find(roots.begin(), roots.end(), r) == roots.end()) roots.push_back(r);
            }
            std::sort(roots.begin(), roots.end());

            double best_t = kInfTime;
            std::size_t win_root = j;
            for (std::size_t r : roots) {
                double ra = sys.eval_coalesced1(r, ta);
                double ga = xa - ra;
                double cand = kInfTime;
                if (ga == 0.0) {
                    cand = ta;
                } else if (!last) {
                    // A predecessor may itself merge inside (ta, tb); its
                    // endpoint value reflects that, and the merged leg is
                    // covered by the target's own test. The gap is treated
                    // as linear, an O(dt) discretisation like the bridge.
                    double gb = xb - sys.eval_coalesced1(r, tb);
                    if (ga * gb <= 0.0) {
                        cand = ta + (tb - ta) * ga / (ga - gb);
                    } else {
                        double p = std::exp(-2.0 * ga * gb / (opts.sigma2_rel * (tb - ta)));
                        if (coins.next_double() < p)
                            cand = ta + (tb - ta) * std::abs(ga) / (std::abs(ga) + std::abs(gb));
                    }
                }
                if (cand < best_t) {
                    best_t = cand;
                    win_root = r;
                }
            }
            if (best_t == kInfTime) continue;

            double meet = sys.eval_coalesced1(win_root, best_t);
            std::size_t label = win_root;
            for (std::size_t i = 0; i < j; ++i) {
                if (sys.free_[i].start_time() > best_t) continue;
                if (sys.resolve(i, best_t) == sys.resolve(win_root, best_t)) {
                    label = i;
                    break;
                }
            }
            sys.merges_[j].tau = best_t;
            sys.merges_[j].target = static_cast<std::ptrdiff_t>(label);
            sys.merges_[j].meet_pos = {meet};
            double g = pj.start_time();
            auto it = std::lower_bound(pj.times.begin(), pj.times.end(), best_t);
            if (it != pj.times.begin()) g = *(it - 1);
            sys.merges_[j].junction_time = g;
            merged = true;
        }
    }
    return sys;
}

CoalescingSystem coalesce(std::vector<geom::SampledPath> free_paths, const CoalesceOptions& opts) {
    return CoalescingSystem::build(std::move(free_paths), opts);
}

// ---------------------------------------------------------------------------
// Crossing sets

namespace {

bool class_crosses(const CoalescingSystem& sys, std::size_t rep, const geom::PolyTube& tube, double tol) {
    const auto d = static_cast<std::size_t>(sys.dim());
    geom::SampledPath view;
    view.dim = sys.dim();
    view.times.push_back(tube.t0);
    sys.coalesced_breakpoints(rep, tube.t0, tube.t1, view.times);
    view.times.push_back(tube.t1);
    view.coords.resize(view.times.size() * d);
    for (std::size_t k = 0; k < view.times.size(); ++k)
        sys.eval_coalesced(rep, view.times[k], view.coords.data() + k * d);
    return geom::crosses(view, tube, tol);
}

}  // namespace

bool crosses_any(const CoalescingSystem& sys, const geom::PolyTube& tube, double tol, std::size_t max_paths) {
    std::size_t n = std::min(max_paths, sys.size());
    std::vector<std::size_t> classes;
    for (std::size_t j = 0; j < n; ++j) {
        if (sys.free_path(j).start_time() > tube.t0) continue;
        if (sys.alive_until[j] < tube.t1) continue;
        std::size_t r = sys.resolve(j, tube.t0);
        if (std::find(classes.begin(), classes.end(), r) != classes.end()) continue;
        classes.push_back(r);
        if (class_crosses(sys, j, tube, tol)) return true;
    }
    return false;
}

std::vector<char> crossing_set(const CoalescingSystem& sys, std::span<const geom::PolyTube> tubes,
                               double tol, std::size_t max_paths) {
    std::vector<char> out(tubes.size(), 0);
    for (std::size_t k = 0; k < tubes.size(); ++k) out[k] = crosses_any(sys, tubes[k], tol, max_paths) ? 1 : 0;
    return out;
}

}  // namespace coalflow
