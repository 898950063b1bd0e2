#include "coalflow/estimate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "coalflow/rng.hpp"

namespace coalflow::estimate {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

int effective_threads(int threads) {
    if (threads > 0) return threads;
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(replica) for replica in [0, samples) on a bounded pool. fn must
// only touch per-replica state plus commutative accumulators.
template <typename Fn>
void for_each_replica(int samples, int threads, Fn&& fn) {
    threads = std::min(effective_threads(threads), samples);
    if (threads <= 1) {
        for (int r = 0; r < samples; ++r) fn(r);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::atomic<bool> failed{false};
    auto worker = [&] {
        while (true) {
            int r = next.fetch_add(1);
            if (r >= samples || failed.load()) break;
            try {
                fn(r);
            } catch (...) {
                if (!failed.exchange(true)) error = std::current_exception();
                break;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failed.load()) std::rethrow_exception(error);
}

}  // namespace

// ---------------------------------------------------------------------------
// Tubes and models

std::string tube_id(const Tube& t) {
    if (const auto* box = std::get_if<geom::PolyTube>(&t)) return box->id.empty() ? "tube" : box->id;
    const auto& tri = std::get<TriTube>(t);
    return tri.id.empty() ? "tri_tube" : tri.id;
}

double tube_end_time(const Tube& t) {
    if (const auto* box = std::get_if<geom::PolyTube>(&t)) return box->t1;
    const auto& tri = std::get<TriTube>(t);
    double t1 = tri.prisms.front().t;
    for (const auto& p : tri.prisms) t1 = std::max(t1, p.t);
    return t1;
}

std::string ModelSpec::name() const {
    switch (kind) {
        case ModelKind::walk1d: return "walk1d";
        case ModelKind::bm1d: return "bm1d";
        case ModelKind::gasket: return "gasket";
    }
    return "?";
}

double ModelSpec::horizon() const {
    switch (kind) {
        case ModelKind::walk1d: return walk.horizon;
        case ModelKind::bm1d: return bm_horizon;
        case ModelKind::gasket: return g_horizon;
    }
    return 0.0;
}

void ModelSpec::prepare() {
    switch (kind) {
        case ModelKind::walk1d:
            walk.validate();
            if (starts.empty()) fail("model: no starting points");
            for (const auto& z : starts) walk1d::to_lattice(walk, z[0], z[1]);
            break;
        case ModelKind::bm1d:
            if (!(bm_dt > 0.0)) fail("model: dt must be positive");
            if (starts.empty()) fail("model: no starting points");
            break;
        case ModelKind::gasket:
            if (!graph) graph = std::make_shared<gasket::GasketGraph>(gasket::GasketGraph::build(g_level, g_extent));
            if (g_starts.empty()) fail("model: no starting points");
            for (const auto& s : g_starts)
                if (s.vertex >= graph->vertex_count()) fail("model: gasket start is not a vertex");
            break;
    }
}

CoalescingSystem simulate(const ModelSpec& model, std::uint64_t seed) {
    switch (model.kind) {
        case ModelKind::walk1d:
            return walk1d::simulate_coalescing_walks(model.walk, model.starts, seed);
        case ModelKind::bm1d:
            return walk1d::simulate_coalescing_bm(model.starts, model.bm_dt, model.bm_horizon, seed);
        case ModelKind::gasket:
            return gasket::simulate_coalescing_gasket(*model.graph, model.g_starts, model.g_horizon, seed);
    }
    fail("model: unknown kind");
}

bool tube_crossed(const ModelSpec& model, const CoalescingSystem& sys, const Tube& tube,
                  std::size_t max_paths) {
    if (const auto* box = std::get_if<geom::PolyTube>(&tube)) return crosses_any(sys, *box, geom::kDefaultCrossTol, max_paths);

    const auto& tri = std::get<TriTube>(tube);
    if (model.kind != ModelKind::gasket) fail("tri tubes require the gasket model");
    double t0 = tri.prisms.front().s, t1 = tri.prisms.front().t;
    for (const auto& p : tri.prisms) {
        t0 = std::min(t0, p.s);
        t1 = std::max(t1, p.t);
    }
    // gasket systems ride a shared noise field, so coalesced paths equal the
    // free ones; one test per distinct trajectory at t0 suffices
    std::size_t n = std::min(max_paths, sys.size());
    std::vector<std::size_t> classes;
    for (std::size_t j = 0; j < n; ++j) {
        if (sys.free_path(j).start_time() > t0) continue;
        if (sys.alive_until[j] < t1) continue;
        std::size_t r = sys.resolve(j, t0);
        if (std::find(classes.begin(), classes.end(), r) != classes.end()) continue;
        classes.push_back(r);
        if (gasket::tri_tube_crosses(sys.free_path(j), model.graph->level(), tri.prisms)) return true;
    }
    return false;
}

std::uint64_t replica_seed(std::uint64_t seed, std::uint64_t replica) {
    return mix64(seed ^ mix64(replica + 0x633d5969ull));
}

// ---------------------------------------------------------------------------
// Estimates

namespace {

void wilson_bounds(double p, double n, double z, double& lo, double& hi) {
    double z2 = z * z;
    double denom = 1.0 + z2 / n;
    double centre = (p + z2 / (2.0 * n)) / denom;
    double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    lo = std::max(0.0, centre - half);
    hi = std::min(1.0, centre + half);
}

}  // namespace

CrossingEstimate make_estimate(long long hits, long long samples, std::uint64_t seed,
                               const std::string& model, std::vector<std::string> tube_ids) {
    if (samples < 1) fail("estimate: samples must be >= 1");
    CrossingEstimate e;
    e.tubes = std::move(tube_ids);
    e.samples = samples;
    e.seed = seed;
    e.model = model;
    e.p_hat = static_cast<double>(hits) / static_cast<double>(samples);
    e.std_error = std::sqrt(e.p_hat * (1.0 - e.p_hat) / static_cast<double>(samples));
    const double z = 3.0;
    double expected = e.p_hat * static_cast<double>(samples);
    if (expected < 10.0 || (static_cast<double>(samples) - expected) < 10.0) {
        wilson_bounds(e.p_hat, static_cast<double>(samples), z, e.ci_lo, e.ci_hi);
    } else {
        e.ci_lo = std::max(0.0, e.p_hat - z * e.std_error);
        e.ci_hi = std::min(1.0, e.p_hat + z * e.std_error);
    }
    return e;
}

bool within_joint_error(const CrossingEstimate& a, const CrossingEstimate& b, double z) {
    double joint = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
    return std::abs(a.p_hat - b.p_hat) <= z * joint;
}

CrossingEstimate estimate_joint_crossing(const ModelSpec& model, std::span<const Tube> tubes,
                                         int samples, std::uint64_t seed, int threads) {
    if (samples < 1) fail("estimate: samples must be >= 1");
    for (const auto& t : tubes)
        if (tube_end_time(t) > model.horizon() + 1e-12) fail("estimate: tube ends after the model horizon");

    std::atomic<long long> hits{0};
    for_each_replica(samples, threads, [&](int r) {
        CoalescingSystem sys = simulate(model, replica_seed(seed, static_cast<std::uint64_t>(r)));
        bool all = true;
        for (const auto& t : tubes)
            if (!tube_crossed(model, sys, t)) {
                all = false;
                break;
            }
        if (all) hits.fetch_add(1);
    });

    std::vector<std::string> ids;
    for (const auto& t : tubes) ids.push_back(tube_id(t));
    return make_estimate(hits.load(), samples, seed, model.name(), std::move(ids));
}

// ---------------------------------------------------------------------------
// Ladders

namespace {

std::vector<std::vector<char>> overlap_matrix(const std::vector<CrossingEstimate>& es) {
    std::vector<std::vector<char>> m(es.size(), std::vector<char>(es.size(), 1));
    for (std::size_t i = 0; i < es.size(); ++i)
        for (std::size_t j = 0; j < es.size(); ++j) m[i][j] = within_joint_error(es[i], es[j]) ? 1 : 0;
    return m;
}

}  // namespace

ConvergenceReport n_ladder_study(const ModelSpec& model, std::span<const Tube> tubes,
                                 std::span<const int> n_values, int samples, std::uint64_t seed,
                                 int threads) {
    if (n_values.empty()) fail("n_ladder: empty ladder");
    for (std::size_t i = 0; i < n_values.size(); ++i) {
        if (n_values[i] < 1) fail("n_ladder: rung sizes must be >= 1");
        if (i > 0 && n_values[i] <= n_values[i - 1]) fail("n_ladder: rungs must increase");
    }
    std::size_t max_n = static_cast<std::size_t>(n_values.back());
    std::size_t have = model.kind == ModelKind::gasket ? model.g_starts.size() : model.starts.size();
    if (max_n > have) fail("n_ladder: rung exceeds the number of starting points");

    std::vector<std::atomic<long long>> hits(n_values.size());
    std::atomic<bool> violated{false};
    for_each_replica(samples, threads, [&](int r) {
        CoalescingSystem sys = simulate(model, replica_seed(seed, static_cast<std::uint64_t>(r)));
        bool prev = false;
        for (std::size_t k = 0; k < n_values.size(); ++k) {
            bool all = true;
            for (const auto& t : tubes)
                if (!tube_crossed(model, sys, t, static_cast<std::size_t>(n_values[k]))) {
                    all = false;
                    break;
                }
            if (prev && !all) violated.store(true);  // prefix stability makes this exact
            prev = all;
            if (all) hits[k].fetch_add(1);
        }
    });

    ConvergenceReport rep;
    std::vector<std::string> ids;
    for (const auto& t : tubes) ids.push_back(tube_id(t));
    for (std::size_t k = 0; k < n_values.size(); ++k) {
        rep.ladder.push_back(static_cast<double>(n_values[k]));
        rep.estimates.push_back(make_estimate(hits[k].load(), samples, seed, model.name(), ids));
    }
    rep.monotone_flag = !violated.load();
    rep.ci_overlap = overlap_matrix(rep.estimates);
    return rep;
}

LadderWithReference eta_ladder_study(const EtaLadderSpec& spec, std::span<const Tube> tubes,
                                     int samples, std::uint64_t seed, int threads) {
    if (spec.eta_values.empty()) fail("eta_ladder: empty ladder");
    for (std::size_t i = 1; i < spec.eta_values.size(); ++i)
        if (!(spec.eta_values[i] < spec.eta_values[i - 1])) fail("eta_ladder: eta values must decrease");
    if (!(spec.region_lo < spec.region_hi)) fail("eta_ladder: empty start region");

    LadderWithReference out;
    for (double eta : spec.eta_values) {
        ModelSpec model;
        model.kind = ModelKind::walk1d;
        model.walk.eta = eta;
        model.walk.step = spec.step;
        model.walk.horizon = spec.horizon;
        double a = model.walk.space_step(), dt = model.walk.time_step();
        auto tick = std::llround(spec.start_time / dt);
        double t = static_cast<double>(tick) * dt;
        auto lo = static_cast<std::int64_t>(std::ceil(spec.region_lo / a - 1e-9));
        auto hi = static_cast<std::int64_t>(std::floor(spec.region_hi / a + 1e-9));
        for (std::int64_t i = lo; i <= hi; ++i)
            model.starts.push_back({static_cast<double>(i) * a, t});
        model.prepare();
        out.rungs.ladder.push_back(eta);
        out.rungs.estimates.push_back(estimate_joint_crossing(model, tubes, samples, seed, threads));
    }

    ModelSpec ref;
    ref.kind = ModelKind::bm1d;
    ref.bm_dt = spec.bm_dt;
    ref.bm_horizon = spec.horizon;
    auto tick = std::llround(spec.start_time / spec.bm_dt);
    double t = static_cast<double>(tick) * spec.bm_dt;
    for (int i = 0; i < spec.bm_starts; ++i) {
        double x = spec.region_lo + (spec.region_hi - spec.region_lo) *
                                        (static_cast<double>(i) + 0.5) / spec.bm_starts;
        ref.starts.push_back({x, t});
    }
    ref.prepare();
    out.reference = estimate_joint_crossing(ref, tubes, samples, mix64(seed ^ 0xb4ull), threads);

    for (const auto& e : out.rungs.estimates) {
        out.gaps.push_back(std::abs(e.p_hat - out.reference.p_hat));
        out.gap_within_3se.push_back(within_joint_error(e, out.reference) ? 1 : 0);
    }
    out.rungs.ci_overlap = overlap_matrix(out.rungs.estimates);
    return out;
}

LadderWithReference gasket_level_ladder_study(const GasketLadderSpec& spec, std::span<const Tube> tubes,
                                              int samples, std::uint64_t seed, int threads) {
    if (spec.levels.empty()) fail("gasket_ladder: empty ladder");
    for (std::size_t i = 1; i < spec.levels.size(); ++i)
        if (spec.levels[i] <= spec.levels[i - 1]) fail("gasket_ladder: levels must increase");
    if (spec.start_region.empty()) fail("gasket_ladder: empty start region");

    auto build_model = [&](int level) {
        ModelSpec model;
        model.kind = ModelKind::gasket;
        model.g_level = level;
        model.g_extent = spec.extent;
        model.g_horizon = spec.horizon;
        model.graph = std::make_shared<gasket::GasketGraph>(gasket::GasketGraph::build(level, spec.extent));
        for (std::size_t v = 0; v < model.graph->vertex_count(); ++v) {
            const auto& c = model.graph->lattice(v);
            for (const auto& pr : spec.start_region)
                if (gasket::triangle_contains(level, c[0], c[1], pr)) {
                    model.g_starts.push_back({v, 0});
                    break;
                }
        }
        model.prepare();
        return model;
    };

    LadderWithReference out;
    for (int level : spec.levels) {
        ModelSpec model = build_model(level);
        out.rungs.ladder.push_back(std::ldexp(1.0, -level));  // eta = 2^-level
        out.rungs.estimates.push_back(estimate_joint_crossing(model, tubes, samples, seed, threads));
    }
    ModelSpec ref = build_model(spec.reference_level);
    out.reference = estimate_joint_crossing(ref, tubes, samples, mix64(seed ^ 0xb4ull), threads);
    for (const auto& e : out.rungs.estimates) {
        out.gaps.push_back(std::abs(e.p_hat - out.reference.p_hat));
        out.gap_within_3se.push_back(within_joint_error(e, out.reference) ? 1 : 0);
    }
    out.rungs.ci_overlap = overlap_matrix(out.rungs.estimates);
    return out;
}

EnlargementReport enlargement_stability(const ModelSpec& model, const geom::PolyTube& tube,
                                        std::span<const double> deltas, int samples,
                                        std::uint64_t seed, int threads) {
    std::vector<geom::PolyTube> enlarged = geom::superdense_family(tube, deltas);
    for (const auto& t : enlarged)
        if (t.t1 > model.horizon() + 1e-12) fail("enlargement: tube ends after the model horizon");

    std::vector<std::atomic<long long>> hits(enlarged.size());
    std::atomic<long long> base_hits{0};
    std::atomic<bool> violated{false};
    for_each_replica(samples, threads, [&](int r) {
        CoalescingSystem sys = simulate(model, replica_seed(seed, static_cast<std::uint64_t>(r)));
        bool base = crosses_any(sys, tube);
        if (base) base_hits.fetch_add(1);
        bool prev = true;
        for (std::size_t k = 0; k < enlarged.size(); ++k) {
            bool hit = crosses_any(sys, enlarged[k]);
            // deltas decrease along the ladder: crossing can only get harder
            if (hit && !prev) violated.store(true);
            if (base && !hit) violated.store(true);
            prev = hit;
            if (hit) hits[k].fetch_add(1);
        }
    });

    EnlargementReport rep;
    std::vector<std::string> ids{tube_id(Tube{tube})};
    for (std::size_t k = 0; k < enlarged.size(); ++k) {
        rep.rungs.ladder.push_back(deltas[k]);
        rep.rungs.estimates.push_back(make_estimate(hits[k].load(), samples, seed, model.name(), ids));
    }
    rep.base = make_estimate(base_hits.load(), samples, seed, model.name(), ids);
    rep.rungs.monotone_flag = !violated.load();
    rep.rungs.ci_overlap = overlap_matrix(rep.rungs.estimates);
    for (const auto& e : rep.rungs.estimates) rep.gaps.push_back(e.p_hat - rep.base.p_hat);
    return rep;
}

}  // namespace coalflow::estimate
