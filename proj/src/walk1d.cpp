#include "coalflow/walk1d.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "coalflow/rng.hpp"

namespace coalflow::walk1d {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

constexpr std::uint64_t kStepFieldTag = 0x57414c4b31445354ull;
constexpr std::uint64_t kAuxFieldTag = 0x57414c4b31444158ull;
constexpr std::uint64_t kBridgeTag = 0x4252494447453144ull;

std::int64_t floor_tick(double t, double dt) {
    return static_cast<std::int64_t>(std::floor(t / dt + 1e-9));
}

}  // namespace

// ---------------------------------------------------------------------------
// StepDistribution

StepDistribution StepDistribution::lazy() { return table({-1, 0, 1}, {0.25, 0.5, 0.25}); }

StepDistribution StepDistribution::two_point(double move_prob) {
    if (!(move_prob > 0.0) || !(move_prob < 1.0)) fail("step: move probability must be in (0,1)");
    return table({-1, 0, 1}, {move_prob / 2, 1.0 - move_prob, move_prob / 2});
}

StepDistribution StepDistribution::table(std::vector<int> steps, std::vector<double> probs) {
    StepDistribution d;
    d.steps = std::move(steps);
    d.probs = std::move(probs);
    double var = 0.0;
    for (std::size_t i = 0; i < d.steps.size(); ++i) var += d.probs[i] * d.steps[i] * d.steps[i];
    d.sigma2 = var;
    d.validate();
    return d;
}

void StepDistribution::validate() const {
    if (steps.size() != probs.size() || steps.size() < 2) fail("step: need at least two support points");
    double total = 0.0, mean = 0.0;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (!(probs[i] > 0.0)) fail("step: probabilities must be positive");
        total += probs[i];
        mean += probs[i] * steps[i];
    }
    if (std::abs(total - 1.0) > 1e-12) fail("step: probabilities must sum to 1");
    if (std::abs(mean) > 1e-12) fail("step: mean must be zero");
    if (!(sigma2 > 0.0)) fail("step: variance must be positive");
    int g = 0;
    for (std::size_t i = 1; i < steps.size(); ++i) g = std::gcd(g, std::abs(steps[i] - steps[0]));
    if (g != 1) fail("step: periodic support (gcd of shifts is " + std::to_string(g) + ")");
}

int StepDistribution::sample(double u) const {
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return steps[i];
    }
    return steps.back();
}

// ---------------------------------------------------------------------------
// WalkSpec

double WalkSpec::sigma() const { return std::sqrt(step.sigma2); }

void WalkSpec::validate() const {
    if (!(eta > 0.0) || eta > 1.0) fail("walk: eta must be in (0,1]");
    step.validate();
    if (!(horizon > 0.0)) fail("walk: horizon must be positive");
    if (kill && !(kill->at(0) < kill->at(1))) fail("walk: empty kill interval");
}

std::array<std::int64_t, 2> to_lattice(const WalkSpec& spec, double x, double t) {
    double a = spec.space_step(), dt = spec.time_step();
    auto site = std::llround(x / a);
    auto tick = std::llround(t / dt);
    if (std::abs(site * a - x) > 1e-9 * std::max(1.0, std::abs(x)) ||
        std::abs(tick * dt - t) > 1e-9 * std::max(1.0, std::abs(t)))
        fail("walk: start (" + std::to_string(x) + ", " + std::to_string(t) + ") is off-lattice");
    return {site, tick};
}

// ---------------------------------------------------------------------------
// Coalescing rescaled walks

CoalescingSystem simulate_coalescing_walks(const WalkSpec& spec,
                                           std::span<const std::array<double, 2>> starts,
                                           std::uint64_t seed) {
    spec.validate();
    const double a = spec.space_step(), dt = spec.time_step();
    const NoiseField field(seed, kStepFieldTag);
    const std::int64_t horizon_tick = floor_tick(spec.horizon, dt);

    std::vector<geom::SampledPath> paths;
    std::vector<double> alive;
    paths.reserve(starts.size());
    for (const auto& z : starts) {
        auto [site, tick] = to_lattice(spec, z[0], z[1]);
        if (tick > horizon_tick) fail("walk: start after horizon");
        geom::SampledPath p;
        p.dim = 1;
        double death = kInfTime;
        std::int64_t pos = site;
        for (std::int64_t k = tick; k <= horizon_tick; ++k) {
            p.times.push_back(static_cast<double>(k) * dt);
            p.coords.push_back(static_cast<double>(pos) * a);
            if (k == horizon_tick) break;
            pos += spec.step.sample(field.uniform(pos, k));
            if (spec.kill) {
                double x = static_cast<double>(pos) * a;
                if (x < spec.kill->at(0) || x > spec.kill->at(1)) {
                    death = static_cast<double>(k) * dt;  // last time alive inside
                    break;
                }
            }
        }
        alive.push_back(death);
        paths.push_back(std::move(p));
    }

    CoalesceOptions opts;
    opts.mode = MeetMode::grid_equality;
    opts.shared_noise = true;
    CoalescingSystem sys = CoalescingSystem::build(std::move(paths), opts);
    sys.alive_until = std::move(alive);
    return sys;
}

// ---------------------------------------------------------------------------
// Discretised coalescing Brownian motion

CoalescingSystem simulate_coalescing_bm(std::span<const std::array<double, 2>> starts, double dt,
                                        double horizon, std::uint64_t seed) {
    if (!(dt > 0.0)) fail("bm: dt must be positive");
    const std::int64_t horizon_tick = floor_tick(horizon, dt);
    const double sdt = std::sqrt(dt);

    std::vector<geom::SampledPath> paths;
    paths.reserve(starts.size());
    for (std::size_t j = 0; j < starts.size(); ++j) {
        double t = starts[j][1];
        auto tick = std::llround(t / dt);
        if (std::abs(tick * dt - t) > 1e-9 * std::max(1.0, std::abs(t))) fail("bm: start time off the dt grid");
        RngStream rng(seed, j);
        geom::SampledPath p;
        p.dim = 1;
        double x = starts[j][0];
        for (std::int64_t k = tick; k <= horizon_tick; ++k) {
            p.times.push_back(static_cast<double>(k) * dt);
            p.coords.push_back(x);
            x += sdt * rng.next_normal();
        }
        paths.push_back(std::move(p));
    }

    CoalesceOptions opts;
    opts.mode = MeetMode::bridge_1d;
    opts.sigma2_rel = 2.0;  // two unit-diffusivity drivers
    opts.seed = mix64(seed ^ kBridgeTag);
    return CoalescingSystem::build(std::move(paths), opts);
}

// ---------------------------------------------------------------------------
// Killed coalescing walks (unscaled lattice)

KilledCount killed_survivor_count(double K, int n, double delta, const StepDistribution& step,
                                  std::uint64_t seed, std::vector<std::int64_t>* survivor_series) {
    if (n < 1) fail("killed: n must be >= 1");
    if (!(delta > 0.0)) fail("killed: delta must be positive");
    step.validate();
    const NoiseField field(seed, kStepFieldTag);
    const auto reach = static_cast<std::int64_t>(std::floor(K * n + 1e-9));
    const double bound = K * n;
    const auto total_steps = static_cast<std::int64_t>(std::ceil(delta * n * n - 1e-9));

    std::vector<std::int64_t> pos;
    pos.reserve(static_cast<std::size_t>(2 * reach + 1));
    for (std::int64_t x = -reach; x <= reach; ++x) pos.push_back(x);
    if (survivor_series) {
        survivor_series->clear();
        survivor_series->push_back(static_cast<std::int64_t>(pos.size()));
    }

    std::vector<std::int64_t> next;
    for (std::int64_t k = 0; k < total_steps && !pos.empty(); ++k) {
        next.clear();
        for (std::int64_t x : pos) {
            std::int64_t y = x + step.sample(field.uniform(x, k));
            if (static_cast<double>(y) < -bound || static_cast<double>(y) > bound) continue;  // killed
            next.push_back(y);
        }
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        pos.swap(next);
        if (survivor_series) survivor_series->push_back(static_cast<std::int64_t>(pos.size()));
    }

    KilledCount out;
    out.K = K;
    out.n = n;
    out.delta = delta;
    out.survivors = static_cast<std::int64_t>(pos.size());
    return out;
}

// ---------------------------------------------------------------------------
// Pair-meeting tail

std::vector<double> pair_meeting_tail(std::int64_t x, std::int64_t y,
                                      std::span<const std::int64_t> t_steps, int samples,
                                      const StepDistribution& step, std::uint64_t seed,
                                      std::vector<std::int64_t>* taus) {
    if (samples < 1) fail("pair_tail: samples must be >= 1");
    step.validate();
    std::int64_t max_t = 0;
    for (std::int64_t t : t_steps) max_t = std::max(max_t, t);
    if (taus) taus->clear();

    std::vector<std::int64_t> exceed(t_steps.size(), 0);
    for (int s = 0; s < samples; ++s) {
        RngStream ra(seed, 2 * static_cast<std::uint64_t>(s));
        RngStream rb(seed, 2 * static_cast<std::uint64_t>(s) + 1);
        std::int64_t px = x, py = y;
        std::int64_t tau = (px == py) ? 0 : max_t + 1;
        for (std::int64_t k = 1; k <= max_t && tau > max_t; ++k) {
            px += step.sample(ra.next_double());
            py += step.sample(rb.next_double());
            if (px == py) tau = k;
        }
        if (taus) taus->push_back(tau);
        for (std::size_t i = 0; i < t_steps.size(); ++i)
            if (tau > t_steps[i]) ++exceed[i];
    }
    std::vector<double> tail(t_steps.size());
    for (std::size_t i = 0; i < tail.size(); ++i) tail[i] = static_cast<double>(exceed[i]) / samples;
    return tail;
}

// ---------------------------------------------------------------------------
// Red/blue coupling

RedBlueSystem red_blue_coupling(const WalkSpec& spec, double s, double s_prime, double delta,
                                double K, std::uint64_t seed) {
    spec.validate();
    if (!(s < s_prime)) fail("red_blue: need s < s_prime");
    if (delta < 0.0) fail("red_blue: delta must be >= 0");
    const double a = spec.space_step(), dt = spec.time_step();
    const NoiseField main_field(seed, kStepFieldTag);
    const NoiseField aux_field(seed, kAuxFieldTag);
    const std::int64_t horizon_tick = floor_tick(spec.horizon, dt);
    const std::int64_t blue_tick = floor_tick(s, dt);
    const std::int64_t red_tick = floor_tick(s_prime, dt);
    const std::int64_t window_end_tick = floor_tick(s_prime + delta, dt);
    if (red_tick > horizon_tick) fail("red_blue: s_prime after horizon");

    const auto site_lo = static_cast<std::int64_t>(std::ceil(-K / a - 1e-9));
    const auto site_hi = static_cast<std::int64_t>(std::floor(K / a + 1e-9));

    struct Track {
        std::vector<std::int64_t> sites;  // per tick from start_tick
        std::int64_t start_tick;
        double death = kInfTime;
    };
    auto evolve = [&](std::int64_t start_site, std::int64_t start_tick, bool red) {
        Track tr;
        tr.start_tick = start_tick;
        std::int64_t pos = start_site;
        for (std::int64_t k = start_tick; k <= horizon_tick; ++k) {
            tr.sites.push_back(pos);
            if (k == horizon_tick) break;
            bool aux = red && k >= red_tick && k < window_end_tick;
            double u = aux ? aux_field.uniform(pos, k) : main_field.uniform(pos, k);
            pos += spec.step.sample(u);
            double x = static_cast<double>(pos) * a;
            if (x < -K || x > K) {
                tr.death = static_cast<double>(k) * dt;
                break;
            }
        }
        return tr;
    };

    std::vector<Track> blue_tracks, red_tracks;
    for (std::int64_t i = site_lo; i <= site_hi; ++i) blue_tracks.push_back(evolve(i, blue_tick, false));
    for (std::int64_t i = site_lo; i <= site_hi; ++i) red_tracks.push_back(evolve(i, red_tick, true));

    auto to_system = [&](std::vector<Track>& tracks) {
        std::vector<geom::SampledPath> paths;
        std::vector<double> alive;
        for (Track& tr : tracks) {
            geom::SampledPath p;
            p.dim = 1;
            for (std::size_t k = 0; k < tr.sites.size(); ++k) {
                p.times.push_back(static_cast<double>(tr.start_tick + static_cast<std::int64_t>(k)) * dt);
                p.coords.push_back(static_cast<double>(tr.sites[k]) * a);
            }
            paths.push_back(std::move(p));
            alive.push_back(tr.death);
        }
        CoalesceOptions opts;
        opts.mode = MeetMode::grid_equality;
        opts.shared_noise = true;
        CoalescingSystem sys = CoalescingSystem::build(std::move(paths), opts);
        sys.alive_until = std::move(alive);
        return sys;
    };

    RedBlueSystem out;
    out.window_begin = static_cast<double>(red_tick) * dt;
    out.window_end = static_cast<double>(window_end_tick) * dt;
    out.blue = to_system(blue_tracks);
    out.red = to_system(red_tracks);

    // Cross-colour merges: from the end of the window on, a shared site means
    // shared draws, hence permanent coalescence.
    for (std::size_t b = 0; b < blue_tracks.size(); ++b) {
        for (std::size_t r = 0; r < red_tracks.size(); ++r) {
            const Track& tb = blue_tracks[b];
            const Track& tr = red_tracks[r];
            std::int64_t from = std::max({window_end_tick, tb.start_tick, tr.start_tick});
            std::int64_t to = horizon_tick;
            for (std::int64_t k = from; k <= to; ++k) {
                auto bi = static_cast<std::size_t>(k - tb.start_tick);
                auto ri = static_cast<std::size_t>(k - tr.start_tick);
                if (bi >= tb.sites.size() || ri >= tr.sites.size()) break;  // someone died
                if (tb.sites[bi] == tr.sites[ri]) {
                    out.cross_merges.push_back({b, r, static_cast<double>(k) * dt});
                    break;
                }
            }
        }
    }
    return out;
}

}  // namespace coalflow::walk1d
