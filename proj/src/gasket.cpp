#include "coalflow/gasket.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "coalflow/rng.hpp"
#include "json.hpp"

namespace coalflow::gasket {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

constexpr std::uint64_t kGasketFieldTag = 0x4741534b45544e46ull;
constexpr double kHalfSqrt3 = 0.86602540378443864676;

std::uint64_t coord_key(std::int64_t p, std::int64_t q) {
    return (static_cast<std::uint64_t>(p) << 32) ^ (static_cast<std::uint64_t>(q) & 0xffffffffull);
}

std::int64_t ipow(std::int64_t base, int e) {
    std::int64_t r = 1;
    while (e-- > 0) r *= base;
    return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// Graph construction

GasketGraph GasketGraph::build(int n, int m, std::int64_t triangle_cap) {
    if (n < 0 || m < 0) fail("gasket: n and m must be >= 0");
    if (n + m > 37 || ipow(3, n + m) > triangle_cap) throw std::length_error("gasket: 3^(n+m) exceeds the triangle cap");

    GasketGraph g;
    g.n_ = n;
    g.m_ = m;
    g.side_ = std::int64_t{1} << (n + m);
    g.mesh_ = std::ldexp(1.0, -n);
    g.dt_ = 1.0 / static_cast<double>(ipow(5, n));

    // Subdivide to unit lattice triangles; collect their corners and edges.
    struct Tri {
        std::int64_t p, q, h;
    };
    std::vector<Tri> stack{{0, 0, g.side_}};
    std::vector<std::array<std::int64_t, 2>> corners;
    std::vector<std::array<std::array<std::int64_t, 2>, 3>> cells;
    while (!stack.empty()) {
        Tri t = stack.back();
        stack.pop_back();
        if (t.h == 1) {
            cells.push_back({{{t.p, t.q}, {t.p + 1, t.q}, {t.p, t.q + 1}}});
            continue;
        }
        std::int64_t h = t.h / 2;
        stack.push_back({t.p, t.q, h});
        stack.push_back({t.p + h, t.q, h});
        stack.push_back({t.p, t.q + h, h});
    }

    for (const auto& cell : cells)
        for (const auto& c : cell) corners.push_back(c);
    std::sort(corners.begin(), corners.end(), [](const auto& a, const auto& b) {
        // lexicographic on the embedded dyadic coordinates (x, then y)
        return std::pair{2 * a[0] + a[1], a[1]} < std::pair{2 * b[0] + b[1], b[1]};
    });
    corners.erase(std::unique(corners.begin(), corners.end()), corners.end());
    g.vertices_ = std::move(corners);
    g.lookup_.reserve(g.vertices_.size() * 2);
    for (std::size_t i = 0; i < g.vertices_.size(); ++i)
        g.lookup_.emplace(coord_key(g.vertices_[i][0], g.vertices_[i][1]), static_cast<std::uint32_t>(i));

    constexpr std::uint32_t npos = 0xffffffffu;
    g.adjacency_.assign(g.vertices_.size() * 4, npos);
    g.degree_.assign(g.vertices_.size(), 0);
    auto link = [&](std::uint32_t a, std::uint32_t b) {
        auto* slots = g.adjacency_.data() + 4 * a;
        for (int i = 0; i < g.degree_[a]; ++i)
            if (slots[i] == b) return;
        slots[g.degree_[a]++] = b;
    };
    for (const auto& cell : cells) {
        std::uint32_t idx[3];
        for (int i = 0; i < 3; ++i) idx[i] = g.lookup_.at(coord_key(cell[static_cast<std::size_t>(i)][0], cell[static_cast<std::size_t>(i)][1]));
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                if (i != j) link(idx[i], idx[j]);
    }
    for (std::size_t v = 0; v < g.vertices_.size(); ++v)
        std::sort(g.adjacency_.begin() + static_cast<std::ptrdiff_t>(4 * v),
                  g.adjacency_.begin() + static_cast<std::ptrdiff_t>(4 * v) + g.degree_[v]);
    return g;
}

std::size_t GasketGraph::edge_count() const {
    std::size_t twice = 0;
    for (auto d : degree_) twice += d;
    return twice / 2;
}

std::array<double, 2> GasketGraph::embed(std::size_t v) const {
    const auto& c = vertices_[v];
    double p = static_cast<double>(c[0]), q = static_cast<double>(c[1]);
    return {(p + 0.5 * q) * mesh_, q * kHalfSqrt3 * mesh_};
}

std::span<const std::uint32_t> GasketGraph::neighbors(std::size_t v) const {
    return {adjacency_.data() + 4 * v, static_cast<std::size_t>(degree_[v])};
}

std::optional<std::size_t> GasketGraph::find(std::int64_t p, std::int64_t q) const {
    auto it = lookup_.find(coord_key(p, q));
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
}

std::string GasketGraph::to_json_text() const {
    nlohmann::json j;
    j["n"] = n_;
    j["m"] = m_;
    j["vertices"] = nlohmann::json::array();
    for (const auto& v : vertices_) j["vertices"].push_back({v[0], v[1]});
    j["edges"] = nlohmann::json::array();
    for (std::size_t v = 0; v < vertices_.size(); ++v)
        for (auto w : neighbors(v))
            if (v < w) j["edges"].push_back({v, w});
    return j.dump();
}

// ---------------------------------------------------------------------------
// Triangle predicates (integer-exact at a common resolution)

namespace {

struct ScaledTri {
    std::int64_t zu, zv, h;  // corner and side at the common resolution
};

ScaledTri scale_triangle(const TriPrism& prism, int common_level) {
    std::int64_t f = std::int64_t{1} << (common_level - prism.k);
    return {prism.zp * f, prism.zq * f, f};
}

bool contains_scaled(const ScaledTri& t, std::int64_t u, std::int64_t v) {
    std::int64_t du = u - t.zu, dv = v - t.zv;
    return du >= 0 && dv >= 0 && du + dv <= t.h;
}

}  // namespace

bool triangle_contains(int level, std::int64_t p, std::int64_t q, const TriPrism& prism) {
    int common = std::max(level, prism.k);
    std::int64_t f = std::int64_t{1} << (common - level);
    return contains_scaled(scale_triangle(prism, common), p * f, q * f);
}

bool triangle_apex(int level, std::int64_t p, std::int64_t q, const TriPrism& prism) {
    int common = std::max(level, prism.k);
    std::int64_t f = std::int64_t{1} << (common - level);
    ScaledTri t = scale_triangle(prism, common);
    std::int64_t u = p * f, v = q * f;
    return (u == t.zu && v == t.zv) || (u == t.zu + t.h && v == t.zv) || (u == t.zu && v == t.zv + t.h);
}

// ---------------------------------------------------------------------------
// Walks

namespace {

std::size_t step_vertex(const GasketGraph& g, std::size_t v, std::uint64_t draw) {
    auto nb = g.neighbors(v);
    // degrees are 2 or 4, so the modulus is exactly uniform
    return nb[draw % nb.size()];
}

geom::SampledPath path_from_vertices(const GasketGraph& g, std::span<const std::uint32_t> verts,
                                     std::int64_t start_tick) {
    geom::SampledPath p;
    p.dim = 2;
    p.times.reserve(verts.size());
    p.coords.reserve(verts.size() * 2);
    for (std::size_t i = 0; i < verts.size(); ++i) {
        p.times.push_back(static_cast<double>(start_tick + static_cast<std::int64_t>(i)) * g.time_step());
        auto xy = g.embed(verts[i]);
        p.coords.push_back(xy[0]);
        p.coords.push_back(xy[1]);
    }
    return p;
}

}  // namespace

geom::SampledPath gasket_walk(const GasketGraph& g, std::size_t start_vertex, std::int64_t steps,
                              std::uint64_t seed) {
    if (start_vertex >= g.vertex_count()) fail("gasket_walk: start is not a vertex");
    RngStream rng(seed, 0);
    std::vector<std::uint32_t> verts;
    verts.reserve(static_cast<std::size_t>(steps) + 1);
    auto v = static_cast<std::uint32_t>(start_vertex);
    verts.push_back(v);
    for (std::int64_t k = 0; k < steps; ++k) {
        v = static_cast<std::uint32_t>(step_vertex(g, v, rng.next_u64()));
        verts.push_back(v);
    }
    return path_from_vertices(g, verts, 0);
}

CoalescingSystem simulate_coalescing_gasket(const GasketGraph& g, std::span<const GasketStart> starts,
                                            double horizon, std::uint64_t seed) {
    const NoiseField field(seed, kGasketFieldTag);
    const double dt = g.time_step();
    const auto horizon_tick = static_cast<std::int64_t>(std::floor(horizon / dt + 1e-9));

    std::vector<geom::SampledPath> paths;
    paths.reserve(starts.size());
    std::vector<std::uint32_t> verts;
    for (const auto& s : starts) {
        if (s.vertex >= g.vertex_count()) fail("gasket: start is not a vertex");
        if (s.tick > horizon_tick) fail("gasket: start after horizon");
        verts.clear();
        auto v = static_cast<std::uint32_t>(s.vertex);
        for (std::int64_t k = s.tick; k <= horizon_tick; ++k) {
            verts.push_back(v);
            if (k < horizon_tick) v = static_cast<std::uint32_t>(step_vertex(g, v, field.raw(static_cast<std::int64_t>(v), k)));
        }
        paths.push_back(path_from_vertices(g, verts, s.tick));
    }

    CoalesceOptions opts;
    opts.mode = MeetMode::grid_equality;
    opts.shared_noise = true;
    return CoalescingSystem::build(std::move(paths), opts);
}

// ---------------------------------------------------------------------------
// Prism crossing

namespace {

// Recover integer lattice coordinates of a gasket-path point.
std::array<std::int64_t, 2> lattice_of_point(double x, double y, int level) {
    double scale = std::ldexp(1.0, level);
    double qf = y * scale / kHalfSqrt3;
    auto q = std::llround(qf);
    double pf = x * scale - 0.5 * static_cast<double>(q);
    auto p = std::llround(pf);
    if (std::abs(qf - static_cast<double>(q)) > 1e-6 || std::abs(pf - static_cast<double>(p)) > 1e-6)
        fail("tri_tube_crosses: path point is not on the level lattice");
    return {p, q};
}

struct Rational {
    std::int64_t num = 0, den = 1;  // den > 0, reduced
    double to_double() const { return static_cast<double>(num) / static_cast<double>(den); }
};

Rational make_rational(std::int64_t num, std::int64_t den) {
    if (den < 0) {
        num = -num;
        den = -den;
    }
    std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    if (g > 1) {
        num /= g;
        den /= g;
    }
    return {num, den};
}

bool rat_less(const Rational& a, const Rational& b) {
    return static_cast<__int128>(a.num) * b.den < static_cast<__int128>(b.num) * a.den;
}

// Parameter interval of the segment (U1,V1)->(U2,V2) inside the closed
// triangle, endpoints exact rationals in [0,1]; empty -> nullopt.
std::optional<std::pair<Rational, Rational>> clip_triangle(const ScaledTri& t, std::int64_t u1,
                                                           std::int64_t v1, std::int64_t u2,
                                                           std::int64_t v2) {
    Rational lo{0, 1}, hi{1, 1};
    // constraints A + theta*B >= 0
    const std::int64_t cons[3][2] = {
        {u1 - t.zu, u2 - u1},
        {v1 - t.zv, v2 - v1},
        {t.h - (u1 - t.zu) - (v1 - t.zv), -(u2 - u1) - (v2 - v1)},
    };
    for (const auto& c : cons) {
        std::int64_t A = c[0], B = c[1];
        if (B == 0) {
            if (A < 0) return std::nullopt;
        } else if (B > 0) {
            Rational bound = make_rational(-A, B);
            if (rat_less(lo, bound)) lo = bound;
        } else {
            Rational bound = make_rational(A, -B);
            if (rat_less(bound, hi)) hi = bound;
        }
    }
    if (rat_less(hi, lo)) return std::nullopt;
    return std::make_pair(lo, hi);
}

double point_triangle_distance2(double x, double y, const TriPrism& prism) {
    double h = std::ldexp(1.0, -prism.k);
    double ax = (static_cast<double>(prism.zp) + 0.5 * static_cast<double>(prism.zq)) * h;
    double ay = static_cast<double>(prism.zq) * kHalfSqrt3 * h;
    double vx[3] = {ax, ax + h, ax + 0.5 * h};
    double vy[3] = {ay, ay, ay + kHalfSqrt3 * h};
    // inside test via the three edge half-planes (counter-clockwise order)
    bool inside = true;
    for (int i = 0; i < 3 && inside; ++i) {
        int j = (i + 1) % 3;
        double cross = (vx[j] - vx[i]) * (y - vy[i]) - (vy[j] - vy[i]) * (x - vx[i]);
        if (cross < 0.0) inside = false;
    }
    if (inside) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 3; ++i) {
        int j = (i + 1) % 3;
        double ex = vx[j] - vx[i], ey = vy[j] - vy[i];
        double w = ((x - vx[i]) * ex + (y - vy[i]) * ey) / (ex * ex + ey * ey);
        w = std::clamp(w, 0.0, 1.0);
        double dx = x - (vx[i] + w * ex), dy = y - (vy[i] + w * ey);
        best = std::min(best, dx * dx + dy * dy);
    }
    return best;
}

}  // namespace

bool tri_tube_crosses(const geom::SampledPath& path, int level, std::span<const TriPrism> prisms,
                      double tol) {
    if (prisms.empty()) fail("tri_tube_crosses: empty prism union");
    if (path.dim != 2) fail("tri_tube_crosses: path must be two-dimensional");
    double t0 = prisms.front().s, t1 = prisms.front().t;
    int kmax = prisms.front().k;
    for (const auto& pr : prisms) {
        if (!(pr.s < pr.t)) fail("tri_tube_crosses: prism with empty time extent");
        t0 = std::min(t0, pr.s);
        t1 = std::max(t1, pr.t);
        kmax = std::max(kmax, pr.k);
    }
    if (path.start_time() > t0) return false;

    // faces: slices of the union at t0 and t1
    double px, py;
    {
        double pt[2];
        path.eval(t0, pt);
        px = pt[0];
        py = pt[1];
    }
    const double tol2 = tol * tol;
    bool on_face = false;
    for (const auto& pr : prisms)
        if (pr.s == t0 && point_triangle_distance2(px, py, pr) <= tol2) {
            on_face = true;
            break;
        }
    if (!on_face) return false;
    {
        double pt[2];
        path.eval(t1, pt);
        on_face = false;
        for (const auto& pr : prisms)
            if (pr.t == t1 && point_triangle_distance2(pt[0], pt[1], pr) <= tol2) {
                on_face = true;
                break;
            }
        if (!on_face) return false;
    }

    // body coverage: clip every walk segment overlapping (t0, t1) against the
    // prisms; spatial clipping is exact, coverage is merged on the time axis.
    const int common = std::max(level, kmax);
    const std::int64_t pscale = std::int64_t{1} << (common - level);
    std::vector<ScaledTri> tris;
    tris.reserve(prisms.size());
    for (const auto& pr : prisms) tris.push_back(scale_triangle(pr, common));

    auto lattice_at = [&](std::size_t i) {
        auto c = lattice_of_point(path.coords[2 * i], path.coords[2 * i + 1], level);
        return std::array<std::int64_t, 2>{c[0] * pscale, c[1] * pscale};
    };

    struct Iv {
        double lo, hi;
    };
    std::vector<Iv> cover;
    const auto& ts = path.times;
    const std::size_t nseg = ts.size();
    for (std::size_t i = 0; i + 1 <= nseg; ++i) {
        double sa, sb;
        std::array<std::int64_t, 2> A{}, B{};
        bool degenerate_tail = false;
        if (i + 1 < nseg) {
            sa = ts[i];
            sb = ts[i + 1];
            if (sb <= t0 || sa >= t1) continue;
            A = lattice_at(i);
            B = lattice_at(i + 1);
        } else {
            // constant extrapolation past the last sample
            sa = ts[i];
            sb = t1;
            if (sb <= sa || sa >= t1) continue;
            A = lattice_at(i);
            B = A;
            degenerate_tail = true;
        }
        double wlo = std::max(sa, t0), whi = std::min(sb, t1);
        if (whi < wlo) continue;

        cover.clear();
        for (std::size_t ti = 0; ti < tris.size(); ++ti) {
            const auto& pr = prisms[ti];
            double plo = std::max(wlo, pr.s), phi = std::min(whi, pr.t);
            if (phi < plo) continue;
            std::optional<std::pair<Rational, Rational>> iv;
            if (degenerate_tail || (A == B)) {
                if (contains_scaled(tris[ti], A[0], A[1])) iv = std::make_pair(Rational{0, 1}, Rational{1, 1});
            } else {
                iv = clip_triangle(tris[ti], A[0], A[1], B[0], B[1]);
            }
            if (!iv) continue;
            double ta = sa + iv->first.to_double() * (sb - sa);
            double tb = sa + iv->second.to_double() * (sb - sa);
            ta = std::max(ta, plo);
            tb = std::min(tb, phi);
            if (tb >= ta) cover.push_back({ta, tb});
        }
        std::sort(cover.begin(), cover.end(), [](const Iv& a, const Iv& b) { return a.lo < b.lo; });
        double reach = wlo;
        bool ok = false;
        for (const Iv& iv : cover) {
            if (iv.lo > reach) break;
            reach = std::max(reach, iv.hi);
            if (reach >= whi) {
                ok = true;
                break;
            }
        }
        if (!ok && reach < whi) return false;
        if (i + 1 == nseg) break;
        if (ts[i + 1] >= t1) break;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Killed survivors

std::int64_t survivor_count_gasket(const GasketGraph& g, std::span<const TriPrism> region, double delta,
                                   std::uint64_t seed, std::vector<std::int64_t>* series) {
    if (!(delta > 0.0)) fail("gasket survivors: delta must be positive");
    if (region.empty()) fail("gasket survivors: empty region");
    const NoiseField field(seed, kGasketFieldTag);

    auto in_region = [&](std::size_t v) {
        const auto& c = g.lattice(v);
        for (const auto& pr : region)
            if (triangle_contains(g.level(), c[0], c[1], pr)) return true;
        return false;
    };

    std::vector<std::uint32_t> alive;
    for (std::size_t v = 0; v < g.vertex_count(); ++v)
        if (in_region(v)) alive.push_back(static_cast<std::uint32_t>(v));
    if (alive.empty()) fail("gasket survivors: region contains no vertices");
    if (series) {
        series->clear();
        series->push_back(static_cast<std::int64_t>(alive.size()));
    }

    const auto steps = static_cast<std::int64_t>(std::ceil(delta / g.time_step() - 1e-9));
    std::vector<std::uint32_t> next;
    for (std::int64_t k = 0; k < steps && !alive.empty(); ++k) {
        next.clear();
        for (auto v : alive) {
            auto w = static_cast<std::uint32_t>(step_vertex(g, v, field.raw(static_cast<std::int64_t>(v), k)));
            if (in_region(w)) next.push_back(w);
        }
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        alive.swap(next);
        if (series) series->push_back(static_cast<std::int64_t>(alive.size()));
    }
    return static_cast<std::int64_t>(alive.size());
}

// ---------------------------------------------------------------------------
// Mean squared displacement

std::vector<double> mean_squared_displacement(const GasketGraph& g, std::size_t start_vertex,
                                              std::span<const std::int64_t> ticks, int walks,
                                              std::uint64_t seed) {
    if (start_vertex >= g.vertex_count()) fail("msd: start is not a vertex");
    std::int64_t max_tick = 0;
    for (auto t : ticks) max_tick = std::max(max_tick, t);
    auto origin = g.embed(start_vertex);

    std::vector<double> acc(ticks.size(), 0.0);
    for (int w = 0; w < walks; ++w) {
        RngStream rng(seed, static_cast<std::uint64_t>(w));
        auto v = start_vertex;
        std::size_t next_out = 0;
        for (std::int64_t k = 0; k <= max_tick && next_out < ticks.size(); ++k) {
            while (next_out < ticks.size() && ticks[next_out] == k) {
                auto xy = g.embed(v);
                double dx = xy[0] - origin[0], dy = xy[1] - origin[1];
                acc[next_out] += dx * dx + dy * dy;
                ++next_out;
            }
            v = step_vertex(g, v, rng.next_u64());
        }
    }
    for (double& a : acc) a /= walks;
    return acc;
}

}  // namespace coalflow::gasket
