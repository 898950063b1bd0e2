#include "coalflow/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "json.hpp"

namespace coalflow::geom {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument(msg); }

}  // namespace

// ---------------------------------------------------------------------------
// Box

void Box::validate() const {
    if (lo.empty() || lo.size() != hi.size()) fail("box: lo/hi size mismatch");
    for (std::size_t i = 0; i < lo.size(); ++i)
        if (!(lo[i] < hi[i])) fail("box: degenerate extent in coordinate " + std::to_string(i));
}

bool Box::contains(std::span<const double> p, double tol) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
        if (p[i] < lo[i] - tol || p[i] > hi[i] + tol) return false;
    return true;
}

double Box::distance2(std::span<const double> p) const {
    double d2 = 0.0;
    for (std::size_t i = 0; i < lo.size(); ++i) {
        double g = 0.0;
        if (p[i] < lo[i]) g = lo[i] - p[i];
        else if (p[i] > hi[i]) g = p[i] - hi[i];
        d2 += g * g;
    }
    return d2;
}

bool Box::meets(const Box& other) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
        if (lo[i] > other.hi[i] || other.lo[i] > hi[i]) return false;
    return true;
}

// ---------------------------------------------------------------------------
// PolyTube

namespace {

Box spatial_slice(const Box& piece) {
    Box s;
    s.lo.assign(piece.lo.begin(), piece.lo.end() - 1);
    s.hi.assign(piece.hi.begin(), piece.hi.end() - 1);
    return s;
}

void check_connected(const std::vector<Box>& pieces) {
    const std::size_t n = pieces.size();
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    std::size_t reached = 1;
    while (!stack.empty()) {
        std::size_t i = stack.back();
        stack.pop_back();
        for (std::size_t j = 0; j < n; ++j) {
            if (!seen[j] && pieces[i].meets(pieces[j])) {
                seen[j] = 1;
                ++reached;
                stack.push_back(j);
            }
        }
    }
    if (reached != n) fail("tube: piece union is disconnected");
}

}  // namespace

PolyTube PolyTube::make(int dim, std::vector<Box> pieces) {
    if (pieces.empty()) fail("tube: no pieces");
    double t0 = kInf, t1 = -kInf;
    for (const Box& b : pieces) {
        t0 = std::min(t0, b.lo.back());
        t1 = std::max(t1, b.hi.back());
    }
    return make(dim, std::move(pieces), t0, t1);
}

PolyTube PolyTube::make(int dim, std::vector<Box> pieces, double t0, double t1) {
    if (dim < 1) fail("tube: spatial dimension must be >= 1");
    if (pieces.empty()) fail("tube: no pieces");
    if (!(t0 < t1)) fail("tube: t0 must be < t1");
    PolyTube t;
    t.dim = dim;
    t.t0 = t0;
    t.t1 = t1;
    t.pieces = std::move(pieces);
    for (const Box& b : t.pieces) {
        if (b.dim() != dim + 1) fail("tube: piece dimension mismatch");
        b.validate();
        if (b.time_lo() < t0 || b.time_hi() > t1) fail("tube: piece outside time slab");
        if (b.time_lo() == t0) t.lower_face.push_back(spatial_slice(b));
        if (b.time_hi() == t1) t.upper_face.push_back(spatial_slice(b));
    }
    if (t.lower_face.empty()) fail("tube: no piece touches the start time");
    if (t.upper_face.empty()) fail("tube: no piece touches the end time");
    check_connected(t.pieces);
    return t;
}

PolyTube PolyTube::box1d(double x_lo, double x_hi, double t_lo, double t_hi) {
    Box b;
    b.lo = {x_lo, t_lo};
    b.hi = {x_hi, t_hi};
    return make(1, {std::move(b)});
}

double PolyTube::diameter() const {
    const int d = dim + 1;
    std::vector<double> lo(static_cast<std::size_t>(d), kInf), hi(static_cast<std::size_t>(d), -kInf);
    for (const Box& b : pieces) {
        for (int i = 0; i < d; ++i) {
            lo[static_cast<std::size_t>(i)] = std::min(lo[static_cast<std::size_t>(i)], b.lo[static_cast<std::size_t>(i)]);
            hi[static_cast<std::size_t>(i)] = std::max(hi[static_cast<std::size_t>(i)], b.hi[static_cast<std::size_t>(i)]);
        }
    }
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
        double e = hi[static_cast<std::size_t>(i)] - lo[static_cast<std::size_t>(i)];
        s += e * e;
    }
    return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// SampledPath

void SampledPath::validate() const {
    if (times.empty()) fail("path: no samples");
    if (coords.size() != times.size() * static_cast<std::size_t>(dim)) fail("path: coords/times size mismatch");
    for (std::size_t i = 1; i < times.size(); ++i)
        if (!(times[i - 1] < times[i])) fail("path: times not strictly increasing");
}

void SampledPath::eval(double t, double* out) const {
    const std::size_t n = times.size();
    const auto d = static_cast<std::size_t>(dim);
    if (t <= times.front()) {
        std::copy_n(coords.begin(), d, out);
        return;
    }
    if (t >= times.back()) {
        std::copy_n(coords.begin() + static_cast<std::ptrdiff_t>(d * (n - 1)), d, out);
        return;
    }
    auto it = std::upper_bound(times.begin(), times.end(), t);
    std::size_t k = static_cast<std::size_t>(it - times.begin());  // times[k-1] <= t < times[k]
    double w = (t - times[k - 1]) / (times[k] - times[k - 1]);
    const double* a = coords.data() + d * (k - 1);
    const double* b = coords.data() + d * k;
    for (std::size_t i = 0; i < d; ++i) out[i] = a[i] + w * (b[i] - a[i]);
}

double SampledPath::eval1(double t) const {
    double x;
    eval(t, &x);
    return x;
}

SampledPath SampledPath::line1d(std::vector<double> times, std::vector<double> xs) {
    SampledPath p;
    p.dim = 1;
    p.times = std::move(times);
    p.coords = std::move(xs);
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// Hausdorff distance

double hausdorff_distance(const PointCloud& a, const PointCloud& b) {
    if (a.size() == 0 || b.size() == 0) fail("hausdorff: empty set");
    if (a.dim != b.dim) fail("hausdorff: dimension mismatch");
    const auto d = static_cast<std::size_t>(a.dim);

    auto directed2 = [d](const PointCloud& from, const PointCloud& to, double seed_max2) {
        double max2 = seed_max2;
        const std::size_t nf = from.size(), nt = to.size();
        for (std::size_t i = 0; i < nf; ++i) {
            const double* p = from.pts.data() + d * i;
            double min2 = kInf;
            for (std::size_t j = 0; j < nt; ++j) {
                const double* q = to.pts.data() + d * j;
                double s = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    double g = p[c] - q[c];
                    s += g * g;
                }
                if (s < min2) {
                    min2 = s;
                    if (min2 <= max2) break;  // cannot raise the supremum
                }
            }
            if (min2 > max2) max2 = min2;
        }
        return max2;
    };

    double m2 = directed2(a, b, 0.0);
    m2 = directed2(b, a, m2);
    return std::sqrt(m2);
}

// ---------------------------------------------------------------------------
// Tube sampling and distance

namespace {

// Grid covering [lo, hi] with spacing <= mesh, endpoints included.
std::vector<double> axis_grid(double lo, double hi, double mesh) {
    int n = std::max(1, static_cast<int>(std::ceil((hi - lo) / mesh)));
    std::vector<double> g;
    g.reserve(static_cast<std::size_t>(n) + 1);
    for (int i = 0; i <= n; ++i) g.push_back(lo + (hi - lo) * static_cast<double>(i) / n);
    return g;
}

void sample_box_into(const Box& b, double mesh, PointCloud& out) {
    const std::size_t d = b.lo.size();
    std::vector<std::vector<double>> axes(d);
    for (std::size_t i = 0; i < d; ++i) axes[i] = axis_grid(b.lo[i], b.hi[i], mesh);
    std::vector<std::size_t> idx(d, 0);
    std::vector<double> pt(d);
    while (true) {
        for (std::size_t i = 0; i < d; ++i) pt[i] = axes[i][idx[i]];
        out.push(pt);
        std::size_t c = 0;
        while (c < d && ++idx[c] == axes[c].size()) idx[c++] = 0;
        if (c == d) break;
    }
}

}  // namespace

PointCloud sample_body(const PolyTube& t, double mesh) {
    PointCloud out;
    out.dim = t.dim + 1;
    for (const Box& b : t.pieces) sample_box_into(b, mesh, out);
    return out;
}

PointCloud sample_face(const std::vector<Box>& face, double face_time, double mesh) {
    PointCloud out;
    out.dim = static_cast<int>(face.front().lo.size()) + 1;
    PointCloud spatial;
    spatial.dim = out.dim - 1;
    for (const Box& b : face) {
        spatial.pts.clear();
        sample_box_into(b, mesh, spatial);
        for (std::size_t i = 0; i < spatial.size(); ++i) {
            auto p = spatial.point(i);
            out.pts.insert(out.pts.end(), p.begin(), p.end());
            out.pts.push_back(face_time);
        }
    }
    return out;
}

MeshDistance tube_distance(const PolyTube& a, const PolyTube& b, double mesh) {
    if (a.dim != b.dim) fail("tube_distance: dimension mismatch");
    if (mesh <= 0.0) mesh = 1e-2 * std::max(a.diameter(), b.diameter());
    if (mesh <= 0.0) fail("tube_distance: degenerate tubes");

    double v = hausdorff_distance(sample_body(a, mesh), sample_body(b, mesh));
    v += hausdorff_distance(sample_face(a.lower_face, a.t0, mesh), sample_face(b.lower_face, b.t0, mesh));
    v += hausdorff_distance(sample_face(a.upper_face, a.t1, mesh), sample_face(b.upper_face, b.t1, mesh));

    MeshDistance r;
    r.value = v;
    r.error_bound = 3.0 * mesh * std::sqrt(static_cast<double>(a.dim + 1));
    return r;
}

// ---------------------------------------------------------------------------
// Crossing predicate

namespace {

double face_distance2(std::span<const double> p, const std::vector<Box>& face) {
    double best = kInf;
    for (const Box& b : face) best = std::min(best, b.distance2(p));
    return best;
}

struct Interval {
    double lo, hi;
};

// Time interval within [ta, tb] during which the segment (xa@ta -> xb@tb)
// lies inside the box fattened by tol (L-inf). Empty -> lo > hi.
Interval clip_segment(const Box& box, double tol, double ta, double tb,
                      std::span<const double> xa, std::span<const double> xb) {
    Interval iv{ta, tb};
    // time slab of the box
    iv.lo = std::max(iv.lo, box.time_lo() - tol);
    iv.hi = std::min(iv.hi, box.time_hi() + tol);
    const std::size_t d = box.lo.size() - 1;  // spatial coordinates
    for (std::size_t c = 0; c < d && iv.lo <= iv.hi; ++c) {
        double lo = box.lo[c] - tol, hi = box.hi[c] + tol;
        double va = xa[c], vb = xb[c];
        if (va == vb) {
            if (va < lo || va > hi) return {1.0, 0.0};
            continue;
        }
        double slope = (vb - va) / (tb - ta);
        double t_at_lo = ta + (lo - va) / slope;
        double t_at_hi = ta + (hi - va) / slope;
        if (slope > 0.0) {
            iv.lo = std::max(iv.lo, t_at_lo);
            iv.hi = std::min(iv.hi, t_at_hi);
        } else {
            iv.lo = std::max(iv.lo, t_at_hi);
            iv.hi = std::min(iv.hi, t_at_lo);
        }
    }
    return iv;
}

// Closed-union coverage of [ta, tb] by the clip intervals of all pieces.
bool segment_covered(const PolyTube& tube, double tol, double ta, double tb,
                     std::span<const double> xa, std::span<const double> xb) {
    std::vector<Interval> ivs;
    ivs.reserve(tube.pieces.size());
    for (const Box& b : tube.pieces) {
        Interval iv = clip_segment(b, tol, ta, tb, xa, xb);
        if (iv.lo <= iv.hi) ivs.push_back(iv);
    }
    std::sort(ivs.begin(), ivs.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    double reach = ta;
    for (const Interval& iv : ivs) {
        if (iv.lo > reach) return false;
        reach = std::max(reach, iv.hi);
        if (reach >= tb) return true;
    }
    return reach >= tb;
}

}  // namespace

bool crosses(const SampledPath& path, const PolyTube& tube, double tol) {
    if (path.dim != tube.dim) fail("crosses: dimension mismatch");
    if (path.start_time() > tube.t0) return false;

    const auto d = static_cast<std::size_t>(path.dim);
    std::vector<double> pa(d), pb(d);
    const double tol2 = tol * tol;

    path.eval(tube.t0, pa.data());
    if (face_distance2(pa, tube.lower_face) > tol2) return false;
    path.eval(tube.t1, pb.data());
    if (face_distance2(pb, tube.upper_face) > tol2) return false;

    // Breakpoints of the interpolated trajectory restricted to [t0, t1].
    std::vector<double> ts;
    ts.push_back(tube.t0);
    auto lo = std::upper_bound(path.times.begin(), path.times.end(), tube.t0);
    auto hi = std::lower_bound(path.times.begin(), path.times.end(), tube.t1);
    ts.insert(ts.end(), lo, hi);
    ts.push_back(tube.t1);

    path.eval(ts[0], pa.data());
    for (std::size_t k = 1; k < ts.size(); ++k) {
        path.eval(ts[k], pb.data());
        if (ts[k] > ts[k - 1] &&
            !segment_covered(tube, tol, ts[k - 1], ts[k], pa, pb))
            return false;
        std::swap(pa, pb);
    }
    return true;
}

// ---------------------------------------------------------------------------
// Enlargement

double enlargement_range(const PolyTube& tube) {
    double first_break = tube.t1 - tube.t0;
    double last_break = tube.t1 - tube.t0;
    for (const Box& b : tube.pieces) {
        for (double bp : {b.time_lo(), b.time_hi()}) {
            if (bp > tube.t0 && bp < tube.t1) {
                first_break = std::min(first_break, bp - tube.t0);
                last_break = std::min(last_break, tube.t1 - bp);
            }
        }
    }
    return std::min({first_break, last_break, (tube.t1 - tube.t0) / 2.0});
}

PolyTube enlarge(const PolyTube& tube, double delta) {
    double range = enlargement_range(tube);
    if (!(delta > 0.0) || !(delta < range)) fail("enlargement out of range");
    std::vector<Box> fat;
    fat.reserve(tube.pieces.size());
    for (const Box& b : tube.pieces) {
        Box f = b;
        for (std::size_t i = 0; i + 1 < f.lo.size(); ++i) {
            f.lo[i] -= delta;
            f.hi[i] += delta;
        }
        f.lo.back() = std::max(b.time_lo() - delta, tube.t0 + delta);
        f.hi.back() = std::min(b.time_hi() + delta, tube.t1 - delta);
        fat.push_back(std::move(f));
    }
    PolyTube out = PolyTube::make(tube.dim, std::move(fat), tube.t0 + delta, tube.t1 - delta);
    out.id = tube.id;
    return out;
}

std::vector<PolyTube> superdense_family(const PolyTube& tube, std::span<const double> deltas) {
    for (std::size_t i = 1; i < deltas.size(); ++i)
        if (!(deltas[i] < deltas[i - 1])) fail("superdense_family: deltas must be strictly decreasing");
    std::vector<PolyTube> chain;
    chain.reserve(deltas.size());
    for (double d : deltas) chain.push_back(enlarge(tube, d));
    return chain;
}

// ---------------------------------------------------------------------------
// JSON

PolyTube tube_from_json_text(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    int dim = j.at("dim").get<int>();
    std::vector<Box> pieces;
    for (const auto& pj : j.at("pieces")) {
        Box b;
        b.lo = pj.at("lo").get<std::vector<double>>();
        b.hi = pj.at("hi").get<std::vector<double>>();
        pieces.push_back(std::move(b));
    }
    PolyTube t = PolyTube::make(dim, std::move(pieces), j.at("t0").get<double>(), j.at("t1").get<double>());
    if (j.contains("id")) t.id = j.at("id").get<std::string>();
    return t;
}

std::string tube_to_json_text(const PolyTube& tube) {
    nlohmann::json j;
    j["dim"] = tube.dim;
    j["pieces"] = nlohmann::json::array();
    for (const Box& b : tube.pieces) j["pieces"].push_back({{"lo", b.lo}, {"hi", b.hi}});
    j["t0"] = tube.t0;
    j["t1"] = tube.t1;
    if (!tube.id.empty()) j["id"] = tube.id;
    return j.dump();
}

}  // namespace coalflow::geom
