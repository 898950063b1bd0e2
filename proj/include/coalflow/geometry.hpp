#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

// Tube geometry over space-time. A tube is a finite union of axis-aligned
// boxes in R^d x R (time stored as the last coordinate) together with the
// lower/upper faces it exposes at its start and end times. Paths are
// piecewise-linear interpolations of sampled trajectories. The crossing
// predicate — path enters through the lower face, stays inside the body,
// exits through the upper face — is evaluated by exact segment clipping
// against the box union, not by time-sampling.
//
// All types here are immutable after construction and safe to share across
// threads; the operations are pure functions.

namespace coalflow::geom {

inline constexpr double kDefaultCrossTol = 1e-9;

// Axis-aligned box; dimension is lo.size(). Tube pieces are (d+1)-dimensional
// (space then time), face regions are d-dimensional (space only).
struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    int dim() const { return static_cast<int>(lo.size()); }
    double time_lo() const { return lo.back(); }
    double time_hi() const { return hi.back(); }

    bool contains(std::span<const double> p, double tol) const;
    // Squared Euclidean distance from p to the closed box.
    double distance2(std::span<const double> p) const;
    // Boxes touch or overlap as closed sets.
    bool meets(const Box& other) const;

    void validate() const;  // lo[i] < hi[i] for every coordinate
};

struct PolyTube {
    int dim = 1;              // spatial dimension
    std::vector<Box> pieces;  // (dim+1)-dimensional boxes, time last
    double t0 = 0.0;
    double t1 = 0.0;
    std::vector<Box> lower_face;  // spatial slices at t0, derived from pieces
    std::vector<Box> upper_face;  // spatial slices at t1
    std::string id;               // optional label used in reports

    // Derives t0/t1 from the pieces (or checks the given slab), derives the
    // faces as the time slices, and validates: nondegenerate pieces inside
    // the slab, nonempty faces at both ends, connected piece union.
    static PolyTube make(int dim, std::vector<Box> pieces);
    static PolyTube make(int dim, std::vector<Box> pieces, double t0, double t1);

    // Convenience for d=1: one box [x_lo, x_hi] x [t_lo, t_hi].
    static PolyTube box1d(double x_lo, double x_hi, double t_lo, double t_hi);

    double diameter() const;  // of the bounding box of the body
};

// A continuous path as linear interpolation of samples. Evaluation before
// the first sample returns the first position (the hat-extension), and past
// the last sample stays at the last position.
struct SampledPath {
    int dim = 1;
    std::vector<double> times;   // strictly increasing; times[0] is the start time
    std::vector<double> coords;  // dim * times.size(), point i at coords[dim*i ...]

    double start_time() const { return times.front(); }
    double end_time() const { return times.back(); }
    std::size_t size() const { return times.size(); }

    void eval(double t, double* out) const;
    double eval1(double t) const;  // dim == 1 shortcut

    static SampledPath line1d(std::vector<double> times, std::vector<double> xs);
    void validate() const;
};

// Finite sampling of a compact set, dim-strided flat storage.
struct PointCloud {
    int dim = 1;
    std::vector<double> pts;

    std::size_t size() const { return pts.size() / static_cast<std::size_t>(dim); }
    std::span<const double> point(std::size_t i) const {
        return {pts.data() + static_cast<std::size_t>(dim) * i, static_cast<std::size_t>(dim)};
    }
    void push(std::span<const double> p) { pts.insert(pts.end(), p.begin(), p.end()); }
};

struct MeshDistance {
    double value = 0.0;
    double error_bound = 0.0;  // sampling-induced bound, 3 * mesh * sqrt(d+1)
};

// max(sup_a inf_b |a-b|, sup_b inf_a |a-b|) over the two samplings.
// Throws std::invalid_argument on an empty set.
double hausdorff_distance(const PointCloud& a, const PointCloud& b);

// Sum of the Hausdorff distances between bodies, lower faces and upper faces,
// computed on grid samplings at the given mesh (default 1e-2 times the larger
// tube diameter). The sampling error bound is reported alongside the value.
MeshDistance tube_distance(const PolyTube& a, const PolyTube& b, double mesh = 0.0);

// Grid samplings used by tube_distance; exposed for tests.
PointCloud sample_body(const PolyTube& t, double mesh);
PointCloud sample_face(const std::vector<Box>& face, double face_time, double mesh);

// True iff the path starts no later than t0, is within tol of the lower face
// at t0, within tol of the upper face at t1, and the interpolated trajectory
// stays within tol of the body throughout [t0, t1]. Exact for piecewise-linear
// paths: each segment is clipped against the box union and coverage is checked
// combinatorially.
bool crosses(const SampledPath& path, const PolyTube& tube, double tol = kDefaultCrossTol);

// Largest delta for which enlarge() is defined: limited by the product
// structure near the faces and by half the tube duration.
double enlargement_range(const PolyTube& tube);

// The enlarged tube T^delta: every box fattened by delta (L-inf), the time
// slab shrunk by delta at both ends, faces re-derived as slices. Every path
// crossing T crosses enlarge(T, delta). Throws "enlargement out of range"
// unless 0 < delta < enlargement_range(tube).
PolyTube enlarge(const PolyTube& tube, double delta);

// Monotone chain [enlarge(T, d) for d in deltas]; deltas strictly decreasing.
std::vector<PolyTube> superdense_family(const PolyTube& tube, std::span<const double> deltas);

// Tube description files: {"dim":1,"pieces":[{"lo":[..],"hi":[..]},..],"t0":..,"t1":..}.
PolyTube tube_from_json_text(const std::string& text);
std::string tube_to_json_text(const PolyTube& tube);

}  // namespace coalflow::geom
