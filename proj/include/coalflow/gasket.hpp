#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "coalflow/coalesce.hpp"

// Sierpinski gasket graphs and the walks, tubes and survivor counts living
// on them. Vertices are stored as integer pairs (p, q) on the triangular
// lattice of mesh 2^-n: the embedded point is
//     ( (p + q/2) * 2^-n ,  q * (sqrt(3)/2) * 2^-n ).
// Adjacency, triangle membership and apex tests are integer-exact; floats
// appear only in embedded coordinates and sampled paths.

namespace coalflow::gasket {

class GasketGraph {
  public:
    // Subdivides the extent triangle of side 2^m into triangles of side 2^-n
    // (m + n rounds). Throws when 3^(n+m) exceeds triangle_cap.
    static GasketGraph build(int n, int m, std::int64_t triangle_cap = 14348907 /* 3^15 */);

    int level() const { return n_; }
    int extent() const { return m_; }
    std::size_t vertex_count() const { return vertices_.size(); }
    std::size_t edge_count() const;
    double time_step() const { return dt_; }    // 5^-n
    double mesh() const { return mesh_; }       // 2^-n
    std::int64_t side() const { return side_; }  // extent side in lattice units

    const std::array<std::int64_t, 2>& lattice(std::size_t v) const { return vertices_[v]; }
    std::array<double, 2> embed(std::size_t v) const;
    std::span<const std::uint32_t> neighbors(std::size_t v) const;
    int degree(std::size_t v) const { return static_cast<int>(neighbors(v).size()); }
    std::optional<std::size_t> find(std::int64_t p, std::int64_t q) const;

    std::string to_json_text() const;  // {"n":..,"m":..,"vertices":[[p,q],..],"edges":[[i,j],..]}

  private:
    int n_ = 0, m_ = 0;
    double dt_ = 1.0, mesh_ = 1.0;
    std::int64_t side_ = 1;
    std::vector<std::array<std::int64_t, 2>> vertices_;
    std::vector<std::uint32_t> adjacency_;  // 4 slots per vertex, unused = npos
    std::vector<std::uint8_t> degree_;
    std::unordered_map<std::uint64_t, std::uint32_t> lookup_;
};

// Triangular prism: an upward triangle z + 2^-k * T0 (z in lattice units of
// level k) extruded over the time interval [s, t].
struct TriPrism {
    int k = 0;
    std::int64_t zp = 0, zq = 0;
    double s = 0.0, t = 0.0;
};

// Exact spatial membership of a level-n lattice point in the closed triangle.
bool triangle_contains(int level, std::int64_t p, std::int64_t q, const TriPrism& prism);
// The point is one of the triangle's three apices.
bool triangle_apex(int level, std::int64_t p, std::int64_t q, const TriPrism& prism);

// Uniform nearest-neighbour walk, one jump per 5^-n time units, linear
// interpolation in between. Extent-boundary corners reflect (the walk picks
// uniformly among their two neighbours).
geom::SampledPath gasket_walk(const GasketGraph& g, std::size_t start_vertex, std::int64_t steps,
                              std::uint64_t seed);

struct GasketStart {
    std::size_t vertex = 0;
    std::int64_t tick = 0;  // multiples of 5^-n
};

// Coalescing walks driven by a site-time noise field (one neighbour choice
// per (vertex, tick)); walks on a shared vertex move together forever.
CoalescingSystem simulate_coalescing_gasket(const GasketGraph& g, std::span<const GasketStart> starts,
                                            double horizon, std::uint64_t seed);

// Crossing predicate for unions of triangular prisms: lower face at the
// earliest prism start, upper face at the latest prism end, body coverage by
// exact rational clipping of walk segments against the triangles. The path
// must be a gasket walk at the given level.
bool tri_tube_crosses(const geom::SampledPath& path, int level, std::span<const TriPrism> prisms,
                      double tol = geom::kDefaultCrossTol);

// One particle per vertex inside the region (spatial footprint of the given
// prisms) at time 0, killed upon stepping outside, coalescing by shared
// noise. Returns the number of distinct survivors at time delta; the series,
// when given, receives the count after every step.
std::int64_t survivor_count_gasket(const GasketGraph& g, std::span<const TriPrism> region, double delta,
                                   std::uint64_t seed, std::vector<std::int64_t>* series = nullptr);

// Mean squared Euclidean displacement from the start vertex at the given
// ticks, averaged over independent walks.
std::vector<double> mean_squared_displacement(const GasketGraph& g, std::size_t start_vertex,
                                              std::span<const std::int64_t> ticks, int walks,
                                              std::uint64_t seed);

}  // namespace coalflow::gasket
