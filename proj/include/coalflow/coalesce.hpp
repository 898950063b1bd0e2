#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "coalflow/geometry.hpp"

// The countable coalescing rule: an ordered family of free paths is turned
// into coalescing paths inductively. Path j follows itself until the first
// time tau_j it meets a lower-labelled coalesced path, then follows the
// lowest such label I_j forever. Merged tails are not copied; coalesced
// paths are evaluated by chasing the merge chain, so an n-path system stays
// near-linear in memory.

namespace coalflow {

inline constexpr double kInfTime = std::numeric_limits<double>::infinity();

struct MergeRecord {
    double tau = kInfTime;       // collision time; +inf when the path never merges
    std::ptrdiff_t target = -1;  // I_j, strictly below the path's own label; -1 when none
    // Bridge-mode merges can happen between grid samples: the coalesced path
    // then interpolates from its last own sample (at junction_time) to the
    // meeting point before following the target.
    double junction_time = kInfTime;
    std::vector<double> meet_pos;

    bool merged() const { return target >= 0; }
};

enum class MeetMode {
    grid_equality,  // meet at the first shared grid time with equal position
    bridge_1d,      // d=1 continuous states: Brownian-bridge meeting between grid times
};

struct CoalesceOptions {
    MeetMode mode = MeetMode::grid_equality;
    // Inputs generated from a site-time noise field are already pathwise
    // coalescing (equal at one grid time implies equal forever); the scan
    // then only records the merge structure and runs in O(paths * steps).
    bool shared_noise = false;
    // Diffusivity of the gap between two candidate paths (bridge mode);
    // 2 sigma^2 for two independent drivers of diffusivity sigma^2 each.
    double sigma2_rel = 2.0;
    std::uint64_t seed = 0;  // bridge coin stream
};

class CoalescingSystem {
  public:
    static CoalescingSystem build(std::vector<geom::SampledPath> free_paths, const CoalesceOptions& opts);

    std::size_t size() const { return free_.size(); }
    int dim() const { return free_.empty() ? 1 : free_.front().dim; }
    const geom::SampledPath& free_path(std::size_t j) const { return free_[j]; }
    const std::vector<geom::SampledPath>& free_paths() const { return free_; }
    const MergeRecord& merge(std::size_t j) const { return merges_[j]; }
    const std::vector<MergeRecord>& merges() const { return merges_; }

    // Label of the path that owns path j's trajectory at time t.
    std::size_t resolve(std::size_t j, double t) const;
    void eval_coalesced(std::size_t j, double t, double* out) const;
    double eval_coalesced1(std::size_t j, double t) const;

    // Breakpoint times of the coalesced path j strictly inside (a, b),
    // appended in increasing order.
    void coalesced_breakpoints(std::size_t j, double a, double b, std::vector<double>& out) const;

    // Flattened copy (tests and export; prefer the lazy accessors above).
    geom::SampledPath coalesced_path(std::size_t j) const;

    // Kill times for walks with a kill region; +inf when never killed. A path
    // dead before a tube's end time cannot cross it.
    std::vector<double> alive_until;

  private:
    std::vector<geom::SampledPath> free_;
    std::vector<MergeRecord> merges_;
};

// coalesce per the rule above. grid_equality requires a common grid step;
// bridge_1d requires dim == 1. Throws std::invalid_argument on violations.
CoalescingSystem coalesce(std::vector<geom::SampledPath> free_paths, const CoalesceOptions& opts);

// Entry k is true iff some coalesced path among the first max_paths crosses
// tubes[k] (OR over paths of geom::crosses).
std::vector<char> crossing_set(const CoalescingSystem& system, std::span<const geom::PolyTube> tubes,
                               double tol = geom::kDefaultCrossTol,
                               std::size_t max_paths = static_cast<std::size_t>(-1));

// Single-tube crossing indicator over the first max_paths coalesced paths.
bool crosses_any(const CoalescingSystem& system, const geom::PolyTube& tube,
                 double tol = geom::kDefaultCrossTol,
                 std::size_t max_paths = static_cast<std::size_t>(-1));

}  // namespace coalflow
