#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "coalflow/gasket.hpp"
#include "coalflow/walk1d.hpp"

// Monte Carlo estimation of joint tube-crossing probabilities and the ladder
// studies behind the convergence claims. Replica r always draws from the
// stream (seed, r), so estimates are bit-identical for any thread count, and
// ladder rungs share one noise realisation per replica: monotonicity in the
// number of starting points and in the enlargement parameter holds exactly
// per run, not just on average.

namespace coalflow::estimate {

struct TriTube {
    std::vector<gasket::TriPrism> prisms;
    std::string id;
};

using Tube = std::variant<geom::PolyTube, TriTube>;

std::string tube_id(const Tube& t);
double tube_end_time(const Tube& t);

enum class ModelKind { walk1d, bm1d, gasket };

struct ModelSpec {
    ModelKind kind = ModelKind::walk1d;

    // walk1d / bm1d
    walk1d::WalkSpec walk;                       // walk1d parameters
    std::vector<std::array<double, 2>> starts;   // (x, t) starting points
    double bm_dt = 1.0 / 256.0;
    double bm_horizon = 1.0;

    // gasket
    int g_level = 3;
    int g_extent = 0;
    double g_horizon = 1.0;
    std::vector<gasket::GasketStart> g_starts;
    std::shared_ptr<const gasket::GasketGraph> graph;  // built by prepare()

    std::string name() const;
    double horizon() const;
    // Builds the gasket graph (if needed) and validates the starts; must be
    // called once before simulate().
    void prepare();
};

CoalescingSystem simulate(const ModelSpec& model, std::uint64_t replica_seed);

// OR over the first max_paths coalesced paths.
bool tube_crossed(const ModelSpec& model, const CoalescingSystem& sys, const Tube& tube,
                  std::size_t max_paths = static_cast<std::size_t>(-1));

std::uint64_t replica_seed(std::uint64_t seed, std::uint64_t replica);

struct CrossingEstimate {
    std::vector<std::string> tubes;
    double p_hat = 0.0;
    double std_error = 0.0;  // sqrt(p(1-p)/samples)
    double ci_lo = 0.0, ci_hi = 1.0;  // 3-sigma interval, Wilson when p_hat*samples < 10
    long long samples = 0;
    std::uint64_t seed = 0;
    std::string model;
};

CrossingEstimate make_estimate(long long hits, long long samples, std::uint64_t seed,
                               const std::string& model, std::vector<std::string> tube_ids);

// |a.p_hat - b.p_hat| <= z * sqrt(a.se^2 + b.se^2)
bool within_joint_error(const CrossingEstimate& a, const CrossingEstimate& b, double z = 3.0);

struct ConvergenceReport {
    std::vector<double> ladder;
    std::vector<CrossingEstimate> estimates;  // one per rung
    bool monotone_flag = true;                // exact per-replica check
    std::vector<std::vector<char>> ci_overlap;
};

// P(all listed tubes crossed) over independent replicas of the model.
CrossingEstimate estimate_joint_crossing(const ModelSpec& model, std::span<const Tube> tubes,
                                         int samples, std::uint64_t seed, int threads = 0);

// Shared-noise ladder over prefix sizes of the model's start list. The joint
// crossing indicator is nondecreasing in n for every replica; monotone_flag
// reports the exact check.
ConvergenceReport n_ladder_study(const ModelSpec& model, std::span<const Tube> tubes,
                                 std::span<const int> n_values, int samples, std::uint64_t seed,
                                 int threads = 0);

struct EtaLadderSpec {
    std::vector<double> eta_values;  // strictly decreasing
    double region_lo = -2.0, region_hi = 2.0;  // one walk per lattice site in here
    double start_time = 0.0;
    double horizon = 1.0;
    walk1d::StepDistribution step = walk1d::StepDistribution::lazy();
    double bm_dt = 1.0 / 256.0;
    int bm_starts = 40;  // equally spaced Brownian starts in the region
};

struct LadderWithReference {
    ConvergenceReport rungs;
    CrossingEstimate reference;
    std::vector<double> gaps;            // |p_hat(rung) - p_hat(reference)|
    std::vector<char> gap_within_3se;
};

// Rescaled-walk crossing probabilities along the eta ladder against the
// discretised Brownian reference.
LadderWithReference eta_ladder_study(const EtaLadderSpec& spec, std::span<const Tube> tubes,
                                     int samples, std::uint64_t seed, int threads = 0);

struct GasketLadderSpec {
    std::vector<int> levels;  // increasing; rung eta = 2^-level
    int reference_level = 5;
    int extent = 0;
    double horizon = 1.0;
    std::vector<gasket::TriPrism> start_region;  // one walk per vertex inside
};

// Level ladder on the gasket against its finest-level reference.
LadderWithReference gasket_level_ladder_study(const GasketLadderSpec& spec, std::span<const Tube> tubes,
                                              int samples, std::uint64_t seed, int threads = 0);

struct EnlargementReport {
    ConvergenceReport rungs;      // one per delta, decreasing
    CrossingEstimate base;        // the tube itself
    std::vector<double> gaps;     // p_hat(T^delta) - p_hat(T)
};

// Shared-noise enlargement ladder: per replica the indicators are
// nonincreasing as delta decreases and bounded below by the base indicator.
EnlargementReport enlargement_stability(const ModelSpec& model, const geom::PolyTube& tube,
                                        std::span<const double> deltas, int samples,
                                        std::uint64_t seed, int threads = 0);

}  // namespace coalflow::estimate
