// Resource-constrained mixed-precision search.
//
// The reduced space assigns one mantissa-width dimension per graph
// value with the block shape pinned to (16,2) and an 8-bit shared
// exponent; the full space opens block rows/cols, exponent width and
// mantissa width per value. Hardware dimensions add one stream-tile
// step per operator. Four strategies drive the quantize -> parallelize
// -> evaluate trial loop: independent random draws, a Halton sequence,
// a categorical Tree-structured Parzen Estimator and NSGA-II.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mxflow/emulate.hpp"
#include "mxflow/hardware.hpp"
#include "mxflow/ir.hpp"

namespace mxflow {

enum class SearchAlgo { Random, Tpe, Qmc, Nsga2 };
std::string_view algo_name(SearchAlgo a);
std::optional<SearchAlgo> algo_from_name(std::string_view name);

enum class SpaceMode { Reduced, Full };
enum class ObjectiveMode { HardwareAware, SoftwareOnly };

struct ObjectiveWeights {
    double k = 4.0;   // bitwidth term: k / b
    double k1 = 0.0;  // throughput term: k1 * theta
    double k2 = 0.0;  // area term: k2 / A
    ObjectiveMode mode = ObjectiveMode::HardwareAware;

    static ObjectiveWeights software_only(double k = 4.0) {
        return {k, 0.0, 0.0, ObjectiveMode::SoftwareOnly};
    }
};

struct TrialMetrics {
    double accuracy = 0;
    double avg_bitwidth = 0;
    double throughput = 0;
    double area = 0;
};

// acc + k/b + k1*theta + k2/A (software-only drops the hardware terms).
double objective(const TrialMetrics& m, const ObjectiveWeights& w);

// Fills unset (NaN) hardware weights so that each hardware term is
// worth about 0.1 at the unquantized greedy-parallelized baseline.
ObjectiveWeights calibrate_weights(ObjectiveWeights w, const Graph& g,
                                   const ResourceBudget& budget, const CostTable& tbl);

struct SearchDimension {
    enum class Target { MantissaBits, BlockRows, BlockCols, ExpBits, TileStep };
    Target target = Target::MantissaBits;
    std::string value;  // value name; op result name for TileStep
    std::vector<std::int64_t> candidates;

    std::string name() const;  // CSV column name
};

struct SearchSpace {
    SpaceMode mode = SpaceMode::Reduced;
    std::vector<SearchDimension> dims;
};

struct SpaceOptions {
    // Values whose profiled log2 dynamic range exceeds this many bits
    // get a raised mantissa floor (candidates {4..8}).
    double range_threshold_bits = 8.0;
};

SearchSpace build_space(const Graph& g, const ProfileStats& stats, SpaceMode mode,
                        bool include_hw, const SpaceOptions& opts = {});

// Point -> per-value formats (+ tiles for hardware dimensions).
// Asserts every coordinate lies inside its candidate set.
QuantConfig config_from_point(const SearchSpace& space, const std::vector<std::size_t>& point);

struct Trial {
    int index = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> point;
    QuantConfig config;
    TrialMetrics metrics;
    double score = 0;
    bool failed = false;
};

// One quantize -> parallelize -> estimate -> evaluate pass. A config
// whose explicit tiles blow the budget comes back failed with score
// -inf; configs without tiles run the greedy parallelize pass.
Trial evaluate_trial(const Graph& g, const QuantConfig& cfg, const ResourceBudget& budget,
                     const CostTable& tbl, const Dataset& dataset, const ObjectiveWeights& w);

struct SearchSettings {
    SearchAlgo algo = SearchAlgo::Random;
    int n_trials = 64;
    std::uint64_t seed = 0;
    ObjectiveWeights weights;
    // TPE
    int tpe_startup = 10;
    double tpe_gamma = 0.25;
    int tpe_candidates = 24;
    // NSGA-II
    int nsga_population = 16;
    double nsga_crossover = 0.9;
};

struct SearchResult {
    Trial best;
    std::vector<Trial> log;
    // Non-dominated trial indices over (acc, -b, theta, -A); filled by
    // the NSGA-II fast non-dominated sort.
    std::vector<std::size_t> pareto_front;
};

// Strategy loop over an arbitrary evaluator; lets callers search
// synthetic objectives. The evaluator owns scoring.
using TrialEvaluator = std::function<Trial(int index, const std::vector<std::size_t>& point)>;
SearchResult search_over(const SearchSpace& space, const SearchSettings& settings,
                         const TrialEvaluator& evaluate);

// The full pipeline search.
SearchResult search(const Graph& g, const SearchSpace& space, const SearchSettings& settings,
                    const ResourceBudget& budget, const CostTable& tbl, const Dataset& dataset);

// Trial log CSV: index, seed, score, acc, b, theta, area, failed, then
// one column per dimension holding the chosen candidate value.
std::string trial_log_csv(const SearchSpace& space, const SearchResult& result);

// Halton radical inverse in the given prime base, index >= 1.
double halton_value(std::uint64_t index, std::uint64_t base);

}  // namespace mxflow
