// Analytical surrogate for the dataflow hardware: per-operator area and
// throughput from a coefficient table, tile-size selection under an
// area budget, parameter memory placement and pipeline buffer insertion.
//
// Area model per operator (abstract LUT-equivalent units):
//   area = fixed_overhead
//        + lanes * (c0 + c1 * (meff + 1)^2)          element datapath
//        + adder_tree * max(lanes - 1, 0) * (meff+1)  reduction tree
//        + exponent_logic * shared_bits               shared-component logic
// where lanes = tile_rows * tile_cols of the result value and meff is
// the element mantissa width of the result format. Buffers instead pay
// fixed_overhead + c0 * depth * block_bits.
//
// Throughput model: an operator emits
//   blocks_per_cycle = lanes / (cycles_per_block * block_size * work_per_elem)
// where work_per_elem is the inner dimension for linear/matmul and 1
// otherwise. Normalized throughput divides by the result's block count,
// giving graph outputs per cycle; the graph rate is the minimum over
// operators.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mxflow/ir.hpp"

namespace mxflow {

struct ResourceBudget {
    double area_budget = 0;
    double onchip_bits = 0;
    double offchip_bandwidth = 0;  // bits per cycle

    void check() const;  // all fields > 0
};

struct CostEntry {
    double c0 = 1;
    double c1 = 0.25;
    double adder_tree = 0;
    double exponent_logic = 0;
    double fixed_overhead = 8;
    double cycles_per_block = 1;
};

class CostTable {
public:
    static CostTable defaults();
    static CostTable from_file(const std::filesystem::path& path);
    void to_file(const std::filesystem::path& path) const;

    const CostEntry& entry(OpKind kind) const;  // throws on missing entry
    std::map<std::string, CostEntry>& entries() { return entries_; }
    const std::map<std::string, CostEntry>& entries() const { return entries_; }

private:
    std::map<std::string, CostEntry> entries_;
};

enum class Placement { Onchip, Offchip };

struct OpEstimate {
    double area = 0;
    double blocks_per_cycle = 0;  // result blocks emitted per cycle
    double throughput = 0;        // normalized: graph outputs per cycle
    double memory_bits = 0;       // parameter storage at their formats
    Placement placement = Placement::Onchip;
};

OpEstimate estimate_op(const Operation& op, const Graph& g, const CostTable& tbl);

struct GraphEstimate {
    double total_area = 0;
    double throughput = 0;  // min over operators, graph outputs per cycle
    std::map<std::string, OpEstimate> per_op;           // keyed by result name
    std::map<std::string, Placement> param_placement;   // set when a budget is given
};

GraphEstimate estimate_graph(const Graph& g, const CostTable& tbl,
                             const ResourceBudget* budget = nullptr);

class InfeasibleBudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Stream-tile candidates for a value: divisor pairs of its padded block
// grid, sorted by lanes.
std::vector<std::array<std::int64_t, 2>> tile_lattice(const ValueInfo& info);

// Greedy bottleneck ascent. Starts every tile at (1,1) and repeatedly
// grows the slowest operator that still fits the budget; stops when no
// growth fits. The result always satisfies total_area <= area_budget.
Graph parallelize(const Graph& g, const ResourceBudget& budget, const CostTable& tbl);

// Density-greedy parameter placement: hot-and-small parameters go
// on-chip until the bit budget runs out.
std::map<std::string, Placement> allocate_memory(const Graph& g, const ResourceBudget& budget);

// Insert a FIFO on the shallow side of every reconvergent fan-out,
// sized to the op-depth difference of the joining paths.
Graph insert_buffers(const Graph& g);

}  // namespace mxflow
