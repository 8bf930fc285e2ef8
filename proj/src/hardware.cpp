#include "mxflow/hardware.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "mxflow/quantize.hpp"
#include "mxflow/text_util.hpp"

namespace mxflow {

namespace {

int effective_mantissa(const FormatSpec& f) {
    if (f.get_if<MXIntFormat>()) return f.get_if<MXIntFormat>()->mant_bits;
    if (f.get_if<FixedPointFormat>()) return f.get_if<FixedPointFormat>()->width - 1;
    if (f.get_if<MiniFloatFormat>()) return f.get_if<MiniFloatFormat>()->mant_bits;
    if (f.get_if<BMFFormat>()) return f.get_if<BMFFormat>()->elem_mant_bits;
    if (f.get_if<BLFormat>()) return 0;
    return 23;  // Float32
}

int shared_bits(const FormatSpec& f) {
    if (f.get_if<MXIntFormat>()) return f.get_if<MXIntFormat>()->exp_bits;
    if (f.get_if<BMFFormat>()) return f.get_if<BMFFormat>()->bias_bits;
    if (f.get_if<BLFormat>()) return f.get_if<BLFormat>()->bias_bits;
    if (f.get_if<MiniFloatFormat>()) return f.get_if<MiniFloatFormat>()->exp_bits;
    if (f.get_if<FixedPointFormat>()) return 0;
    return 8;  // Float32
}

std::int64_t format_block_size(const FormatSpec& f) {
    auto b = f.block_shape();
    return b ? b->size() : 1;
}

std::int64_t value_block_count(const ValueInfo& info) {
    if (info.shape.empty()) return 1;
    auto b = info.format.block_shape();
    if (!b) return shape_numel(info.shape);
    return partition_blocks(info.shape, *b).block_count();
}

double avg_bits(const FormatSpec& f) {
    return boost::rational_cast<double>(avg_bitwidth(f));
}

// Padded stream dimensions of a value under its format's tiling.
std::array<std::int64_t, 2> padded_dims(const ValueInfo& info) {
    if (info.shape.empty()) return {1, 1};
    auto b = info.format.block_shape();
    if (!b) {
        if (info.shape.size() == 1) return {1, info.shape[0]};
        return {info.shape[info.shape.size() - 2], info.shape[info.shape.size() - 1]};
    }
    auto layout = partition_blocks(info.shape, *b);
    if (layout.flat) return {1, layout.grid_c * layout.block_size()};
    return {layout.grid_r * b->rows, layout.grid_c * b->cols};
}

std::vector<std::int64_t> divisors(std::int64_t n) {
    std::vector<std::int64_t> out;
    for (std::int64_t d = 1; d * d <= n; ++d)
        if (n % d == 0) {
            out.push_back(d);
            if (d != n / d) out.push_back(n / d);
        }
    std::sort(out.begin(), out.end());
    return out;
}

std::int64_t work_per_element(const Operation& op, const Graph& g) {
    if (op.kind == OpKind::Linear || op.kind == OpKind::MatMul) {
        const auto& shape = g.value(op.args.front()).shape;
        return shape.empty() ? 1 : shape.back();
    }
    return 1;
}

std::array<std::int64_t, 2> op_tile(const Operation& op, const Graph& g) {
    const auto& info = g.value(op.results.front());
    return info.tile.value_or(std::array<std::int64_t, 2>{1, 1});
}

}  // namespace

void ResourceBudget::check() const {
    if (area_budget <= 0 || onchip_bits <= 0 || offchip_bandwidth <= 0)
        throw std::invalid_argument("resource budget fields must all be positive");
}

CostTable CostTable::defaults() {
    CostTable t;
    auto& e = t.entries_;
    e["linear"] = {4, 1, 0.5, 8, 64, 1};
    e["matmul"] = {4, 1, 0.5, 8, 64, 1};
    e["add"] = {2, 0.25, 0, 4, 16, 1};
    e["mul"] = {3, 0.5, 0, 4, 16, 1};
    e["relu"] = {1, 0.0625, 0, 2, 8, 1};
    e["silu"] = {6, 0.5, 0, 8, 96, 2};
    e["softmax"] = {6, 0.5, 0.25, 8, 96, 2};
    e["rmsnorm"] = {6, 0.5, 0.25, 8, 96, 2};
    e["flatten"] = {0.5, 0, 0, 1, 8, 1};
    e["transpose"] = {0.5, 0, 0, 1, 12, 1};
    e["reorder"] = {0.5, 0, 0, 1, 12, 1};
    e["output"] = {0.25, 0, 0, 0, 4, 1};
    e["buffer"] = {0.125, 0, 0, 0, 4, 1};
    return t;
}

const CostEntry& CostTable::entry(OpKind kind) const {
    auto it = entries_.find(std::string(kind_name(kind)));
    if (it == entries_.end())
        throw std::runtime_error("cost table has no entry for op kind '" +
                                 std::string(kind_name(kind)) + "'");
    return it->second;
}

CostTable CostTable::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open cost table '" + path.string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("cost table '" + path.string() + "': " + e.what());
    }
    CostTable t;
    for (const auto& [kind, je] : j.items()) {
        CostEntry e;
        e.c0 = je.value("c0", e.c0);
        e.c1 = je.value("c1", e.c1);
        e.adder_tree = je.value("adder_tree", e.adder_tree);
        e.exponent_logic = je.value("exponent_logic", e.exponent_logic);
        e.fixed_overhead = je.value("fixed_overhead", e.fixed_overhead);
        e.cycles_per_block = je.value("cycles_per_block", e.cycles_per_block);
        if (e.c0 < 0 || e.c1 < 0 || e.adder_tree < 0 || e.exponent_logic < 0 ||
            e.fixed_overhead < 0 || e.cycles_per_block <= 0)
            throw std::runtime_error("cost table entry '" + kind + "' has invalid coefficients");
        t.entries_[kind] = e;
    }
    return t;
}

void CostTable::to_file(const std::filesystem::path& path) const {
    nlohmann::ordered_json j;
    for (const auto& [kind, e] : entries_) {
        nlohmann::ordered_json je;
        // Shortest round-trip forms keep file-loaded tables bit-identical.
        je["c0"] = nlohmann::json::parse(format_double(e.c0));
        je["c1"] = nlohmann::json::parse(format_double(e.c1));
        je["adder_tree"] = nlohmann::json::parse(format_double(e.adder_tree));
        je["exponent_logic"] = nlohmann::json::parse(format_double(e.exponent_logic));
        je["fixed_overhead"] = nlohmann::json::parse(format_double(e.fixed_overhead));
        je["cycles_per_block"] = nlohmann::json::parse(format_double(e.cycles_per_block));
        j[kind] = je;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write cost table '" + path.string() + "'");
    out << j.dump(2) << "\n";
}

OpEstimate estimate_op(const Operation& op, const Graph& g, const CostTable& tbl) {
    const CostEntry& e = tbl.entry(op.kind);
    const auto& result = g.value(op.results.front());
    const auto tile = op_tile(op, g);
    const double lanes = static_cast<double>(tile[0] * tile[1]);
    const double bs = static_cast<double>(format_block_size(result.format));
    const int meff = effective_mantissa(result.format);

    OpEstimate est;
    if (op.kind == OpKind::Buffer) {
        double depth = 1;
        auto it = op.attrs.find("depth");
        if (it != op.attrs.end())
            if (auto v = parse_double(it->second)) depth = *v;
        est.area = e.fixed_overhead + e.c0 * depth * bs * avg_bits(result.format);
        est.blocks_per_cycle = lanes / (e.cycles_per_block * bs);
    } else {
        est.area = e.fixed_overhead +
                   lanes * (e.c0 + e.c1 * static_cast<double>((meff + 1) * (meff + 1))) +
                   e.adder_tree * std::max(lanes - 1.0, 0.0) * static_cast<double>(meff + 1) +
                   e.exponent_logic * static_cast<double>(shared_bits(result.format));
        const double work = static_cast<double>(work_per_element(op, g));
        est.blocks_per_cycle = lanes / (e.cycles_per_block * bs * work);
    }
    est.throughput = est.blocks_per_cycle / static_cast<double>(value_block_count(result));

    for (const auto& [slot, ref] : op.params) {
        const auto& p = g.value(ref);
        est.memory_bits += static_cast<double>(shape_numel(p.shape)) * avg_bits(p.format);
    }
    return est;
}

std::map<std::string, Placement> allocate_memory(const Graph& g, const ResourceBudget& budget) {
    budget.check();
    struct Item {
        std::string name;
        double bits;
        double freq;
    };
    std::vector<Item> items;
    for (const auto& op : g.ops) {
        if (op.params.empty()) continue;
        const auto& arg0 = g.value(op.args.front());
        const std::int64_t n = shape_numel(arg0.shape);
        const std::int64_t last = arg0.shape.empty() ? 1 : arg0.shape.back();
        const double freq = static_cast<double>(std::max<std::int64_t>(n / std::max<std::int64_t>(last, 1), 1));
        for (const auto& [slot, ref] : op.params) {
            const auto& p = g.value(ref);
            items.push_back({ref, static_cast<double>(shape_numel(p.shape)) * avg_bits(p.format),
                             freq});
        }
    }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        const double da = a.freq / a.bits, db = b.freq / b.bits;
        if (da != db) return da > db;
        return a.name < b.name;
    });
    std::map<std::string, Placement> placement;
    double remaining = budget.onchip_bits;
    for (const auto& item : items) {
        if (item.bits <= remaining) {
            placement[item.name] = Placement::Onchip;
            remaining -= item.bits;
        } else {
            placement[item.name] = Placement::Offchip;
        }
    }
    return placement;
}

GraphEstimate estimate_graph(const Graph& g, const CostTable& tbl, const ResourceBudget* budget) {
    GraphEstimate ge;
    if (budget) ge.param_placement = allocate_memory(g, *budget);

    ge.throughput = std::numeric_limits<double>::infinity();
    for (const auto& op : g.ops) {
        OpEstimate est = estimate_op(op, g, tbl);
        if (budget) {
            // Off-chip parameters cap an op at the bandwidth it can pull.
            double offchip_block_bits = 0;
            for (const auto& [slot, ref] : op.params) {
                auto it = ge.param_placement.find(ref);
                if (it != ge.param_placement.end() && it->second == Placement::Offchip) {
                    const auto& p = g.value(ref);
                    offchip_block_bits +=
                        static_cast<double>(format_block_size(p.format)) * avg_bits(p.format);
                    est.placement = Placement::Offchip;
                }
            }
            if (offchip_block_bits > 0) {
                const double ceiling = budget->offchip_bandwidth / offchip_block_bits;
                if (ceiling < est.blocks_per_cycle) {
                    const double scale = ceiling / est.blocks_per_cycle;
                    est.blocks_per_cycle = ceiling;
                    est.throughput *= scale;
                }
            }
        }
        ge.total_area += est.area;
        ge.throughput = std::min(ge.throughput, est.throughput);
        ge.per_op[op.results.front()] = est;
    }
    if (g.ops.empty()) ge.throughput = 0;
    return ge;
}

std::vector<std::array<std::int64_t, 2>> tile_lattice(const ValueInfo& info) {
    const auto dims = padded_dims(info);
    std::vector<std::array<std::int64_t, 2>> out;
    for (auto r : divisors(dims[0]))
        for (auto c : divisors(dims[1])) out.push_back({r, c});
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        const auto la = a[0] * a[1], lb = b[0] * b[1];
        if (la != lb) return la < lb;
        return a[0] < b[0];
    });
    return out;
}

namespace {

// Next single-dimension growth steps from the current tile, cheapest
// lanes increase first (ties grow rows).
std::vector<std::array<std::int64_t, 2>> next_tile_steps(const ValueInfo& info,
                                                         std::array<std::int64_t, 2> cur) {
    const auto dims = padded_dims(info);
    auto next_div = [](std::int64_t n, std::int64_t cur_d) -> std::optional<std::int64_t> {
        std::optional<std::int64_t> best;
        for (auto d : divisors(n))
            if (d > cur_d && (!best || d < *best)) best = d;
        return best;
    };
    std::vector<std::array<std::int64_t, 2>> steps;
    if (auto r = next_div(dims[0], cur[0])) steps.push_back({*r, cur[1]});
    if (auto c = next_div(dims[1], cur[1])) steps.push_back({cur[0], *c});
    std::sort(steps.begin(), steps.end(), [](const auto& a, const auto& b) {
        const auto la = a[0] * a[1], lb = b[0] * b[1];
        if (la != lb) return la < lb;
        return a[0] > b[0];  // prefer the row-grown step
    });
    return steps;
}

void propagate_tiles(Graph& g) {
    auto clamp_tile = [](const ValueInfo& info,
                         std::array<std::int64_t, 2> want) -> std::array<std::int64_t, 2> {
        const auto dims = padded_dims(info);
        auto best_leq = [](std::int64_t n, std::int64_t w) {
            std::int64_t best = 1;
            for (std::int64_t d = 1; d * d <= n; ++d)
                if (n % d == 0) {
                    if (d <= w) best = std::max(best, d);
                    if (n / d <= w) best = std::max(best, n / d);
                }
            return best;
        };
        return {best_leq(dims[0], want[0]), best_leq(dims[1], want[1])};
    };
    for (const auto& op : g.ops) {
        const auto tile = g.value(op.results.front()).tile.value_or(
            std::array<std::int64_t, 2>{1, 1});
        for (const auto& [slot, ref] : op.params) {
            auto& p = g.value(ref);
            p.tile = clamp_tile(p, tile);
        }
        for (const auto& a : op.args) {
            auto& v = g.value(a);
            if (!v.tile) v.tile = clamp_tile(v, tile);  // graph inputs
        }
    }
}

}  // namespace

Graph parallelize(const Graph& g, const ResourceBudget& budget, const CostTable& tbl) {
    budget.check();
    Graph out = g;
    for (auto& [name, info] : out.values) info.tile = {{1, 1}};

    struct OpState {
        double area = 0;
        double throughput = 0;
    };
    std::vector<OpState> state(out.ops.size());
    double total_area = 0;
    for (std::size_t i = 0; i < out.ops.size(); ++i) {
        auto est = estimate_op(out.ops[i], out, tbl);
        state[i] = {est.area, est.throughput};
        total_area += est.area;
    }
    if (total_area > budget.area_budget)
        throw InfeasibleBudgetError(
            "minimal design area " + format_double(total_area) + " exceeds the budget " +
            format_double(budget.area_budget));

    while (true) {
        // Slowest-first pass over the ops; grow the first one that fits.
        std::vector<std::size_t> order(out.ops.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (state[a].throughput != state[b].throughput)
                return state[a].throughput < state[b].throughput;
            return a < b;
        });

        bool grew = false;
        for (auto i : order) {
            auto& result = out.value(out.ops[i].results.front());
            const auto cur = *result.tile;
            for (const auto& step : next_tile_steps(result, cur)) {
                result.tile = step;
                auto est = estimate_op(out.ops[i], out, tbl);
                const double new_total = total_area - state[i].area + est.area;
                if (new_total <= budget.area_budget) {
                    state[i] = {est.area, est.throughput};
                    total_area = new_total;
                    grew = true;
                    break;
                }
                result.tile = cur;
            }
            if (grew) break;
        }
        if (!grew) break;
    }

    propagate_tiles(out);
    for (std::size_t i = 0; i < out.ops.size(); ++i) {
        auto est = estimate_op(out.ops[i], out, tbl);
        out.value(out.ops[i].results.front()).throughput = est.blocks_per_cycle;
    }
    assert(estimate_graph(out, tbl).total_area <= budget.area_budget);
    return out;
}

Graph insert_buffers(const Graph& g) {
    Graph out = g;
    // Op depth: longest producer chain, inputs and params at depth 0.
    std::map<std::string, std::size_t> producer;
    for (std::size_t i = 0; i < out.ops.size(); ++i)
        for (const auto& r : out.ops[i].results) producer[r] = i;

    auto order = topo_order(out);
    std::vector<std::int64_t> depth(out.ops.size(), 0);
    for (auto idx : order) {
        std::int64_t d = 0;
        for (const auto& a : out.ops[idx].args) {
            auto it = producer.find(a);
            if (it != producer.end()) d = std::max(d, depth[it->second]);
        }
        // A FIFO of depth k delays its path by k stages, so existing
        // buffers keep already-balanced joins balanced.
        std::int64_t stages = 1;
        if (out.ops[idx].kind == OpKind::Buffer) {
            auto it = out.ops[idx].attrs.find("depth");
            if (it != out.ops[idx].attrs.end())
                if (auto v = parse_int(it->second)) stages = *v;
        }
        depth[idx] = d + stages;
    }

    struct Insertion {
        std::size_t before;   // op index in the original vector
        std::size_t arg_pos;
        std::int64_t slack;
    };
    std::vector<Insertion> insertions;
    for (std::size_t i = 0; i < out.ops.size(); ++i) {
        const auto& op = out.ops[i];
        if (op.args.size() < 2) continue;
        std::int64_t maxd = 0;
        auto arg_depth = [&](const std::string& a) -> std::int64_t {
            auto it = producer.find(a);
            return it == producer.end() ? 0 : depth[it->second];
        };
        for (const auto& a : op.args) maxd = std::max(maxd, arg_depth(a));
        for (std::size_t p = 0; p < op.args.size(); ++p) {
            const std::int64_t slack = maxd - arg_depth(op.args[p]);
            if (slack > 0) insertions.push_back({i, p, slack});
        }
    }

    int counter = 0;
    // Apply from the back so stored indices stay valid.
    std::sort(insertions.begin(), insertions.end(),
              [](const Insertion& a, const Insertion& b) { return a.before > b.before; });
    for (const auto& ins : insertions) {
        Operation& consumer = out.ops[ins.before];
        const std::string src = consumer.args[ins.arg_pos];
        const std::string name = src + ".fifo" + std::to_string(counter++);

        ValueInfo info = out.value(src);
        info.is_param = false;
        info.data.reset();
        info.blob_offset.reset();
        out.values[name] = std::move(info);

        Operation buf;
        buf.kind = OpKind::Buffer;
        buf.args.push_back(src);
        buf.results.push_back(name);
        buf.attrs["depth"] = std::to_string(ins.slack);
        consumer.args[ins.arg_pos] = name;
        out.ops.insert(out.ops.begin() + static_cast<std::ptrdiff_t>(ins.before), std::move(buf));
    }
    return out;
}

}  // namespace mxflow
