// Shared test helpers: deterministic random DAG construction and a few
// hand-built graph fixtures.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "mxflow/ir.hpp"

namespace testsupport {

using namespace mxflow;

inline FormatSpec random_mx_format(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> mdist(2, 8);
    return FormatSpec::mxint({16, 2}, 8, mdist(rng));
}

inline std::shared_ptr<const Tensor> random_payload(std::mt19937_64& rng, Shape shape) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = dist(rng);
    return std::make_shared<const Tensor>(std::move(t));
}

struct GraphGenOptions {
    int min_ops = 2;
    int max_ops = 10;
    bool uniform_mx = true;    // one MX family, (16,2)/e=8, random m per value
    bool with_payloads = false;
    bool with_opaque_attrs = false;
};

// Builds a valid SSA graph: ops appended in topological order, one
// result per op, shapes consistent by construction.
inline Graph random_graph(std::mt19937_64& rng, const GraphGenOptions& opts = {}) {
    std::uniform_int_distribution<int> dim_pick(0, 3);
    const std::int64_t dims[] = {2, 4, 8, 16};
    std::uniform_int_distribution<int> ops_count(opts.min_ops, opts.max_ops);
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    Graph g;
    g.name = "gen";
    int next_id = 0;
    auto fresh = [&] { return "v" + std::to_string(next_id++); };

    auto fmt = [&] {
        if (opts.uniform_mx) return random_mx_format(rng);
        std::uniform_int_distribution<int> pick(0, 4);
        switch (pick(rng)) {
            case 0: return FormatSpec::float32();
            case 1: return FormatSpec::fixed_point(8, 4);
            case 2: return FormatSpec::mini_float(4, 3, 7);
            case 3: return FormatSpec::bmf({16, 2}, 8, 4, 3);
            default: return random_mx_format(rng);
        }
    };

    auto add_value = [&](const std::string& name, Shape shape, bool is_param) {
        ValueInfo info;
        info.shape = std::move(shape);
        info.format = fmt();
        info.is_param = is_param;
        if (is_param && opts.with_payloads) info.data = random_payload(rng, info.shape);
        if (opts.with_opaque_attrs && coin(rng) < 0.3) info.extra["note"] = "generated";
        if (coin(rng) < 0.2) info.mean = 0.25;
        g.values[name] = std::move(info);
    };

    std::string in = fresh();
    Shape in_shape{dims[dim_pick(rng)], dims[dim_pick(rng)]};
    add_value(in, in_shape, false);
    g.inputs.push_back(in);

    std::vector<std::string> live{in};
    auto pick_live = [&] {
        std::uniform_int_distribution<std::size_t> d(0, live.size() - 1);
        return live[d(rng)];
    };

    const int n_ops = ops_count(rng);
    for (int i = 0; i < n_ops; ++i) {
        Operation op;
        std::string arg = pick_live();
        const Shape& ashape = g.value(arg).shape;
        std::string res = fresh();
        op.args.push_back(arg);
        op.results.push_back(res);

        double r = coin(rng);
        if (r < 0.35) {
            static const OpKind unary[] = {OpKind::Relu, OpKind::Silu, OpKind::Softmax,
                                           OpKind::RmsNorm, OpKind::Reorder};
            op.kind = unary[static_cast<std::size_t>(coin(rng) * 5) % 5];
            add_value(res, ashape, false);
        } else if (r < 0.5) {
            op.kind = OpKind::Transpose;
            Shape s = ashape;
            std::swap(s[s.size() - 1], s[s.size() - 2]);
            add_value(res, s, false);
        } else if (r < 0.75) {
            // add/mul with a same-shape partner if one exists, else relu
            std::vector<std::string> partners;
            for (const auto& v : live)
                if (g.value(v).shape == ashape) partners.push_back(v);
            if (partners.size() >= 1) {
                std::uniform_int_distribution<std::size_t> d(0, partners.size() - 1);
                op.kind = coin(rng) < 0.5 ? OpKind::Add : OpKind::Mul;
                op.args.push_back(partners[d(rng)]);
            } else {
                op.kind = OpKind::Relu;
            }
            add_value(res, ashape, false);
        } else {
            op.kind = OpKind::Linear;
            const std::int64_t k = ashape.back();
            const std::int64_t n = dims[dim_pick(rng)];
            Shape out = ashape;
            out.back() = n;
            std::string w = res + ".weight";
            add_value(w, Shape{n, k}, true);
            op.params.emplace_back("weight", w);
            if (coin(rng) < 0.5) {
                std::string b = res + ".bias";
                add_value(b, Shape{n}, true);
                op.params.emplace_back("bias", b);
            }
            add_value(res, out, false);
        }
        if (opts.with_opaque_attrs && coin(rng) < 0.3) op.attrs["stage"] = std::to_string(i);
        g.ops.push_back(op);
        live.push_back(res);
    }

    // Outputs: everything never consumed.
    std::set<std::string> consumed;
    for (const auto& op : g.ops)
        for (const auto& a : op.args) consumed.insert(a);
    for (const auto& op : g.ops)
        for (const auto& r : op.results)
            if (!consumed.count(r)) g.outputs.push_back(r);
    if (g.outputs.empty()) g.outputs.push_back(g.ops.back().results.front());
    return g;
}

// flatten -> linear -> relu -> linear classifier with random weights.
inline Graph mlp_graph(std::mt19937_64& rng, std::int64_t d, std::int64_t h, std::int64_t classes) {
    Graph g;
    g.name = "mlp";
    auto mk = [&](const std::string& name, Shape shape, bool is_param) {
        ValueInfo info;
        info.shape = shape;
        info.is_param = is_param;
        if (is_param) info.data = random_payload(rng, shape);
        g.values[name] = std::move(info);
    };
    mk("x", {1, d}, false);
    g.inputs.push_back("x");
    mk("x0", {1, d}, false);
    g.ops.push_back(Operation{OpKind::Flatten, {"x"}, {"x0"}, {}, {}});
    mk("x1.weight", {h, d}, true);
    mk("x1.bias", {h}, true);
    mk("x1", {1, h}, false);
    g.ops.push_back(Operation{
        OpKind::Linear, {"x0"}, {"x1"}, {{"weight", "x1.weight"}, {"bias", "x1.bias"}}, {}});
    mk("x2", {1, h}, false);
    g.ops.push_back(Operation{OpKind::Relu, {"x1"}, {"x2"}, {}, {}});
    mk("x3.weight", {classes, h}, true);
    mk("x3.bias", {classes}, true);
    mk("x3", {1, classes}, false);
    g.ops.push_back(Operation{
        OpKind::Linear, {"x2"}, {"x3"}, {{"weight", "x3.weight"}, {"bias", "x3.bias"}}, {}});
    g.outputs.push_back("x3");
    return g;
}

// Single-head attention block with a residual add: q/k/v projections,
// scores = q . k^T, softmax, context = probs . v, output projection,
// then add(input, out). Exercises transpose, matmul fan-in and the
// skip edge.
inline Graph transformer_block_graph(std::mt19937_64& rng, std::int64_t seq = 8,
                                     std::int64_t dim = 16, bool with_payloads = false) {
    Graph g;
    g.name = "block";
    auto mk = [&](const std::string& name, Shape shape, bool is_param) {
        ValueInfo info;
        info.shape = shape;
        info.format = FormatSpec::mxint({16, 2}, 8, 7);
        info.is_param = is_param;
        if (is_param && with_payloads) info.data = random_payload(rng, info.shape);
        g.values[name] = std::move(info);
    };
    mk("x", {seq, dim}, false);
    g.inputs.push_back("x");
    auto proj = [&](const std::string& res) {
        mk(res + ".weight", {dim, dim}, true);
        mk(res, {seq, dim}, false);
        g.ops.push_back(Operation{OpKind::Linear, {"x"}, {res}, {{"weight", res + ".weight"}}, {}});
    };
    proj("q");
    proj("k");
    proj("v");
    mk("kt", {dim, seq}, false);
    g.ops.push_back(Operation{OpKind::Transpose, {"k"}, {"kt"}, {}, {}});
    mk("scores", {seq, seq}, false);
    g.ops.push_back(Operation{OpKind::MatMul, {"q", "kt"}, {"scores"}, {}, {}});
    mk("probs", {seq, seq}, false);
    g.ops.push_back(Operation{OpKind::Softmax, {"scores"}, {"probs"}, {}, {}});
    mk("ctx", {seq, dim}, false);
    g.ops.push_back(Operation{OpKind::MatMul, {"probs", "v"}, {"ctx"}, {}, {}});
    mk("proj.weight", {dim, dim}, true);
    mk("proj", {seq, dim}, false);
    g.ops.push_back(
        Operation{OpKind::Linear, {"ctx"}, {"proj"}, {{"weight", "proj.weight"}}, {}});
    mk("y", {seq, dim}, false);
    g.ops.push_back(Operation{OpKind::Add, {"x", "proj"}, {"y"}, {}, {}});
    g.outputs.push_back("y");
    return g;
}

// input -> relu -> relu -> ... chain of n ops.
inline Graph chain_graph(int n, Shape shape = {4, 4}) {
    Graph g;
    g.name = "chain";
    auto mk = [&](const std::string& name) {
        ValueInfo info;
        info.shape = shape;
        g.values[name] = info;
    };
    mk("x0");
    g.inputs.push_back("x0");
    for (int i = 0; i < n; ++i) {
        Operation op;
        op.kind = OpKind::Relu;
        op.args.push_back("x" + std::to_string(i));
        op.results.push_back("x" + std::to_string(i + 1));
        mk(op.results.front());
        g.ops.push_back(op);
    }
    g.outputs.push_back("x" + std::to_string(n));
    return g;
}

// x0 -> a; a -> long path (depth ops) -> b; add(a, b) -> y.
inline Graph diamond_graph(int long_depth) {
    Graph g;
    g.name = "diamond";
    auto mk = [&](const std::string& name) {
        ValueInfo info;
        info.shape = {4, 4};
        g.values[name] = info;
    };
    mk("x0");
    g.inputs.push_back("x0");
    Operation head{OpKind::Relu, {"x0"}, {"a"}, {}, {}};
    mk("a");
    g.ops.push_back(head);
    std::string cur = "a";
    for (int i = 0; i < long_depth; ++i) {
        std::string res = "p" + std::to_string(i);
        g.ops.push_back(Operation{OpKind::Silu, {cur}, {res}, {}, {}});
        mk(res);
        cur = res;
    }
    g.ops.push_back(Operation{OpKind::Add, {"a", cur}, {"y"}, {}, {}});
    mk("y");
    g.outputs.push_back("y");
    return g;
}

}  // namespace testsupport
