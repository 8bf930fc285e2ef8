#include "mxflow/ir.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace mxflow {

namespace {

struct KindRow {
    OpKind kind;
    std::string_view name;
    KindSignature sig;
};

const std::vector<KindRow>& kind_table() {
    static const std::vector<KindRow> rows = {
        {OpKind::Linear, "linear", {1, {"weight"}, {"bias"}}},
        {OpKind::MatMul, "matmul", {2, {}, {}}},
        {OpKind::Relu, "relu", {1, {}, {}}},
        {OpKind::Silu, "silu", {1, {}, {}}},
        {OpKind::Softmax, "softmax", {1, {}, {}}},
        {OpKind::RmsNorm, "rmsnorm", {1, {}, {"gain"}}},
        {OpKind::Add, "add", {2, {}, {}}},
        {OpKind::Mul, "mul", {2, {}, {}}},
        {OpKind::Flatten, "flatten", {1, {}, {}}},
        {OpKind::Transpose, "transpose", {1, {}, {}}},
        {OpKind::Reorder, "reorder", {1, {}, {}}},
        {OpKind::Output, "output", {1, {}, {}}},
        {OpKind::Buffer, "buffer", {1, {}, {}}},
    };
    return rows;
}

}  // namespace

std::string_view kind_name(OpKind k) {
    for (const auto& row : kind_table())
        if (row.kind == k) return row.name;
    return "<unknown>";
}

std::optional<OpKind> kind_from_name(std::string_view name) {
    for (const auto& row : kind_table())
        if (row.name == name) return row.kind;
    return std::nullopt;
}

const KindSignature& kind_signature(OpKind k) {
    for (const auto& row : kind_table())
        if (row.kind == k) return row.sig;
    throw std::logic_error("unknown op kind");
}

const std::string* Operation::param(std::string_view slot) const {
    for (const auto& [s, ref] : params)
        if (s == slot) return &ref;
    return nullptr;
}

const ValueInfo& Graph::value(const std::string& ref) const {
    auto it = values.find(ref);
    if (it == values.end()) throw std::out_of_range("unknown value '" + ref + "'");
    return it->second;
}

ValueInfo& Graph::value(const std::string& ref) {
    auto it = values.find(ref);
    if (it == values.end()) throw std::out_of_range("unknown value '" + ref + "'");
    return it->second;
}

ShapeResult infer_shape(OpKind kind, const std::vector<Shape>& arg_shapes,
                        const std::map<std::string, Shape>& param_shapes) {
    auto err = [](std::string msg) { return ShapeResult{std::nullopt, std::move(msg)}; };
    auto ok = [](Shape s) { return ShapeResult{std::move(s), {}}; };
    auto span_of = [](const Shape& s) { return std::span<const std::int64_t>(s); };

    switch (kind) {
        case OpKind::Linear: {
            const Shape& x = arg_shapes.at(0);
            if (x.empty()) return err("linear input must have rank >= 1");
            auto wit = param_shapes.find("weight");
            if (wit == param_shapes.end()) return err("linear requires a weight parameter");
            const Shape& w = wit->second;
            if (w.size() != 2) return err("linear weight must be 2-D (out, in)");
            const std::int64_t k = x.back();
            if (w[1] != k)
                return err("linear inner dimension mismatch: input has " + std::to_string(k) +
                           ", weight expects " + std::to_string(w[1]));
            auto bit = param_shapes.find("bias");
            if (bit != param_shapes.end() &&
                !(bit->second.size() == 1 && bit->second[0] == w[0]))
                return err("linear bias must have shape [" + std::to_string(w[0]) + "]");
            Shape out = x;
            out.back() = w[0];
            return ok(out);
        }
        case OpKind::MatMul: {
            const Shape& a = arg_shapes.at(0);
            const Shape& b = arg_shapes.at(1);
            if (a.size() < 2 || b.size() < 2) return err("matmul operands must have rank >= 2");
            if (a.size() != b.size())
                return err("matmul operands must have equal rank");
            for (std::size_t i = 0; i + 2 < a.size(); ++i)
                if (a[i] != b[i]) return err("matmul leading dimensions differ");
            const std::int64_t k = a.back();
            if (b[b.size() - 2] != k)
                return err("matmul inner dimension mismatch: " + std::to_string(k) + " vs " +
                           std::to_string(b[b.size() - 2]));
            Shape out = a;
            out.back() = b.back();
            return ok(out);
        }
        case OpKind::Add:
        case OpKind::Mul: {
            if (arg_shapes.at(0) != arg_shapes.at(1))
                return err(std::string(kind_name(kind)) + " operands must have equal shapes: " +
                           shape_to_string(span_of(arg_shapes[0])) + " vs " +
                           shape_to_string(span_of(arg_shapes[1])));
            return ok(arg_shapes[0]);
        }
        case OpKind::RmsNorm: {
            const Shape& x = arg_shapes.at(0);
            if (x.empty()) return err("rmsnorm input must have rank >= 1");
            auto git = param_shapes.find("gain");
            if (git != param_shapes.end() &&
                !(git->second.size() == 1 && git->second[0] == x.back()))
                return err("rmsnorm gain must have shape [" + std::to_string(x.back()) + "]");
            return ok(x);
        }
        case OpKind::Flatten: {
            const Shape& x = arg_shapes.at(0);
            if (x.empty()) return err("flatten input must have rank >= 1");
            if (x.size() == 1) return ok(Shape{1, x[0]});
            std::int64_t rest = 1;
            for (std::size_t i = 1; i < x.size(); ++i) rest *= x[i];
            return ok(Shape{x[0], rest});
        }
        case OpKind::Transpose: {
            Shape x = arg_shapes.at(0);
            if (x.size() < 2) return err("transpose input must have rank >= 2");
            std::swap(x[x.size() - 1], x[x.size() - 2]);
            return ok(x);
        }
        case OpKind::Relu:
        case OpKind::Silu:
        case OpKind::Softmax:
        case OpKind::Reorder:
        case OpKind::Output:
        case OpKind::Buffer:
            return ok(arg_shapes.at(0));
    }
    return err("unknown op kind");
}

namespace {

struct DefInfo {
    enum Site { Input, Param, Result } site;
    std::size_t op_index = 0;  // for Param/Result
};

}  // namespace

std::vector<std::string> validate(const Graph& g) {
    std::vector<std::string> diags;
    auto diag = [&](std::string msg) { diags.push_back(std::move(msg)); };

    // Definition table and SSA single-assignment.
    std::map<std::string, DefInfo> defs;
    auto define = [&](const std::string& ref, DefInfo info, const std::string& where) {
        if (!g.has_value(ref)) diag("value '" + ref + "' (" + where + ") has no value record");
        auto [it, inserted] = defs.emplace(ref, info);
        if (!inserted) diag("SSA violation: value '" + ref + "' is defined more than once");
    };
    for (const auto& in : g.inputs) define(in, {DefInfo::Input}, "graph input");
    for (std::size_t i = 0; i < g.ops.size(); ++i) {
        for (const auto& [slot, ref] : g.ops[i].params) define(ref, {DefInfo::Param, i}, "parameter");
        for (const auto& r : g.ops[i].results) define(r, {DefInfo::Result, i}, "result");
    }

    // Uses: must be defined, and results must be defined by earlier ops.
    auto check_use = [&](const std::string& ref, std::size_t op_index) {
        auto it = defs.find(ref);
        if (it == defs.end()) {
            diag("use of undefined value '" + ref + "' in op " + g.ops[op_index].id());
            return;
        }
        if (it->second.site == DefInfo::Result && it->second.op_index >= op_index)
            diag("use-before-def: '" + ref + "' is used by op " + g.ops[op_index].id() +
                 " but defined " +
                 (it->second.op_index == op_index ? "by the same operation"
                                                  : "by a later operation"));
    };
    for (std::size_t i = 0; i < g.ops.size(); ++i)
        for (const auto& a : g.ops[i].args) check_use(a, i);
    for (const auto& out : g.outputs)
        if (!defs.count(out)) diag("graph output '" + out + "' is never defined");

    // Acyclicity via Kahn on the op graph.
    {
        std::map<std::string, std::size_t> producer;
        for (std::size_t i = 0; i < g.ops.size(); ++i)
            for (const auto& r : g.ops[i].results) producer[r] = i;
        std::vector<int> indeg(g.ops.size(), 0);
        std::vector<std::vector<std::size_t>> consumers(g.ops.size());
        for (std::size_t i = 0; i < g.ops.size(); ++i)
            for (const auto& a : g.ops[i].args) {
                auto it = producer.find(a);
                if (it != producer.end() && it->second != i) {
                    ++indeg[i];
                    consumers[it->second].push_back(i);
                }
            }
        std::set<std::size_t> ready;
        for (std::size_t i = 0; i < g.ops.size(); ++i)
            if (indeg[i] == 0) ready.insert(i);
        std::size_t emitted = 0;
        while (!ready.empty()) {
            std::size_t i = *ready.begin();
            ready.erase(ready.begin());
            ++emitted;
            for (auto c : consumers[i])
                if (--indeg[c] == 0) ready.insert(c);
        }
        if (emitted != g.ops.size()) {
            std::string cyc = "cycle detected involving:";
            for (std::size_t i = 0; i < g.ops.size(); ++i)
                if (indeg[i] > 0) cyc += " " + g.ops[i].id();
            diag(cyc);
        }
    }

    // Arity, parameter slots, shape propagation.
    for (const auto& op : g.ops) {
        const auto& sig = kind_signature(op.kind);
        if (static_cast<int>(op.args.size()) != sig.arity)
            diag("op " + op.id() + " (" + std::string(kind_name(op.kind)) + ") expects " +
                 std::to_string(sig.arity) + " argument(s), got " +
                 std::to_string(op.args.size()));
        if (op.results.size() != 1)
            diag("op " + op.id() + " must produce exactly one result");
        for (const auto& [slot, ref] : op.params) {
            bool known = std::count(sig.required_params.begin(), sig.required_params.end(), slot) ||
                         std::count(sig.optional_params.begin(), sig.optional_params.end(), slot);
            if (!known)
                diag("op " + op.id() + " (" + std::string(kind_name(op.kind)) +
                     ") does not accept parameter '" + slot + "'");
        }
        for (const auto& slot : sig.required_params)
            if (!op.param(slot))
                diag("op " + op.id() + " (" + std::string(kind_name(op.kind)) +
                     ") is missing required parameter '" + slot + "'");

        bool shapes_known = true;
        std::vector<Shape> arg_shapes;
        for (const auto& a : op.args) {
            if (!g.has_value(a)) { shapes_known = false; break; }
            arg_shapes.push_back(g.value(a).shape);
        }
        std::map<std::string, Shape> param_shapes;
        for (const auto& [slot, ref] : op.params) {
            if (!g.has_value(ref)) { shapes_known = false; break; }
            param_shapes[slot] = g.value(ref).shape;
        }
        if (!shapes_known || static_cast<int>(op.args.size()) != sig.arity ||
            op.results.size() != 1)
            continue;
        auto inferred = infer_shape(op.kind, arg_shapes, param_shapes);
        if (!inferred.shape) {
            std::string involved;
            for (const auto& a : op.args) involved += (involved.empty() ? "" : ", ") + a;
            for (const auto& [slot, ref] : op.params) involved += ", " + ref;
            diag("op " + op.id() + ": " + inferred.error + " (values: " + involved + ")");
            continue;
        }
        if (g.has_value(op.results[0]) && g.value(op.results[0]).shape != *inferred.shape)
            diag("op " + op.id() + ": stored result shape " +
                 shape_to_string(g.value(op.results[0]).shape) + " does not match inferred " +
                 shape_to_string(*inferred.shape));
    }

    return diags;
}

std::vector<std::size_t> topo_order(const Graph& g) {
    std::map<std::string, std::size_t> producer;
    for (std::size_t i = 0; i < g.ops.size(); ++i)
        for (const auto& r : g.ops[i].results) producer[r] = i;

    std::vector<int> indeg(g.ops.size(), 0);
    std::vector<std::vector<std::size_t>> consumers(g.ops.size());
    for (std::size_t i = 0; i < g.ops.size(); ++i)
        for (const auto& a : g.ops[i].args) {
            auto it = producer.find(a);
            if (it != producer.end() && it->second != i) {
                ++indeg[i];
                consumers[it->second].push_back(i);
            }
        }
    std::set<std::size_t> ready;  // ordered: stable by declaration index
    for (std::size_t i = 0; i < g.ops.size(); ++i)
        if (indeg[i] == 0) ready.insert(i);

    std::vector<std::size_t> order;
    order.reserve(g.ops.size());
    while (!ready.empty()) {
        std::size_t i = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(i);
        for (auto c : consumers[i])
            if (--indeg[c] == 0) ready.insert(c);
    }
    if (order.size() != g.ops.size())
        throw std::runtime_error("topo_order: graph contains a cycle");
    return order;
}

Graph annotate(const Graph& g, const QuantConfig& cfg) {
    Graph out = g;
    for (const auto& [name, fmt] : cfg.formats) {
        auto it = out.values.find(name);
        if (it == out.values.end())
            throw std::invalid_argument("annotate: config names unknown value '" + name + "'");
        it->second.format = fmt;
    }
    for (const auto& [name, tile] : cfg.tiles) {
        auto it = out.values.find(name);
        if (it == out.values.end())
            throw std::invalid_argument("annotate: config names unknown value '" + name + "'");
        it->second.tile = tile;
    }
    return out;
}

namespace {

bool value_info_equal(const ValueInfo& a, const ValueInfo& b) {
    return a.shape == b.shape && a.format == b.format && a.is_param == b.is_param &&
           a.blob_offset == b.blob_offset && a.mean == b.mean && a.variance == b.variance &&
           a.max_abs == b.max_abs && a.order == b.order && a.tile == b.tile &&
           a.throughput == b.throughput && a.extra == b.extra;
}

}  // namespace

bool structurally_equal(const Graph& a, const Graph& b) {
    if (a.name != b.name || a.inputs != b.inputs || a.outputs != b.outputs) return false;
    if (a.ops.size() != b.ops.size() || a.values.size() != b.values.size()) return false;
    for (std::size_t i = 0; i < a.ops.size(); ++i) {
        const auto& x = a.ops[i];
        const auto& y = b.ops[i];
        if (x.kind != y.kind || x.args != y.args || x.results != y.results ||
            x.params != y.params || x.attrs != y.attrs)
            return false;
    }
    auto ia = a.values.begin();
    auto ib = b.values.begin();
    for (; ia != a.values.end(); ++ia, ++ib) {
        if (ia->first != ib->first) return false;
        if (!value_info_equal(ia->second, ib->second)) return false;
    }
    return true;
}

}  // namespace mxflow
