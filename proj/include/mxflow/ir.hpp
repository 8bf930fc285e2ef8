// SSA dataflow graph with software attributes (shape, format, profile
// stats) and hardware attributes (stream tile, stream order, estimated
// throughput) on every value.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mxflow/format.hpp"
#include "mxflow/tensor.hpp"

namespace mxflow {

enum class OpKind {
    Linear,
    MatMul,
    Relu,
    Silu,
    Softmax,
    RmsNorm,
    Add,
    Mul,
    Flatten,
    Transpose,
    Reorder,
    Output,
    Buffer,  // pipeline-balancing FIFO, inserted by the hardware passes
};

std::string_view kind_name(OpKind k);
std::optional<OpKind> kind_from_name(std::string_view name);

enum class StreamOrder { RowMajor, ColMajor };

struct ValueInfo {
    Shape shape;
    FormatSpec format;  // Float32 until annotated
    bool is_param = false;
    std::shared_ptr<const Tensor> data;  // parameter payload, if any
    std::optional<std::int64_t> blob_offset;  // element offset in the weights blob

    // Software attributes, filled by profiling.
    std::optional<double> mean;
    std::optional<double> variance;
    std::optional<double> max_abs;

    // Hardware attributes. interface is always handshake.
    StreamOrder order = StreamOrder::RowMajor;
    std::optional<std::array<std::int64_t, 2>> tile;  // stream tile (rows, cols)
    std::optional<double> throughput;                 // blocks per cycle

    // Opaque attributes, preserved verbatim by the printer.
    std::map<std::string, std::string> extra;
};

struct Operation {
    OpKind kind = OpKind::Relu;
    std::vector<std::string> args;
    std::vector<std::string> results;
    // slot name -> value ref; canonical refs are "<result0>.<slot>"
    std::vector<std::pair<std::string, std::string>> params;
    // Operation attributes (hw_template, area_estimate, ...) as raw text.
    std::map<std::string, std::string> attrs;

    const std::string* param(std::string_view slot) const;
    std::string id() const { return results.empty() ? std::string("<op>") : results.front(); }
};

struct Graph {
    std::string name;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::vector<Operation> ops;
    std::map<std::string, ValueInfo> values;

    const ValueInfo& value(const std::string& ref) const;
    ValueInfo& value(const std::string& ref);
    bool has_value(const std::string& ref) const { return values.count(ref) != 0; }
};

// Expected argument count and allowed parameter slots per kind.
struct KindSignature {
    int arity = 1;
    std::vector<std::string> required_params;
    std::vector<std::string> optional_params;
};
const KindSignature& kind_signature(OpKind k);

// Result shape from argument/parameter shapes; returns an error message
// instead of a shape when the inputs are inconsistent.
struct ShapeResult {
    std::optional<Shape> shape;
    std::string error;
};
ShapeResult infer_shape(OpKind kind, const std::vector<Shape>& arg_shapes,
                        const std::map<std::string, Shape>& param_shapes);

// All structural diagnostics: SSA, ordering, acyclicity, arity and
// shape propagation. Empty result means the graph is valid.
std::vector<std::string> validate(const Graph& g);

// Producer-before-consumer order, deterministic (stable by declaration
// index among ready operations). Throws on cycles.
std::vector<std::size_t> topo_order(const Graph& g);

// Per-value format assignment plus optional stream-tile overrides.
struct QuantConfig {
    std::map<std::string, FormatSpec> formats;
    std::map<std::string, std::array<std::int64_t, 2>> tiles;
};

// Returns a copy of g with the configured formats/tiles applied.
// Unknown value names throw.
Graph annotate(const Graph& g, const QuantConfig& cfg);

// Equality over everything the printer emits (parameter payloads are
// carried out of band and excluded).
bool structurally_equal(const Graph& a, const Graph& b);

}  // namespace mxflow
