// Software emulation of quantized inference: arguments and parameters
// are fake-quantized to their value formats, kernels run in 64-bit real
// arithmetic, results are fake-quantized to the output format.

#pragma once

#include <map>
#include <string>
#include <vector>

#include "mxflow/ir.hpp"

namespace mxflow {

enum class DatasetSplit { Calibration, Evaluation };

struct Dataset {
    std::vector<Tensor> inputs;
    std::vector<std::int64_t> labels;
    DatasetSplit split = DatasetSplit::Calibration;

    std::size_t size() const { return inputs.size(); }
};

enum class ExecMode { Float, Quantized };

struct ExecOptions {
    ExecMode mode = ExecMode::Float;
    double rmsnorm_eps = 1e-6;
    int workers = 1;
};

// Compiled execution plan for one graph: topological order resolved
// once, parameters fake-quantized once (weights are static). Safe to
// share across threads; per-run state is local.
class Executor {
public:
    Executor(const Graph& g, ExecOptions options);

    // Single-input graphs.
    Tensor run(const Tensor& input) const;
    // Every value produced during the run (inputs included).
    std::map<std::string, Tensor> run_env(const std::vector<Tensor>& inputs) const;

    const Graph& graph() const { return g_; }

private:
    Graph g_;
    ExecOptions opt_;
    std::vector<std::size_t> order_;
    std::map<std::string, Tensor> prepared_params_;
};

// One-shot conveniences over Executor.
Tensor run_float(const Graph& g, const Tensor& input);
Tensor run_quantized(const Graph& g, const Tensor& input);

struct ValueStats {
    double mean = 0;
    double variance = 0;  // per-element variance across samples, averaged
    double max_abs = 0;
    std::int64_t sample_count = 0;
};

struct ProfileStats {
    std::map<std::string, ValueStats> per_value;
};

// Streaming statistics over the calibration split for every
// non-parameter value. Throws on an empty dataset.
ProfileStats profile(const Graph& g, const Dataset& d, int workers = 1);

// Copy of g with profile statistics written into the value records.
Graph with_stats(const Graph& g, const ProfileStats& stats);

struct EvalMetrics {
    double accuracy = 0;
    double avg_bitwidth_model = 0;  // element-count-weighted mean over all values
    std::int64_t sample_count = 0;
};

EvalMetrics eval_accuracy(const Graph& g, const Dataset& d, ExecMode mode, int workers = 1);

// The b of the objective: size-weighted mean bitwidth over graph values.
double model_avg_bitwidth(const Graph& g);

}  // namespace mxflow
