#include "mxflow/emulate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <atomic>
#include <thread>

#include "mxflow/quantize.hpp"

namespace mxflow {

namespace {

[[noreturn]] void exec_error(const std::string& what) {
    throw std::runtime_error("emulate: " + what);
}

// ---- kernels -------------------------------------------------------------

Tensor k_linear(const Tensor& x, const Tensor& w, const Tensor* bias) {
    // x: (..., k) x w: (n, k) -> (..., n), y = x . w^T + bias
    const std::int64_t k = x.shape.back();
    const std::int64_t n = w.shape[0];
    if (w.shape.size() != 2 || w.shape[1] != k) exec_error("linear weight shape mismatch");
    const std::int64_t rows = x.numel() / k;
    Shape out_shape = x.shape;
    out_shape.back() = n;
    Tensor y = Tensor::zeros(out_shape);
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xr = x.data.data() + r * k;
        double* yr = y.data.data() + r * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const double* wj = w.data.data() + j * k;
            double acc = bias ? bias->data[j] : 0.0;
            for (std::int64_t i = 0; i < k; ++i) acc += xr[i] * wj[i];
            yr[j] = acc;
        }
    }
    return y;
}

Tensor k_matmul(const Tensor& a, const Tensor& b) {
    // (..., m, k) x (..., k, n) -> (..., m, n)
    const std::int64_t k = a.shape.back();
    const std::int64_t m = a.shape[a.shape.size() - 2];
    const std::int64_t n = b.shape.back();
    if (b.shape[b.shape.size() - 2] != k) exec_error("matmul inner dimension mismatch");
    const std::int64_t batch = a.numel() / (m * k);
    if (batch != b.numel() / (k * n)) exec_error("matmul batch mismatch");
    Shape out_shape = a.shape;
    out_shape.back() = n;
    Tensor y = Tensor::zeros(out_shape);
    for (std::int64_t t = 0; t < batch; ++t) {
        const double* ab = a.data.data() + t * m * k;
        const double* bb = b.data.data() + t * k * n;
        double* yb = y.data.data() + t * m * n;
        for (std::int64_t i = 0; i < m; ++i)
            for (std::int64_t j = 0; j < n; ++j) {
                double acc = 0;
                for (std::int64_t p = 0; p < k; ++p) acc += ab[i * k + p] * bb[p * n + j];
                yb[i * n + j] = acc;
            }
    }
    return y;
}

Tensor k_softmax(const Tensor& x) {
    const std::int64_t n = x.shape.back();
    const std::int64_t rows = x.numel() / n;
    Tensor y = x;
    for (std::int64_t r = 0; r < rows; ++r) {
        double* row = y.data.data() + r * n;
        double mx = row[0];
        for (std::int64_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
        double sum = 0;
        for (std::int64_t i = 0; i < n; ++i) {
            row[i] = std::exp(row[i] - mx);
            sum += row[i];
        }
        for (std::int64_t i = 0; i < n; ++i) row[i] /= sum;
    }
    return y;
}

Tensor k_rmsnorm(const Tensor& x, const Tensor* gain, double eps) {
    const std::int64_t n = x.shape.back();
    const std::int64_t rows = x.numel() / n;
    Tensor y = x;
    for (std::int64_t r = 0; r < rows; ++r) {
        double* row = y.data.data() + r * n;
        double ms = 0;
        for (std::int64_t i = 0; i < n; ++i) ms += row[i] * row[i];
        ms = ms / static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(ms + eps);
        for (std::int64_t i = 0; i < n; ++i) row[i] *= inv * (gain ? gain->data[i] : 1.0);
    }
    return y;
}

Tensor k_transpose(const Tensor& x) {
    const std::int64_t c = x.shape.back();
    const std::int64_t r = x.shape[x.shape.size() - 2];
    const std::int64_t batch = x.numel() / (r * c);
    Shape out_shape = x.shape;
    std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
    Tensor y = Tensor::zeros(out_shape);
    for (std::int64_t t = 0; t < batch; ++t)
        for (std::int64_t i = 0; i < r; ++i)
            for (std::int64_t j = 0; j < c; ++j)
                y.data[t * r * c + j * r + i] = x.data[t * r * c + i * c + j];
    return y;
}

Tensor k_flatten(const Tensor& x) {
    auto res = infer_shape(OpKind::Flatten, {x.shape}, {});
    Tensor y = x;
    y.shape = *res.shape;
    return y;
}

Tensor k_elementwise2(OpKind kind, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) exec_error(std::string(kind_name(kind)) + " operand shape mismatch");
    Tensor y = a;
    if (kind == OpKind::Add)
        for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = a[i] + b[i];
    else
        for (std::int64_t i = 0; i < y.numel(); ++i) y[i] = a[i] * b[i];
    return y;
}

}  // namespace

Executor::Executor(const Graph& g, ExecOptions options) : g_(g), opt_(options) {
    order_ = topo_order(g_);
    if (opt_.mode == ExecMode::Quantized) {
        // Weights are static: fake-quantize them once.
        for (const auto& [name, info] : g_.values) {
            if (!info.is_param) continue;
            if (!info.data) exec_error("parameter '" + name + "' has no data");
            prepared_params_[name] = fake_quantize(*info.data, info.format);
        }
    } else {
        for (const auto& [name, info] : g_.values)
            if (info.is_param) {
                if (!info.data) exec_error("parameter '" + name + "' has no data");
                prepared_params_[name] = *info.data;
            }
    }
}

std::map<std::string, Tensor> Executor::run_env(const std::vector<Tensor>& inputs) const {
    if (inputs.size() != g_.inputs.size())
        exec_error("expected " + std::to_string(g_.inputs.size()) + " input(s), got " +
                   std::to_string(inputs.size()));
    std::map<std::string, Tensor> env;
    const bool quant = opt_.mode == ExecMode::Quantized;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto& name = g_.inputs[i];
        const auto& info = g_.value(name);
        if (!info.shape.empty() && inputs[i].shape != info.shape)
            exec_error("input '" + name + "' has shape " +
                       shape_to_string(inputs[i].shape) + ", expected " +
                       shape_to_string(info.shape));
        env[name] = quant ? fake_quantize(inputs[i], info.format) : inputs[i];
    }

    for (auto idx : order_) {
        const Operation& op = g_.ops[idx];
        auto arg = [&](std::size_t i) -> const Tensor& {
            auto it = env.find(op.args[i]);
            if (it == env.end()) exec_error("missing value '" + op.args[i] + "'");
            return it->second;
        };
        auto param = [&](const char* slot) -> const Tensor* {
            const std::string* ref = op.param(slot);
            if (!ref) return nullptr;
            auto it = prepared_params_.find(*ref);
            if (it == prepared_params_.end()) exec_error("missing parameter '" + *ref + "'");
            return &it->second;
        };

        Tensor result;
        switch (op.kind) {
            case OpKind::Linear: {
                const Tensor* w = param("weight");
                if (!w) exec_error("linear op " + op.id() + " is missing its weight");
                result = k_linear(arg(0), *w, param("bias"));
                break;
            }
            case OpKind::MatMul: result = k_matmul(arg(0), arg(1)); break;
            case OpKind::Relu: {
                result = arg(0);
                for (auto& v : result.data) v = v > 0 ? v : 0.0;
                break;
            }
            case OpKind::Silu: {
                result = arg(0);
                for (auto& v : result.data) v = v / (1.0 + std::exp(-v));
                break;
            }
            case OpKind::Softmax: result = k_softmax(arg(0)); break;
            case OpKind::RmsNorm: result = k_rmsnorm(arg(0), param("gain"), opt_.rmsnorm_eps); break;
            case OpKind::Add:
            case OpKind::Mul: result = k_elementwise2(op.kind, arg(0), arg(1)); break;
            case OpKind::Flatten: result = k_flatten(arg(0)); break;
            case OpKind::Transpose: result = k_transpose(arg(0)); break;
            case OpKind::Reorder:
            case OpKind::Output:
            case OpKind::Buffer: result = arg(0); break;
        }
        const auto& out_name = op.results.front();
        const auto& out_info = g_.value(out_name);
        if (!out_info.shape.empty() && result.shape != out_info.shape)
            exec_error("op " + op.id() + " produced shape " + shape_to_string(result.shape) +
                       ", expected " + shape_to_string(out_info.shape));
        env[out_name] = quant ? fake_quantize(result, out_info.format) : std::move(result);
    }
    return env;
}

Tensor Executor::run(const Tensor& input) const {
    if (g_.outputs.empty()) exec_error("graph has no outputs");
    auto env = run_env({input});
    return env.at(g_.outputs.front());
}

Tensor run_float(const Graph& g, const Tensor& input) {
    return Executor(g, {ExecMode::Float}).run(input);
}

Tensor run_quantized(const Graph& g, const Tensor& input) {
    return Executor(g, {ExecMode::Quantized}).run(input);
}

namespace {

// Per-element Welford accumulator for one value.
struct WelfordVec {
    std::int64_t n = 0;
    std::vector<double> mean;
    std::vector<double> m2;
    double max_abs = 0;

    void init(std::size_t numel) {
        mean.assign(numel, 0.0);
        m2.assign(numel, 0.0);
    }
    void push(const Tensor& t) {
        if (mean.empty()) init(t.data.size());
        ++n;
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const double x = t.data[i];
            max_abs = std::max(max_abs, std::fabs(x));
            const double d = x - mean[i];
            mean[i] += d / static_cast<double>(n);
            m2[i] += d * (x - mean[i]);
        }
    }
    // Chan et al. parallel merge; merge order is fixed by worker index.
    void merge(const WelfordVec& o) {
        if (o.n == 0) return;
        if (n == 0) {
            *this = o;
            return;
        }
        const double na = static_cast<double>(n), nb = static_cast<double>(o.n);
        for (std::size_t i = 0; i < mean.size(); ++i) {
            const double delta = o.mean[i] - mean[i];
            mean[i] += delta * nb / (na + nb);
            m2[i] += o.m2[i] + delta * delta * na * nb / (na + nb);
        }
        max_abs = std::max(max_abs, o.max_abs);
        n += o.n;
    }
    ValueStats finalize() const {
        ValueStats s;
        s.sample_count = n;
        if (n == 0 || mean.empty()) return s;
        double msum = 0, vsum = 0;
        for (std::size_t i = 0; i < mean.size(); ++i) {
            msum += mean[i];
            vsum += m2[i] / static_cast<double>(n);  // population variance
        }
        s.mean = msum / static_cast<double>(mean.size());
        s.variance = vsum / static_cast<double>(mean.size());
        s.max_abs = max_abs;
        return s;
    }
};

template <class Fn>
void parallel_chunks(std::size_t count, int workers, Fn&& fn) {
    workers = std::max(1, workers);
    if (workers == 1 || count < 2) {
        fn(0, 0, count);
        return;
    }
    const std::size_t w = std::min<std::size_t>(workers, count);
    std::vector<std::thread> threads;
    const std::size_t chunk = (count + w - 1) / w;
    for (std::size_t t = 0; t < w; ++t) {
        const std::size_t lo = t * chunk;
        const std::size_t hi = std::min(count, lo + chunk);
        if (lo >= hi) break;
        threads.emplace_back([&, t, lo, hi] { fn(t, lo, hi); });
    }
    for (auto& th : threads) th.join();
}

}  // namespace

ProfileStats profile(const Graph& g, const Dataset& d, int workers) {
    if (d.inputs.empty()) throw std::invalid_argument("profile: empty dataset");
    Executor exec(g, {ExecMode::Float});

    const std::size_t nworkers = std::max(1, workers);
    std::vector<std::map<std::string, WelfordVec>> acc(nworkers);
    parallel_chunks(d.inputs.size(), workers, [&](std::size_t w, std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            auto env = exec.run_env({d.inputs[i]});
            for (auto& [name, tensor] : env) acc[w][name].push(tensor);
        }
    });
    for (std::size_t w = 1; w < acc.size(); ++w)
        for (auto& [name, vec] : acc[w]) acc[0][name].merge(vec);

    ProfileStats stats;
    for (auto& [name, vec] : acc[0]) stats.per_value[name] = vec.finalize();
    return stats;
}

Graph with_stats(const Graph& g, const ProfileStats& stats) {
    Graph out = g;
    for (const auto& [name, s] : stats.per_value) {
        if (!out.has_value(name)) continue;
        auto& info = out.value(name);
        info.mean = s.mean;
        info.variance = s.variance;
        info.max_abs = s.max_abs;
    }
    return out;
}

double model_avg_bitwidth(const Graph& g) {
    double bits = 0, elems = 0;
    for (const auto& [name, info] : g.values) {
        const double n = static_cast<double>(shape_numel(info.shape));
        if (n == 0) continue;
        bits += n * boost::rational_cast<double>(avg_bitwidth(info.format));
        elems += n;
    }
    return elems > 0 ? bits / elems : 0.0;
}

EvalMetrics eval_accuracy(const Graph& g, const Dataset& d, ExecMode mode, int workers) {
    if (d.inputs.empty()) throw std::invalid_argument("eval_accuracy: empty dataset");
    if (d.labels.size() != d.inputs.size())
        throw std::invalid_argument("eval_accuracy: inputs and labels differ in length");
    Executor exec(g, {mode});

    std::vector<std::int64_t> correct(std::max(1, workers), 0);
    std::atomic<bool> label_error{false};
    parallel_chunks(d.inputs.size(), workers, [&](std::size_t w, std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            Tensor out = exec.run(d.inputs[i]);
            if (d.labels[i] < 0 || d.labels[i] >= out.numel()) {
                label_error = true;
                return;
            }
            std::int64_t best = 0;
            for (std::int64_t j = 1; j < out.numel(); ++j)
                if (out[j] > out[best]) best = j;
            if (best == d.labels[i]) ++correct[w];
        }
    });
    if (label_error) throw std::out_of_range("eval_accuracy: label out of range");

    EvalMetrics m;
    m.sample_count = static_cast<std::int64_t>(d.inputs.size());
    std::int64_t total = 0;
    for (auto c : correct) total += c;
    m.accuracy = static_cast<double>(total) / static_cast<double>(m.sample_count);
    m.avg_bitwidth_model = model_avg_bitwidth(g);
    return m;
}

}  // namespace mxflow
