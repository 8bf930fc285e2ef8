#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mxflow/emulate.hpp"
#include "mxflow/quantize.hpp"
#include "support/graph_gen.hpp"

using namespace mxflow;

namespace {

std::mt19937_64 rng(991);

Tensor randn(Shape shape, double scale = 1.0) {
    std::normal_distribution<double> dist(0.0, scale);
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& v : t.data) v = dist(rng);
    return t;
}

QuantConfig uniform_config(const Graph& g, const FormatSpec& spec) {
    QuantConfig cfg;
    for (const auto& [name, info] : g.values) cfg.formats[name] = spec;
    return cfg;
}

Dataset gaussian_dataset(std::int64_t n, Shape shape, std::int64_t classes) {
    Dataset d;
    std::uniform_int_distribution<std::int64_t> label(0, classes - 1);
    for (std::int64_t i = 0; i < n; ++i) {
        d.inputs.push_back(randn(shape));
        d.labels.push_back(label(rng));
    }
    return d;
}

}  // namespace

TEST_CASE("data-movement kinds are identities") {
    Graph g = testsupport::chain_graph(1);
    g.ops[0].kind = OpKind::Reorder;
    Tensor x = randn({4, 4});
    CHECK(run_float(g, x).data == x.data);
    g.ops[0].kind = OpKind::Output;
    CHECK(run_float(g, x).data == x.data);
}

TEST_CASE("linear with the identity weight and zero bias is the identity") {
    Graph g;
    g.name = "id";
    ValueInfo xi;
    xi.shape = {1, 4};
    g.values["x"] = xi;
    g.inputs.push_back("x");
    ValueInfo wi;
    wi.shape = {4, 4};
    wi.is_param = true;
    Tensor eye = Tensor::zeros({4, 4});
    for (int i = 0; i < 4; ++i) eye.at(i, i) = 1.0;
    wi.data = std::make_shared<const Tensor>(eye);
    g.values["y.weight"] = wi;
    ValueInfo bi;
    bi.shape = {4};
    bi.is_param = true;
    bi.data = std::make_shared<const Tensor>(Tensor::zeros({4}));
    g.values["y.bias"] = bi;
    ValueInfo yi;
    yi.shape = {1, 4};
    g.values["y"] = yi;
    g.ops.push_back(Operation{
        OpKind::Linear, {"x"}, {"y"}, {{"weight", "y.weight"}, {"bias", "y.bias"}}, {}});
    g.outputs.push_back("y");

    Tensor x = randn({1, 4});
    CHECK(run_float(g, x).data == x.data);
}

TEST_CASE("two-layer MLP matches hand-computed matrix algebra") {
    Graph g = testsupport::mlp_graph(rng, 6, 5, 3);
    const Tensor& w1 = *g.value("x1.weight").data;
    const Tensor& b1 = *g.value("x1.bias").data;
    const Tensor& w2 = *g.value("x3.weight").data;
    const Tensor& b2 = *g.value("x3.bias").data;
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = randn({1, 6});
        Tensor got = run_float(g, x);
        for (std::int64_t c = 0; c < 3; ++c) {
            double want = b2.data[c];
            for (std::int64_t j = 0; j < 5; ++j) {
                double hj = b1.data[j];
                for (std::int64_t i = 0; i < 6; ++i) hj += x.data[i] * w1.at(j, i);
                hj = std::max(hj, 0.0);
                want += hj * w2.at(c, j);
            }
            CHECK(got.data[c] == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("all-Float32 emulation is bitwise identical to the reference") {
    Graph g = testsupport::mlp_graph(rng, 8, 6, 2);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor x = randn({1, 8});
        CHECK(run_quantized(g, x).data == run_float(g, x).data);
    }
}

TEST_CASE("quantized linear equals the composed fake-quantize oracle") {
    auto spec = FormatSpec::mxint({16, 2}, 8, 7);
    Graph g;
    g.name = "one";
    ValueInfo xi;
    xi.shape = {1, 32};
    xi.format = spec;
    g.values["x"] = xi;
    g.inputs.push_back("x");
    ValueInfo wi;
    wi.shape = {4, 32};
    wi.format = spec;
    wi.is_param = true;
    Tensor w = randn({4, 32});
    wi.data = std::make_shared<const Tensor>(w);
    g.values["y.weight"] = wi;
    ValueInfo bi;
    bi.shape = {4};
    bi.format = spec;
    bi.is_param = true;
    Tensor b = randn({4});
    bi.data = std::make_shared<const Tensor>(b);
    g.values["y.bias"] = bi;
    ValueInfo yi;
    yi.shape = {1, 4};
    yi.format = spec;
    g.values["y"] = yi;
    g.ops.push_back(Operation{
        OpKind::Linear, {"x"}, {"y"}, {{"weight", "y.weight"}, {"bias", "y.bias"}}, {}});
    g.outputs.push_back("y");

    Tensor x = randn({1, 32});
    Tensor got = run_quantized(g, x);

    // Oracle: fake-quantize every operand, run the algebra directly,
    // fake-quantize the result.
    Tensor xq = fake_quantize(x, spec);
    Tensor wq = fake_quantize(w, spec);
    Tensor bq = fake_quantize(b, spec);
    Tensor want = Tensor::zeros({1, 4});
    for (std::int64_t c = 0; c < 4; ++c) {
        double acc = bq.data[c];
        for (std::int64_t i = 0; i < 32; ++i) acc += xq.data[i] * wq.at(c, i);
        want.data[c] = acc;
    }
    want = fake_quantize(want, spec);
    CHECK(got.data == want.data);
}

TEST_CASE("high-precision MXInt tracks the float reference closely") {
    Graph g = testsupport::mlp_graph(rng, 16, 12, 4);
    Graph q = annotate(g, uniform_config(g, FormatSpec::mxint({16, 2}, 8, 20)));
    Executor ef(g, {ExecMode::Float});
    Executor eq(q, {ExecMode::Quantized});
    for (int trial = 0; trial < 100; ++trial) {
        Tensor x = randn({1, 16});
        Tensor yf = ef.run(x);
        Tensor yq = eq.run(x);
        double num = 0, den = 0;
        for (std::int64_t i = 0; i < yf.numel(); ++i) {
            num = std::max(num, std::fabs(yq[i] - yf[i]));
            den = std::max(den, std::fabs(yf[i]));
        }
        CHECK(num <= 1e-3 * std::max(den, 1e-12));
    }
}

TEST_CASE("output error is monotone in mantissa width") {
    Graph g = testsupport::mlp_graph(rng, 12, 10, 3);
    std::vector<Tensor> xs;
    for (int i = 0; i < 32; ++i) xs.push_back(randn({1, 12}));
    Executor ef(g, {ExecMode::Float});

    auto mean_err = [&](int m) {
        Graph q = annotate(g, uniform_config(g, FormatSpec::mxint({16, 2}, 8, m)));
        Executor eq(q, {ExecMode::Quantized});
        double total = 0;
        for (const auto& x : xs) {
            Tensor yf = ef.run(x);
            Tensor yq = eq.run(x);
            for (std::int64_t i = 0; i < yf.numel(); ++i) total += std::fabs(yq[i] - yf[i]);
        }
        return total / static_cast<double>(xs.size());
    };

    double prev = mean_err(2);
    for (int m = 4; m <= 20; m += 2) {
        double cur = mean_err(m);
        CHECK(cur <= prev + 1e-12);
        prev = cur;
    }
}

TEST_CASE("softmax and rmsnorm kernel laws") {
    Graph g = testsupport::chain_graph(1, {8, 16});
    g.ops[0].kind = OpKind::Softmax;
    for (int trial = 0; trial < 20; ++trial) {
        Tensor y = run_float(g, randn({8, 16}, 3.0));
        for (std::int64_t r = 0; r < 8; ++r) {
            double sum = 0;
            for (std::int64_t c = 0; c < 16; ++c) sum += y.at(r, c);
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
    }

    Graph h = testsupport::chain_graph(1, {8, 16});
    h.ops[0].kind = OpKind::RmsNorm;
    Executor ex(h, {ExecMode::Float, /*rmsnorm_eps=*/0.0});
    for (int trial = 0; trial < 20; ++trial) {
        Tensor y = ex.run(randn({8, 16}, 2.0));
        for (std::int64_t r = 0; r < 8; ++r) {
            double ms = 0;
            for (std::int64_t c = 0; c < 16; ++c) ms += y.at(r, c) * y.at(r, c);
            CHECK(ms / 16.0 == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

TEST_CASE("profile statistics") {
    Graph g = testsupport::mlp_graph(rng, 4, 3, 2);

    SUBCASE("constant dataset has zero variance") {
        Dataset d;
        Tensor x = randn({1, 4});
        for (int i = 0; i < 10; ++i) {
            d.inputs.push_back(x);
            d.labels.push_back(0);
        }
        auto stats = profile(g, d);
        CHECK(stats.per_value.at("x").variance == doctest::Approx(0.0));
        CHECK(stats.per_value.at("x3").variance == doctest::Approx(0.0));
    }
    SUBCASE("single sample has zero variance everywhere") {
        Dataset d;
        d.inputs.push_back(randn({1, 4}));
        d.labels.push_back(0);
        auto stats = profile(g, d);
        for (const auto& [name, s] : stats.per_value) CHECK(s.variance == 0.0);
    }
    SUBCASE("two samples match the closed form") {
        Dataset d;
        d.inputs.push_back(Tensor({1, 4}, {1.0, 2.0, 3.0, 4.0}));
        d.inputs.push_back(Tensor({1, 4}, {3.0, 2.0, 1.0, 0.0}));
        d.labels = {0, 0};
        auto stats = profile(g, d);
        // Per element: var = ((a-b)/2)^2; averaged over 4 elements.
        const double want = (1.0 + 0.0 + 1.0 + 4.0) / 4.0;
        CHECK(stats.per_value.at("x").variance == doctest::Approx(want).epsilon(1e-12));
        CHECK(stats.per_value.at("x").mean == doctest::Approx(2.0));
        CHECK(stats.per_value.at("x").max_abs == doctest::Approx(4.0));
    }
    SUBCASE("matches a two-pass computation on random data") {
        Dataset d;
        for (int i = 0; i < 50; ++i) {
            d.inputs.push_back(randn({1, 4}));
            d.labels.push_back(0);
        }
        auto stats = profile(g, d);
        // Two-pass oracle on the input value.
        std::vector<double> mean(4, 0.0);
        for (const auto& x : d.inputs)
            for (int i = 0; i < 4; ++i) mean[i] += x.data[i];
        for (auto& m : mean) m /= 50.0;
        double var = 0;
        for (const auto& x : d.inputs)
            for (int i = 0; i < 4; ++i) var += (x.data[i] - mean[i]) * (x.data[i] - mean[i]);
        var /= (50.0 * 4.0);
        CHECK(stats.per_value.at("x").variance ==
              doctest::Approx(var).epsilon(1e-10));
    }
    SUBCASE("covers every non-parameter value") {
        Dataset d;
        d.inputs.push_back(randn({1, 4}));
        d.labels.push_back(0);
        auto stats = profile(g, d);
        for (const auto& [name, info] : g.values) {
            if (info.is_param) continue;
            CHECK(stats.per_value.count(name) == 1);
        }
    }
    SUBCASE("parallel profiling matches sequential") {
        Dataset d;
        for (int i = 0; i < 37; ++i) {
            d.inputs.push_back(randn({1, 4}));
            d.labels.push_back(0);
        }
        auto s1 = profile(g, d, 1);
        auto s4 = profile(g, d, 4);
        for (const auto& [name, s] : s1.per_value) {
            CHECK(s4.per_value.at(name).variance ==
                  doctest::Approx(s.variance).epsilon(1e-10));
            CHECK(s4.per_value.at(name).max_abs == s.max_abs);
        }
    }
    SUBCASE("empty dataset is an error") {
        CHECK_THROWS(profile(g, Dataset{}));
    }
    SUBCASE("with_stats writes the numbers onto the graph") {
        Dataset d;
        d.inputs.push_back(randn({1, 4}));
        d.labels.push_back(0);
        auto stats = profile(g, d);
        Graph gs = with_stats(g, stats);
        CHECK(gs.value("x").variance.has_value());
        CHECK(*gs.value("x").max_abs == stats.per_value.at("x").max_abs);
    }
}

TEST_CASE("accuracy evaluation") {
    SUBCASE("random-weight model on a balanced 2-class set sits near chance") {
        Graph g = testsupport::mlp_graph(rng, 8, 6, 2);
        Dataset d;
        for (int i = 0; i < 200; ++i) {
            d.inputs.push_back(randn({1, 8}));
            d.labels.push_back(i % 2);
        }
        auto m = eval_accuracy(g, d, ExecMode::Float);
        CHECK(m.sample_count == 200);
        CHECK(m.accuracy >= 0.35);
        CHECK(m.accuracy <= 0.65);
    }
    SUBCASE("Float32 quantized mode reports identical metrics") {
        Graph g = testsupport::mlp_graph(rng, 8, 6, 2);
        Dataset d = gaussian_dataset(50, {1, 8}, 2);
        auto mf = eval_accuracy(g, d, ExecMode::Float);
        auto mq = eval_accuracy(g, d, ExecMode::Quantized);
        CHECK(mf.accuracy == mq.accuracy);
        CHECK(mf.avg_bitwidth_model == mq.avg_bitwidth_model);
        CHECK(mf.avg_bitwidth_model == 32.0);  // everything Float32
    }
    SUBCASE("label out of range") {
        Graph g = testsupport::mlp_graph(rng, 8, 6, 2);
        Dataset d;
        d.inputs.push_back(randn({1, 8}));
        d.labels.push_back(7);  // only 2 classes
        CHECK_THROWS_AS(eval_accuracy(g, d, ExecMode::Float), std::out_of_range);
    }
    SUBCASE("model bitwidth is the size-weighted mean") {
        Graph g = testsupport::mlp_graph(rng, 8, 6, 2);
        QuantConfig cfg;
        for (const auto& [name, info] : g.values)
            cfg.formats[name] = FormatSpec::mxint({16, 2}, 8, 3);
        Graph q = annotate(g, cfg);
        CHECK(model_avg_bitwidth(q) == doctest::Approx(4.25));  // 8/32 + 3 + 1
    }
}
