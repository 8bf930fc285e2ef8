#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "mxflow/ir_text.hpp"
#include "mxflow/model_io.hpp"

using namespace mxflow;

namespace {

std::vector<double> iota_blob(std::size_t n) {
    std::vector<double> b(n);
    for (std::size_t i = 0; i < n; ++i) b[i] = 0.25 * static_cast<double>(i % 17) - 1.0;
    return b;
}

const char* kMlpManifest = R"({
  "name": "toy",
  "inputs": [{"name": "x", "shape": [1, 8]}],
  "ops": [
    {"kind": "flatten", "args": ["x"], "results": ["x0"]},
    {"kind": "linear", "args": ["x0"], "results": ["x1"],
     "params": {"weight": {"shape": [4, 8], "offset": 0},
                "bias":   {"shape": [4],    "offset": 32}}},
    {"kind": "relu", "args": ["x1"], "results": ["x2"]},
    {"kind": "linear", "args": ["x2"], "results": ["x3"],
     "params": {"weight": {"shape": [2, 4], "offset": 36}}}
  ],
  "outputs": ["x3"]
})";

}  // namespace

TEST_CASE("blob round trip") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "mxflow_blob_test";
    fs::create_directories(dir);
    std::vector<double> vals = {0.5, -1.25, 3.0, 0.0, 1e-3f};
    write_f32_blob(dir / "x.bin", vals);
    auto back = read_f32_blob(dir / "x.bin");
    REQUIRE(back.size() == vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i)
        CHECK(back[i] == doctest::Approx(vals[i]).epsilon(1e-7));

    write_u32_blob(dir / "y.bin", {0, 1, 2, 40000});
    CHECK(read_u32_blob(dir / "y.bin") == std::vector<std::int64_t>{0, 1, 2, 40000});
}

TEST_CASE("importing a 2-layer MLP manifest") {
    Graph g = import_model_from_json(kMlpManifest, iota_blob(64));
    CHECK(g.ops.size() == 4);
    CHECK(g.ops[0].kind == OpKind::Flatten);
    CHECK(g.ops[1].kind == OpKind::Linear);
    CHECK(g.ops[3].kind == OpKind::Linear);
    CHECK(g.value("x3").shape == Shape{1, 2});
    CHECK(g.value("x1.weight").is_param);
    CHECK(g.value("x1.weight").data->numel() == 32);
    CHECK(*g.value("x1.bias").blob_offset == 32);
    // Everything starts in Float32.
    for (const auto& [name, info] : g.values) CHECK(info.format.is_float32());
    CHECK(validate(g).empty());
}

TEST_CASE("stream-order mismatches insert reorder ops") {
    // Attention-style fragment: scores = q . k^T with a column-major
    // consumer on the second operand.
    const char* manifest = R"({
      "name": "attn",
      "inputs": [{"name": "q", "shape": [4, 8]}, {"name": "k", "shape": [4, 8]}],
      "ops": [
        {"kind": "transpose", "args": ["k"], "results": ["kt"], "out_order": "col_major"},
        {"kind": "matmul", "args": ["q", "kt"], "results": ["scores"]},
        {"kind": "softmax", "args": ["scores"], "results": ["probs"]}
      ],
      "outputs": ["probs"]
    })";
    Graph g = import_model_from_json(manifest, {});
    // kt streams col-major but matmul consumes row-major: one reorder.
    REQUIRE(g.ops.size() == 4);
    CHECK(g.ops[0].kind == OpKind::Transpose);
    CHECK(g.ops[1].kind == OpKind::Reorder);
    CHECK(g.ops[2].kind == OpKind::MatMul);
    CHECK(g.value("kt").order == StreamOrder::ColMajor);
    CHECK(g.value(g.ops[1].results[0]).order == StreamOrder::RowMajor);
    CHECK(validate(g).empty());
    // The printed IR round-trips with the reorder in place.
    CHECK(structurally_equal(parse_ir(print_ir(g)), g));
}

TEST_CASE("import errors") {
    SUBCASE("truncated weight blob names the parameter") {
        CHECK_THROWS_WITH_AS(import_model_from_json(kMlpManifest, iota_blob(20)),
                             doctest::Contains("x1.bi"), ImportError);  // first offender
        CHECK_THROWS_WITH_AS(import_model_from_json(kMlpManifest, iota_blob(38)),
                             doctest::Contains("x3.weight"), ImportError);
    }
    SUBCASE("schema violations") {
        CHECK_THROWS_AS(import_model_from_json(R"({"name": "x"})", {}), ImportError);
        CHECK_THROWS_AS(import_model_from_json("not json at all", {}), ImportError);
        CHECK_THROWS_WITH_AS(
            import_model_from_json(
                R"({"name":"x","inputs":[{"name":"a","shape":[0]}],"ops":[],"outputs":[]})", {}),
            doctest::Contains("positive"), ImportError);
    }
    SUBCASE("unknown op kind") {
        const char* manifest = R"({
          "name": "bad", "inputs": [{"name": "x", "shape": [2, 2]}],
          "ops": [{"kind": "conv9000", "args": ["x"], "results": ["y"]}],
          "outputs": ["y"]
        })";
        CHECK_THROWS_WITH_AS(import_model_from_json(manifest, {}),
                             doctest::Contains("conv9000"), ImportError);
    }
    SUBCASE("undefined output") {
        const char* manifest = R"({
          "name": "bad", "inputs": [{"name": "x", "shape": [2, 2]}],
          "ops": [], "outputs": ["nope"]
        })";
        CHECK_THROWS_AS(import_model_from_json(manifest, {}), ImportError);
    }
}

TEST_CASE("weights rebind onto parsed IR through offsets") {
    auto blob = iota_blob(64);
    Graph g = import_model_from_json(kMlpManifest, blob);
    Graph parsed = parse_ir(print_ir(g));
    CHECK(!parsed.value("x1.weight").data);
    Graph bound = bind_weights(parsed, blob);
    REQUIRE(bound.value("x1.weight").data);
    CHECK(bound.value("x1.weight").data->data == g.value("x1.weight").data->data);
    CHECK(bound.value("x3.weight").data->data == g.value("x3.weight").data->data);
}

TEST_CASE("dataset files round trip") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "mxflow_ds_test";
    fs::create_directories(dir);

    Dataset d;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> dist;
    for (int i = 0; i < 6; ++i) {
        Tensor t = Tensor::zeros({1, 4});
        for (auto& v : t.data) v = dist(rng);
        d.inputs.push_back(t);
        d.labels.push_back(i % 2);
    }
    d.split = DatasetSplit::Evaluation;
    save_dataset(dir / "eval.json", d, "eval");
    Dataset back = load_dataset(dir / "eval.json");
    REQUIRE(back.size() == d.size());
    CHECK(back.split == DatasetSplit::Evaluation);
    CHECK(back.labels == d.labels);
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::int64_t j = 0; j < 4; ++j)
            CHECK(back.inputs[i][j] == doctest::Approx(d.inputs[i][j]).epsilon(1e-7));
}

TEST_CASE("quant config files") {
    QuantConfig cfg;
    cfg.formats["x1"] = FormatSpec::mxint({16, 2}, 8, 5);
    cfg.formats["x1.weight"] = FormatSpec::mxint({16, 2}, 8, 3);
    cfg.tiles["x1"] = {4, 2};
    QuantConfig back = quant_config_from_json(quant_config_to_json(cfg));
    CHECK(back.formats == cfg.formats);
    CHECK(back.tiles == cfg.tiles);
    CHECK_THROWS(quant_config_from_json(R"js({"formats": {"x": "NotAFormat(1)"}})js"));
}
