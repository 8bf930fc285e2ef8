#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "mxflow/ir.hpp"
#include "mxflow/ir_text.hpp"
#include "support/graph_gen.hpp"

using namespace mxflow;

TEST_CASE("parsing the quantized toy listing") {
    const char* text = R"(toy():
    x1: MXInt((16,2),8,7) = linear(x0: MXInt((16,2),8,7))
      [weight: MXInt((16,2),8,3),
      bias: MXInt((16,2),8,3)] {hw_template: mx_linear}
    return x1
)";
    Graph g = parse_ir(text);
    CHECK(g.name == "toy");
    REQUIRE(g.ops.size() == 1);
    const Operation& op = g.ops[0];
    CHECK(op.kind == OpKind::Linear);
    REQUIRE(op.params.size() == 2);
    CHECK(op.params[0].first == "weight");
    CHECK(op.params[1].first == "bias");
    CHECK(g.value("x1.weight").format == FormatSpec::mxint({16, 2}, 8, 3));
    CHECK(g.value("x1.bias").format == FormatSpec::mxint({16, 2}, 8, 3));
    CHECK(g.value("x1").format == FormatSpec::mxint({16, 2}, 8, 7));
    // x0 was introduced by its first annotated use.
    REQUIRE(g.inputs.size() == 1);
    CHECK(g.inputs[0] == "x0");
    CHECK(g.value("x0").format == FormatSpec::mxint({16, 2}, 8, 7));
    CHECK(g.outputs == std::vector<std::string>{"x1"});
    CHECK(op.attrs.at("hw_template") == "mx_linear");
}

TEST_CASE("empty graph") {
    Graph g = parse_ir("toy(): return");
    CHECK(g.name == "toy");
    CHECK(g.ops.empty());
    CHECK(g.inputs.empty());
    CHECK(g.outputs.empty());
}

TEST_CASE("SSA violations are parse errors") {
    CHECK_THROWS_WITH_AS(parse_ir("g():\n  x: Float32[2,2] = relu(x)\n  return x"),
                         doctest::Contains("use-before-def"), ParseError);
    CHECK_THROWS_WITH_AS(parse_ir("g(a: Float32[2,2]):\n  x: Float32[2,2] = relu(a)\n"
                                  "  x: Float32[2,2] = silu(a)\n  return x"),
                         doctest::Contains("more than once"), ParseError);
    CHECK_THROWS_WITH_AS(parse_ir("g(a: Float32[2,2]):\n  x: Float32[2,2] = frobnicate(a)\n"
                                  "  return x"),
                         doctest::Contains("unknown operator kind"), ParseError);
}

TEST_CASE("parse errors carry line and column") {
    try {
        parse_ir("g(a: Float32[2,2]):\n  x: Float32[2,2] = relu(a\n  return x");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line == 3);  // ')' missing, 'return' found instead
    }
}

TEST_CASE("print round-trips structurally and deterministically") {
    std::mt19937_64 rng(7);
    testsupport::GraphGenOptions opts;
    opts.with_opaque_attrs = true;
    for (int trial = 0; trial < 300; ++trial) {
        Graph g = testsupport::random_graph(rng, opts);
        std::string text = print_ir(g);
        Graph back = parse_ir(text);
        CHECK(structurally_equal(g, back));
        CHECK(print_ir(back) == text);  // canonical form is a fixed point
    }
}

TEST_CASE("opaque attributes are preserved verbatim") {
    const char* text = R"(g(a: Float32[2,2]):
  x: Float32[2,2]{calibration: (16,[2,3]), note: keep me} = relu(a: Float32) {vendor: acme_v2, zeta: 0.5}
  return x
)";
    Graph g = parse_ir(text);
    CHECK(g.value("x").extra.at("note") == "keep me");
    CHECK(g.value("x").extra.at("calibration") == "(16,[2,3])");
    CHECK(g.ops[0].attrs.at("vendor") == "acme_v2");
    Graph back = parse_ir(print_ir(g));
    CHECK(back.value("x").extra == g.value("x").extra);
    CHECK(back.ops[0].attrs == g.ops[0].attrs);
}

TEST_CASE("validate accepts consistent graphs") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        Graph g = testsupport::random_graph(rng);
        auto diags = validate(g);
        CAPTURE(print_ir(g));
        if (!diags.empty()) CAPTURE(diags[0]);
        CHECK(diags.empty());
    }
}

TEST_CASE("validate reports shape mismatches naming the values") {
    Graph g = parse_ir(R"(g(a: Float32[1,8]):
  y: Float32[1,4] = linear(a: Float32) [weight: Float32[4,6]]
  return y
)");
    auto diags = validate(g);
    REQUIRE(!diags.empty());
    bool found = false;
    for (const auto& d : diags)
        if (d.find("inner dimension mismatch") != std::string::npos &&
            d.find("a") != std::string::npos && d.find("y.weight") != std::string::npos)
            found = true;
    CHECK(found);
}

TEST_CASE("validate reports arity and parameter slot misuse") {
    Graph g = testsupport::chain_graph(1);
    g.ops[0].args.push_back("x0");  // relu takes one argument
    CHECK(!validate(g).empty());

    Graph h = testsupport::chain_graph(1);
    h.values["x1.weight"] = h.values["x0"];
    h.ops[0].params.emplace_back("weight", "x1.weight");  // relu takes no params
    CHECK(!validate(h).empty());
}

TEST_CASE("cycles are diagnosed") {
    Graph g = testsupport::chain_graph(3);
    // Rewire the first op to consume the last result: x1 = relu(x3).
    g.ops[0].args[0] = "x3";
    auto diags = validate(g);
    bool found = false;
    for (const auto& d : diags)
        if (d.find("cycle") != std::string::npos) found = true;
    CHECK(found);
    CHECK_THROWS_AS(topo_order(g), std::runtime_error);
}

TEST_CASE("topological order") {
    SUBCASE("chain") {
        Graph g = testsupport::chain_graph(3);
        CHECK(topo_order(g) == std::vector<std::size_t>{0, 1, 2});
    }
    SUBCASE("diamond: producer first, join last") {
        Graph g = testsupport::diamond_graph(2);
        auto order = topo_order(g);
        CHECK(order.front() == 0);
        CHECK(g.ops[order.back()].kind == OpKind::Add);
    }
    SUBCASE("random DAGs satisfy the edge check") {
        std::mt19937_64 rng(13);
        for (int trial = 0; trial < 100; ++trial) {
            Graph g = testsupport::random_graph(rng);
            auto order = topo_order(g);
            std::map<std::string, std::size_t> pos;  // producer position in order
            for (std::size_t i = 0; i < order.size(); ++i)
                for (const auto& r : g.ops[order[i]].results) pos[r] = i;
            for (std::size_t i = 0; i < order.size(); ++i)
                for (const auto& a : g.ops[order[i]].args)
                    if (pos.count(a)) CHECK(pos[a] < i);
        }
    }
    SUBCASE("deterministic tie-break by declaration order") {
        Graph g = testsupport::diamond_graph(1);
        auto a = topo_order(g);
        auto b = topo_order(g);
        CHECK(a == b);
    }
}

TEST_CASE("annotate") {
    std::mt19937_64 rng(17);
    Graph g = testsupport::random_graph(rng);

    SUBCASE("empty config leaves the graph unchanged") {
        CHECK(structurally_equal(annotate(g, {}), g));
    }
    SUBCASE("full coverage removes every Float32 value") {
        QuantConfig cfg;
        for (const auto& [name, info] : g.values)
            cfg.formats[name] = FormatSpec::mxint({16, 2}, 8, 5);
        Graph q = annotate(g, cfg);
        for (const auto& [name, info] : q.values) CHECK(!info.format.is_float32());
    }
    SUBCASE("unknown value names are rejected") {
        QuantConfig cfg;
        cfg.formats["not_a_value"] = FormatSpec::float32();
        CHECK_THROWS_AS(annotate(g, cfg), std::invalid_argument);
    }
    SUBCASE("topology is never modified") {
        QuantConfig cfg;
        for (const auto& [name, info] : g.values)
            cfg.formats[name] = FormatSpec::mxint({16, 2}, 8, 3);
        Graph q = annotate(g, cfg);
        REQUIRE(q.ops.size() == g.ops.size());
        for (std::size_t i = 0; i < g.ops.size(); ++i) {
            CHECK(q.ops[i].args == g.ops[i].args);
            CHECK(q.ops[i].results == g.ops[i].results);
        }
    }
}
