#include "mxflow/model_io.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace mxflow {

namespace {

using nlohmann::json;

[[noreturn]] void import_fail(const std::string& what) { throw ImportError("import: " + what); }

json parse_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) import_fail("cannot open '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        import_fail("'" + path.string() + "' is not valid JSON: " + e.what());
    }
    return j;
}

Shape shape_from_json(const json& j, const std::string& where) {
    if (!j.is_array()) import_fail(where + ": shape must be an array");
    Shape s;
    for (const auto& d : j) {
        if (!d.is_number_integer() || d.get<std::int64_t>() < 1)
            import_fail(where + ": shape entries must be positive integers");
        s.push_back(d.get<std::int64_t>());
    }
    return s;
}

StreamOrder order_from_json(const json& j, const std::string& where) {
    const std::string s = j.get<std::string>();
    if (s == "row_major") return StreamOrder::RowMajor;
    if (s == "col_major") return StreamOrder::ColMajor;
    import_fail(where + ": bad stream order '" + s + "'");
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

}  // namespace

std::vector<double> read_f32_blob(const std::filesystem::path& path) {
    auto bytes = read_bytes(path);
    if (bytes.size() % 4 != 0)
        throw std::runtime_error("'" + path.string() + "' is not a float32 blob");
    std::vector<double> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::uint32_t u = static_cast<std::uint32_t>(bytes[4 * i]) |
                          (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                          (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                          (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
        float f;
        std::memcpy(&f, &u, 4);
        out[i] = static_cast<double>(f);
    }
    return out;
}

void write_f32_blob(const std::filesystem::path& path, const std::vector<double>& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    for (double v : values) {
        float f = static_cast<float>(v);
        std::uint32_t u;
        std::memcpy(&u, &f, 4);
        const char b[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                           static_cast<char>((u >> 16) & 0xff),
                           static_cast<char>((u >> 24) & 0xff)};
        out.write(b, 4);
    }
}

std::vector<std::int64_t> read_u32_blob(const std::filesystem::path& path) {
    auto bytes = read_bytes(path);
    if (bytes.size() % 4 != 0)
        throw std::runtime_error("'" + path.string() + "' is not a uint32 blob");
    std::vector<std::int64_t> out(bytes.size() / 4);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<std::int64_t>(static_cast<std::uint32_t>(bytes[4 * i]) |
                                           (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                                           (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                                           (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24));
    return out;
}

void write_u32_blob(const std::filesystem::path& path, const std::vector<std::int64_t>& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    for (auto v : values) {
        const std::uint32_t u = static_cast<std::uint32_t>(v);
        const char b[4] = {static_cast<char>(u & 0xff), static_cast<char>((u >> 8) & 0xff),
                           static_cast<char>((u >> 16) & 0xff),
                           static_cast<char>((u >> 24) & 0xff)};
        out.write(b, 4);
    }
}

namespace {

Graph import_impl(const json& manifest, const std::vector<double>& blob) {
    if (!manifest.is_object()) import_fail("manifest must be a JSON object");
    for (const char* key : {"name", "inputs", "ops", "outputs"})
        if (!manifest.contains(key)) import_fail(std::string("manifest is missing '") + key + "'");

    Graph g;
    g.name = manifest.at("name").get<std::string>();

    for (const auto& in : manifest.at("inputs")) {
        if (!in.contains("name") || !in.contains("shape"))
            import_fail("every input needs 'name' and 'shape'");
        const std::string name = in.at("name").get<std::string>();
        ValueInfo info;
        info.shape = shape_from_json(in.at("shape"), "input " + name);
        if (in.contains("order")) info.order = order_from_json(in.at("order"), "input " + name);
        if (g.values.count(name)) import_fail("duplicate value '" + name + "'");
        g.values[name] = std::move(info);
        g.inputs.push_back(name);
    }

    int reorder_count = 0;
    for (const auto& jop : manifest.at("ops")) {
        if (!jop.contains("kind") || !jop.contains("args") || !jop.contains("results"))
            import_fail("every op needs 'kind', 'args' and 'results'");
        const std::string kind_text = jop.at("kind").get<std::string>();
        auto kind = kind_from_name(kind_text);
        if (!kind || *kind == OpKind::Buffer)
            import_fail("unsupported op kind '" + kind_text + "'");

        Operation op;
        op.kind = *kind;
        for (const auto& a : jop.at("args")) op.args.push_back(a.get<std::string>());
        for (const auto& r : jop.at("results")) op.results.push_back(r.get<std::string>());
        if (op.results.size() != 1) import_fail("ops must declare exactly one result");
        const std::string& res = op.results.front();

        const StreamOrder in_order = jop.contains("in_order")
                                         ? order_from_json(jop.at("in_order"), "op " + res)
                                         : StreamOrder::RowMajor;
        const StreamOrder out_order = jop.contains("out_order")
                                          ? order_from_json(jop.at("out_order"), "op " + res)
                                          : StreamOrder::RowMajor;

        // Insert a reorder wherever the producer's streaming order
        // differs from what this op consumes.
        for (auto& a : op.args) {
            if (!g.values.count(a)) import_fail("op " + res + " uses undefined value '" + a + "'");
            if (g.value(a).order != in_order) {
                const std::string rname = a + ".reorder" + std::to_string(reorder_count++);
                Operation r;
                r.kind = OpKind::Reorder;
                r.args.push_back(a);
                r.results.push_back(rname);
                r.attrs["hw_template"] = "mx_reorder";
                ValueInfo rinfo;
                rinfo.shape = g.value(a).shape;
                rinfo.order = in_order;
                g.values[rname] = std::move(rinfo);
                g.ops.push_back(std::move(r));
                a = rname;
            }
        }

        std::map<std::string, Shape> param_shapes;
        if (jop.contains("params")) {
            if (!jop.at("params").is_object()) import_fail("op " + res + ": params must be a map");
            for (const auto& [slot, pj] : jop.at("params").items()) {
                if (!pj.contains("shape") || !pj.contains("offset"))
                    import_fail("parameter '" + res + "." + slot +
                                "' needs 'shape' and 'offset'");
                Shape pshape = shape_from_json(pj.at("shape"), "parameter " + slot);
                const std::int64_t offset = pj.at("offset").get<std::int64_t>();
                const std::int64_t count = shape_numel(pshape);
                if (offset < 0 || offset + count > static_cast<std::int64_t>(blob.size()))
                    import_fail("weight blob too small for parameter '" + res + "." + slot +
                                "': needs [" + std::to_string(offset) + ", " +
                                std::to_string(offset + count) + "), blob has " +
                                std::to_string(blob.size()) + " elements");
                const std::string pref = res + "." + slot;
                if (g.values.count(pref)) import_fail("duplicate value '" + pref + "'");
                ValueInfo pinfo;
                pinfo.shape = pshape;
                pinfo.is_param = true;
                pinfo.blob_offset = offset;
                pinfo.data = std::make_shared<const Tensor>(
                    pshape, std::vector<double>(blob.begin() + offset,
                                                blob.begin() + offset + count));
                g.values[pref] = std::move(pinfo);
                op.params.emplace_back(slot, pref);
                param_shapes[slot] = std::move(pshape);
            }
        }

        std::vector<Shape> arg_shapes;
        for (const auto& a : op.args) arg_shapes.push_back(g.value(a).shape);
        auto inferred = infer_shape(op.kind, arg_shapes, param_shapes);
        if (!inferred.shape) import_fail("op " + res + ": " + inferred.error);

        if (g.values.count(res)) import_fail("duplicate value '" + res + "'");
        ValueInfo rinfo;
        rinfo.shape = *inferred.shape;
        rinfo.order = out_order;
        g.values[res] = std::move(rinfo);
        op.attrs["hw_template"] = "mx_" + std::string(kind_name(op.kind));
        g.ops.push_back(std::move(op));
    }

    for (const auto& out : manifest.at("outputs")) {
        const std::string name = out.get<std::string>();
        if (!g.values.count(name)) import_fail("output '" + name + "' is never defined");
        g.outputs.push_back(name);
    }

    auto diags = validate(g);
    if (!diags.empty()) import_fail("imported graph is invalid: " + diags.front());
    return g;
}

}  // namespace

Graph import_model(const std::filesystem::path& manifest_path,
                   const std::filesystem::path& weights_path) {
    return import_impl(parse_json_file(manifest_path), read_f32_blob(weights_path));
}

Graph import_model_from_json(const std::string& manifest_json, const std::vector<double>& blob) {
    json j;
    try {
        j = json::parse(manifest_json);
    } catch (const json::exception& e) {
        import_fail(std::string("manifest is not valid JSON: ") + e.what());
    }
    return import_impl(j, blob);
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
    json j = parse_json_file(manifest_path);
    for (const char* key : {"count", "input_shape", "data", "labels"})
        if (!j.contains(key))
            throw std::runtime_error("dataset manifest is missing '" + std::string(key) + "'");

    const auto dir = manifest_path.parent_path();
    const std::int64_t count = j.at("count").get<std::int64_t>();
    Shape shape = shape_from_json(j.at("input_shape"), "dataset");
    const std::int64_t per = shape_numel(shape);

    auto data = read_f32_blob(dir / j.at("data").get<std::string>());
    auto labels = read_u32_blob(dir / j.at("labels").get<std::string>());
    if (static_cast<std::int64_t>(data.size()) != count * per)
        throw std::runtime_error("dataset data blob has " + std::to_string(data.size()) +
                                 " elements, expected " + std::to_string(count * per));
    if (static_cast<std::int64_t>(labels.size()) != count)
        throw std::runtime_error("dataset label blob has " + std::to_string(labels.size()) +
                                 " entries, expected " + std::to_string(count));

    Dataset d;
    d.split = j.value("split", std::string("calibration")) == "evaluation"
                  ? DatasetSplit::Evaluation
                  : DatasetSplit::Calibration;
    d.labels = std::move(labels);
    d.inputs.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i)
        d.inputs.emplace_back(shape, std::vector<double>(data.begin() + i * per,
                                                         data.begin() + (i + 1) * per));
    return d;
}

void save_dataset(const std::filesystem::path& manifest_path, const Dataset& d,
                  const std::string& name) {
    const auto dir = manifest_path.parent_path();
    const std::string data_file = name + "_data.bin";
    const std::string label_file = name + "_labels.bin";

    std::vector<double> flat;
    for (const auto& t : d.inputs) flat.insert(flat.end(), t.data.begin(), t.data.end());
    write_f32_blob(dir / data_file, flat);
    write_u32_blob(dir / label_file, d.labels);

    nlohmann::ordered_json j;
    j["name"] = name;
    j["count"] = d.inputs.size();
    j["input_shape"] = d.inputs.empty() ? Shape{} : d.inputs.front().shape;
    j["data"] = data_file;
    j["labels"] = label_file;
    j["split"] = d.split == DatasetSplit::Evaluation ? "evaluation" : "calibration";
    std::ofstream out(manifest_path);
    if (!out) throw std::runtime_error("cannot write '" + manifest_path.string() + "'");
    out << j.dump(2) << "\n";
}

QuantConfig quant_config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("quant config is not valid JSON: ") + e.what());
    }
    QuantConfig cfg;
    if (j.contains("formats"))
        for (const auto& [name, spec] : j.at("formats").items())
            cfg.formats.emplace(name, FormatSpec::parse(spec.get<std::string>()));
    if (j.contains("tiles"))
        for (const auto& [name, tile] : j.at("tiles").items()) {
            if (!tile.is_array() || tile.size() != 2)
                throw std::runtime_error("tile for '" + name + "' must be [rows, cols]");
            cfg.tiles[name] = {tile[0].get<std::int64_t>(), tile[1].get<std::int64_t>()};
        }
    return cfg;
}

std::string quant_config_to_json(const QuantConfig& cfg) {
    nlohmann::ordered_json j;
    j["formats"] = nlohmann::ordered_json::object();
    for (const auto& [name, spec] : cfg.formats) j["formats"][name] = spec.to_string();
    if (!cfg.tiles.empty()) {
        j["tiles"] = nlohmann::ordered_json::object();
        for (const auto& [name, tile] : cfg.tiles) j["tiles"][name] = {tile[0], tile[1]};
    }
    return j.dump(2) + "\n";
}

QuantConfig load_quant_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return quant_config_from_json(text);
}

void save_quant_config(const std::filesystem::path& path, const QuantConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << quant_config_to_json(cfg);
}

Graph bind_weights(const Graph& g, const std::vector<double>& blob) {
    Graph out = g;
    for (auto& [name, info] : out.values) {
        if (!info.is_param || !info.blob_offset) continue;
        const std::int64_t offset = *info.blob_offset;
        const std::int64_t count = shape_numel(info.shape);
        if (offset < 0 || offset + count > static_cast<std::int64_t>(blob.size()))
            throw std::runtime_error("weight blob too small for parameter '" + name + "'");
        info.data = std::make_shared<const Tensor>(
            info.shape, std::vector<double>(blob.begin() + offset, blob.begin() + offset + count));
    }
    return out;
}

}  // namespace mxflow
