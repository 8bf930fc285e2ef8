// File formats: model manifests (JSON + raw float32 weight blob),
// dataset bundles (JSON + float32 data blob + uint32 label blob) and
// quantization config files. Blobs are little endian; offsets count
// elements, row-major.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mxflow/emulate.hpp"
#include "mxflow/ir.hpp"

namespace mxflow {

class ImportError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Manifest schema:
//   {"name": str,
//    "inputs":  [{"name": str, "shape": [int...]}],
//    "ops":     [{"kind": str, "args": [str...], "results": [str...],
//                 "params": {"weight": {"shape": [...], "offset": int}, ...},
//                 "in_order"/"out_order": "row_major" | "col_major"}],
//    "outputs": [str...]}
//
// The imported graph is Float32 with shapes resolved; a reorder op is
// inserted on every edge whose producer streams in a different order
// than the consumer expects.
Graph import_model(const std::filesystem::path& manifest_path,
                   const std::filesystem::path& weights_path);
Graph import_model_from_json(const std::string& manifest_json, const std::vector<double>& blob);

std::vector<double> read_f32_blob(const std::filesystem::path& path);
void write_f32_blob(const std::filesystem::path& path, const std::vector<double>& values);
std::vector<std::int64_t> read_u32_blob(const std::filesystem::path& path);
void write_u32_blob(const std::filesystem::path& path, const std::vector<std::int64_t>& values);

// Dataset manifest:
//   {"name": str, "count": int, "input_shape": [int...],
//    "data": relative path, "labels": relative path,
//    "split": "calibration" | "evaluation"}
Dataset load_dataset(const std::filesystem::path& manifest_path);
void save_dataset(const std::filesystem::path& manifest_path, const Dataset& d,
                  const std::string& name);

// Quant config files: {"formats": {value: spec text}, "tiles": {value: [r, c]}}
QuantConfig load_quant_config(const std::filesystem::path& path);
void save_quant_config(const std::filesystem::path& path, const QuantConfig& cfg);
QuantConfig quant_config_from_json(const std::string& json_text);
std::string quant_config_to_json(const QuantConfig& cfg);

// Re-attach parameter payloads to a parsed graph using the offset
// attributes recorded at import time.
Graph bind_weights(const Graph& g, const std::vector<double>& blob);

}  // namespace mxflow
