// Quantize / dequantize / cast / exact block arithmetic.
//
// Block formats tile the last two tensor dimensions. Shared components
// (exponent or bias) are chosen per block from the block maximum;
// elements are encoded with round-to-nearest-even and saturate at the
// format maximum.

#pragma once

#include <cstdint>
#include <vector>

#include "mxflow/format.hpp"
#include "mxflow/tensor.hpp"

namespace mxflow {

// Deterministic tiling of a tensor into blocks.
//
// Tensors with more than two dimensions tile the last two and iterate
// the leading ones. 1-D tensors are treated as a single row; single-row
// slices group ΠB consecutive elements per block instead of opening a
// mostly-padded (rows x cols) window. Ragged edges are zero padded.
struct BlockLayout {
    Shape tensor_shape;
    BlockShape block;
    std::int64_t outer = 1;  // product of leading dims
    std::int64_t rows = 1;   // last-two-dims view
    std::int64_t cols = 1;
    bool flat = false;       // single-row slices: contiguous ΠB grouping
    std::int64_t grid_r = 1; // block grid per slice
    std::int64_t grid_c = 1;

    std::int64_t block_size() const { return block.size(); }
    std::int64_t block_count() const { return outer * grid_r * grid_c; }
    std::int64_t padded_block_count() const;

    // Linear element indices covered by one block, in lane order.
    // Padded lanes yield -1.
    void block_lanes(std::int64_t block_index, std::vector<std::int64_t>& out) const;

    bool operator==(const BlockLayout&) const = default;
};

BlockLayout partition_blocks(std::span<const std::int64_t> tensor_shape, BlockShape block);

struct QuantizedBlock {
    std::int64_t shared = 0;           // exponent E or bias B, biased-range checked
    std::vector<std::int64_t> elems;   // encoded elements, lane order
};

struct QuantizedTensor {
    FormatSpec spec;
    Shape tensor_shape;
    std::vector<QuantizedBlock> blocks;
    BlockLayout layout;
};

// Encode a tensor in the given format. Block formats pick the shared
// component per block (all-zero blocks store the minimum of the signed
// range); scalar formats encode element-wise with one element per
// block. Float32 is the bit-exact pass-through. NaN/Inf inputs throw,
// naming the offending index.
QuantizedTensor quantize_tensor(const Tensor& t, const FormatSpec& spec);

// Exact reconstruction of the encoded values; padding lanes dropped.
Tensor dequantize_tensor(const QuantizedTensor& q);

// dequantize(quantize(t)) without materializing the encoding.
Tensor fake_quantize(const Tensor& t, const FormatSpec& spec);

// Mantissa-width cast between MXInt formats sharing block shape and
// exponent width. Widening is exact bit extension; narrowing rounds to
// nearest even and saturates. Anything else is an unsupported cast.
QuantizedTensor cast(const QuantizedTensor& q, const FormatSpec& target);

// Dot product of two MXInt tensors computed in the integer domain:
// per block, the int64 sum of element products scaled once by the two
// shared exponents. Exact for mant_bits <= 20.
double block_dot_exact(const QuantizedTensor& a, const QuantizedTensor& b);

// Element codecs shared by the scalar and block paths.
// Minifloat bit layout: sign | exp (exp_bits) | mantissa (mant_bits),
// subnormals at exp field 0, saturating at the top finite value.
std::int64_t encode_minifloat(double x, int exp_bits, int mant_bits, int bias);
double decode_minifloat(std::int64_t bits, int exp_bits, int mant_bits, int bias);

}  // namespace mxflow
