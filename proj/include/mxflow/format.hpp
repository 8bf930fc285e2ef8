// Number format descriptors for the quantization toolkit.
//
// Six format families are supported. Float32 is the full-precision
// pass-through. FixedPoint and MiniFloat are scalar baselines. MXInt,
// BMF and BL are block formats: a group of elements (the block) shares
// one component, either an exponent (MXInt) or an exponent bias
// (BMF/BL), which amortizes its storage across the block.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include <boost/rational.hpp>

namespace mxflow {

// Exact bits-per-element arithmetic; block formats yield non-integers.
using Rational = boost::rational<std::int64_t>;

struct BlockShape {
    std::int64_t rows = 1;
    std::int64_t cols = 1;

    std::int64_t size() const { return rows * cols; }
    bool operator==(const BlockShape&) const = default;
};

struct Float32Format {
    bool operator==(const Float32Format&) const = default;
};

struct FixedPointFormat {
    int width = 8;  // total bits, two's complement
    int frac = 4;   // fraction bits, frac < width
    bool operator==(const FixedPointFormat&) const = default;
};

struct MiniFloatFormat {
    int exp_bits = 4;
    int mant_bits = 3;
    int bias = 7;
    bool operator==(const MiniFloatFormat&) const = default;
};

struct MXIntFormat {
    BlockShape block;
    int exp_bits = 8;   // shared exponent width
    int mant_bits = 7;  // per-element magnitude width
    bool operator==(const MXIntFormat&) const = default;
};

struct BMFFormat {
    BlockShape block;
    int bias_bits = 8;      // shared exponent bias width
    int elem_exp_bits = 4;  // per-element exponent width
    int elem_mant_bits = 3; // per-element mantissa width
    bool operator==(const BMFFormat&) const = default;
};

struct BLFormat {
    BlockShape block;
    int bias_bits = 8;     // shared exponent bias width
    int elem_exp_bits = 7; // per-element exponent width; code 0 means zero
    bool operator==(const BLFormat&) const = default;
};

// Tagged union over the format families. Constructors validate bit
// counts (>= 1, capped to keep integer arithmetic in 64 bits) and block
// shapes (components >= 1); invalid specs throw std::invalid_argument.
class FormatSpec {
public:
    using Storage = std::variant<Float32Format, FixedPointFormat, MiniFloatFormat,
                                 MXIntFormat, BMFFormat, BLFormat>;

    FormatSpec() : v_(Float32Format{}) {}
    explicit FormatSpec(Storage v);

    static FormatSpec float32() { return FormatSpec(Float32Format{}); }
    static FormatSpec fixed_point(int width, int frac);
    static FormatSpec mini_float(int exp_bits, int mant_bits, int bias);
    static FormatSpec mxint(BlockShape block, int exp_bits, int mant_bits);
    static FormatSpec bmf(BlockShape block, int bias_bits, int elem_exp_bits, int elem_mant_bits);
    static FormatSpec bl(BlockShape block, int bias_bits, int elem_exp_bits);

    bool is_float32() const { return std::holds_alternative<Float32Format>(v_); }
    bool is_block_format() const;

    template <class T>
    const T* get_if() const { return std::get_if<T>(&v_); }

    // Block shape for MXInt/BMF/BL; nullopt for scalar formats.
    std::optional<BlockShape> block_shape() const;

    const Storage& storage() const { return v_; }

    // Text syntax used in IR and config files, e.g. MXInt((16,2),8,7).
    std::string to_string() const;
    static FormatSpec parse(std::string_view text);

    bool operator==(const FormatSpec&) const = default;

private:
    Storage v_;
};

// Amortized storage per element: shared bits are divided by the block
// size, each element pays its own sign/exponent/mantissa bits.
Rational avg_bitwidth(const FormatSpec& spec);

// Values stored per bit relative to 32-bit floats: 32 / avg_bitwidth.
Rational memory_density(const FormatSpec& spec);

}  // namespace mxflow
