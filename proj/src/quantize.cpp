#include "mxflow/quantize.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace mxflow {

namespace {

[[noreturn]] void quant_error(const std::string& what) {
    throw std::runtime_error("quantize: " + what);
}

std::int64_t shared_min(int bits) { return -(std::int64_t(1) << (bits - 1)); }
std::int64_t shared_max(int bits) { return (std::int64_t(1) << (bits - 1)) - 1; }

std::int64_t clamp_shared(std::int64_t v, int bits) {
    return std::clamp(v, shared_min(bits), shared_max(bits));
}

// Round to nearest, ties to even. nearbyint honors the default FE mode.
std::int64_t rne(double x) { return static_cast<std::int64_t>(std::nearbyint(x)); }

// floor(log2|x|) for finite nonzero x.
int floor_log2(double ax) { return std::ilogb(ax); }

void check_finite(const Tensor& t) {
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        if (!std::isfinite(t[i]))
            quant_error("non-finite input at index " + std::to_string(i));
    }
}

}  // namespace

std::int64_t BlockLayout::padded_block_count() const {
    std::int64_t padded_per_slice = 0;
    if (flat) {
        // Only the final group can be ragged.
        padded_per_slice = (cols % block_size() != 0) ? 1 : 0;
    } else {
        std::int64_t ragged_r = (rows % block.rows != 0) ? 1 : 0;
        std::int64_t ragged_c = (cols % block.cols != 0) ? 1 : 0;
        padded_per_slice = ragged_r * grid_c + ragged_c * grid_r - ragged_r * ragged_c;
    }
    return outer * padded_per_slice;
}

void BlockLayout::block_lanes(std::int64_t block_index, std::vector<std::int64_t>& out) const {
    out.assign(static_cast<std::size_t>(block_size()), -1);
    const std::int64_t per_slice = grid_r * grid_c;
    const std::int64_t slice = block_index / per_slice;
    const std::int64_t in_slice = block_index % per_slice;
    const std::int64_t slice_base = slice * rows * cols;

    if (flat) {
        const std::int64_t start = in_slice * block_size();
        for (std::int64_t l = 0; l < block_size(); ++l) {
            const std::int64_t c = start + l;
            if (c < cols) out[static_cast<std::size_t>(l)] = slice_base + c;
        }
        return;
    }
    const std::int64_t tile_r = in_slice / grid_c;
    const std::int64_t tile_c = in_slice % grid_c;
    for (std::int64_t br = 0; br < block.rows; ++br) {
        for (std::int64_t bc = 0; bc < block.cols; ++bc) {
            const std::int64_t r = tile_r * block.rows + br;
            const std::int64_t c = tile_c * block.cols + bc;
            if (r < rows && c < cols)
                out[static_cast<std::size_t>(br * block.cols + bc)] = slice_base + r * cols + c;
        }
    }
}

BlockLayout partition_blocks(std::span<const std::int64_t> tensor_shape, BlockShape block) {
    if (block.rows < 1 || block.cols < 1)
        throw std::invalid_argument("block shape components must be >= 1");
    const std::int64_t n = shape_numel(tensor_shape);
    if (n == 0) throw std::invalid_argument("cannot partition an empty tensor");

    BlockLayout layout;
    layout.tensor_shape.assign(tensor_shape.begin(), tensor_shape.end());
    layout.block = block;
    if (tensor_shape.size() <= 1) {
        layout.rows = 1;
        layout.cols = n;  // 1-D reshaped to (1, n)
    } else {
        layout.rows = tensor_shape[tensor_shape.size() - 2];
        layout.cols = tensor_shape[tensor_shape.size() - 1];
        for (std::size_t i = 0; i + 2 < tensor_shape.size(); ++i) layout.outer *= tensor_shape[i];
    }
    if (layout.rows == 1) {
        layout.flat = true;
        layout.grid_r = 1;
        layout.grid_c = (layout.cols + block.size() - 1) / block.size();
    } else {
        layout.grid_r = (layout.rows + block.rows - 1) / block.rows;
        layout.grid_c = (layout.cols + block.cols - 1) / block.cols;
    }
    return layout;
}

namespace {

// --- scalar element codecs ---------------------------------------------

std::int64_t encode_fixed(double x, int width, int frac) {
    const std::int64_t lo = -(std::int64_t(1) << (width - 1));
    const std::int64_t hi = (std::int64_t(1) << (width - 1)) - 1;
    const double scaled = std::ldexp(x, frac);
    if (scaled <= static_cast<double>(lo)) return lo;
    if (scaled >= static_cast<double>(hi)) return hi;
    return std::clamp(rne(scaled), lo, hi);
}

double decode_fixed(std::int64_t q, int frac) { return std::ldexp(static_cast<double>(q), -frac); }

// MXInt element: sign-magnitude integer against a shared exponent E.
// Scale is 2^(E - m + 1); magnitudes saturate at 2^m - 1.
std::int64_t encode_mx_elem(double x, std::int64_t e_shared, int mant_bits) {
    const std::int64_t max_mag = (std::int64_t(1) << mant_bits) - 1;
    const double scaled = std::ldexp(std::fabs(x), static_cast<int>(mant_bits - 1 - e_shared));
    // Saturate before the integer conversion; E may have been clamped.
    const std::int64_t mag =
        scaled >= static_cast<double>(max_mag) ? max_mag : std::min(rne(scaled), max_mag);
    return x < 0 ? -mag : mag;
}

double decode_mx_elem(std::int64_t elem, std::int64_t e_shared, int mant_bits) {
    return std::ldexp(static_cast<double>(elem), static_cast<int>(e_shared - mant_bits + 1));
}

}  // namespace

std::int64_t encode_minifloat(double x, int exp_bits, int mant_bits, int bias) {
    const std::int64_t sign = x < 0 ? 1 : 0;
    const double ax = std::fabs(x);
    const std::int64_t top_exp = (std::int64_t(1) << exp_bits) - 1;
    const std::int64_t mant_scale = std::int64_t(1) << mant_bits;

    if (ax == 0.0) return sign << (exp_bits + mant_bits);

    // Max finite value: exponent field all ones, mantissa all ones.
    const double max_val =
        std::ldexp(2.0 - 1.0 / static_cast<double>(mant_scale), static_cast<int>(top_exp) - bias);
    if (ax >= max_val)
        return (sign << (exp_bits + mant_bits)) | (top_exp << mant_bits) | (mant_scale - 1);

    int e = floor_log2(ax);
    std::int64_t exp_field = e + bias;
    std::int64_t mant;
    if (exp_field <= 0) {
        // Subnormal: value = mant / 2^m * 2^(1 - bias).
        mant = rne(std::ldexp(ax, mant_bits - 1 + bias));
        exp_field = 0;
        if (mant >= mant_scale) {  // rounded up into the first normal binade
            exp_field = 1;
            mant = 0;
        }
    } else {
        mant = rne(std::ldexp(ax, mant_bits - e) - static_cast<double>(mant_scale));
        if (mant >= mant_scale) {  // rounded up to the next binade
            mant = 0;
            ++exp_field;
            if (exp_field > top_exp)
                return (sign << (exp_bits + mant_bits)) | (top_exp << mant_bits) |
                       (mant_scale - 1);
        }
    }
    return (sign << (exp_bits + mant_bits)) | (exp_field << mant_bits) | mant;
}

double decode_minifloat(std::int64_t bits, int exp_bits, int mant_bits, int bias) {
    const std::int64_t mant_scale = std::int64_t(1) << mant_bits;
    const std::int64_t sign = (bits >> (exp_bits + mant_bits)) & 1;
    const std::int64_t exp_field = (bits >> mant_bits) & ((std::int64_t(1) << exp_bits) - 1);
    const std::int64_t mant = bits & (mant_scale - 1);
    double v;
    if (exp_field == 0) {
        v = std::ldexp(static_cast<double>(mant), 1 - bias - mant_bits);
    } else {
        v = std::ldexp(1.0 + static_cast<double>(mant) / static_cast<double>(mant_scale),
                       static_cast<int>(exp_field) - bias);
    }
    return sign ? -v : v;
}

namespace {

// --- block format quantizers --------------------------------------------

void quantize_block_mxint(const Tensor& t, const std::vector<std::int64_t>& lanes,
                          const MXIntFormat& f, QuantizedBlock& out) {
    double max_abs = 0.0;
    for (auto idx : lanes)
        if (idx >= 0) max_abs = std::max(max_abs, std::fabs(t[idx]));
    if (max_abs == 0.0) {
        out.shared = shared_min(f.exp_bits);
        out.elems.assign(lanes.size(), 0);
        return;
    }
    out.shared = clamp_shared(floor_log2(max_abs), f.exp_bits);
    out.elems.resize(lanes.size());
    for (std::size_t l = 0; l < lanes.size(); ++l)
        out.elems[l] = lanes[l] >= 0 ? encode_mx_elem(t[lanes[l]], out.shared, f.mant_bits) : 0;
}

void quantize_block_bmf(const Tensor& t, const std::vector<std::int64_t>& lanes,
                        const BMFFormat& f, QuantizedBlock& out) {
    double max_abs = 0.0;
    for (auto idx : lanes)
        if (idx >= 0) max_abs = std::max(max_abs, std::fabs(t[idx]));
    if (max_abs == 0.0) {
        out.shared = shared_min(f.bias_bits);
        out.elems.assign(lanes.size(), 0);
        return;
    }
    // Bias placing the block maximum in the top binade.
    const std::int64_t top_exp = (std::int64_t(1) << f.elem_exp_bits) - 1;
    out.shared = clamp_shared(top_exp - floor_log2(max_abs), f.bias_bits);
    out.elems.resize(lanes.size());
    for (std::size_t l = 0; l < lanes.size(); ++l)
        out.elems[l] = lanes[l] >= 0
                           ? encode_minifloat(t[lanes[l]], f.elem_exp_bits, f.elem_mant_bits,
                                              static_cast<int>(out.shared))
                           : 0;
}

std::int64_t encode_bl_elem(double x, std::int64_t bias, int exp_bits) {
    if (x == 0.0) return 0;  // code 0 reserved for zero
    const std::int64_t sign = x < 0 ? 1 : 0;
    const std::int64_t top = (std::int64_t(1) << exp_bits) - 1;
    const std::int64_t code = rne(std::log2(std::fabs(x))) + bias;
    if (code < 1) return 0;  // underflow to zero
    return (sign << exp_bits) | std::min(code, top);
}

double decode_bl_elem(std::int64_t bits, std::int64_t bias, int exp_bits) {
    const std::int64_t code = bits & ((std::int64_t(1) << exp_bits) - 1);
    if (code == 0) return 0.0;
    const std::int64_t sign = (bits >> exp_bits) & 1;
    const double v = std::ldexp(1.0, static_cast<int>(code - bias));
    return sign ? -v : v;
}

void quantize_block_bl(const Tensor& t, const std::vector<std::int64_t>& lanes, const BLFormat& f,
                       QuantizedBlock& out) {
    double max_abs = 0.0;
    for (auto idx : lanes)
        if (idx >= 0) max_abs = std::max(max_abs, std::fabs(t[idx]));
    if (max_abs == 0.0) {
        out.shared = shared_min(f.bias_bits);
        out.elems.assign(lanes.size(), 0);
        return;
    }
    const std::int64_t top = (std::int64_t(1) << f.elem_exp_bits) - 1;
    // Keep the top code finite in binary64 (2^(top - B) <= 2^1023).
    out.shared = std::max(clamp_shared(top - rne(std::log2(max_abs)), f.bias_bits), top - 1023);
    out.elems.resize(lanes.size());
    for (std::size_t l = 0; l < lanes.size(); ++l)
        out.elems[l] =
            lanes[l] >= 0 ? encode_bl_elem(t[lanes[l]], out.shared, f.elem_exp_bits) : 0;
}

BlockLayout scalar_layout(std::span<const std::int64_t> shape) {
    // Scalar formats: one element per block.
    return partition_blocks(shape, BlockShape{1, 1});
}

}  // namespace

QuantizedTensor quantize_tensor(const Tensor& t, const FormatSpec& spec) {
    if (t.numel() == 0) quant_error("empty tensor");
    check_finite(t);

    QuantizedTensor q;
    q.spec = spec;
    q.tensor_shape = t.shape;

    if (auto blk = spec.block_shape()) {
        q.layout = partition_blocks(t.shape, *blk);
        q.blocks.resize(static_cast<std::size_t>(q.layout.block_count()));
        std::vector<std::int64_t> lanes;
        for (std::int64_t b = 0; b < q.layout.block_count(); ++b) {
            q.layout.block_lanes(b, lanes);
            auto& out = q.blocks[static_cast<std::size_t>(b)];
            if (const auto* f = spec.get_if<MXIntFormat>())
                quantize_block_mxint(t, lanes, *f, out);
            else if (const auto* f = spec.get_if<BMFFormat>())
                quantize_block_bmf(t, lanes, *f, out);
            else
                quantize_block_bl(t, lanes, *spec.get_if<BLFormat>(), out);
        }
        return q;
    }

    q.layout = scalar_layout(t.shape);
    q.blocks.resize(static_cast<std::size_t>(t.numel()));
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        auto& b = q.blocks[static_cast<std::size_t>(i)];
        b.shared = 0;
        b.elems.resize(1);
        if (spec.is_float32())
            b.elems[0] = std::bit_cast<std::int64_t>(t[i]);
        else if (const auto* f = spec.get_if<FixedPointFormat>())
            b.elems[0] = encode_fixed(t[i], f->width, f->frac);
        else {
            const auto* mf = spec.get_if<MiniFloatFormat>();
            b.elems[0] = encode_minifloat(t[i], mf->exp_bits, mf->mant_bits, mf->bias);
        }
    }
    return q;
}

Tensor dequantize_tensor(const QuantizedTensor& q) {
    Tensor t = Tensor::zeros(q.tensor_shape);

    if (auto blk = q.spec.block_shape()) {
        std::vector<std::int64_t> lanes;
        for (std::int64_t b = 0; b < q.layout.block_count(); ++b) {
            q.layout.block_lanes(b, lanes);
            const auto& qb = q.blocks[static_cast<std::size_t>(b)];
            for (std::size_t l = 0; l < lanes.size(); ++l) {
                if (lanes[l] < 0) continue;
                if (const auto* f = q.spec.get_if<MXIntFormat>())
                    t[lanes[l]] = decode_mx_elem(qb.elems[l], qb.shared, f->mant_bits);
                else if (const auto* f = q.spec.get_if<BMFFormat>())
                    t[lanes[l]] = decode_minifloat(qb.elems[l], f->elem_exp_bits,
                                                   f->elem_mant_bits,
                                                   static_cast<int>(qb.shared));
                else
                    t[lanes[l]] = decode_bl_elem(qb.elems[l], qb.shared,
                                                 q.spec.get_if<BLFormat>()->elem_exp_bits);
            }
        }
        return t;
    }

    for (std::int64_t i = 0; i < t.numel(); ++i) {
        const auto& b = q.blocks[static_cast<std::size_t>(i)];
        if (q.spec.is_float32())
            t[i] = std::bit_cast<double>(b.elems[0]);
        else if (const auto* f = q.spec.get_if<FixedPointFormat>())
            t[i] = decode_fixed(b.elems[0], f->frac);
        else {
            const auto* mf = q.spec.get_if<MiniFloatFormat>();
            t[i] = decode_minifloat(b.elems[0], mf->exp_bits, mf->mant_bits, mf->bias);
        }
    }
    return t;
}

Tensor fake_quantize(const Tensor& t, const FormatSpec& spec) {
    if (spec.is_float32()) return t;
    if (t.numel() == 0) quant_error("empty tensor");
    check_finite(t);

    Tensor out = t;
    if (auto blk = spec.block_shape()) {
        BlockLayout layout = partition_blocks(t.shape, *blk);
        std::vector<std::int64_t> lanes;
        QuantizedBlock qb;
        for (std::int64_t b = 0; b < layout.block_count(); ++b) {
            layout.block_lanes(b, lanes);
            if (const auto* f = spec.get_if<MXIntFormat>()) {
                quantize_block_mxint(t, lanes, *f, qb);
                for (std::size_t l = 0; l < lanes.size(); ++l)
                    if (lanes[l] >= 0)
                        out[lanes[l]] = decode_mx_elem(qb.elems[l], qb.shared, f->mant_bits);
            } else if (const auto* f = spec.get_if<BMFFormat>()) {
                quantize_block_bmf(t, lanes, *f, qb);
                for (std::size_t l = 0; l < lanes.size(); ++l)
                    if (lanes[l] >= 0)
                        out[lanes[l]] = decode_minifloat(qb.elems[l], f->elem_exp_bits,
                                                         f->elem_mant_bits,
                                                         static_cast<int>(qb.shared));
            } else {
                const auto* bl = spec.get_if<BLFormat>();
                quantize_block_bl(t, lanes, *bl, qb);
                for (std::size_t l = 0; l < lanes.size(); ++l)
                    if (lanes[l] >= 0)
                        out[lanes[l]] = decode_bl_elem(qb.elems[l], qb.shared, bl->elem_exp_bits);
            }
        }
        return out;
    }

    if (const auto* f = spec.get_if<FixedPointFormat>()) {
        for (std::int64_t i = 0; i < t.numel(); ++i)
            out[i] = decode_fixed(encode_fixed(t[i], f->width, f->frac), f->frac);
    } else {
        const auto* mf = spec.get_if<MiniFloatFormat>();
        for (std::int64_t i = 0; i < t.numel(); ++i)
            out[i] =
                decode_minifloat(encode_minifloat(t[i], mf->exp_bits, mf->mant_bits, mf->bias),
                                 mf->exp_bits, mf->mant_bits, mf->bias);
    }
    return out;
}

QuantizedTensor cast(const QuantizedTensor& q, const FormatSpec& target) {
    const auto* src = q.spec.get_if<MXIntFormat>();
    const auto* dst = target.get_if<MXIntFormat>();
    if (!src || !dst)
        throw std::invalid_argument("unsupported cast: only MXInt-to-MXInt casts are supported");
    if (!(src->block == dst->block) || src->exp_bits != dst->exp_bits)
        throw std::invalid_argument(
            "unsupported cast: block shape and exp_bits must match (" + q.spec.to_string() +
            " -> " + target.to_string() + ")");

    QuantizedTensor out = q;
    out.spec = target;
    const int m1 = src->mant_bits;
    const int m2 = dst->mant_bits;
    if (m2 == m1) return out;

    if (m2 > m1) {
        const int shift = m2 - m1;
        for (auto& b : out.blocks)
            for (auto& e : b.elems) e <<= shift;
        return out;
    }

    // Narrowing: round magnitude to nearest even, saturate.
    const int shift = m1 - m2;
    const std::int64_t half = std::int64_t(1) << (shift - 1);
    const std::int64_t mask = (std::int64_t(1) << shift) - 1;
    const std::int64_t max_mag = (std::int64_t(1) << m2) - 1;
    for (auto& b : out.blocks) {
        for (auto& e : b.elems) {
            const bool neg = e < 0;
            std::int64_t mag = neg ? -e : e;
            std::int64_t hi = mag >> shift;
            const std::int64_t rem = mag & mask;
            if (rem > half || (rem == half && (hi & 1))) ++hi;
            hi = std::min(hi, max_mag);
            e = neg ? -hi : hi;
        }
    }
    return out;
}

double block_dot_exact(const QuantizedTensor& a, const QuantizedTensor& b) {
    const auto* fa = a.spec.get_if<MXIntFormat>();
    const auto* fb = b.spec.get_if<MXIntFormat>();
    if (!fa || !fb) throw std::invalid_argument("block_dot_exact requires MXInt operands");
    if (!(a.layout == b.layout))
        throw std::invalid_argument("block_dot_exact: operand block layouts differ");

    double acc = 0.0;
    for (std::size_t i = 0; i < a.blocks.size(); ++i) {
        const auto& ba = a.blocks[i];
        const auto& bb = b.blocks[i];
        std::int64_t s = 0;
        for (std::size_t l = 0; l < ba.elems.size(); ++l) s += ba.elems[l] * bb.elems[l];
        if (s == 0) continue;
        const int scale = static_cast<int>(ba.shared - fa->mant_bits + 1 + bb.shared -
                                           fb->mant_bits + 1);
        acc += std::ldexp(static_cast<double>(s), scale);
    }
    return acc;
}

}  // namespace mxflow
