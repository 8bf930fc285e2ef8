#include "mxflow/format.hpp"

#include <cctype>
#include <charconv>
#include <stdexcept>

namespace mxflow {

namespace {

// Caps keep shared/element encodings inside int64 arithmetic.
constexpr int kMaxSharedBits = 16;
constexpr int kMaxElemBits = 24;
constexpr int kMaxFixedWidth = 32;
constexpr std::int64_t kMaxBlockDim = 1 << 20;

[[noreturn]] void bad(const std::string& what) {
    throw std::invalid_argument("invalid format: " + what);
}

void check_block(const BlockShape& b) {
    if (b.rows < 1 || b.cols < 1) bad("block shape components must be >= 1");
    if (b.rows > kMaxBlockDim || b.cols > kMaxBlockDim) bad("block shape too large");
}

void check_bits(int bits, int cap, const char* name) {
    if (bits < 1) bad(std::string(name) + " must be >= 1");
    if (bits > cap) bad(std::string(name) + " exceeds supported maximum");
}

void validate(const FormatSpec::Storage& v) {
    if (const auto* f = std::get_if<FixedPointFormat>(&v)) {
        check_bits(f->width, kMaxFixedWidth, "width");
        if (f->frac < 0) bad("frac must be >= 0");
        if (f->frac >= f->width) bad("frac must be < width");
    } else if (const auto* f = std::get_if<MiniFloatFormat>(&v)) {
        check_bits(f->exp_bits, kMaxSharedBits, "exp_bits");
        check_bits(f->mant_bits, kMaxElemBits, "mant_bits");
        if (f->bias < -1024 || f->bias > 1024) bad("bias out of range");
    } else if (const auto* f = std::get_if<MXIntFormat>(&v)) {
        check_block(f->block);
        check_bits(f->exp_bits, kMaxSharedBits, "exp_bits");
        check_bits(f->mant_bits, kMaxElemBits, "mant_bits");
    } else if (const auto* f = std::get_if<BMFFormat>(&v)) {
        check_block(f->block);
        check_bits(f->bias_bits, kMaxSharedBits, "bias_bits");
        check_bits(f->elem_exp_bits, kMaxSharedBits, "elem_exp_bits");
        check_bits(f->elem_mant_bits, kMaxElemBits, "elem_mant_bits");
    } else if (const auto* f = std::get_if<BLFormat>(&v)) {
        check_block(f->block);
        check_bits(f->bias_bits, kMaxSharedBits, "bias_bits");
        check_bits(f->elem_exp_bits, kMaxSharedBits, "elem_exp_bits");
    }
}

}  // namespace

FormatSpec::FormatSpec(Storage v) : v_(std::move(v)) { validate(v_); }

FormatSpec FormatSpec::fixed_point(int width, int frac) {
    return FormatSpec(FixedPointFormat{width, frac});
}

FormatSpec FormatSpec::mini_float(int exp_bits, int mant_bits, int bias) {
    return FormatSpec(MiniFloatFormat{exp_bits, mant_bits, bias});
}

FormatSpec FormatSpec::mxint(BlockShape block, int exp_bits, int mant_bits) {
    return FormatSpec(MXIntFormat{block, exp_bits, mant_bits});
}

FormatSpec FormatSpec::bmf(BlockShape block, int bias_bits, int elem_exp_bits,
                           int elem_mant_bits) {
    return FormatSpec(BMFFormat{block, bias_bits, elem_exp_bits, elem_mant_bits});
}

FormatSpec FormatSpec::bl(BlockShape block, int bias_bits, int elem_exp_bits) {
    return FormatSpec(BLFormat{block, bias_bits, elem_exp_bits});
}

bool FormatSpec::is_block_format() const {
    return std::holds_alternative<MXIntFormat>(v_) || std::holds_alternative<BMFFormat>(v_) ||
           std::holds_alternative<BLFormat>(v_);
}

std::optional<BlockShape> FormatSpec::block_shape() const {
    if (const auto* f = std::get_if<MXIntFormat>(&v_)) return f->block;
    if (const auto* f = std::get_if<BMFFormat>(&v_)) return f->block;
    if (const auto* f = std::get_if<BLFormat>(&v_)) return f->block;
    return std::nullopt;
}

std::string FormatSpec::to_string() const {
    auto blk = [](const BlockShape& b) {
        return "(" + std::to_string(b.rows) + "," + std::to_string(b.cols) + ")";
    };
    if (std::holds_alternative<Float32Format>(v_)) return "Float32";
    if (const auto* f = std::get_if<FixedPointFormat>(&v_))
        return "Fixed(" + std::to_string(f->width) + "," + std::to_string(f->frac) + ")";
    if (const auto* f = std::get_if<MiniFloatFormat>(&v_))
        return "MiniFloat(" + std::to_string(f->exp_bits) + "," + std::to_string(f->mant_bits) +
               "," + std::to_string(f->bias) + ")";
    if (const auto* f = std::get_if<MXIntFormat>(&v_))
        return "MXInt(" + blk(f->block) + "," + std::to_string(f->exp_bits) + "," +
               std::to_string(f->mant_bits) + ")";
    if (const auto* f = std::get_if<BMFFormat>(&v_))
        return "BMF(" + blk(f->block) + "," + std::to_string(f->bias_bits) + "," +
               std::to_string(f->elem_exp_bits) + "," + std::to_string(f->elem_mant_bits) + ")";
    const auto* f = std::get_if<BLFormat>(&v_);
    return "BL(" + blk(f->block) + "," + std::to_string(f->bias_bits) + "," +
           std::to_string(f->elem_exp_bits) + ")";
}

namespace {

struct FormatCursor {
    std::string_view text;
    std::size_t pos = 0;

    [[noreturn]] void fail(const std::string& what) const {
        throw std::invalid_argument("bad format spec '" + std::string(text) + "': " + what);
    }
    void skip_ws() {
        while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
    }
    bool eat(char c) {
        skip_ws();
        if (pos < text.size() && text[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }
    void expect(char c) {
        if (!eat(c)) fail(std::string("expected '") + c + "'");
    }
    std::int64_t integer() {
        skip_ws();
        std::size_t start = pos;
        if (pos < text.size() && (text[pos] == '-' || text[pos] == '+')) ++pos;
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
        std::int64_t out = 0;
        auto res = std::from_chars(text.data() + start, text.data() + pos, out);
        if (res.ec != std::errc{} || res.ptr != text.data() + pos || pos == start)
            fail("expected integer");
        return out;
    }
    BlockShape block() {
        expect('(');
        BlockShape b;
        b.rows = integer();
        expect(',');
        b.cols = integer();
        expect(')');
        return b;
    }
    void done() {
        skip_ws();
        if (pos != text.size()) fail("trailing characters");
    }
};

}  // namespace

FormatSpec FormatSpec::parse(std::string_view text) {
    FormatCursor c{text};
    c.skip_ws();
    std::size_t start = c.pos;
    while (c.pos < text.size() && std::isalnum(static_cast<unsigned char>(text[c.pos]))) ++c.pos;
    std::string_view name = text.substr(start, c.pos - start);

    if (name == "Float32") {
        c.done();
        return FormatSpec::float32();
    }
    if (name == "Fixed") {
        c.expect('(');
        int w = static_cast<int>(c.integer());
        c.expect(',');
        int f = static_cast<int>(c.integer());
        c.expect(')');
        c.done();
        return FormatSpec::fixed_point(w, f);
    }
    if (name == "MiniFloat") {
        c.expect('(');
        int e = static_cast<int>(c.integer());
        c.expect(',');
        int m = static_cast<int>(c.integer());
        c.expect(',');
        int bias = static_cast<int>(c.integer());
        c.expect(')');
        c.done();
        return FormatSpec::mini_float(e, m, bias);
    }
    if (name == "MXInt") {
        c.expect('(');
        BlockShape b = c.block();
        c.expect(',');
        int e = static_cast<int>(c.integer());
        c.expect(',');
        int m = static_cast<int>(c.integer());
        c.expect(')');
        c.done();
        return FormatSpec::mxint(b, e, m);
    }
    if (name == "BMF") {
        c.expect('(');
        BlockShape b = c.block();
        c.expect(',');
        int bias = static_cast<int>(c.integer());
        c.expect(',');
        int ee = static_cast<int>(c.integer());
        c.expect(',');
        int em = static_cast<int>(c.integer());
        c.expect(')');
        c.done();
        return FormatSpec::bmf(b, bias, ee, em);
    }
    if (name == "BL") {
        c.expect('(');
        BlockShape b = c.block();
        c.expect(',');
        int bias = static_cast<int>(c.integer());
        c.expect(',');
        int ee = static_cast<int>(c.integer());
        c.expect(')');
        c.done();
        return FormatSpec::bl(b, bias, ee);
    }
    c.fail("unknown format family '" + std::string(name) + "'");
}

Rational avg_bitwidth(const FormatSpec& spec) {
    const auto& v = spec.storage();
    if (std::holds_alternative<Float32Format>(v)) return Rational(32);
    if (const auto* f = std::get_if<FixedPointFormat>(&v)) return Rational(f->width);
    if (const auto* f = std::get_if<MiniFloatFormat>(&v))
        return Rational(1 + f->exp_bits + f->mant_bits);
    if (const auto* f = std::get_if<MXIntFormat>(&v))
        return Rational(f->exp_bits, f->block.size()) + Rational(f->mant_bits + 1);
    if (const auto* f = std::get_if<BMFFormat>(&v))
        return Rational(f->bias_bits, f->block.size()) +
               Rational(1 + f->elem_exp_bits + f->elem_mant_bits);
    const auto* f = std::get_if<BLFormat>(&v);
    return Rational(f->bias_bits, f->block.size()) + Rational(1 + f->elem_exp_bits);
}

Rational memory_density(const FormatSpec& spec) { return Rational(32) / avg_bitwidth(spec); }

}  // namespace mxflow
