#include "mxflow/ir_text.hpp"

#include <cctype>
#include <set>
#include <sstream>

#include "mxflow/text_util.hpp"

namespace mxflow {

namespace {

enum class Tok { Ident, Number, LParen, RParen, LBracket, RBracket, LBrace, RBrace, Colon, Comma, Equals, End };

struct Token {
    Tok kind;
    std::string text;
    int line = 1;
    int col = 1;
    std::size_t offset = 0;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) { advance(); }

    const Token& peek() const { return tok_; }
    Token take() {
        Token t = tok_;
        advance();
        return t;
    }
    std::string_view source() const { return src_; }

private:
    void advance() {
        skip_trivia();
        tok_.line = line_;
        tok_.col = col_;
        tok_.offset = pos_;
        if (pos_ >= src_.size()) {
            tok_.kind = Tok::End;
            tok_.text.clear();
            return;
        }
        char c = src_[pos_];
        auto punct = [&](Tok k) {
            tok_.kind = k;
            tok_.text = std::string(1, c);
            bump();
        };
        switch (c) {
            case '(': punct(Tok::LParen); return;
            case ')': punct(Tok::RParen); return;
            case '[': punct(Tok::LBracket); return;
            case ']': punct(Tok::RBracket); return;
            case '{': punct(Tok::LBrace); return;
            case '}': punct(Tok::RBrace); return;
            case ':': punct(Tok::Colon); return;
            case ',': punct(Tok::Comma); return;
            case '=': punct(Tok::Equals); return;
            default: break;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_' ||
                    src_[pos_] == '.'))
                bump();
            tok_.kind = Tok::Ident;
            tok_.text = std::string(src_.substr(start, pos_ - start));
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+') {
            std::size_t start = pos_;
            if (c == '-' || c == '+') bump();
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.' ||
                    src_[pos_] == '-' || src_[pos_] == '+')) {
                // exponent signs only directly after e/E
                if ((src_[pos_] == '-' || src_[pos_] == '+') &&
                    !(src_[pos_ - 1] == 'e' || src_[pos_ - 1] == 'E'))
                    break;
                bump();
            }
            tok_.kind = Tok::Number;
            tok_.text = std::string(src_.substr(start, pos_ - start));
            return;
        }
        throw ParseError(line_, col_, std::string("unexpected character '") + c + "'");
    }

    void skip_trivia() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '#' || (c == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '/')) {
                while (pos_ < src_.size() && src_[pos_] != '\n') bump();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                bump();
            } else {
                break;
            }
        }
    }

    void bump() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
    Token tok_;
};

class IrParser {
public:
    explicit IrParser(std::string_view src) : lex_(src) {}

    Graph parse() {
        Token name = expect(Tok::Ident, "graph name");
        g_.name = name.text;
        expect(Tok::LParen, "'('");
        if (lex_.peek().kind != Tok::RParen) {
            while (true) {
                Token in = expect(Tok::Ident, "input name");
                expect(Tok::Colon, "':' after input name");
                ValueInfo info = parse_type();
                declare(in, std::move(info), DefSite::Input);
                g_.inputs.push_back(in.text);
                if (lex_.peek().kind == Tok::Comma) {
                    lex_.take();
                    continue;
                }
                break;
            }
        }
        expect(Tok::RParen, "')'");
        expect(Tok::Colon, "':' after graph header");

        while (true) {
            Token t = lex_.peek();
            if (t.kind == Tok::End) throw ParseError(t.line, t.col, "missing 'return'");
            if (t.kind == Tok::Ident && t.text == "return") {
                lex_.take();
                parse_return();
                break;
            }
            parse_statement();
        }
        Token t = lex_.peek();
        if (t.kind != Tok::End)
            throw ParseError(t.line, t.col, "unexpected text after the return line");
        return std::move(g_);
    }

private:
    enum class DefSite { Input, Param, Result };

    Token expect(Tok kind, const std::string& what) {
        Token t = lex_.take();
        if (t.kind != kind)
            throw ParseError(t.line, t.col,
                             "expected " + what + ", got '" + (t.text.empty() ? "<eof>" : t.text) +
                                 "'");
        return t;
    }

    void declare(const Token& name, ValueInfo info, DefSite site) {
        if (defined_.count(name.text))
            throw ParseError(name.line, name.col,
                             "SSA violation: value '" + name.text + "' is defined more than once");
        defined_.insert(name.text);
        info.is_param = site == DefSite::Param;
        g_.values[name.text] = std::move(info);
    }

    std::int64_t integer_token() {
        Token t = expect(Tok::Number, "integer");
        auto v = parse_int(t.text);
        if (!v) throw ParseError(t.line, t.col, "expected integer, got '" + t.text + "'");
        return *v;
    }

    // format [shape] {attrs}
    ValueInfo parse_type() {
        ValueInfo info;
        info.format = parse_format();
        if (lex_.peek().kind == Tok::LBracket) {
            lex_.take();
            while (lex_.peek().kind != Tok::RBracket) {
                info.shape.push_back(integer_token());
                if (lex_.peek().kind == Tok::Comma) lex_.take();
            }
            lex_.take();
        }
        if (lex_.peek().kind == Tok::LBrace) {
            auto attrs = parse_attr_block();
            apply_value_attrs(info, attrs);
        }
        return info;
    }

    FormatSpec parse_format() {
        Token name = expect(Tok::Ident, "format name");
        std::string text = name.text;
        if (lex_.peek().kind == Tok::LParen) {
            // Re-lex the parenthesized argument list as raw text.
            int depth = 0;
            do {
                Token t = lex_.take();
                if (t.kind == Tok::LParen) ++depth;
                if (t.kind == Tok::RParen) --depth;
                text += t.text;
            } while (depth > 0 && lex_.peek().kind != Tok::End);
        }
        try {
            return FormatSpec::parse(text);
        } catch (const std::exception& e) {
            throw ParseError(name.line, name.col, e.what());
        }
    }

    // {key: value, ...} with values preserved verbatim.
    std::map<std::string, std::string> parse_attr_block() {
        std::map<std::string, std::string> attrs;
        expect(Tok::LBrace, "'{'");
        while (lex_.peek().kind != Tok::RBrace) {
            Token key = expect(Tok::Ident, "attribute name");
            expect(Tok::Colon, "':' after attribute name");
            std::string raw = raw_attr_value();
            attrs[key.text] = raw;
            if (lex_.peek().kind == Tok::Comma) lex_.take();
        }
        lex_.take();
        return attrs;
    }

    std::string raw_attr_value() {
        const std::string_view src = lex_.source();
        Token first = lex_.peek();
        std::size_t start = first.offset;
        std::size_t end = start;
        int depth = 0;
        while (true) {
            Token t = lex_.peek();
            if (t.kind == Tok::End)
                throw ParseError(t.line, t.col, "unterminated attribute value");
            if (depth == 0 && (t.kind == Tok::Comma || t.kind == Tok::RBrace)) break;
            if (t.kind == Tok::LParen || t.kind == Tok::LBracket || t.kind == Tok::LBrace) ++depth;
            if (t.kind == Tok::RParen || t.kind == Tok::RBracket || t.kind == Tok::RBrace) --depth;
            lex_.take();
            end = t.offset + t.text.size();
        }
        if (end <= start) throw ParseError(first.line, first.col, "empty attribute value");
        return std::string(src.substr(start, end - start));
    }

    void apply_value_attrs(ValueInfo& info, const std::map<std::string, std::string>& attrs) {
        for (const auto& [key, raw] : attrs) {
            if (key == "order") {
                if (raw == "row_major")
                    info.order = StreamOrder::RowMajor;
                else if (raw == "col_major")
                    info.order = StreamOrder::ColMajor;
                else
                    throw ParseError(0, 0, "bad stream order '" + raw + "'");
            } else if (key == "tile") {
                // (r,c)
                auto open = raw.find('(');
                auto comma = raw.find(',');
                auto close = raw.find(')');
                if (open == std::string::npos || comma == std::string::npos ||
                    close == std::string::npos)
                    throw ParseError(0, 0, "bad tile '" + raw + "'");
                auto r = parse_int(raw.substr(open + 1, comma - open - 1));
                auto c = parse_int(raw.substr(comma + 1, close - comma - 1));
                if (!r || !c) throw ParseError(0, 0, "bad tile '" + raw + "'");
                info.tile = {{*r, *c}};
            } else if (key == "throughput" || key == "mean" || key == "variance" ||
                       key == "max_abs") {
                auto v = parse_double(raw);
                if (!v) throw ParseError(0, 0, "bad numeric attribute '" + key + ": " + raw + "'");
                if (key == "throughput") info.throughput = *v;
                if (key == "mean") info.mean = *v;
                if (key == "variance") info.variance = *v;
                if (key == "max_abs") info.max_abs = *v;
            } else if (key == "offset") {
                auto v = parse_int(raw);
                if (!v) throw ParseError(0, 0, "bad offset '" + raw + "'");
                info.blob_offset = *v;
            } else {
                info.extra[key] = raw;
            }
        }
    }

    void parse_statement() {
        Token result = expect(Tok::Ident, "result name");
        expect(Tok::Colon, "':' after result name");
        ValueInfo result_info = parse_type();
        declare(result, std::move(result_info), DefSite::Result);

        expect(Tok::Equals, "'='");
        Token kind_tok = expect(Tok::Ident, "operator kind");
        auto kind = kind_from_name(kind_tok.text);
        if (!kind)
            throw ParseError(kind_tok.line, kind_tok.col,
                             "unknown operator kind '" + kind_tok.text + "'");

        Operation op;
        op.kind = *kind;
        op.results.push_back(result.text);

        expect(Tok::LParen, "'('");
        if (lex_.peek().kind != Tok::RParen) {
            while (true) {
                Token arg = expect(Tok::Ident, "argument name");
                std::optional<FormatSpec> ann;
                if (lex_.peek().kind == Tok::Colon) {
                    lex_.take();
                    ann = parse_format();
                }
                if (arg.text == result.text)
                    throw ParseError(arg.line, arg.col,
                                     "use-before-def: '" + arg.text +
                                         "' references the result of its own operation");
                if (!defined_.count(arg.text)) {
                    // First annotated use of an undeclared value: a graph input.
                    ValueInfo info;
                    if (ann) info.format = *ann;
                    declare(arg, std::move(info), DefSite::Input);
                    g_.inputs.push_back(arg.text);
                } else if (ann && !(g_.values[arg.text].format == *ann)) {
                    throw ParseError(arg.line, arg.col,
                                     "conflicting format annotation on '" + arg.text + "'");
                }
                op.args.push_back(arg.text);
                if (lex_.peek().kind == Tok::Comma) {
                    lex_.take();
                    continue;
                }
                break;
            }
        }
        expect(Tok::RParen, "')'");

        if (lex_.peek().kind == Tok::LBracket) {
            lex_.take();
            while (lex_.peek().kind != Tok::RBracket) {
                Token slot = expect(Tok::Ident, "parameter slot name");
                expect(Tok::Colon, "':' after parameter slot");
                ValueInfo info = parse_type();
                Token ref_tok = slot;
                ref_tok.text = result.text + "." + slot.text;
                declare(ref_tok, std::move(info), DefSite::Param);
                op.params.emplace_back(slot.text, ref_tok.text);
                if (lex_.peek().kind == Tok::Comma) lex_.take();
            }
            lex_.take();
        }

        if (lex_.peek().kind == Tok::LBrace) op.attrs = parse_attr_block();
        g_.ops.push_back(std::move(op));
    }

    void parse_return() {
        while (lex_.peek().kind == Tok::Ident) {
            Token ref = lex_.take();
            if (!defined_.count(ref.text))
                throw ParseError(ref.line, ref.col,
                                 "return references undefined value '" + ref.text + "'");
            g_.outputs.push_back(ref.text);
            if (lex_.peek().kind == Tok::Comma)
                lex_.take();
            else
                break;
        }
    }

    Lexer lex_;
    Graph g_;
    std::set<std::string> defined_;
};

std::map<std::string, std::string> value_attr_map(const ValueInfo& info) {
    std::map<std::string, std::string> attrs = info.extra;
    if (info.order == StreamOrder::ColMajor) attrs["order"] = "col_major";
    if (info.tile)
        attrs["tile"] =
            "(" + std::to_string((*info.tile)[0]) + "," + std::to_string((*info.tile)[1]) + ")";
    if (info.throughput) attrs["throughput"] = format_double(*info.throughput);
    if (info.mean) attrs["mean"] = format_double(*info.mean);
    if (info.variance) attrs["variance"] = format_double(*info.variance);
    if (info.max_abs) attrs["max_abs"] = format_double(*info.max_abs);
    if (info.blob_offset) attrs["offset"] = std::to_string(*info.blob_offset);
    return attrs;
}

void print_attr_block(std::ostream& os, const std::map<std::string, std::string>& attrs) {
    if (attrs.empty()) return;
    os << "{";
    bool first = true;
    for (const auto& [k, v] : attrs) {
        if (!first) os << ", ";
        first = false;
        os << k << ": " << v;
    }
    os << "}";
}

void print_type(std::ostream& os, const ValueInfo& info) {
    os << info.format.to_string();
    os << "[";
    for (std::size_t i = 0; i < info.shape.size(); ++i) {
        if (i) os << ",";
        os << info.shape[i];
    }
    os << "]";
    print_attr_block(os, value_attr_map(info));
}

}  // namespace

Graph parse_ir(std::string_view text) { return IrParser(text).parse(); }

std::string print_ir(const Graph& g) {
    std::ostringstream os;
    os << g.name << "(";
    for (std::size_t i = 0; i < g.inputs.size(); ++i) {
        if (i) os << ", ";
        os << g.inputs[i] << ": ";
        print_type(os, g.value(g.inputs[i]));
    }
    os << "):\n";
    for (const auto& op : g.ops) {
        os << "  " << op.results.front() << ": ";
        print_type(os, g.value(op.results.front()));
        os << " = " << kind_name(op.kind) << "(";
        for (std::size_t i = 0; i < op.args.size(); ++i) {
            if (i) os << ", ";
            os << op.args[i] << ": " << g.value(op.args[i]).format.to_string();
        }
        os << ")";
        if (!op.params.empty()) {
            os << " [";
            for (std::size_t i = 0; i < op.params.size(); ++i) {
                if (i) os << ", ";
                os << op.params[i].first << ": ";
                print_type(os, g.value(op.params[i].second));
            }
            os << "]";
        }
        if (!op.attrs.empty()) {
            os << " ";
            print_attr_block(os, op.attrs);
        }
        os << "\n";
    }
    os << "  return";
    for (std::size_t i = 0; i < g.outputs.size(); ++i) os << (i ? ", " : " ") << g.outputs[i];
    os << "\n";
    return os.str();
}

}  // namespace mxflow
