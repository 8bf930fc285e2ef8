// Text form of the dataflow IR (.mir files).
//
//   name(input: type, ...):
//     result: type = kind(arg: format, ...) [slot: type, ...] {attr, ...}
//     return result, ...
//
// A type is a format spec, an optional [d0,d1,...] shape suffix and an
// optional {key: value, ...} attribute block. Unknown attributes are
// preserved verbatim. Inputs may also be introduced by their first
// annotated use, so header declarations can be elided in hand-written
// files; the printer always declares them.

#pragma once

#include <stdexcept>
#include <string>

#include "mxflow/ir.hpp"

namespace mxflow {

class ParseError : public std::runtime_error {
public:
    ParseError(int line, int col, const std::string& msg)
        : std::runtime_error(std::to_string(line) + ":" + std::to_string(col) + ": " + msg),
          line(line),
          col(col) {}
    int line;
    int col;
};

Graph parse_ir(std::string_view text);

// Canonical form: one operation per line in stored order, attributes
// sorted by key, shortest round-trip numerals. parse_ir(print_ir(g))
// is structurally equal to g for every valid graph.
std::string print_ir(const Graph& g);

}  // namespace mxflow
