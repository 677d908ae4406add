// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace m3kg {

enum class Err {
    EmptyField,
    BadEntityType,
    UnknownEntity,
    SelfLoop,
    ParseError,
    SchemaVersionMismatch,
    FrozenGraph,
    BadBudgets,
    BadDim,
    BadDims,
    IndexOutOfRange,
    ShapeMismatch,
    HeadDivisibility,
    TooManyNodes,
    BadScaleIndex,
    EmptyInput,
    EmptyActivation,
    EmptyMemory,
    EmptyGraph,
    LengthMismatch,
    EmptyCorpus,
    BadParams,
    BadConfig,
    IoError,
    BadCheckpoint,
};

// Single exception type carrying a stable code; `line` is set for parse
// errors on line-oriented files (1-based), -1 otherwise.
class Error : public std::runtime_error {
public:
    Error(Err code, const std::string& msg, int line = -1)
        : std::runtime_error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
          code_(code), line_(line) {}

    Err code() const { return code_; }
    int line() const { return line_; }

private:
    Err code_;
    int line_;
};

[[noreturn]] inline void fail(Err code, const std::string& msg, int line = -1) {
    throw Error(code, msg, line);
}

} // namespace m3kg
