// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared text helpers: case-folded whitespace tokenization and joining.
#pragma once

#include <cctype>
#include <sstream>
#include <string>
#include <vector>

namespace m3kg {

inline std::string fold_case(const std::string& s) {
    std::string out = s;
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::vector<std::string> split_tokens(const std::string& text) {
    std::istringstream in(fold_case(text));
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

inline std::string join_tokens(const std::vector<std::string>& toks) {
    std::string out;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (i) out += ' ';
        out += toks[i];
    }
    return out;
}

} // namespace m3kg
