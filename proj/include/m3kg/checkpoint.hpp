// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary parameter container: magic "M3KGCKPT", a u32 format version, then
// a table of named tensors (length-prefixed UTF-8 name, dtype byte
// {0 = f32, 1 = f64}, rank byte, u32 dims, row-major little-endian data).
// The vocabulary travels separately as a JSON Lines sidecar.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "m3kg/matrix.hpp"
#include "m3kg/report_decoder.hpp"

namespace m3kg {

struct NamedTensor {
    std::string name;
    uint8_t dtype = 1;  // 0 = f32, 1 = f64
    std::vector<uint32_t> dims;
    std::vector<double> data;  // held as double in memory for either dtype
};

struct Checkpoint {
    std::vector<NamedTensor> tensors;  // saved and loaded in this order

    const NamedTensor* find(const std::string& name) const;
    // Appends a rank-2 f64 tensor. Duplicate names throw BadCheckpoint.
    void put(const std::string& name, const Mat& m);
    // Fetches a rank-2 tensor as a Mat. Missing names, other ranks, and f32
    // payloads throw BadCheckpoint.
    Mat get(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& c);

// Throws BadCheckpoint with the byte offset of the problem for truncated or
// malformed files, SchemaVersionMismatch for an unsupported version.
Checkpoint load_checkpoint(const std::string& path);

// JSON Lines sidecar, one {"id":N,"token":"..."} object per line in id
// order. The loader enforces dense ids from 0 and the four specials, and
// reports malformed lines with 1-based line numbers.
void save_vocab(const std::string& path, const Vocab& v);
Vocab load_vocab(const std::string& path);

} // namespace m3kg
