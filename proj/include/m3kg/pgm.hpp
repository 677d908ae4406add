// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary (P5) 8-bit PGM image I/O. Pixel bytes map to [0,1] by division by
// 255.
#pragma once

#include <cmath>
#include <fstream>
#include <string>

#include "m3kg/errors.hpp"
#include "m3kg/matrix.hpp"

namespace m3kg {

inline Mat read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Err::IoError, "read_pgm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P5") fail(Err::ParseError, "read_pgm: not a P5 file: " + path);
    auto next_int = [&in, &path]() {
        // Skip whitespace and '#' comment lines between header fields.
        int c;
        while ((c = in.peek()) != EOF) {
            if (c == '#') {
                std::string dummy;
                std::getline(in, dummy);
            } else if (std::isspace(c)) {
                in.get();
            } else {
                break;
            }
        }
        long v = -1;
        if (!(in >> v)) fail(Err::ParseError, "read_pgm: bad header in " + path);
        return v;
    };
    const long w = next_int();
    const long h = next_int();
    const long maxval = next_int();
    if (w <= 0 || h <= 0) fail(Err::ParseError, "read_pgm: bad dimensions in " + path);
    if (maxval != 255)
        fail(Err::ParseError, "read_pgm: only 8-bit (maxval 255) supported: " + path);
    in.get();  // single whitespace byte before the raster
    Mat img(static_cast<int>(h), static_cast<int>(w));
    std::string raster(static_cast<size_t>(w) * h, '\0');
    in.read(raster.data(), static_cast<std::streamsize>(raster.size()));
    if (in.gcount() != static_cast<std::streamsize>(raster.size()))
        fail(Err::ParseError, "read_pgm: truncated raster in " + path);
    for (size_t i = 0; i < raster.size(); ++i)
        img.data[i] = static_cast<unsigned char>(raster[i]) / 255.0;
    return img;
}

inline void write_pgm(const std::string& path, const Mat& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Err::IoError, "write_pgm: cannot open " + path);
    out << "P5\n" << img.cols << " " << img.rows << "\n255\n";
    for (double v : img.data) {
        double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        out.put(static_cast<char>(std::lround(c * 255.0)));
    }
    if (!out) fail(Err::IoError, "write_pgm: write failed for " + path);
}

} // namespace m3kg
