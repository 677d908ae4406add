// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0

#include "m3kg/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "m3kg/errors.hpp"

#include <nlohmann/json.hpp>

namespace m3kg {

namespace {

constexpr char kMagic[8] = {'M', '3', 'K', 'G', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) fail(Err::IoError, "checkpoint: cannot open " + path + " for writing");
    }
    void bytes(const void* p, size_t n) { out_.write(static_cast<const char*>(p), n); }
    void u8(uint8_t v) { bytes(&v, 1); }
    void u32(uint32_t v) {
        uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                        static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
        bytes(b, 4);
    }
    void u64(uint64_t v) {
        u32(static_cast<uint32_t>(v));
        u32(static_cast<uint32_t>(v >> 32));
    }
    bool good() const { return static_cast<bool>(out_); }

private:
    std::ofstream out_;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) fail(Err::IoError, "checkpoint: cannot open " + path);
    }
    void bytes(void* p, size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n))
            fail(Err::BadCheckpoint,
                 "checkpoint: " + path_ + " truncated at offset " + std::to_string(offset_));
        offset_ += n;
    }
    uint8_t u8() {
        uint8_t v;
        bytes(&v, 1);
        return v;
    }
    uint32_t u32() {
        uint8_t b[4];
        bytes(b, 4);
        return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
               static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
    }
    uint64_t u64() {
        const uint64_t lo = u32();
        return lo | static_cast<uint64_t>(u32()) << 32;
    }
    size_t offset() const { return offset_; }
    const std::string& path() const { return path_; }
    bool at_eof() {
        in_.peek();
        return in_.eof();
    }

private:
    std::ifstream in_;
    std::string path_;
    size_t offset_ = 0;
};

}  // namespace

const NamedTensor* Checkpoint::find(const std::string& name) const {
    for (const NamedTensor& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

void Checkpoint::put(const std::string& name, const Mat& m) {
    if (find(name)) fail(Err::BadCheckpoint, "checkpoint: duplicate tensor " + name);
    NamedTensor t;
    t.name = name;
    t.dtype = 1;
    t.dims = {static_cast<uint32_t>(m.rows), static_cast<uint32_t>(m.cols)};
    t.data = m.data;
    tensors.push_back(std::move(t));
}

Mat Checkpoint::get(const std::string& name) const {
    const NamedTensor* t = find(name);
    if (!t) fail(Err::BadCheckpoint, "checkpoint: missing tensor " + name);
    if (t->dims.size() != 2)
        fail(Err::BadCheckpoint, "checkpoint: tensor " + name + " has rank " +
                                     std::to_string(t->dims.size()) + ", expected 2");
    if (t->dtype != 1) fail(Err::BadCheckpoint, "checkpoint: tensor " + name + " is not f64");
    Mat m(static_cast<int>(t->dims[0]), static_cast<int>(t->dims[1]));
    m.data = t->data;
    return m;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
    Writer w(path);
    w.bytes(kMagic, sizeof(kMagic));
    w.u32(kVersion);
    w.u32(static_cast<uint32_t>(c.tensors.size()));
    for (const NamedTensor& t : c.tensors) {
        w.u32(static_cast<uint32_t>(t.name.size()));
        w.bytes(t.name.data(), t.name.size());
        w.u8(t.dtype);
        w.u8(static_cast<uint8_t>(t.dims.size()));
        uint64_t n = 1;
        for (uint32_t d : t.dims) {
            w.u32(d);
            n *= d;
        }
        if (n != t.data.size())
            fail(Err::BadCheckpoint, "checkpoint: tensor " + t.name + " dims/data mismatch");
        for (double v : t.data) {
            if (t.dtype == 1) {
                uint64_t bits;
                std::memcpy(&bits, &v, 8);
                w.u64(bits);
            } else {
                const float f = static_cast<float>(v);
                uint32_t bits;
                std::memcpy(&bits, &f, 4);
                w.u32(bits);
            }
        }
    }
    if (!w.good()) fail(Err::IoError, "checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[8];
    r.bytes(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0)
        fail(Err::BadCheckpoint, "checkpoint: " + path + " has bad magic at offset 0");
    const uint32_t version = r.u32();
    if (version != kVersion)
        fail(Err::SchemaVersionMismatch,
             "checkpoint: " + path + " has version " + std::to_string(version) + ", expected " +
                 std::to_string(kVersion));
    const uint32_t count = r.u32();
    Checkpoint c;
    for (uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        const uint32_t name_len = r.u32();
        if (name_len > (1u << 20))
            fail(Err::BadCheckpoint, "checkpoint: " + path + " has absurd name length at offset " +
                                         std::to_string(r.offset() - 4));
        t.name.resize(name_len);
        r.bytes(t.name.data(), name_len);
        t.dtype = r.u8();
        if (t.dtype > 1)
            fail(Err::BadCheckpoint, "checkpoint: " + path + " has unknown dtype " +
                                         std::to_string(t.dtype) + " at offset " +
                                         std::to_string(r.offset() - 1));
        const uint8_t rank = r.u8();
        uint64_t n = 1;
        for (uint8_t d = 0; d < rank; ++d) {
            t.dims.push_back(r.u32());
            n *= t.dims.back();
        }
        if (n > (1ull << 32))
            fail(Err::BadCheckpoint, "checkpoint: " + path + " tensor " + t.name + " too large");
        t.data.resize(n);
        for (uint64_t k = 0; k < n; ++k) {
            if (t.dtype == 1) {
                const uint64_t bits = r.u64();
                double v;
                std::memcpy(&v, &bits, 8);
                t.data[k] = v;
            } else {
                const uint32_t bits = r.u32();
                float f;
                std::memcpy(&f, &bits, 4);
                t.data[k] = f;
            }
        }
        c.tensors.push_back(std::move(t));
    }
    if (!r.at_eof())
        fail(Err::BadCheckpoint, "checkpoint: " + path + " has trailing bytes at offset " +
                                     std::to_string(r.offset()));
    return c;
}

void save_vocab(const std::string& path, const Vocab& v) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Err::IoError, "vocab: cannot open " + path + " for writing");
    for (int id = 0; id < v.size(); ++id) {
        nlohmann::json j;
        j["id"] = id;
        j["token"] = v.id_to_token[id];
        out << j.dump() << "\n";
    }
    if (!out) fail(Err::IoError, "vocab: write failed for " + path);
}

Vocab load_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Err::IoError, "vocab: cannot open " + path);
    Vocab v;
    std::string line;
    int lineno = 0;
    static const char* kSpecials[4] = {"<pad>", "<bos>", "<eos>", "<unk>"};
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception&) {
            fail(Err::ParseError, "vocab: malformed JSON", lineno);
        }
        if (!j.is_object() || !j.contains("id") || !j.contains("token") ||
            !j["id"].is_number_integer() || !j["token"].is_string())
            fail(Err::ParseError, "vocab: need {\"id\":int,\"token\":string}", lineno);
        const int id = j["id"].get<int>();
        const std::string tok = j["token"].get<std::string>();
        if (id != v.size())
            fail(Err::ParseError,
                 "vocab: id " + std::to_string(id) + " breaks dense order, expected " +
                     std::to_string(v.size()),
                 lineno);
        if (id < 4 && tok != kSpecials[id])
            fail(Err::ParseError, "vocab: slot " + std::to_string(id) + " must be " +
                                      kSpecials[id] + ", got " + tok,
                 lineno);
        v.id_to_token.push_back(tok);
    }
    if (v.size() < 4) fail(Err::ParseError, "vocab: missing the four specials", lineno);
    return v;
}

} // namespace m3kg
