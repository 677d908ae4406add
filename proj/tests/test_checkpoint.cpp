// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "m3kg/adamw.hpp"
#include "m3kg/checkpoint.hpp"
#include "m3kg/errors.hpp"
#include "m3kg/rng.hpp"
#include "testutil.hpp"

using namespace m3kg;
using m3kg::test::temp_path;

namespace {

Mat random_mat(Rng& rng, int r, int c) {
    Mat m(r, c);
    rng.fill_uniform(m, -10.0, 10.0);
    return m;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

TEST_CASE("checkpoint header layout is exactly as documented") {
    Checkpoint c;
    Mat m(1, 2);
    m(0, 0) = 1.0;
    m(0, 1) = -2.5;
    c.put("w", m);
    const std::string path = temp_path("layout.ckpt");
    save_checkpoint(path, c);
    const std::string bytes = read_file(path);
    // magic(8) + version(4) + count(4) + name_len(4) + "w"(1) + dtype(1) +
    // rank(1) + dims(8) + data(16)
    REQUIRE(bytes.size() == 8 + 4 + 4 + 4 + 1 + 1 + 1 + 8 + 16);
    CHECK(bytes.substr(0, 8) == "M3KGCKPT");
    CHECK(static_cast<unsigned char>(bytes[8]) == 1);   // version LE
    CHECK(static_cast<unsigned char>(bytes[12]) == 1);  // count LE
    CHECK(static_cast<unsigned char>(bytes[16]) == 1);  // name length LE
    CHECK(bytes[20] == 'w');
    CHECK(static_cast<unsigned char>(bytes[21]) == 1);  // dtype f64
    CHECK(static_cast<unsigned char>(bytes[22]) == 2);  // rank
    CHECK(static_cast<unsigned char>(bytes[23]) == 1);  // dims[0] = 1
    CHECK(static_cast<unsigned char>(bytes[27]) == 2);  // dims[1] = 2
    std::remove(path.c_str());
}

TEST_CASE("round trip is bit-exact on 100 random checkpoints") {
    Rng rng(401);
    const std::string path = temp_path("rt.ckpt");
    for (int it = 0; it < 100; ++it) {
        Checkpoint c;
        const int n_tensors = 1 + static_cast<int>(rng.below(5));
        for (int k = 0; k < n_tensors; ++k) {
            const int r = 1 + static_cast<int>(rng.below(6));
            const int cc = 1 + static_cast<int>(rng.below(6));
            c.put("tensor_" + std::to_string(k), random_mat(rng, r, cc));
        }
        save_checkpoint(path, c);
        const Checkpoint back = load_checkpoint(path);
        REQUIRE(back.tensors.size() == c.tensors.size());
        for (size_t k = 0; k < c.tensors.size(); ++k) {
            CHECK(back.tensors[k].name == c.tensors[k].name);
            CHECK(back.tensors[k].dims == c.tensors[k].dims);
            CHECK(bit_equal(back.get(c.tensors[k].name), c.get(c.tensors[k].name)));
        }
    }
    std::remove(path.c_str());
}

TEST_CASE("checkpoint preserves non-finite and denormal payloads bit-for-bit") {
    Checkpoint c;
    Mat m(1, 4);
    m(0, 0) = 0.0;
    m(0, 1) = -0.0;
    m(0, 2) = 5e-324;  // smallest denormal
    m(0, 3) = 1.0 / 3.0;
    c.put("edge", m);
    const std::string path = temp_path("edge.ckpt");
    save_checkpoint(path, c);
    CHECK(bit_equal(load_checkpoint(path).get("edge"), m));
    std::remove(path.c_str());
}

TEST_CASE("checkpoint access errors") {
    Checkpoint c;
    c.put("a", Mat(2, 2));
    CHECK_THROWS_WITH_AS(c.put("a", Mat(1, 1)), doctest::Contains("duplicate"), Error);
    CHECK_THROWS_WITH_AS(c.get("missing"), doctest::Contains("missing"), Error);
    NamedTensor t;
    t.name = "r1";
    t.dtype = 1;
    t.dims = {4};
    t.data = {1, 2, 3, 4};
    c.tensors.push_back(t);
    CHECK_THROWS_WITH_AS(c.get("r1"), doctest::Contains("rank"), Error);
}

TEST_CASE("malformed checkpoints fail with located errors") {
    const std::string good_path = temp_path("good.ckpt");
    Checkpoint c;
    Rng rng(409);
    c.put("w", random_mat(rng, 3, 2));
    save_checkpoint(good_path, c);
    const std::string good = read_file(good_path);
    const std::string bad_path = temp_path("bad.ckpt");

    SUBCASE("bad magic") {
        std::string b = good;
        b[0] = 'X';
        write_file(bad_path, b);
        CHECK_THROWS_WITH_AS(load_checkpoint(bad_path), doctest::Contains("bad magic"), Error);
    }
    SUBCASE("wrong version") {
        std::string b = good;
        b[8] = 9;
        write_file(bad_path, b);
        try {
            load_checkpoint(bad_path);
            FAIL("expected throw");
        } catch (const Error& e) {
            CHECK(e.code() == Err::SchemaVersionMismatch);
        }
    }
    SUBCASE("truncated data") {
        write_file(bad_path, good.substr(0, good.size() - 5));
        CHECK_THROWS_WITH_AS(load_checkpoint(bad_path), doctest::Contains("truncated"), Error);
    }
    SUBCASE("trailing bytes") {
        write_file(bad_path, good + "zz");
        CHECK_THROWS_WITH_AS(load_checkpoint(bad_path), doctest::Contains("trailing"), Error);
    }
    SUBCASE("unknown dtype") {
        std::string b = good;
        b[21] = 7;  // dtype byte of tensor "w"
        write_file(bad_path, b);
        CHECK_THROWS_WITH_AS(load_checkpoint(bad_path), doctest::Contains("dtype"), Error);
    }
    std::remove(good_path.c_str());
    std::remove(bad_path.c_str());
}

TEST_CASE("vocab sidecar round-trips and reports bad lines by number") {
    const Vocab v = build_vocab({"pleural effusion is seen", "no acute findings"});
    const std::string path = temp_path("vocab.jsonl");
    save_vocab(path, v);
    const Vocab back = load_vocab(path);
    CHECK(back.id_to_token == v.id_to_token);

    SUBCASE("malformed JSON points at the line") {
        std::ofstream out(path, std::ios::app);
        out << "{oops\n";
        out.close();
        try {
            load_vocab(path);
            FAIL("expected throw");
        } catch (const Error& e) {
            CHECK(e.code() == Err::ParseError);
            CHECK(e.line() == v.size() + 1);
        }
    }
    SUBCASE("non-dense ids rejected") {
        write_file(path,
                   "{\"id\":0,\"token\":\"<pad>\"}\n{\"id\":2,\"token\":\"<eos>\"}\n");
        try {
            load_vocab(path);
            FAIL("expected throw");
        } catch (const Error& e) {
            CHECK(e.line() == 2);
        }
    }
    SUBCASE("specials enforced in the first four slots") {
        write_file(path, "{\"id\":0,\"token\":\"word\"}\n");
        CHECK_THROWS_WITH_AS(load_vocab(path), doctest::Contains("<pad>"), Error);
    }
    std::remove(path.c_str());
}

TEST_CASE("adamw: single step with unit gradient moves by about lr") {
    Mat p(1, 1);
    p(0, 0) = 1.0;
    Mat g(1, 1);
    g(0, 0) = 1.0;
    AdamW opt;
    opt.lr = 0.1;
    opt.weight_decay = 0.0;
    opt.step({&p}, {&g});
    // mhat = g, vhat = g^2 -> update = lr * g / (|g| + eps) = lr.
    CHECK(p(0, 0) == doctest::Approx(1.0 - 0.1).epsilon(1e-6));
}

TEST_CASE("adamw: weight decay is decoupled from the gradient path") {
    Mat p(1, 1);
    p(0, 0) = 2.0;
    Mat g(1, 1);  // zero gradient: only decay acts
    AdamW opt;
    opt.lr = 0.5;
    opt.weight_decay = 0.1;
    opt.step({&p}, {&g});
    CHECK(p(0, 0) == doctest::Approx(2.0 - 0.5 * 0.1 * 2.0).epsilon(1e-12));
}

TEST_CASE("adamw converges on a quadratic and is deterministic") {
    auto run = [] {
        Mat p(2, 1);
        p(0, 0) = 3.0;
        p(1, 0) = -2.0;
        AdamW opt;
        opt.lr = 0.05;
        opt.weight_decay = 0.0;
        for (int it = 0; it < 400; ++it) {
            Mat g(2, 1);
            g(0, 0) = 2.0 * p(0, 0);  // d/dp of p0^2 + (p1-1)^2
            g(1, 0) = 2.0 * (p(1, 0) - 1.0);
            opt.step({&p}, {&g});
        }
        return p;
    };
    const Mat a = run();
    const Mat b = run();
    CHECK(bit_equal(a, b));
    CHECK(std::fabs(a(0, 0)) < 0.05);
    CHECK(std::fabs(a(1, 0) - 1.0) < 0.05);
}

TEST_CASE("adamw rejects inconsistent parameter lists") {
    Mat p(2, 2), g(2, 2), other(1, 1), og(1, 1);
    AdamW opt;
    opt.step({&p}, {&g});
    CHECK_THROWS_AS(opt.step({&p, &other}, {&g, &og}), Error);
    Mat bad_g(3, 2);
    CHECK_THROWS_AS(opt.step({&p}, {&bad_g}), Error);
}
