// Copyright (c) 2026 the m3kg authors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "gradcheck.hpp"
#include "m3kg/pgm.hpp"
#include "m3kg/vision_path.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace m3kg;
using namespace m3kg::ad;
using m3kg::test::grad_check;
using m3kg::test::oracle_matmul;
using m3kg::test::oracle_mha;
using m3kg::test::temp_path;

namespace {

Mat random_mat(Rng& rng, int r, int c, double scale = 1.0) {
    Mat m(r, c);
    rng.fill_uniform(m, -scale, scale);
    return m;
}

NodeId reduce_scalar(Tape& t, NodeId x) {
    const Mat& v = t.val(x);
    Mat w(v.cols, 1);
    for (int i = 0; i < v.cols; ++i) w(i, 0) = 0.31 + 0.07 * i;
    Mat ones(1, v.rows);
    for (int i = 0; i < v.rows; ++i) ones.data[i] = 1.0 + 0.01 * i;
    return matmul(t, t.leaf(ones), matmul(t, x, t.leaf(w)));
}

} // namespace

TEST_CASE("pgm round trip is exact for byte-representable values") {
    Rng rng(11);
    Mat img(9, 13);
    for (double& v : img.data) v = static_cast<double>(rng.below(256)) / 255.0;
    const std::string path = temp_path("roundtrip.pgm");
    write_pgm(path, img);
    const Mat back = read_pgm(path);
    CHECK(bit_equal(back, img));
    std::remove(path.c_str());
}

TEST_CASE("pgm reader skips comment lines and validates the header") {
    const std::string path = temp_path("comment.pgm");
    {
        std::ofstream out(path, std::ios::binary);
        out << "P5\n# a comment\n2 1\n# another\n255\n";
        out.put(static_cast<char>(0));
        out.put(static_cast<char>(255));
    }
    const Mat img = read_pgm(path);
    CHECK(img.rows == 1);
    CHECK(img.cols == 2);
    CHECK(img(0, 0) == 0.0);
    CHECK(img(0, 1) == 1.0);
    std::remove(path.c_str());

    const std::string bad = temp_path("bad.pgm");
    {
        std::ofstream out(bad, std::ios::binary);
        out << "P2\n2 1\n255\n0 0\n";
    }
    CHECK_THROWS_AS(read_pgm(bad), Error);
    {
        std::ofstream out(bad, std::ios::binary);
        out << "P5\n2 1\n65535\n";
        for (int i = 0; i < 4; ++i) out.put('\0');
    }
    CHECK_THROWS_WITH_AS(read_pgm(bad), doctest::Contains("maxval 255"), Error);
    {
        std::ofstream out(bad, std::ios::binary);
        out << "P5\n2 2\n255\n";
        out.put('\0');  // 3 bytes short
    }
    CHECK_THROWS_WITH_AS(read_pgm(bad), doctest::Contains("truncated"), Error);
    std::remove(bad.c_str());
}

TEST_CASE("patchify lays blocks out row-major, pixels within a block row-major") {
    Mat img(4, 4);
    for (int i = 0; i < 16; ++i) img.data[i] = i;
    const Mat blocks = patchify(img, 2);
    REQUIRE(blocks.rows == 4);
    REQUIRE(blocks.cols == 4);
    // Block 0 covers pixel rows 0..1, cols 0..1.
    CHECK(blocks(0, 0) == 0.0);
    CHECK(blocks(0, 1) == 1.0);
    CHECK(blocks(0, 2) == 4.0);
    CHECK(blocks(0, 3) == 5.0);
    // Block 1 covers pixel rows 0..1, cols 2..3.
    CHECK(blocks(1, 0) == 2.0);
    CHECK(blocks(1, 3) == 7.0);
    // Block 2 covers pixel rows 2..3, cols 0..1.
    CHECK(blocks(2, 0) == 8.0);
    CHECK(blocks(3, 3) == 15.0);
}

TEST_CASE("patchify rejects empty and non-divisible images") {
    CHECK_THROWS_AS(patchify(Mat(), 2), Error);
    CHECK_THROWS_AS(patchify(Mat(13, 16), 8), Error);
    CHECK_THROWS_AS(patchify(Mat(16, 12), 8), Error);
    CHECK_THROWS_AS(patchify(Mat(4, 4), 0), Error);
}

TEST_CASE("encode_image matches a per-patch loop oracle") {
    Rng rng(23);
    PatchEncoderParams p;
    p.init(rng, 8, 6);
    const Mat img = random_mat(rng, 16, 24);
    Tape t;
    const NodeId W = t.leaf(p.W_patch);
    const NodeId b = t.leaf(p.b);
    const Mat F_v = t.val(encode_image(t, img, W, b, 8));
    REQUIRE(F_v.rows == 6);  // (16/8) * (24/8)
    REQUIRE(F_v.cols == 6);
    const Mat blocks = patchify(img, 8);
    for (int r = 0; r < F_v.rows; ++r)
        for (int c = 0; c < F_v.cols; ++c) {
            double want = p.b(0, c);
            for (int k = 0; k < blocks.cols; ++k) want += blocks(r, k) * p.W_patch(k, c);
            CHECK(F_v(r, c) == doctest::Approx(want).epsilon(1e-12));
        }
}

TEST_CASE("encode_image is linear in the pixels when the bias is zero") {
    Rng rng(29);
    PatchEncoderParams p;
    p.init(rng, 4, 5);
    p.b = Mat(1, 5);
    const Mat img = random_mat(rng, 8, 8);
    Mat scaled = img;
    for (double& v : scaled.data) v *= 3.5;
    Tape t;
    const NodeId W = t.leaf(p.W_patch);
    const NodeId b = t.leaf(p.b);
    const Mat a = t.val(encode_image(t, img, W, b, 4));
    const Mat s = t.val(encode_image(t, scaled, W, b, 4));
    for (size_t i = 0; i < a.data.size(); ++i)
        CHECK(s.data[i] == doctest::Approx(3.5 * a.data[i]).epsilon(1e-12));
}

TEST_CASE("qformer keeps one row per query and adds the residual") {
    Rng rng(31);
    const int d = 8;
    QFormerParams q;
    q.init(rng, 14, d, 4);
    // Zero query/key projections give uniform attention, so the read is the
    // column mean of F_v . W_V, pushed through W_O, on every row.
    q.attn.W_Q = Mat(d, d);
    q.attn.W_K = Mat(d, d);
    const Mat F_v = random_mat(rng, 5, d);
    Tape t;
    const NodeId fv = t.leaf(F_v);
    const NodeId qs = t.leaf(q.queries);
    const MhaBound b = bind(t, q.attn);
    std::vector<Mat> attn;
    const Mat out = t.val(qformer(t, fv, qs, b, &attn));
    REQUIRE(out.rows == 14);
    REQUIRE(out.cols == d);
    const Mat v_proj = oracle_matmul(F_v, q.attn.W_V);
    Mat mean_v(1, d);
    for (int c = 0; c < d; ++c) {
        for (int r = 0; r < 5; ++r) mean_v(0, c) += v_proj(r, c);
        mean_v(0, c) /= 5.0;
    }
    const Mat read = oracle_matmul(mean_v, q.attn.W_O);
    for (int r = 0; r < 14; ++r)
        for (int c = 0; c < d; ++c)
            CHECK(out(r, c) == doctest::Approx(q.queries(r, c) + read(0, c)).epsilon(1e-10));
    REQUIRE(attn.size() == 4);
    for (const Mat& a : attn)
        for (double w : a.data) CHECK(w == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("qformer matches the attention oracle plus residual") {
    Rng rng(37);
    const int d = 8;
    QFormerParams q;
    q.init(rng, 3, d, 2);
    const Mat F_v = random_mat(rng, 6, d);
    Tape t;
    const NodeId fv = t.leaf(F_v);
    const NodeId qs = t.leaf(q.queries);
    const Mat out = t.val(qformer(t, fv, qs, bind(t, q.attn)));
    const Mat want_read = oracle_mha(q.queries, F_v, q.attn, nullptr);
    for (int r = 0; r < out.rows; ++r)
        for (int c = 0; c < out.cols; ++c)
            CHECK(out(r, c) ==
                  doctest::Approx(q.queries(r, c) + want_read(r, c)).epsilon(1e-10));
}

TEST_CASE("qformer rejects an empty patch grid") {
    Rng rng(41);
    QFormerParams q;
    q.init(rng, 2, 4, 2);
    Tape t;
    const NodeId fv = t.leaf(Mat(0, 4));
    const NodeId qs = t.leaf(q.queries);
    const MhaBound b = bind(t, q.attn);
    CHECK_THROWS_AS(qformer(t, fv, qs, b), Error);
}

TEST_CASE("gradients flow through encode_image and qformer") {
    Rng rng(43);
    const int d = 6;
    PatchEncoderParams pe;
    pe.init(rng, 2, d);
    QFormerParams q;
    q.init(rng, 3, d, 2);
    const Mat img = random_mat(rng, 4, 4);
    const auto res = grad_check(
        {pe.W_patch, pe.b, q.queries, q.attn.W_Q, q.attn.W_K, q.attn.W_V, q.attn.W_O},
        [&](Tape& t, const std::vector<NodeId>& in) {
            const NodeId fv = encode_image(t, img, in[0], in[1], 2);
            MhaBound b;
            b.heads = q.attn.heads;
            b.W_Q = in[3];
            b.W_K = in[4];
            b.W_V = in[5];
            b.W_O = in[6];
            return reduce_scalar(t, qformer(t, fv, in[2], b));
        });
    CHECK(res.ok());
}

TEST_CASE("patch_activation mean-pools pixel blocks") {
    Mat m(4, 4);
    for (int i = 0; i < 16; ++i) m.data[i] = i;
    const Mat s = patch_activation(m, 2);
    REQUIRE(s.rows == 2);
    REQUIRE(s.cols == 2);
    CHECK(s(0, 0) == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
    CHECK(s(0, 1) == doctest::Approx((2 + 3 + 6 + 7) / 4.0));
    CHECK(s(1, 0) == doctest::Approx((8 + 9 + 12 + 13) / 4.0));
    CHECK(s(1, 1) == doctest::Approx((10 + 11 + 14 + 15) / 4.0));
}

TEST_CASE("token extraction selects normalized activations at or above tau") {
    // 2x2 patch grid, M = [[1, 0.4], [0.6, 0.2]], tau = 0.5: patches 0 and 2
    // clear the threshold, so the feature is the mean of rows 0 and 2.
    Mat M = Mat::from_rows({{1.0, 0.4}, {0.6, 0.2}});
    Mat F = Mat::from_rows({{1.0, 2.0}, {10.0, 20.0}, {3.0, 4.0}, {30.0, 40.0}});
    const VisionToken tok = extract_vision_token(M, F, 0.5, 7, "img_0");
    CHECK(tok.label_index == 7);
    CHECK(tok.source_id == "img_0");
    REQUIRE(tok.feature.size() == 2);
    CHECK(tok.feature[0] == doctest::Approx(2.0));   // (1 + 3) / 2
    CHECK(tok.feature[1] == doctest::Approx(3.0));   // (2 + 4) / 2
}

TEST_CASE("token extraction is invariant to positive scaling of the map") {
    Rng rng(47);
    Mat M(3, 3);
    for (double& v : M.data) v = rng.uniform(0.1, 2.0);
    const Mat F = random_mat(rng, 9, 5);
    const VisionToken a = extract_vision_token(M, F, 0.6, 0, "s");
    Mat scaled = M;
    for (double& v : scaled.data) v *= 123.0;
    const VisionToken b = extract_vision_token(scaled, F, 0.6, 0, "s");
    REQUIRE(a.feature.size() == b.feature.size());
    for (size_t i = 0; i < a.feature.size(); ++i) CHECK(a.feature[i] == b.feature[i]);
}

TEST_CASE("token extraction edge cases") {
    const Mat F = Mat::from_rows({{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}, {2.0, 2.0}});
    Mat M(2, 2);

    SUBCASE("all-zero map") {
        CHECK_THROWS_WITH_AS(extract_vision_token(M, F, 0.5, 0, "s"),
                             doctest::Contains("all zero"), Error);
    }
    SUBCASE("tau out of range") {
        M.data[0] = 1.0;
        CHECK_THROWS_AS(extract_vision_token(M, F, 0.0, 0, "s"), Error);
        CHECK_THROWS_AS(extract_vision_token(M, F, 1.5, 0, "s"), Error);
    }
    SUBCASE("negative activation") {
        M.data[0] = 1.0;
        M.data[3] = -0.1;
        CHECK_THROWS_AS(extract_vision_token(M, F, 0.5, 0, "s"), Error);
    }
    SUBCASE("activation count must match feature rows") {
        CHECK_THROWS_AS(extract_vision_token(Mat(1, 3), F, 0.5, 0, "s"), Error);
    }
    SUBCASE("tau = 1 keeps only maximal patches") {
        M = Mat::from_rows({{0.3, 0.9}, {0.9, 0.1}});
        const VisionToken tok = extract_vision_token(M, F, 1.0, 1, "s");
        CHECK(tok.feature[0] == doctest::Approx(0.5));  // mean of rows 1, 2
        CHECK(tok.feature[1] == doctest::Approx(1.0));
    }
    SUBCASE("constant map keeps everything for any tau") {
        for (double& v : M.data) v = 0.25;
        const VisionToken tok = extract_vision_token(M, F, 1.0, 1, "s");
        CHECK(tok.feature[0] == doctest::Approx(1.0));
        CHECK(tok.feature[1] == doctest::Approx(1.0));
    }
}

TEST_CASE("build_memory keeps the first n_visual tokens in insertion order") {
    KnowledgeGraph g;
    g.d_vision = 2;
    for (int i = 0; i < 5; ++i)
        add_vision_token(g, i % kNumDiseaseLabels, {static_cast<double>(i), 0.5}, "img");
    const VisionMemory mem = build_memory(g, 3);
    REQUIRE(mem.K_V.rows == 3);
    REQUIRE(mem.K_V.cols == 2);
    for (int i = 0; i < 3; ++i) {
        CHECK(mem.K_V(i, 0) == static_cast<double>(i));
        CHECK(mem.K_V(i, 1) == 0.5);
    }
    CHECK(build_memory(g, 100).K_V.rows == 5);
    CHECK_THROWS_AS(build_memory(g, 0), Error);
}

TEST_CASE("retrieve with a single memory row projects that row to every output") {
    Rng rng(53);
    const int d = 6;
    MhaParams p;
    p.init(rng, d, 2);
    const Mat query = random_mat(rng, 4, d);
    const Mat mem = random_mat(rng, 1, d);
    Tape t;
    const NodeId q = t.leaf(query);
    const NodeId m = t.leaf(mem);
    std::vector<Mat> attn;
    const Mat out = t.val(retrieve(t, q, m, bind(t, p), &attn));
    const Mat want = oracle_matmul(oracle_matmul(mem, p.W_V), p.W_O);
    REQUIRE(out.rows == 4);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < d; ++c)
            CHECK(out(r, c) == doctest::Approx(want(0, c)).epsilon(1e-10));
    for (const Mat& a : attn)
        for (double w : a.data) CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("retrieve matches the attention oracle and attention rows are stochastic") {
    Rng rng(59);
    const int d = 8;
    MhaParams p;
    p.init(rng, d, 4);
    const Mat query = random_mat(rng, 3, d);
    const Mat mem = random_mat(rng, 7, d);
    Tape t;
    const NodeId q = t.leaf(query);
    const NodeId m = t.leaf(mem);
    std::vector<Mat> attn;
    const Mat out = t.val(retrieve(t, q, m, bind(t, p), &attn));
    const Mat want = oracle_mha(query, mem, p, nullptr);
    CHECK(max_abs_diff(out, want) < 1e-10);
    REQUIRE(attn.size() == 4);
    for (const Mat& a : attn)
        for (int r = 0; r < a.rows; ++r) {
            double s = 0.0;
            for (int c = 0; c < a.cols; ++c) s += a(r, c);
            CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        }
}

TEST_CASE("retrieve rejects an empty memory and gradients flow through it") {
    Rng rng(61);
    const int d = 4;
    MhaParams p;
    p.init(rng, d, 2);
    {
        Tape t;
        const NodeId q = t.leaf(random_mat(rng, 2, d));
        const NodeId m = t.leaf(Mat(0, d));
        const MhaBound b = bind(t, p);
        CHECK_THROWS_AS(retrieve(t, q, m, b), Error);
    }
    const auto res = grad_check(
        {random_mat(rng, 2, d), random_mat(rng, 5, d), p.W_Q, p.W_K, p.W_V, p.W_O},
        [&](Tape& t, const std::vector<NodeId>& in) {
            MhaBound b;
            b.heads = p.heads;
            b.W_Q = in[2];
            b.W_K = in[3];
            b.W_V = in[4];
            b.W_O = in[5];
            return reduce_scalar(t, retrieve(t, in[0], in[1], b));
        });
    CHECK(res.ok());
}
