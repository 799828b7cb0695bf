// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <fstream>
#include <set>

#include "doctest.h"
#include "support.hpp"
#include "tinyunet/data.hpp"
#include "tinyunet/errors.hpp"
#include "tinyunet/serialize.hpp"

using namespace tinyunet;
using testing::TempDir;

namespace {

void write_text(const std::string& path, const std::string& text) {
    std::ofstream(path, std::ios::binary) << text;
}

GrayImage gray(int h, int w, std::uint8_t v) {
    return GrayImage{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, v)};
}

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("manifest parsing") {
    TempDir dir;
    const std::string path = dir.file("m.tsv");
    write_text(path, "# header\n\na.pgm\tam.pgm\n/abs/b.pgm\tbm.pgm\n");
    const Manifest m = load_manifest(path);
    REQUIRE(m.entries.size() == 2);
    CHECK(m.entries[0].image == dir.file("a.pgm"));
    CHECK(m.entries[1].image == "/abs/b.pgm");
    CHECK(!m.extent.has_value());

    write_text(path, "# only comments\n\n# extent: 32x48\n");
    const Manifest empty = load_manifest(path);
    CHECK(empty.entries.empty());
    REQUIRE(empty.extent.has_value());
    CHECK(*empty.extent == Extent{32, 48});
}

TEST_CASE("manifest errors name the line") {
    TempDir dir;
    const std::string path = dir.file("m.tsv");
    write_text(path, "single_field.pgm\n");
    CHECK_THROWS_AS(load_manifest(path), FormatError);
    CHECK(error_of([&] { load_manifest(path); }).find("line 1") != std::string::npos);

    write_text(path, "# c\na\tb\na\tc\n");
    CHECK(error_of([&] { load_manifest(path); }).find("line 3") != std::string::npos);

    CHECK_THROWS_AS(load_manifest(dir.file("missing.tsv")), IoError);
}

TEST_CASE("manifest save and reload") {
    TempDir dir;
    Manifest m;
    m.entries = {{dir.file("x.pgm"), dir.file("y.pgm")}};
    m.extent = Extent{16, 16};
    save_manifest(m, dir.file("out.tsv"));
    const Manifest back = load_manifest(dir.file("out.tsv"));
    CHECK(back.entries.size() == 1);
    CHECK(back.entries[0].image == m.entries[0].image);
    CHECK(back.extent == m.extent);
}

TEST_CASE("PGM round trip and malformed input") {
    TempDir dir;
    GrayImage g = gray(3, 5, 0);
    for (std::size_t i = 0; i < g.pixels.size(); ++i) g.pixels[i] = static_cast<std::uint8_t>(i * 17);
    write_pgm(dir.file("g.pgm"), g);
    const GrayImage back = read_pgm(dir.file("g.pgm"));
    CHECK(back.height == 3);
    CHECK(back.width == 5);
    CHECK(back.pixels == g.pixels);

    CHECK_THROWS_AS(parse_pgm("P2\n1 1\n255\n0"), FormatError);
    CHECK_THROWS_AS(parse_pgm("P5\n2 2\n255\n\x01"), FormatError);
    CHECK_THROWS_AS(parse_pgm("P5\n1 1\n65535\n\x01\x01"), FormatError);
    CHECK(parse_pgm("P5 # comment\n2 1 255\n\x07\x08").pixels == std::vector<std::uint8_t>{7, 8});
}

TEST_CASE("sample loading scales images and validates masks") {
    TempDir dir;
    write_pgm(dir.file("i.pgm"), gray(4, 4, 128));
    write_pgm(dir.file("m.pgm"), gray(4, 4, 255));
    const Sample s = load_sample({dir.file("i.pgm"), dir.file("m.pgm")});
    CHECK(std::abs(s.image[0] - 128.0 / 255.0) < 1e-6);
    CHECK(s.mask == Tensor({1, 1, 4, 4}, 1.0f));

    write_pgm(dir.file("bad.pgm"), gray(4, 4, 7));
    CHECK_THROWS_AS(load_sample({dir.file("i.pgm"), dir.file("bad.pgm")}), FormatError);
    write_pgm(dir.file("small.pgm"), gray(2, 4, 0));
    CHECK_THROWS_AS(load_sample({dir.file("i.pgm"), dir.file("small.pgm")}), FormatError);
    CHECK_THROWS_AS(load_sample({dir.file("i.pgm"), dir.file("m.pgm")}, Extent{8, 8}), FormatError);
    write_text(dir.file("junk.pgm"), "GIF89a");
    CHECK_THROWS_AS(load_sample({dir.file("junk.pgm"), dir.file("m.pgm")}), FormatError);

    save_tensor(Tensor({1, 1, 4, 4}, 0.25f), dir.file("t.ult"));
    CHECK(load_image(dir.file("t.ult")) == Tensor({1, 1, 4, 4}, 0.25f));
}

TEST_CASE("z-score normalization") {
    TempDir dir;
    GrayImage g = gray(2, 2, 0);
    g.pixels = {0, 50, 100, 150};
    write_pgm(dir.file("i.pgm"), g);
    const Tensor t = load_image(dir.file("i.pgm"), Normalization::ZScore);
    double sum = 0.0;
    double sq = 0.0;
    for (float v : t.values()) {
        sum += v;
        sq += v * v;
    }
    CHECK(std::abs(sum / 4) < 1e-6);
    CHECK(std::abs(sq / 4 - 1.0) < 1e-4);
}

TEST_CASE("split sizes") {
    const SplitSizes s = split_sizes(470, {0.845, 0.077, 0.078});
    CHECK(s.train == 397);
    CHECK(s.val == 36);
    CHECK(s.test == 37);
    CHECK_THROWS_AS(split_sizes(2, {0.8, 0.1, 0.1}), UsageError);
    CHECK_THROWS_AS(split_sizes(10, {0.5, 0.5, 0.1}), UsageError);
    CHECK_THROWS_AS(split_sizes(10, {1.0, 0.0, 0.0}), UsageError);
    CHECK_THROWS_AS(split_sizes(4, {0.1, 0.45, 0.45}), UsageError);
    CHECK(split_sizes(3, {0.2, 0.4, 0.4}).train == 1);
}

TEST_CASE("split is a seeded permutation-partition") {
    for (std::size_t n : {3u, 7u, 50u, 470u}) {
        const auto parts = split_indices(n, {0.7, 0.15, 0.15}, 42);
        std::set<std::size_t> all;
        std::size_t total = 0;
        for (const auto& p : parts) {
            total += p.size();
            all.insert(p.begin(), p.end());
        }
        CHECK(total == n);
        CHECK(all.size() == n);
        CHECK(*all.rbegin() == n - 1);
        CHECK(split_indices(n, {0.7, 0.15, 0.15}, 42) == parts);
    }
    CHECK(split_indices(100, {0.7, 0.15, 0.15}, 1) != split_indices(100, {0.7, 0.15, 0.15}, 2));
}

TEST_CASE("pad and crop") {
    const auto [padded, crop] = pad_to_multiple(Tensor({1, 1, 340, 340}, 1.0f), 16);
    CHECK(padded.shape() == Shape{1, 1, 352, 352});
    CHECK(crop.pad_bottom == 12);
    CHECK(crop.pad_right == 12);
    CHECK(padded.at(0, 0, 345, 2) == 0.0f);

    const auto [same, none] = pad_to_multiple(Tensor({1, 1, 128, 128}), 16);
    CHECK(same.shape() == Shape{1, 1, 128, 128});
    CHECK(none.pad_bottom == 0);
    CHECK(none.pad_right == 0);
}

TEST_CASE("pad/crop round trip is exact for all small extents") {
    Rng rng(1);
    for (int m : {2, 4, 8, 16}) {
        for (int h = 1; h <= 64; ++h) {
            for (int w = 1; w <= 64; ++w) {
                Tensor x({1, 1, h, w});
                x[0] = static_cast<float>(h);
                x[x.size() - 1] = static_cast<float>(w);
                const auto [p, c] = pad_to_multiple(x, m);
                const bool ok = p.shape().h % m == 0 && p.shape().w % m == 0 && p.shape().h - h < m &&
                                p.shape().w - w < m && c.original.height + c.pad_bottom == p.shape().h &&
                                crop_back(p, c) == x;
                if (!ok) {
                    FAIL("pad/crop mismatch at " << h << "x" << w << " m=" << m);
                }
            }
        }
    }
}

TEST_CASE("synthetic samples") {
    const std::vector<Sample> a = make_synthetic(8, 64, 42);
    const std::vector<Sample> b = make_synthetic(8, 64, 42);
    REQUIRE(a.size() == 8);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image == b[i].image);
        CHECK(a[i].mask == b[i].mask);
        double inside = 0.0;
        double outside = 0.0;
        double positives = 0.0;
        for (std::size_t k = 0; k < a[i].mask.size(); ++k) {
            const float m = a[i].mask[k];
            CHECK((m == 0.0f || m == 1.0f));
            CHECK((a[i].image[k] >= 0.0f && a[i].image[k] <= 1.0f));
            positives += m;
            (m > 0 ? inside : outside) += a[i].image[k];
        }
        const double n = static_cast<double>(a[i].mask.size());
        const double fraction = positives / n;
        CHECK(fraction >= 0.02);
        CHECK(fraction <= 0.5);
        CHECK(inside / positives > outside / (n - positives));
    }
    CHECK(make_synthetic(1, 64, 43)[0].image != a[0].image);
    CHECK_THROWS_AS(make_synthetic(1, 20, 1), UsageError);
}

TEST_CASE("synthetic dataset survives a write and reload") {
    TempDir dir;
    const std::vector<Sample> a = make_synthetic(3, 32, 7);
    const std::string manifest = write_dataset(a, dir.file("set"));
    const Manifest m = load_manifest(manifest);
    REQUIRE(m.extent.has_value());
    const std::vector<Sample> back = load_samples(m);
    REQUIRE(back.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back[i].image == a[i].image);
        CHECK(back[i].mask == a[i].mask);
    }
}

}  // TEST_SUITE
