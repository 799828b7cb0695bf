// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <sstream>

#include "doctest.h"
#include "support.hpp"
#include "tinyunet/bench.hpp"
#include "tinyunet/data.hpp"
#include "tinyunet/errors.hpp"
#include "tinyunet/serialize.hpp"

using namespace tinyunet;
using testing::TempDir;

TEST_SUITE("bench") {

TEST_CASE("latency summary statistics") {
    const LatencyStats s = summarize_latency({5.0, 1.0, 3.0, 2.0, 4.0}, 2);
    CHECK(s.iterations == 5);
    CHECK(s.warmup == 2);
    CHECK(s.mean == doctest::Approx(3.0));
    CHECK(s.median == 3.0);
    CHECK(s.p95 == 5.0);
    CHECK(summarize_latency({1.0, 2.0, 3.0, 4.0}, 0).median == 2.5);

    std::vector<double> many(100);
    for (int i = 0; i < 100; ++i) many[i] = i + 1;
    CHECK(summarize_latency(many, 0).p95 == 95.0);
    CHECK_THROWS_AS(summarize_latency({}, 0), UsageError);
}

TEST_CASE("measure latency records one timing per iteration") {
    ModelConfig c;
    c.base_width = 2;
    c.depth = 2;
    const Model m(c, 1);
    const LatencyStats s = measure_latency(m, {1, 1, 16, 16}, 1, 5);
    CHECK(s.millis.size() == 5);
    CHECK(s.median <= s.p95);
    for (double v : s.millis) CHECK(v >= 0.0);
    CHECK_THROWS_AS(measure_latency(m, {1, 1, 16, 16}, 0, 0), UsageError);
}

TEST_CASE("stage CSV emit, re-emit and parse") {
    TempDir dir;
    std::vector<StageRecord> rs;
    for (int i = 0; i < 4; ++i) {
        StageRecord r;
        r.stage = i + 1;
        r.width = 32 - 8 * i;
        r.params = 1000003 * (4 - i);
        r.macs = 123456789012LL / (i + 1);
        r.mdc = 0.1 + 0.2 / 3.0 * i;
        r.val_loss = 1.0 / (7 + i);
        r.latency_ms = 12.345678901234 * (i + 1);
        rs.push_back(r);
    }
    const std::string csv = stage_csv(rs);
    CHECK(csv.rfind("stage,width,params,macs,mdc,val_loss,latency_ms\n", 0) == 0);
    std::size_t lines = 0;
    for (char ch : csv) lines += ch == '\n';
    CHECK(lines == 5);

    const std::uint64_t n = emit_csv(rs, dir.file("s.csv"));
    CHECK(n == csv.size());
    const std::string first = read_file(dir.file("s.csv"));
    emit_csv(rs, dir.file("s.csv"));
    CHECK(read_file(dir.file("s.csv")) == first);

    const std::vector<StageRecord> back = parse_stage_csv(first);
    REQUIRE(back.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(back[i].stage == rs[i].stage);
        CHECK(back[i].width == rs[i].width);
        CHECK(back[i].params == rs[i].params);
        CHECK(back[i].macs == rs[i].macs);
        CHECK(back[i].mdc == rs[i].mdc);
        CHECK(back[i].val_loss == rs[i].val_loss);
        CHECK(back[i].latency_ms == rs[i].latency_ms);
    }
    CHECK_THROWS_AS(parse_stage_csv("nope\n"), FormatError);
    CHECK_THROWS_AS(emit_csv({}, dir.file("e.csv")), UsageError);
}

TEST_CASE("sweep on a tiny dataset") {
    TempDir dir;
    const std::vector<Sample> data = make_synthetic(4, 16, 3);
    const std::vector<Sample> train(data.begin(), data.begin() + 3);
    const std::vector<Sample> val(data.begin() + 3, data.end());
    SweepOptions opt;
    opt.base.depth = 2;
    opt.train.epochs = 1;
    opt.train.batch_size = 3;
    opt.train.learning_rate = 1e-3;
    opt.latency_iters = 2;
    opt.csv_path = dir.file("sweep.csv");
    int callbacks = 0;
    const std::vector<StageRecord> rs = run_stage_sweep({2, 4}, train, val, opt, [&](const StageRecord&) {
        ++callbacks;
    });
    REQUIRE(rs.size() == 2);
    CHECK(callbacks == 2);
    CHECK(rs[0].stage == 1);
    CHECK(rs[0].width == 4);
    CHECK(rs[1].width == 2);
    for (const StageRecord& r : rs) {
        ModelConfig c = opt.base;
        c.base_width = r.width;
        CHECK(r.params == count_parameters(Model(c, 0)).trainable);
        CHECK(r.macs == count_flops(c, {1, 1, 16, 16}).macs);
        CHECK((r.mdc >= 0.0 && r.mdc <= 1.0));
    }
    CHECK(parse_stage_csv(read_file(opt.csv_path)).size() == 2);

    const std::vector<StageRecord> single = run_stage_sweep({2}, train, val, opt);
    CHECK(single.size() == 1);
    CHECK_THROWS_AS(run_stage_sweep({4, 2}, train, val, opt), UsageError);
    CHECK_THROWS_AS(run_stage_sweep({2}, train, {}, opt), UsageError);
}

}  // TEST_SUITE
