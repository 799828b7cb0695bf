// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "tinyunet/data.hpp"
#include "tinyunet/errors.hpp"
#include "tinyunet/train.hpp"

using namespace tinyunet;

namespace {

Tensor mask(std::vector<float> v) {
    const int n = static_cast<int>(v.size());
    return Tensor({1, 1, 1, n}, std::move(v));
}

Tensor random_mask(Shape s, Rng& rng, double p) {
    Tensor t(s);
    for (float& v : t.values()) v = rng.uniform() < p ? 1.0f : 0.0f;
    return t;
}

}  // namespace

TEST_SUITE("train") {

TEST_CASE("dice score worked examples") {
    CHECK(dice_score(mask({1, 1, 0, 0}), mask({1, 0, 1, 0})) == 0.5);
    CHECK(dice_score(mask({1, 0, 1, 1}), mask({1, 0, 1, 1})) == 1.0);
    CHECK(dice_score(mask({0, 0, 0}), mask({0, 0, 0})) == 1.0);
    CHECK(dice_score(mask({1, 0}), mask({0, 1})) == 0.0);
    CHECK_THROWS_AS(dice_score(mask({1, 0}), mask({1, 0, 0})), UsageError);
    CHECK_THROWS_AS(dice_score(mask({0.5f, 0}), mask({1, 0})), UsageError);
}

TEST_CASE("dice score properties over random mask pairs") {
    Rng rng(2024);
    for (int i = 0; i < 1000; ++i) {
        const double p = rng.uniform();
        const Tensor a = random_mask({1, 1, 4, 5}, rng, p);
        const Tensor b = random_mask({1, 1, 4, 5}, rng, rng.uniform());
        const double d = dice_score(a, b);
        CHECK(d == dice_score(b, a));
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
        CHECK(dice_score(a, a) == 1.0);
    }
}

TEST_CASE("soft dice loss values") {
    CHECK(soft_dice_loss(mask({1, 0, 1}), mask({1, 0, 1})).loss == doctest::Approx(0.0));
    CHECK(soft_dice_loss(mask({0.5f, 0.5f}), mask({1, 0}), 1.0).loss == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("soft dice loss range and monotonicity") {
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        Tensor probs = testing::random_tensor({1, 1, 3, 3}, rng, 0.0, 1.0);
        const Tensor truth = random_mask(probs.shape(), rng, 0.5);
        const double before = soft_dice_loss(probs, truth).loss;
        CHECK(before >= 0.0);
        CHECK(before < 1.0);
        const std::size_t k = rng.below(probs.size());
        probs[k] = static_cast<float>(probs[k] + 0.5 * (truth[k] - probs[k]));
        CHECK(soft_dice_loss(probs, truth).loss <= before + 1e-12);
    }
}

TEST_CASE("binary cross-entropy values") {
    const Tensor ones({1, 1, 2, 2}, 1.0f);
    CHECK(bce_loss(ones, ones).loss <= 1.2e-7);
    CHECK(bce_loss(Tensor({1, 1, 2, 2}, 0.5f), Tensor({1, 1, 2, 2}, {1, 0, 1, 0})).loss ==
          doctest::Approx(std::log(2.0)));
    const LossResult sum = compute_loss(LossKind::DiceBce, Tensor({1, 1, 1, 2}, 0.5f), mask({1, 0}), 1.0);
    CHECK(sum.loss == doctest::Approx(1.0 / 3.0 + std::log(2.0)));
}

TEST_CASE("loss gradients pass finite differences") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        CAPTURE(seed);
        CHECK(testing::check_loss(LossKind::SoftDice, seed) < 1e-3);
        CHECK(testing::check_loss(LossKind::DiceBce, seed) < 1e-3);
    }
}

TEST_CASE("binarize is inclusive at the threshold") {
    CHECK(binarize(mask({0.4f, 0.5f, 0.6f}), 0.5) == mask({0, 1, 1}));
    CHECK(binarize(mask({0.1f, 0.2f}), 0.5) == mask({0, 0}));
}

TEST_CASE("loss kind names") {
    CHECK(parse_loss_kind("dice") == LossKind::SoftDice);
    CHECK(parse_loss_kind("dice+bce") == LossKind::DiceBce);
    CHECK(std::string(to_string(LossKind::DiceBce)) == "dice+bce");
    CHECK_THROWS_AS(parse_loss_kind("mse"), UsageError);
}

TEST_CASE("train config validation") {
    TrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.learning_rate = 0.0;
    CHECK_THROWS_AS(c.validate(), UsageError);
    c = TrainConfig{};
    c.threshold = 1.0;
    CHECK_THROWS_AS(c.validate(), UsageError);
    c = TrainConfig{};
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("adam first step") {
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    std::vector<float> w{0.0f};
    std::vector<float> g{1.0f};
    std::span<float> params[] = {w};
    std::span<const float> grads[] = {g};
    AdamState state;
    adam_step(params, grads, state, cfg);
    CHECK(std::abs(w[0] + 0.1) < 1e-6);
    CHECK(state.t == 1);

    std::vector<float> z{0.25f, -1.0f};
    std::vector<float> zero(2, 0.0f);
    std::span<float> zp[] = {z};
    std::span<const float> zg[] = {zero};
    AdamState fresh;
    adam_step(zp, zg, fresh, cfg);
    CHECK(z == std::vector<float>{0.25f, -1.0f});
}

TEST_CASE("adam rejects non-finite gradients before updating") {
    TrainConfig cfg;
    std::vector<float> a{1.0f};
    std::vector<float> b{2.0f};
    std::vector<float> ga{0.5f};
    std::vector<float> gb{INFINITY};
    std::span<float> params[] = {a, b};
    std::span<const float> grads[] = {ga, gb};
    AdamState state;
    CHECK_THROWS_AS(adam_step(params, grads, state, cfg), NumericError);
    CHECK(a[0] == 1.0f);
    CHECK(b[0] == 2.0f);
}

TEST_CASE("metrics lines") {
    EpochRecord r;
    r.epoch = 3;
    r.train_loss = 0.25;
    r.seconds = 1.23456;
    CHECK(metrics_header() == "epoch,train_loss,val_dice,seconds");
    CHECK(format_metrics_line(r) == "3,0.25,NA,1.235");
    r.val_dice = 0.5;
    CHECK(format_metrics_line(r, false) == "3,0.25,0.5,0.000");
}

TEST_CASE("fit is deterministic and keeps the best checkpoint") {
    const std::vector<Sample> data = make_synthetic(6, 32, 5);
    const std::vector<Sample> train(data.begin(), data.begin() + 4);
    const std::vector<Sample> val(data.begin() + 4, data.end());
    ModelConfig mc;
    mc.base_width = 2;
    mc.depth = 2;
    TrainConfig tc;
    tc.learning_rate = 1e-2;
    tc.epochs = 4;
    tc.batch_size = 2;

    Model a(mc, 11);
    Model b(mc, 11);
    const FitResult ra = fit(a, train, val, tc);
    const FitResult rb = fit(b, train, val, tc);
    CHECK(ra.steps == 8);
    REQUIRE(ra.epochs.size() == 4);
    CHECK(a.snapshot() == b.snapshot());
    for (std::size_t i = 0; i < ra.epochs.size(); ++i) {
        CHECK(format_metrics_line(ra.epochs[i], false) == format_metrics_line(rb.epochs[i], false));
    }
    double best = -1.0;
    for (const EpochRecord& e : ra.epochs) best = std::max(best, *e.val_dice);
    CHECK(*ra.best_val_dice == best);
    CHECK(ra.epochs[ra.best_epoch - 1].val_dice == ra.best_val_dice);
    CHECK(evaluate(a, val).mean == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("fit without validation keeps the last epoch") {
    const std::vector<Sample> data = make_synthetic(2, 16, 1);
    ModelConfig mc;
    mc.base_width = 2;
    mc.depth = 1;
    TrainConfig tc;
    tc.epochs = 2;
    tc.batch_size = 2;
    Model m(mc, 3);
    const FitResult r = fit(m, data, {}, tc);
    CHECK(r.best_epoch == 2);
    CHECK(!r.best_val_dice.has_value());
    CHECK(!r.epochs.back().val_dice.has_value());
}

TEST_CASE("fit reports the epoch and batch of a NaN loss") {
    std::vector<Sample> data = make_synthetic(2, 16, 1);
    ModelConfig mc;
    mc.base_width = 2;
    mc.depth = 1;
    Model m(mc, 3);
    for (ParamRef& p : m.parameters()) {
        if (p.name == "head.bias") p.values[0] = NAN;
    }
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 1;
    try {
        fit(m, data, {}, tc);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        const std::string what = e.what();
        CHECK(what.find("epoch 1") != std::string::npos);
        CHECK(what.find("batch 1") != std::string::npos);
    }
}

TEST_CASE("evaluate on an exactly predicted sample") {
    ModelConfig mc;
    mc.base_width = 2;
    mc.depth = 1;
    const Model m(mc, 3);
    Sample s;
    s.image = Tensor({1, 1, 6, 6}, 0.2f);
    s.mask = binarize(predict(m, s.image), 0.5);
    const EvalReport r = evaluate(m, {s});
    CHECK(r.mean == 1.0);
    CHECK(r.max == 1.0);
    CHECK(r.count == 1);
    CHECK(predict(m, s.image).shape() == Shape{1, 1, 6, 6});
    CHECK_THROWS_AS(evaluate(m, {}), UsageError);
}

}  // TEST_SUITE
