// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// non-zero if any selected criterion fails.
//
//   acceptance            run all criteria
//   acceptance 3 7        run criteria 3 and 7

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "tinyunet/bench.hpp"
#include "tinyunet/data.hpp"
#include "tinyunet/errors.hpp"
#include "tinyunet/model.hpp"
#include "tinyunet/serialize.hpp"
#include "tinyunet/train.hpp"

using namespace tinyunet;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances and budgets.
constexpr double kReferenceParams8 = 0.49e6;
constexpr double kReferenceParams32 = 7.85e6;
constexpr double kReferenceParams64 = 30e6;
constexpr double kParamTol8 = 0.02;
constexpr double kParamTol32 = 0.02;
constexpr double kParamTol64 = 0.05;
constexpr double kParamsSeconds = 3.0;
constexpr double kGradSeconds = 60.0;
constexpr double kOverfitSeconds = 600.0;
constexpr std::int64_t kHandSum8 = 487145;
constexpr double kScalingLo = 15.5;
constexpr double kScalingHi = 16.1;
constexpr double kGradTolOp = 1e-3;
constexpr double kGradTolNet = 1e-2;
constexpr int kGradSeeds = 5;
constexpr int kOverfitSamples = 8;
constexpr int kOverfitSize = 128;
constexpr int kOverfitMaxSteps = 500;
constexpr double kOverfitLr = 1e-3;
constexpr double kOverfitDice = 0.95;
constexpr double kSweepReduction = 0.93;
constexpr double kSweepDiceSlack = 0.05;
constexpr double kLatencyRatio = 4.0;
constexpr int kRoundTripInputs = 10;
constexpr int kDicePairs = 1000;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Shell {
    int code = -1;
    std::string out;
};

Shell cli(const std::string& args) {
    const std::string cmd = std::string(TINYUNET_CLI_PATH) + " " + args + " 2>&1";
    Shell r;
    FILE* p = ::popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    std::size_t n = 0;
    while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
    const int status = ::pclose(p);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::int64_t parse_grouped(const std::string& text, const std::string& label) {
    const auto at = text.find(label);
    if (at == std::string::npos) return -1;
    std::int64_t v = 0;
    bool any = false;
    for (std::size_t i = at + label.size(); i < text.size(); ++i) {
        const char c = text[i];
        if (c >= '0' && c <= '9') {
            v = v * 10 + (c - '0');
            any = true;
        } else if (c != ',' && c != ' ') {
            break;
        }
    }
    return any ? v : -1;
}

std::int64_t trainable(int base, bool bn) {
    ModelConfig c;
    c.base_width = base;
    c.use_batchnorm = bn;
    return count_parameters(Model(c, 0)).trainable;
}

Outcome parameter_ledger() {
    const auto t0 = Clock::now();
    const Shell r8 = cli("params --base-width 8 --batchnorm");
    const Shell r32 = cli("params --base-width 32 --no-batchnorm");
    const Shell r64 = cli("params --base-width 64 --no-batchnorm");
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const std::string label = "trainable parameters:";
    const std::int64_t p8 = parse_grouped(r8.out, label);
    const std::int64_t p32 = parse_grouped(r32.out, label);
    const std::int64_t p64 = parse_grouped(r64.out, label);
    const bool ok = r8.code == 0 && r32.code == 0 && r64.code == 0 && p8 == kHandSum8 &&
                    std::abs(p8 / kReferenceParams8 - 1) <= kParamTol8 &&
                    std::abs(p32 / kReferenceParams32 - 1) <= kParamTol32 &&
                    std::abs(p64 / kReferenceParams64 - 1) <= kParamTol64 && secs < kParamsSeconds;
    return {ok, "base8+BN " + std::to_string(p8) + " (oracle " + std::to_string(kHandSum8) + "), base32 " +
                    std::to_string(p32) + ", base64 " + std::to_string(p64) + ", " + fmt("%.2fs for 3 runs", secs)};
}

Outcome quadratic_scaling() {
    const double r8 = static_cast<double>(trainable(16, false)) / static_cast<double>(trainable(8, false));
    const double r16 = static_cast<double>(trainable(32, false)) / static_cast<double>(trainable(16, false));
    const bool ok = r8 >= kScalingLo && r8 <= kScalingHi && r16 >= kScalingLo && r16 <= kScalingHi;
    return {ok, "count(16)/count(8) = " + fmt("%.4f", r8) + ", count(32)/count(16) = " + fmt("%.4f", r16) +
                    ", required [15.5, 16.1]"};
}

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    std::map<std::string, double> worst;
    auto note = [&](const std::string& name, double e) { worst[name] = std::max(worst[name], e); };
    for (std::uint64_t s = 1; s <= kGradSeeds; ++s) {
        note("conv3x3", testing::check_conv2d(s));
        note("conv1x1", testing::check_conv1x1(s));
        note("convT2x2", testing::check_conv_transpose(s));
        note("maxpool", testing::check_maxpool(s));
        note("batchnorm(train)", testing::check_batchnorm_train(s));
        note("batchnorm(eval)", testing::check_batchnorm_eval(s));
        note("relu", testing::check_relu(s));
        note("sigmoid", testing::check_sigmoid(s));
        note("concat", testing::check_concat(s));
        note("loss:dice", testing::check_loss(LossKind::SoftDice, s));
        note("loss:dice+bce", testing::check_loss(LossKind::DiceBce, s));
        note("net(train,bn)", testing::check_model(s, true, Mode::Train));
        note("net(eval,bn)", testing::check_model(s, true, Mode::Eval));
        note("net(train,nobn)", testing::check_model(s, false, Mode::Train));
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    bool ok = secs < kGradSeconds;
    std::string detail;
    for (const auto& [name, e] : worst) {
        const double tol = name.rfind("net", 0) == 0 ? kGradTolNet : kGradTolOp;
        ok = ok && e < tol;
        detail += name + " " + fmt("%.1e", e) + "; ";
    }
    return {ok, detail + fmt("%.1fs", secs)};
}

Outcome synthetic_overfit() {
    const auto t0 = Clock::now();
    const std::vector<Sample> data = make_synthetic(kOverfitSamples, kOverfitSize, 42);
    Model model(ModelConfig{}, 42);
    TrainConfig cfg;
    cfg.learning_rate = kOverfitLr;
    cfg.batch_size = 4;
    cfg.epochs = 120;
    const int steps_per_epoch = (kOverfitSamples + cfg.batch_size - 1) / cfg.batch_size;
    const FitResult r = fit(model, data, {}, cfg);
    const double dice = evaluate(model, data).mean;
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    const bool ok = r.steps <= kOverfitMaxSteps && cfg.epochs * steps_per_epoch == r.steps &&
                    dice >= kOverfitDice && secs < kOverfitSeconds;
    return {ok, "train-set mean dice " + fmt("%.4f", dice) + " after " + std::to_string(r.steps) +
                    " Adam steps (batch 4), " + fmt("%.0fs", secs)};
}

Outcome sweep_structure(const testing::TempDir& dir) {
    const auto t0 = Clock::now();
    const std::string data = dir.file("sweep_data");
    const std::string csv = dir.file("sweep.csv");
    if (cli("synth --count 24 --size 64 --seed 7 --out " + data).code != 0) {
        return {false, "synth failed"};
    }
    const Shell r = cli("sweep --widths 8,16,24,32 --manifest " + data +
                        "/manifest.tsv --split 0.7,0.15,0.15"
                        " --epochs 30 --lr 1e-3 --batch-size 4 --iters 3 --warmup 1 --out " + csv);
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    if (r.code != 0) {
        return {false, "sweep exited " + std::to_string(r.code) + ": " + r.out.substr(r.out.size() > 300 ? r.out.size() - 300 : 0)};
    }
    const std::vector<StageRecord> rs = parse_stage_csv(read_file(csv));
    if (rs.size() != 4) return {false, "expected 4 stages"};
    const double reduction = 1.0 - static_cast<double>(rs[3].params) / static_cast<double>(rs[0].params);
    const double mdc32 = rs[0].mdc;
    const double mdc8 = rs[3].mdc;
    const bool ok = rs[0].width == 32 && rs[3].width == 8 && reduction >= kSweepReduction &&
                    mdc32 >= mdc8 - kSweepDiceSlack && secs < 2400.0;
    std::string mdcs;
    for (const StageRecord& s : rs) mdcs += std::to_string(s.width) + ":" + fmt("%.4f", s.mdc) + " ";
    return {ok, "parameter reduction " + fmt("%.2f%%", 100 * reduction) + ", MDC " + mdcs + fmt("(%.0fs)", secs)};
}

Outcome latency_ratio() {
    ModelConfig c8;
    ModelConfig c32;
    c32.base_width = 32;
    const Model m8(c8, 1);
    const Model m32(c32, 1);
    const Shape input{1, 1, 128, 128};
    const LatencyStats s8 = measure_latency(m8, input, 3, 20);
    const LatencyStats s32 = measure_latency(m32, input, 3, 20);
    const double ratio = s32.mean / s8.mean;
    return {ratio >= kLatencyRatio, "base32 " + fmt("%.2f ms", s32.mean) + " / base8 " + fmt("%.2f ms", s8.mean) +
                                        " = " + fmt("%.2fx", ratio)};
}

Outcome serialization(const testing::TempDir& dir) {
    Model m(ModelConfig{}, 42);
    testing::Rng rng(5);
    for (ParamRef& p : m.parameters()) {
        if (p.name.ends_with("running_mean") || p.name.ends_with("beta")) {
            for (float& v : p.values) v = static_cast<float>(rng.uniform(-0.2, 0.2));
        } else if (p.name.ends_with("running_var") || p.name.ends_with("gamma")) {
            for (float& v : p.values) v = static_cast<float>(rng.uniform(0.5, 1.5));
        }
    }
    const std::string path = dir.file("roundtrip.ulw");
    save_model(m, path);
    const Model back = load_model(path);
    int identical = 0;
    for (int i = 0; i < kRoundTripInputs; ++i) {
        testing::Rng in_rng(100 + i);
        const Tensor x = testing::random_tensor({1, 1, 64, 64}, in_rng, 0.0, 1.0);
        identical += back.infer(x) == m.infer(x) ? 1 : 0;
    }

    ModelConfig small;
    small.base_width = 1;
    small.depth = 1;
    const std::string bytes = encode_model(Model(small, 3));
    std::size_t trials = 0;
    std::size_t detected = 0;
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        for (int flip = 1; flip < 256; ++flip) {
            std::string bad = bytes;
            bad[i] = static_cast<char>(bad[i] ^ flip);
            ++trials;
            try {
                decode_model(bad);
            } catch (const FormatError&) {
                ++detected;
            }
        }
    }
    const std::string big = read_file(path);
    for (int k = 0; k < 2000; ++k) {
        std::string bad = big;
        const std::size_t i = rng.below(big.size());
        bad[i] = static_cast<char>(bad[i] ^ (1 + rng.below(255)));
        ++trials;
        try {
            decode_model(bad);
        } catch (const FormatError&) {
            ++detected;
        }
    }
    const bool ok = identical == kRoundTripInputs && detected == trials;
    return {ok, std::to_string(identical) + "/10 bitwise-identical outputs; " + std::to_string(detected) + "/" +
                    std::to_string(trials) + " single-byte corruptions detected"};
}

Outcome dice_properties() {
    const auto t0 = Clock::now();
    auto mask = [](std::vector<float> v) {
        const int n = static_cast<int>(v.size());
        return Tensor({1, 1, 1, n}, std::move(v));
    };
    bool ok = dice_score(mask({1, 1, 0, 0}), mask({1, 0, 1, 0})) == 0.5 &&
              dice_score(mask({0, 0, 0, 0}), mask({0, 0, 0, 0})) == 1.0;
    testing::Rng rng(8);
    int violations = 0;
    for (int i = 0; i < kDicePairs; ++i) {
        const int h = 1 + static_cast<int>(rng.below(8));
        const int w = 1 + static_cast<int>(rng.below(8));
        const double pa = rng.uniform();
        const double pb = rng.uniform();
        Tensor a({1, 1, h, w});
        Tensor b({1, 1, h, w});
        for (float& v : a.values()) v = rng.uniform() < pa ? 1.0f : 0.0f;
        for (float& v : b.values()) v = rng.uniform() < pb ? 1.0f : 0.0f;
        const double d = dice_score(a, b);
        if (d != dice_score(b, a) || dice_score(a, a) != 1.0 || d < 0.0 || d > 1.0) ++violations;
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    ok = ok && violations == 0 && secs < 10.0;
    return {ok, "worked example and empty convention hold; " + std::to_string(violations) + " violations over " +
                    std::to_string(kDicePairs) + " random pairs"};
}

Outcome determinism(const testing::TempDir& dir) {
    const std::string data = dir.file("det_data");
    if (cli("synth --count 8 --size 64 --seed 11 --out " + data).code != 0) {
        return {false, "synth failed"};
    }
    auto train = [&](const std::string& out) {
        return cli("train --manifest " + data + "/manifest.tsv --split 0.5,0.25,0.25 --epochs 4 --lr 1e-3 "
                   "--batch-size 2 --base-width 8 --batchnorm --seed 42 --no-timing --out " + out)
            .code;
    };
    const std::string a = dir.file("run_a.ulw");
    const std::string b = dir.file("run_b.ulw");
    if (train(a) != 0 || train(b) != 0) {
        return {false, "train run failed"};
    }
    const bool logs = read_file(a + ".metrics.csv") == read_file(b + ".metrics.csv");
    const bool weights = read_file(a) == read_file(b);
    return {logs && weights, std::string("metrics logs ") + (logs ? "identical" : "differ") + ", weight files " +
                                 (weights ? "identical" : "differ")};
}

}  // namespace

int main(int argc, char** argv) {
    testing::TempDir dir;
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"parameter ledger", parameter_ledger},
        {"quadratic scaling", quadratic_scaling},
        {"gradient suite", gradient_suite},
        {"synthetic overfit", synthetic_overfit},
        {"sweep structure", [&] { return sweep_structure(dir); }},
        {"latency ratio", latency_ratio},
        {"serialization", [&] { return serialization(dir); }},
        {"dice properties", dice_properties},
        {"determinism", [&] { return determinism(dir); }},
    };
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) {
        const int k = std::atoi(argv[i]);
        if (k < 1 || k > static_cast<int>(criteria.size())) {
            std::fprintf(stderr, "unknown criterion '%s'\n", argv[i]);
            return 2;
        }
        selected.push_back(k);
    }
    if (selected.empty()) {
        for (int k = 1; k <= static_cast<int>(criteria.size()); ++k) selected.push_back(k);
    }
    int failures = 0;
    for (int k : selected) {
        const auto& [name, run] = criteria[k - 1];
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", k, name.c_str(), o.detail.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
