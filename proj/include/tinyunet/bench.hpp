// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "tinyunet/model.hpp"
#include "tinyunet/train.hpp"

namespace tinyunet {

struct LatencyStats {
    int warmup = 0;
    int iterations = 0;
    std::vector<double> millis;
    double mean = 0.0;
    double median = 0.0;
    double p95 = 0.0;
};

/// Aggregates a list of timings; p95 uses the nearest-rank definition.
LatencyStats summarize_latency(std::vector<double> millis, int warmup);

/// Times `iters` eval-mode forwards on a fixed seeded input after `warmup`
/// untimed ones. Input generation happens before the first timed run.
LatencyStats measure_latency(const Model& model, const Shape& input, int warmup, int iters,
                             std::uint64_t seed = 42);

struct StageRecord {
    int stage = 0;
    int width = 0;
    std::int64_t params = 0;
    std::int64_t macs = 0;
    double mdc = 0.0;
    double val_loss = 0.0;
    double latency_ms = 0.0;
};

struct SweepOptions {
    ModelConfig base;          // base_width is overridden per stage
    TrainConfig train;
    std::uint64_t init_seed = 42;
    int latency_warmup = 1;
    int latency_iters = 3;
    std::string csv_path;      // rewritten after every stage when non-empty
};

using StageCallback = std::function<void(const StageRecord&)>;

/// Trains one model per width and records its accounting and best
/// validation dice. Stage 1 is the widest model. A numeric failure stops
/// the sweep after flushing the completed stages to `csv_path`.
std::vector<StageRecord> run_stage_sweep(const std::vector<int>& widths, const std::vector<Sample>& train,
                                         const std::vector<Sample>& val, const SweepOptions& options,
                                         const StageCallback& on_stage = {});

std::string stage_csv(const std::vector<StageRecord>& records);

/// Writes stage_csv() atomically; returns bytes written.
std::uint64_t emit_csv(const std::vector<StageRecord>& records, const std::string& path);

/// Parses a file produced by emit_csv (used by tests and tooling).
std::vector<StageRecord> parse_stage_csv(const std::string& text);

}  // namespace tinyunet
