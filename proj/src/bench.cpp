// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tinyunet/bench.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <sstream>

#include "tinyunet/errors.hpp"
#include "tinyunet/rng.hpp"
#include "tinyunet/serialize.hpp"

namespace tinyunet {

namespace {

template <typename T>
void append_number(std::string& out, T value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    out.append(buf, end);
}

template <typename T>
T parse_number(std::string_view field, int line) {
    T value{};
    auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || end != field.data() + field.size()) {
        throw FormatError("stage CSV line " + std::to_string(line) + ": bad number '" +
                          std::string(field) + "'");
    }
    return value;
}

}  // namespace

LatencyStats summarize_latency(std::vector<double> millis, int warmup) {
    if (millis.empty()) {
        throw UsageError("latency summary needs at least one timing");
    }
    LatencyStats s;
    s.warmup = warmup;
    s.iterations = static_cast<int>(millis.size());
    double sum = 0.0;
    for (double m : millis) sum += m;
    s.mean = sum / static_cast<double>(millis.size());
    std::vector<double> sorted = millis;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    s.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
    s.p95 = sorted[std::max<std::size_t>(rank, 1) - 1];
    s.millis = std::move(millis);
    return s;
}

LatencyStats measure_latency(const Model& model, const Shape& input, int warmup, int iters,
                             std::uint64_t seed) {
    if (iters < 1) {
        throw UsageError("measure_latency: iterations must be >= 1");
    }
    if (warmup < 0) {
        throw UsageError("measure_latency: warmup must be >= 0");
    }
    Tensor x(input);
    Rng rng(seed);
    for (float& v : x.values()) {
        v = static_cast<float>(rng.uniform());
    }
    for (int i = 0; i < warmup; ++i) {
        (void)model.infer(x);
    }
    std::vector<double> millis;
    millis.reserve(static_cast<std::size_t>(iters));
    for (int i = 0; i < iters; ++i) {
        const auto start = std::chrono::steady_clock::now();
        const Tensor y = model.infer(x);
        const auto stop = std::chrono::steady_clock::now();
        millis.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    }
    return summarize_latency(std::move(millis), warmup);
}

std::vector<StageRecord> run_stage_sweep(const std::vector<int>& widths, const std::vector<Sample>& train,
                                         const std::vector<Sample>& val, const SweepOptions& options,
                                         const StageCallback& on_stage) {
    if (widths.empty()) {
        throw UsageError("sweep: no widths given");
    }
    for (std::size_t i = 0; i < widths.size(); ++i) {
        if (widths[i] < 1 || (i > 0 && widths[i] <= widths[i - 1])) {
            throw UsageError("sweep: widths must be positive and strictly ascending");
        }
    }
    if (val.empty()) {
        throw UsageError("sweep: a validation set is required to score stages");
    }
    options.train.validate();
    Shape latency_input = pad_to_multiple(val.front().image, options.base.spatial_multiple()).first.shape();
    latency_input.n = 1;

    std::vector<StageRecord> records;
    int stage = 1;
    for (auto it = widths.rbegin(); it != widths.rend(); ++it, ++stage) {
        ModelConfig cfg = options.base;
        cfg.base_width = *it;
        Model model(cfg, options.init_seed);
        StageRecord rec;
        rec.stage = stage;
        rec.width = *it;
        rec.params = count_parameters(model).trainable;
        rec.macs = count_flops(cfg, latency_input).macs;
        FitResult fitted;
        try {
            fitted = fit(model, train, val, options.train);
        } catch (const NumericError& e) {
            if (!options.csv_path.empty() && !records.empty()) {
                emit_csv(records, options.csv_path);
            }
            throw NumericError("sweep stage " + std::to_string(stage) + " (width " +
                               std::to_string(*it) + "): " + e.what());
        }
        rec.mdc = fitted.best_val_dice.value_or(0.0);
        rec.val_loss = fitted.epochs.back().val_loss.value_or(0.0);
        rec.latency_ms =
            measure_latency(model, latency_input, options.latency_warmup, options.latency_iters).mean;
        records.push_back(rec);
        if (!options.csv_path.empty()) {
            emit_csv(records, options.csv_path);
        }
        if (on_stage) {
            on_stage(rec);
        }
    }
    return records;
}

std::string stage_csv(const std::vector<StageRecord>& records) {
    std::string out = "stage,width,params,macs,mdc,val_loss,latency_ms\n";
    for (const StageRecord& r : records) {
        append_number(out, r.stage);
        out += ',';
        append_number(out, r.width);
        out += ',';
        append_number(out, r.params);
        out += ',';
        append_number(out, r.macs);
        out += ',';
        append_number(out, r.mdc);
        out += ',';
        append_number(out, r.val_loss);
        out += ',';
        append_number(out, r.latency_ms);
        out += '\n';
    }
    return out;
}

std::uint64_t emit_csv(const std::vector<StageRecord>& records, const std::string& path) {
    if (records.empty()) {
        throw UsageError("emit_csv: no records");
    }
    const std::string text = stage_csv(records);
    write_file_atomic(path, text);
    return text.size();
}

std::vector<StageRecord> parse_stage_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    std::vector<StageRecord> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1) {
            if (line != "stage,width,params,macs,mdc,val_loss,latency_ms") {
                throw FormatError("stage CSV: unexpected header");
            }
            continue;
        }
        std::vector<std::string_view> fields;
        std::string_view rest(line);
        while (true) {
            const auto comma = rest.find(',');
            fields.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (fields.size() != 7) {
            throw FormatError("stage CSV line " + std::to_string(lineno) + ": expected 7 fields");
        }
        StageRecord r;
        r.stage = parse_number<int>(fields[0], lineno);
        r.width = parse_number<int>(fields[1], lineno);
        r.params = parse_number<std::int64_t>(fields[2], lineno);
        r.macs = parse_number<std::int64_t>(fields[3], lineno);
        r.mdc = parse_number<double>(fields[4], lineno);
        r.val_loss = parse_number<double>(fields[5], lineno);
        r.latency_ms = parse_number<double>(fields[6], lineno);
        out.push_back(r);
    }
    return out;
}

}  // namespace tinyunet
