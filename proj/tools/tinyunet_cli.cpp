// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end. Everything goes through the C API in tinyunet.h.
//
// Exit codes: 0 success, 1 usage/configuration error, 2 I/O or format
// error, 3 numeric failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "tinyunet.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;

int exit_code(tu_status s) {
    switch (s) {
        case TU_OK: return kExitOk;
        case TU_ERR_CONFIG:
        case TU_ERR_USAGE: return kExitUsage;
        case TU_ERR_NUMERIC: return kExitNumeric;
        case TU_ERR_FORMAT:
        case TU_ERR_IO:
        case TU_ERR_INTERNAL: return kExitIo;
    }
    return kExitIo;
}

// Thrown to unwind a subcommand after a failed C call.
struct Failure {
    int code;
};

struct UsageFailure {
    std::string message;
};

void check(tu_status s) {
    if (s != TU_OK) {
        std::cerr << "error: " << tu_status_name(s) << ": " << tu_last_error() << '\n';
        throw Failure{exit_code(s)};
    }
}

template <typename T, void (*Free)(T*)>
struct Deleter {
    void operator()(T* p) const { Free(p); }
};
using ModelPtr = std::unique_ptr<tu_model, Deleter<tu_model, tu_model_free>>;
using DatasetPtr = std::unique_ptr<tu_dataset, Deleter<tu_dataset, tu_dataset_free>>;
using ParamReportPtr = std::unique_ptr<tu_param_report, Deleter<tu_param_report, tu_param_report_free>>;
using FlopReportPtr = std::unique_ptr<tu_flop_report, Deleter<tu_flop_report, tu_flop_report_free>>;
using EvalReportPtr = std::unique_ptr<tu_eval_report, Deleter<tu_eval_report, tu_eval_report_free>>;

std::string grouped(long long v) {
    std::string digits = std::to_string(v < 0 ? -v : v);
    std::string out;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
        out += digits[i];
    }
    return v < 0 ? "-" + out : out;
}

std::vector<double> parse_doubles(const std::string& text, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageFailure{std::string("bad number '") + item + "' in " + what};
        }
    }
    return out;
}

struct ModelFlags {
    int base_width = 8;
    int depth = 4;
    bool batchnorm = true;

    void add_to(CLI::App* app) {
        app->add_option("--base-width", base_width, "Channels in the first encoder level")
            ->capture_default_str();
        app->add_option("--depth", depth, "Number of 2x2 pooling stages")->capture_default_str();
        app->add_flag("--batchnorm,!--no-batchnorm", batchnorm, "Batch normalization after each 3x3 conv")
            ->capture_default_str();
    }

    tu_model_config config() const {
        tu_model_config c;
        tu_model_config_init(&c);
        c.base_width = base_width;
        c.depth = depth;
        c.use_batchnorm = batchnorm ? 1 : 0;
        return c;
    }
};

struct TrainFlags {
    int epochs = 30;
    double lr = 1e-5;
    int batch_size = 8;
    std::string loss = "dice";
    double threshold = 0.5;

    void add_to(CLI::App* app) {
        app->add_option("--epochs", epochs, "Training epochs")->capture_default_str();
        app->add_option("--lr", lr, "Adam learning rate")->capture_default_str();
        app->add_option("--batch-size", batch_size, "Mini-batch size")->capture_default_str();
        app->add_option("--loss", loss, "Loss: dice or dice+bce")
            ->check(CLI::IsMember({"dice", "dice+bce"}))
            ->capture_default_str();
        app->add_option("--threshold", threshold, "Mask binarization threshold")->capture_default_str();
    }

    tu_train_config config(std::uint64_t seed) const {
        tu_train_config c;
        tu_train_config_init(&c);
        c.learning_rate = lr;
        c.epochs = epochs;
        c.batch_size = batch_size;
        c.loss = loss == "dice" ? TU_LOSS_DICE : TU_LOSS_DICE_BCE;
        c.threshold = threshold;
        c.seed = seed;
        return c;
    }
};

void print_model_config(const tu_model_config& c) {
    std::cout << "# base_width=" << c.base_width << " depth=" << c.depth
              << " in_channels=" << c.in_channels << " out_channels=" << c.out_channels
              << " batchnorm=" << (c.use_batchnorm ? "on" : "off") << " bn_momentum=" << c.bn_momentum
              << " bn_epsilon=" << c.bn_epsilon << '\n';
}

void print_train_config(const tu_train_config& t) {
    std::cout << "# lr=" << t.learning_rate << " epochs=" << t.epochs << " batch_size=" << t.batch_size
              << " loss=" << (t.loss == TU_LOSS_DICE ? "dice" : "dice+bce") << " smooth=" << t.smooth
              << " threshold=" << t.threshold << " seed=" << t.seed << '\n';
}

// Training and validation sets from --manifest plus either --val-manifest or --split.
struct DataFlags {
    std::string manifest;
    std::string val_manifest;
    std::string split = "0.75,0.10,0.15";
    bool zscore = false;

    void add_to(CLI::App* app) {
        app->add_option("--manifest", manifest, "Tab-separated image/mask manifest")->required();
        app->add_option("--val-manifest", val_manifest, "Separate validation manifest (disables --split)");
        app->add_option("--split", split, "train,val,test fractions, or 'none' to train on everything")
            ->capture_default_str();
        app->add_flag("--zscore", zscore, "Z-score images instead of plain 1/255 scaling");
    }

    std::pair<DatasetPtr, DatasetPtr> load(std::uint64_t seed) const {
        tu_dataset* all = nullptr;
        check(tu_dataset_load(manifest.c_str(), zscore ? 1 : 0, &all));
        DatasetPtr full(all);
        if (!val_manifest.empty()) {
            tu_dataset* val = nullptr;
            check(tu_dataset_load(val_manifest.c_str(), zscore ? 1 : 0, &val));
            return {std::move(full), DatasetPtr(val)};
        }
        if (split == "none") {
            return {std::move(full), nullptr};
        }
        const std::vector<double> f = parse_doubles(split, "--split");
        if (f.size() != 3) {
            throw UsageFailure{"--split needs three comma-separated fractions"};
        }
        tu_dataset* tr = nullptr;
        tu_dataset* va = nullptr;
        tu_dataset* te = nullptr;
        check(tu_dataset_split(full.get(), f.data(), seed, &tr, &va, &te));
        tu_dataset_free(te);
        return {DatasetPtr(tr), DatasetPtr(va)};
    }

    void print() const {
        std::cout << "# manifest=" << manifest;
        if (!val_manifest.empty()) {
            std::cout << " val_manifest=" << val_manifest;
        } else {
            std::cout << " split=" << split;
        }
        std::cout << " normalization=" << (zscore ? "zscore" : "unit") << '\n';
    }
};

struct MetricsLog {
    std::ofstream out;
    bool timing = true;
};

void on_epoch(const tu_epoch_record* r, void* user) {
    auto* log = static_cast<MetricsLog*>(user);
    char line[256];
    if (tu_metrics_line(r, log->timing ? 1 : 0, line, sizeof line) != TU_OK) {
        return;
    }
    std::cout << "epoch " << line << '\n' << std::flush;
    if (log->out.is_open()) {
        log->out << line << '\n' << std::flush;
    }
}

void on_stage(const tu_stage_record* r, void*) {
    std::printf("stage %d width %d params %s macs %s mdc %.4f val_loss %.4f latency %.2f ms\n", r->stage,
                r->width, grouped(r->params).c_str(), grouped(r->macs).c_str(), r->mdc, r->val_loss,
                r->latency_ms);
    std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tinyunet: train, evaluate and benchmark a compact U-Net for binary segmentation"};
    app.require_subcommand(1);

    std::uint64_t seed = 42;
    auto add_seed = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "Seed for initialization, shuffling and splits")->capture_default_str();
    };

    ModelFlags model_flags;
    TrainFlags train_flags;
    DataFlags data_flags;
    std::string out_path;
    std::string model_path;
    std::string metrics_path;
    std::string image_path;
    std::string widths = "8,16,24,32";
    int size = 128;
    int count = 16;
    int iters = 20;
    int warmup = 3;
    bool no_timing = false;
    double threshold = 0.5;

    auto* params = app.add_subcommand("params", "Per-layer parameter counts");
    model_flags.add_to(params);

    auto* flops = app.add_subcommand("flops", "Per-layer multiply-accumulate counts");
    model_flags.add_to(flops);
    flops->add_option("--size", size, "Input height and width")->capture_default_str();

    auto* train = app.add_subcommand("train", "Train a model and write a weight file");
    model_flags.add_to(train);
    train_flags.add_to(train);
    data_flags.add_to(train);
    add_seed(train);
    train->add_option("--out", out_path, "Output weight file")->required();
    train->add_option("--metrics", metrics_path, "Metrics CSV (default: <out>.metrics.csv)");
    train->add_flag("--no-timing", no_timing, "Write 0 in the seconds column so logs compare byte for byte");

    auto* eval = app.add_subcommand("eval", "Dice scores of a trained model on a manifest");
    eval->add_option("--model", model_path, "Weight file")->required();
    eval->add_option("--manifest", data_flags.manifest, "Tab-separated image/mask manifest")->required();
    eval->add_option("--threshold", threshold, "Mask binarization threshold")->capture_default_str();
    eval->add_flag("--zscore", data_flags.zscore, "Z-score images");

    auto* infer = app.add_subcommand("infer", "Segment one image into a PGM mask");
    infer->add_option("--model", model_path, "Weight file")->required();
    infer->add_option("--image", image_path, "Input image (PGM P5 or tensor file)")->required();
    infer->add_option("--out", out_path, "Output mask (PGM, values 0/255)")->required();
    infer->add_option("--threshold", threshold, "Mask binarization threshold")->capture_default_str();
    infer->add_flag("--zscore", data_flags.zscore, "Z-score the image");

    auto* bench = app.add_subcommand("bench", "Eval-mode forward latency");
    model_flags.add_to(bench);
    add_seed(bench);
    bench->add_option("--model", model_path, "Weight file (otherwise a freshly built model)");
    bench->add_option("--size", size, "Input height and width")->capture_default_str();
    bench->add_option("--iters", iters, "Timed iterations")->capture_default_str();
    bench->add_option("--warmup", warmup, "Untimed warmup iterations")->capture_default_str();

    auto* sweep = app.add_subcommand("sweep", "Train one model per width and tabulate the trade-off");
    model_flags.add_to(sweep);
    train_flags.add_to(sweep);
    data_flags.add_to(sweep);
    add_seed(sweep);
    sweep->add_option("--widths", widths, "Ascending comma-separated base widths")->capture_default_str();
    sweep->add_option("--iters", iters, "Timed latency iterations per stage")->capture_default_str();
    sweep->add_option("--warmup", warmup, "Warmup iterations per stage")->capture_default_str();
    sweep->add_option("--out", out_path, "Output CSV")->required();

    auto* synth = app.add_subcommand("synth", "Generate a synthetic ellipse dataset");
    add_seed(synth);
    synth->add_option("--count", count, "Number of samples")->capture_default_str();
    synth->add_option("--size", size, "Image height and width (multiple of 16)")->capture_default_str();
    synth->add_option("--out", out_path, "Output directory")->required();

    if (argc < 2) {
        std::cerr << app.help();
        return kExitUsage;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (params->parsed()) {
            const tu_model_config cfg = model_flags.config();
            print_model_config(cfg);
            tu_model* m = nullptr;
            check(tu_model_build(&cfg, seed, &m));
            ModelPtr model(m);
            tu_param_report* r = nullptr;
            check(tu_param_report_create(model.get(), &r));
            ParamReportPtr report(r);
            std::printf("%-18s %-10s %14s %14s\n", "layer", "kind", "trainable", "non-trainable");
            for (std::size_t i = 0; i < tu_param_report_layer_count(r); ++i) {
                tu_layer_params l;
                check(tu_param_report_layer(r, i, &l));
                std::printf("%-18s %-10s %14s %14s\n", l.name, l.kind, grouped(l.trainable).c_str(),
                            grouped(l.non_trainable).c_str());
            }
            std::int64_t trainable = 0;
            std::int64_t frozen = 0;
            tu_param_report_totals(r, &trainable, &frozen);
            std::printf("trainable parameters: %s\n", grouped(trainable).c_str());
            std::printf("non-trainable parameters: %s\n", grouped(frozen).c_str());
            std::printf("total parameters: %s\n", grouped(trainable + frozen).c_str());
        } else if (flops->parsed()) {
            const tu_model_config cfg = model_flags.config();
            print_model_config(cfg);
            std::cout << "# input=1x1x" << size << 'x' << size << '\n';
            tu_flop_report* r = nullptr;
            check(tu_flop_report_create(&cfg, tu_shape{1, cfg.in_channels, size, size}, &r));
            FlopReportPtr report(r);
            std::printf("%-18s %-10s %16s %14s\n", "layer", "kind", "MACs", "elementwise");
            for (std::size_t i = 0; i < tu_flop_report_layer_count(r); ++i) {
                tu_layer_flops l;
                check(tu_flop_report_layer(r, i, &l));
                std::printf("%-18s %-10s %16s %14s\n", l.name, l.kind, grouped(l.macs).c_str(),
                            grouped(l.elementwise).c_str());
            }
            std::int64_t macs = 0;
            std::int64_t elementwise = 0;
            tu_flop_report_totals(r, &macs, &elementwise);
            std::printf("total MACs: %s\n", grouped(macs).c_str());
            std::printf("total FLOPs: %s\n", grouped(2 * macs).c_str());
            std::printf("elementwise ops: %s\n", grouped(elementwise).c_str());
        } else if (train->parsed()) {
            const tu_model_config cfg = model_flags.config();
            const tu_train_config tcfg = train_flags.config(seed);
            if (metrics_path.empty()) {
                metrics_path = out_path + ".metrics.csv";
            }
            print_model_config(cfg);
            print_train_config(tcfg);
            data_flags.print();
            std::cout << "# out=" << out_path << " metrics=" << metrics_path << '\n';
            auto [train_set, val_set] = data_flags.load(seed);
            std::cout << "# train_samples=" << tu_dataset_size(train_set.get())
                      << " val_samples=" << (val_set ? tu_dataset_size(val_set.get()) : 0) << '\n';
            tu_model* m = nullptr;
            check(tu_model_build(&cfg, seed, &m));
            ModelPtr model(m);
            MetricsLog log;
            log.timing = !no_timing;
            log.out.open(metrics_path, std::ios::trunc);
            if (!log.out) {
                std::cerr << "error: cannot open metrics log '" << metrics_path << "'\n";
                return kExitIo;
            }
            log.out << tu_metrics_header() << '\n';
            tu_fit_summary summary;
            check(tu_fit(model.get(), train_set.get(), val_set.get(), &tcfg, on_epoch, &log, &summary));
            std::uint64_t bytes = 0;
            check(tu_model_save(model.get(), out_path.c_str(), &bytes));
            std::cout << "best epoch " << summary.best_epoch;
            if (summary.has_val) {
                std::printf(" (val dice %.4f)", summary.best_val_dice);
            }
            std::cout << ", " << summary.steps << " optimizer steps\n";
            std::cout << "wrote " << out_path << " (" << bytes << " bytes)\n";
        } else if (eval->parsed()) {
            std::cout << "# model=" << model_path << " manifest=" << data_flags.manifest
                      << " threshold=" << threshold << '\n';
            tu_model* m = nullptr;
            check(tu_model_load(model_path.c_str(), &m));
            ModelPtr model(m);
            tu_model_config cfg;
            check(tu_model_get_config(m, &cfg));
            print_model_config(cfg);
            tu_dataset* d = nullptr;
            check(tu_dataset_load(data_flags.manifest.c_str(), data_flags.zscore ? 1 : 0, &d));
            DatasetPtr data(d);
            tu_eval_report* r = nullptr;
            check(tu_evaluate(m, d, threshold, &r));
            EvalReportPtr report(r);
            for (std::size_t i = 0; i < tu_eval_report_count(r); ++i) {
                std::printf("%s\t%.6f\n", tu_dataset_source(d, i), tu_eval_report_dice(r, i));
            }
            std::printf("images: %zu\nmean dice: %.6f\nmax dice: %.6f\n", tu_eval_report_count(r),
                        tu_eval_report_mean(r), tu_eval_report_max(r));
        } else if (infer->parsed()) {
            std::cout << "# model=" << model_path << " image=" << image_path << " out=" << out_path
                      << " threshold=" << threshold << '\n';
            tu_model* m = nullptr;
            check(tu_model_load(model_path.c_str(), &m));
            ModelPtr model(m);
            check(tu_infer_file(m, image_path.c_str(), out_path.c_str(), threshold, data_flags.zscore ? 1 : 0));
            std::cout << "wrote " << out_path << '\n';
        } else if (bench->parsed()) {
            tu_model* m = nullptr;
            if (!model_path.empty()) {
                check(tu_model_load(model_path.c_str(), &m));
            } else {
                const tu_model_config cfg = model_flags.config();
                check(tu_model_build(&cfg, seed, &m));
            }
            ModelPtr model(m);
            tu_model_config cfg;
            check(tu_model_get_config(m, &cfg));
            print_model_config(cfg);
            std::cout << "# input=1x" << cfg.in_channels << 'x' << size << 'x' << size << " warmup=" << warmup
                      << " iters=" << iters << " seed=" << seed << '\n';
            tu_latency_stats stats;
            std::vector<double> millis(static_cast<std::size_t>(iters > 0 ? iters : 0));
            check(tu_measure_latency(m, tu_shape{1, cfg.in_channels, size, size}, warmup, iters, &stats,
                                     millis.data()));
            std::printf("mean %.3f ms  median %.3f ms  p95 %.3f ms  (%d iterations)\n", stats.mean_ms,
                        stats.median_ms, stats.p95_ms, stats.iterations);
        } else if (sweep->parsed()) {
            std::vector<int32_t> ws;
            for (double w : parse_doubles(widths, "--widths")) {
                ws.push_back(static_cast<int32_t>(w));
            }
            tu_sweep_config sc;
            sc.base = model_flags.config();
            sc.train = train_flags.config(seed);
            sc.init_seed = seed;
            sc.latency_warmup = warmup;
            sc.latency_iters = iters;
            sc.csv_path = out_path.c_str();
            print_model_config(sc.base);
            print_train_config(sc.train);
            data_flags.print();
            std::cout << "# widths=" << widths << " latency_warmup=" << warmup << " latency_iters=" << iters
                      << " out=" << out_path << '\n';
            auto [train_set, val_set] = data_flags.load(seed);
            if (!val_set) {
                throw UsageFailure{"sweep needs a validation set (use --split or --val-manifest)"};
            }
            std::vector<tu_stage_record> records(ws.size());
            check(tu_stage_sweep(ws.data(), ws.size(), train_set.get(), val_set.get(), &sc, on_stage, nullptr,
                                 records.data()));
            const double reduction = 1.0 - static_cast<double>(records.back().params) /
                                               static_cast<double>(records.front().params);
            std::printf("parameter reduction stage 1 -> %zu: %.2f%%\n", records.size(), 100.0 * reduction);
            std::cout << "wrote " << out_path << '\n';
        } else if (synth->parsed()) {
            std::cout << "# count=" << count << " size=" << size << " seed=" << seed << " out=" << out_path
                      << '\n';
            tu_dataset* d = nullptr;
            check(tu_dataset_synthetic(count, size, seed, &d));
            DatasetPtr data(d);
            check(tu_dataset_write(d, out_path.c_str()));
            std::cout << "wrote " << tu_dataset_size(d) << " samples and " << out_path << "/manifest.tsv\n";
        }
    } catch (const Failure& f) {
        return f.code;
    } catch (const UsageFailure& u) {
        std::cerr << "error: " << u.message << '\n';
        return kExitUsage;
    }
    return kExitOk;
}
