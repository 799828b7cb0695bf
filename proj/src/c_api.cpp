// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tinyunet.h"

#include <cstring>
#include <new>
#include <string>
#include <vector>

#include "tinyunet/bench.hpp"
#include "tinyunet/data.hpp"
#include "tinyunet/errors.hpp"
#include "tinyunet/model.hpp"
#include "tinyunet/serialize.hpp"
#include "tinyunet/train.hpp"

using namespace tinyunet;

struct tu_model {
    Model model;
};

struct tu_dataset {
    std::vector<Sample> samples;
};

struct tu_param_report {
    ParamReport report;
    std::vector<std::string> kinds;
};

struct tu_flop_report {
    FlopReport report;
};

struct tu_eval_report {
    EvalReport report;
};

namespace {

thread_local std::string last_error;

tu_status code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config: return TU_ERR_CONFIG;
        case ErrorKind::Usage: return TU_ERR_USAGE;
        case ErrorKind::Numeric: return TU_ERR_NUMERIC;
        case ErrorKind::Format: return TU_ERR_FORMAT;
        case ErrorKind::Io: return TU_ERR_IO;
    }
    return TU_ERR_INTERNAL;
}

template <typename F>
tu_status guarded(F&& body) {
    try {
        body();
        return TU_OK;
    } catch (const Error& e) {
        last_error = e.what();
        return code_for(e.kind());
    } catch (const std::bad_alloc&) {
        last_error = "out of memory";
        return TU_ERR_INTERNAL;
    } catch (const std::exception& e) {
        last_error = e.what();
        return TU_ERR_INTERNAL;
    } catch (...) {
        last_error = "unknown error";
        return TU_ERR_INTERNAL;
    }
}

void require(bool ok, const char* what) {
    if (!ok) {
        throw UsageError(what);
    }
}

ModelConfig from_c(const tu_model_config& c) {
    ModelConfig m;
    m.base_width = c.base_width;
    m.depth = c.depth;
    m.in_channels = c.in_channels;
    m.out_channels = c.out_channels;
    m.use_batchnorm = c.use_batchnorm != 0;
    m.bn_momentum = c.bn_momentum;
    m.bn_epsilon = c.bn_epsilon;
    return m;
}

tu_model_config to_c(const ModelConfig& m) {
    return {m.base_width, m.depth, m.in_channels, m.out_channels, m.use_batchnorm ? 1 : 0,
            m.bn_momentum, m.bn_epsilon};
}

TrainConfig from_c(const tu_train_config& c) {
    TrainConfig t;
    t.learning_rate = c.learning_rate;
    t.epochs = c.epochs;
    t.batch_size = c.batch_size;
    if (c.loss != TU_LOSS_DICE && c.loss != TU_LOSS_DICE_BCE) {
        throw UsageError("unknown loss kind " + std::to_string(c.loss));
    }
    t.loss = c.loss == TU_LOSS_DICE ? LossKind::SoftDice : LossKind::DiceBce;
    t.smooth = c.smooth;
    t.threshold = c.threshold;
    t.seed = c.seed;
    t.beta1 = c.beta1;
    t.beta2 = c.beta2;
    t.adam_epsilon = c.adam_epsilon;
    return t;
}

Shape from_c(const tu_shape& s) {
    const Shape out{s.n, s.c, s.h, s.w};
    if (!out.valid()) {
        throw ConfigError("shape extents must be >= 1, got " + to_string(out));
    }
    return out;
}

tu_epoch_record to_c(const EpochRecord& r) {
    return {r.epoch, r.train_loss, r.val_dice ? 1 : 0, r.val_dice.value_or(0.0),
            r.val_loss.value_or(0.0), r.seconds};
}

tu_stage_record to_c(const StageRecord& r) {
    return {r.stage, r.width, r.params, r.macs, r.mdc, r.val_loss, r.latency_ms};
}

}  // namespace

extern "C" {

const char* tu_last_error(void) { return last_error.c_str(); }

const char* tu_status_name(tu_status status) {
    switch (status) {
        case TU_OK: return "ok";
        case TU_ERR_CONFIG: return "configuration error";
        case TU_ERR_USAGE: return "usage error";
        case TU_ERR_NUMERIC: return "numeric error";
        case TU_ERR_FORMAT: return "format error";
        case TU_ERR_IO: return "I/O error";
        case TU_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

const char* tu_version(void) { return "0.1.0"; }

void tu_model_config_init(tu_model_config* config) {
    if (config) {
        *config = to_c(ModelConfig{});
    }
}

tu_status tu_model_build(const tu_model_config* config, uint64_t seed, tu_model** out) {
    return guarded([&] {
        require(config && out, "tu_model_build: null argument");
        *out = new tu_model{build_unet(from_c(*config), seed)};
    });
}

tu_status tu_model_load(const char* path, tu_model** out) {
    return guarded([&] {
        require(path && out, "tu_model_load: null argument");
        *out = new tu_model{load_model(path)};
    });
}

tu_status tu_model_save(const tu_model* model, const char* path, uint64_t* bytes_written) {
    return guarded([&] {
        require(model && path, "tu_model_save: null argument");
        const std::uint64_t n = save_model(model->model, path);
        if (bytes_written) {
            *bytes_written = n;
        }
    });
}

tu_status tu_model_get_config(const tu_model* model, tu_model_config* out) {
    return guarded([&] {
        require(model && out, "tu_model_get_config: null argument");
        *out = to_c(model->model.config());
    });
}

void tu_model_free(tu_model* model) { delete model; }

tu_status tu_model_infer(const tu_model* model, tu_shape input, const float* data, float* output,
                         size_t output_len) {
    return guarded([&] {
        require(model && data && output, "tu_model_infer: null argument");
        const Shape shape = from_c(input);
        Tensor x(shape, std::vector<float>(data, data + shape.numel()));
        const Tensor y = model->model.infer(x);
        require(output_len == y.size(), "tu_model_infer: output buffer has the wrong length");
        std::memcpy(output, y.data(), y.size() * sizeof(float));
    });
}

tu_status tu_param_report_create(const tu_model* model, tu_param_report** out) {
    return guarded([&] {
        require(model && out, "tu_param_report_create: null argument");
        auto* r = new tu_param_report{count_parameters(model->model), {}};
        for (const LayerParams& l : r->report.layers) {
            r->kinds.emplace_back(to_string(l.kind));
        }
        *out = r;
    });
}

size_t tu_param_report_layer_count(const tu_param_report* report) {
    return report ? report->report.layers.size() : 0;
}

tu_status tu_param_report_layer(const tu_param_report* report, size_t index, tu_layer_params* out) {
    return guarded([&] {
        require(report && out, "tu_param_report_layer: null argument");
        require(index < report->report.layers.size(), "tu_param_report_layer: index out of range");
        const LayerParams& l = report->report.layers[index];
        *out = {l.name.c_str(), report->kinds[index].c_str(), l.trainable, l.non_trainable};
    });
}

void tu_param_report_totals(const tu_param_report* report, int64_t* trainable, int64_t* non_trainable) {
    if (!report) return;
    if (trainable) *trainable = report->report.trainable;
    if (non_trainable) *non_trainable = report->report.non_trainable;
}

void tu_param_report_free(tu_param_report* report) { delete report; }

tu_status tu_flop_report_create(const tu_model_config* config, tu_shape input, tu_flop_report** out) {
    return guarded([&] {
        require(config && out, "tu_flop_report_create: null argument");
        *out = new tu_flop_report{count_flops(from_c(*config), from_c(input))};
    });
}

size_t tu_flop_report_layer_count(const tu_flop_report* report) {
    return report ? report->report.layers.size() : 0;
}

tu_status tu_flop_report_layer(const tu_flop_report* report, size_t index, tu_layer_flops* out) {
    return guarded([&] {
        require(report && out, "tu_flop_report_layer: null argument");
        require(index < report->report.layers.size(), "tu_flop_report_layer: index out of range");
        const LayerFlops& l = report->report.layers[index];
        *out = {l.name.c_str(), l.kind.c_str(), l.macs, l.elementwise};
    });
}

void tu_flop_report_totals(const tu_flop_report* report, int64_t* macs, int64_t* elementwise) {
    if (!report) return;
    if (macs) *macs = report->report.macs;
    if (elementwise) *elementwise = report->report.elementwise;
}

void tu_flop_report_free(tu_flop_report* report) { delete report; }

tu_status tu_dataset_load(const char* manifest_path, int32_t zscore, tu_dataset** out) {
    return guarded([&] {
        require(manifest_path && out, "tu_dataset_load: null argument");
        const Manifest m = load_manifest(manifest_path);
        *out = new tu_dataset{
            load_samples(m, zscore ? Normalization::ZScore : Normalization::Unit)};
    });
}

tu_status tu_dataset_synthetic(int32_t count, int32_t size, uint64_t seed, tu_dataset** out) {
    return guarded([&] {
        require(out != nullptr, "tu_dataset_synthetic: null argument");
        *out = new tu_dataset{make_synthetic(count, size, seed)};
    });
}

size_t tu_dataset_size(const tu_dataset* dataset) { return dataset ? dataset->samples.size() : 0; }

const char* tu_dataset_source(const tu_dataset* dataset, size_t index) {
    if (!dataset || index >= dataset->samples.size()) {
        return nullptr;
    }
    return dataset->samples[index].source.c_str();
}

tu_status tu_dataset_write(const tu_dataset* dataset, const char* dir) {
    return guarded([&] {
        require(dataset && dir, "tu_dataset_write: null argument");
        write_dataset(dataset->samples, dir);
    });
}

tu_status tu_dataset_split(const tu_dataset* dataset, const double fractions[3], uint64_t seed,
                           tu_dataset** train, tu_dataset** val, tu_dataset** test) {
    return guarded([&] {
        require(dataset && fractions && train && val && test, "tu_dataset_split: null argument");
        Split parts = split(dataset->samples, {fractions[0], fractions[1], fractions[2]}, seed);
        auto* a = new tu_dataset{std::move(parts.train)};
        auto* b = new tu_dataset{std::move(parts.val)};
        auto* c = new tu_dataset{std::move(parts.test)};
        *train = a;
        *val = b;
        *test = c;
    });
}

void tu_dataset_free(tu_dataset* dataset) { delete dataset; }

void tu_train_config_init(tu_train_config* config) {
    if (!config) return;
    const TrainConfig t;
    *config = {t.learning_rate, t.epochs, t.batch_size, TU_LOSS_DICE, t.smooth, t.threshold,
               t.seed, t.beta1, t.beta2, t.adam_epsilon};
}

tu_status tu_fit(tu_model* model, const tu_dataset* train, const tu_dataset* val,
                 const tu_train_config* config, tu_epoch_callback on_epoch, void* user,
                 tu_fit_summary* summary) {
    return guarded([&] {
        require(model && train && config, "tu_fit: null argument");
        static const std::vector<Sample> none;
        EpochCallback cb;
        if (on_epoch) {
            cb = [&](const EpochRecord& r) {
                const tu_epoch_record c = to_c(r);
                on_epoch(&c, user);
            };
        }
        const FitResult r = fit(model->model, train->samples, val ? val->samples : none,
                                from_c(*config), cb);
        if (summary) {
            *summary = {static_cast<int32_t>(r.epochs.size()), r.best_epoch,
                        r.best_val_dice ? 1 : 0, r.best_val_dice.value_or(0.0), r.steps};
        }
    });
}

const char* tu_metrics_header(void) {
    static const std::string header = metrics_header();
    return header.c_str();
}

tu_status tu_metrics_line(const tu_epoch_record* record, int32_t include_time, char* buffer,
                          size_t capacity) {
    return guarded([&] {
        require(record && buffer, "tu_metrics_line: null argument");
        EpochRecord r;
        r.epoch = record->epoch;
        r.train_loss = record->train_loss;
        if (record->has_val) {
            r.val_dice = record->val_dice;
            r.val_loss = record->val_loss;
        }
        r.seconds = record->seconds;
        const std::string line = format_metrics_line(r, include_time != 0);
        require(line.size() < capacity, "tu_metrics_line: buffer too small");
        std::memcpy(buffer, line.c_str(), line.size() + 1);
    });
}

tu_status tu_evaluate(const tu_model* model, const tu_dataset* dataset, double threshold,
                      tu_eval_report** out) {
    return guarded([&] {
        require(model && dataset && out, "tu_evaluate: null argument");
        *out = new tu_eval_report{evaluate(model->model, dataset->samples, threshold)};
    });
}

size_t tu_eval_report_count(const tu_eval_report* report) { return report ? report->report.count : 0; }

double tu_eval_report_dice(const tu_eval_report* report, size_t index) {
    if (!report || index >= report->report.dice.size()) return 0.0;
    return report->report.dice[index];
}

double tu_eval_report_mean(const tu_eval_report* report) { return report ? report->report.mean : 0.0; }

double tu_eval_report_max(const tu_eval_report* report) { return report ? report->report.max : 0.0; }

void tu_eval_report_free(tu_eval_report* report) { delete report; }

tu_status tu_infer_file(const tu_model* model, const char* image_path, const char* mask_path,
                        double threshold, int32_t zscore) {
    return guarded([&] {
        require(model && image_path && mask_path, "tu_infer_file: null argument");
        const Tensor image = load_image(image_path, zscore ? Normalization::ZScore : Normalization::Unit);
        const Tensor mask = binarize(predict(model->model, image), threshold);
        write_pgm(mask_path, to_gray(mask.slice_batch(0, 1)));
    });
}

tu_status tu_measure_latency(const tu_model* model, tu_shape input, int32_t warmup, int32_t iters,
                             tu_latency_stats* stats, double* millis) {
    return guarded([&] {
        require(model && stats, "tu_measure_latency: null argument");
        const LatencyStats s = measure_latency(model->model, from_c(input), warmup, iters);
        *stats = {s.warmup, s.iterations, s.mean, s.median, s.p95};
        if (millis) {
            std::copy(s.millis.begin(), s.millis.end(), millis);
        }
    });
}

tu_status tu_stage_sweep(const int32_t* widths, size_t width_count, const tu_dataset* train,
                         const tu_dataset* val, const tu_sweep_config* config,
                         tu_stage_callback on_stage, void* user, tu_stage_record* records) {
    return guarded([&] {
        require(widths && train && val && config, "tu_stage_sweep: null argument");
        SweepOptions opts;
        opts.base = from_c(config->base);
        opts.train = from_c(config->train);
        opts.init_seed = config->init_seed;
        opts.latency_warmup = config->latency_warmup;
        opts.latency_iters = config->latency_iters;
        if (config->csv_path) {
            opts.csv_path = config->csv_path;
        }
        StageCallback cb;
        if (on_stage) {
            cb = [&](const StageRecord& r) {
                const tu_stage_record c = to_c(r);
                on_stage(&c, user);
            };
        }
        const std::vector<int> ws(widths, widths + width_count);
        const std::vector<StageRecord> out = run_stage_sweep(ws, train->samples, val->samples, opts, cb);
        if (records) {
            for (std::size_t i = 0; i < out.size(); ++i) {
                records[i] = to_c(out[i]);
            }
        }
    });
}

}  // extern "C"
