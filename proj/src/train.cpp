// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tinyunet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>

#include "tinyunet/errors.hpp"
#include "tinyunet/rng.hpp"

namespace tinyunet {

namespace {

constexpr double kProbFloor = 1e-7;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw UsageError(std::string(op) + ": shape " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
    }
}

std::size_t count_ones(const Tensor& mask, const char* which) {
    std::size_t n = 0;
    for (float v : mask.values()) {
        if (v == 1.0f) {
            ++n;
        } else if (v != 0.0f) {
            throw UsageError(std::string("dice_score: ") + which + " mask is not binary");
        }
    }
    return n;
}

std::pair<Tensor, CropRecord> padded_pair(const Sample& s, int multiple, Tensor* mask_out) {
    auto [image, crop] = pad_to_multiple(s.image, multiple);
    if (mask_out) {
        *mask_out = pad_to_multiple(s.mask, multiple).first;
    }
    return {std::move(image), crop};
}

}  // namespace

const char* to_string(LossKind kind) {
    return kind == LossKind::SoftDice ? "dice" : "dice+bce";
}

LossKind parse_loss_kind(const std::string& name) {
    if (name == "dice") return LossKind::SoftDice;
    if (name == "dice+bce") return LossKind::DiceBce;
    throw UsageError("unknown loss '" + name + "' (expected dice or dice+bce)");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw UsageError("learning rate must be positive");
    }
    if (epochs < 1) {
        throw UsageError("epochs must be >= 1");
    }
    if (batch_size < 1) {
        throw UsageError("batch size must be >= 1");
    }
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw UsageError("threshold must lie in (0, 1)");
    }
    if (!(smooth >= 0.0)) {
        throw UsageError("smoothing constant must be >= 0");
    }
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_epsilon > 0.0)) {
        throw UsageError("invalid Adam constants");
    }
}

double dice_score(const Tensor& pred, const Tensor& truth) {
    require_same_shape(pred, truth, "dice_score");
    const std::size_t a = count_ones(pred, "predicted");
    const std::size_t b = count_ones(truth, "ground-truth");
    if (a + b == 0) {
        return 1.0;
    }
    std::size_t overlap = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        overlap += (pred[i] == 1.0f && truth[i] == 1.0f);
    }
    return 2.0 * static_cast<double>(overlap) / static_cast<double>(a + b);
}

LossResult soft_dice_loss(const Tensor& probs, const Tensor& truth, double smooth) {
    require_same_shape(probs, truth, "soft_dice_loss");
    const Shape& s = probs.shape();
    const std::size_t per = probs.size() / static_cast<std::size_t>(s.n);
    LossResult r;
    r.grad = Tensor(s);
    double total = 0.0;
    for (int n = 0; n < s.n; ++n) {
        const float* p = probs.data() + per * n;
        const float* t = truth.data() + per * n;
        double inter = 0.0;
        double sum = 0.0;
        for (std::size_t i = 0; i < per; ++i) {
            inter += static_cast<double>(p[i]) * t[i];
            sum += static_cast<double>(p[i]) + t[i];
        }
        const double num = 2.0 * inter + smooth;
        const double den = sum + smooth;
        total += 1.0 - num / den;
        float* g = r.grad.data() + per * n;
        const double scale = 1.0 / (s.n * den * den);
        for (std::size_t i = 0; i < per; ++i) {
            g[i] = static_cast<float>(-(2.0 * t[i] * den - num) * scale);
        }
    }
    r.loss = total / s.n;
    return r;
}

LossResult bce_loss(const Tensor& probs, const Tensor& truth) {
    require_same_shape(probs, truth, "bce_loss");
    LossResult r;
    r.grad = Tensor(probs.shape());
    const double count = static_cast<double>(probs.size());
    double total = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double raw = probs[i];
        const double p = std::clamp(raw, kProbFloor, 1.0 - kProbFloor);
        const double t = truth[i];
        total -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
        // the clamp is flat outside its interval, so the derivative vanishes there
        const bool clamped = raw < kProbFloor || raw > 1.0 - kProbFloor;
        r.grad[i] = clamped ? 0.0f : static_cast<float>((p - t) / (p * (1.0 - p)) / count);
    }
    r.loss = total / count;
    return r;
}

LossResult compute_loss(LossKind kind, const Tensor& probs, const Tensor& truth, double smooth) {
    LossResult dice = soft_dice_loss(probs, truth, smooth);
    if (kind == LossKind::SoftDice) {
        return dice;
    }
    LossResult bce = bce_loss(probs, truth);
    dice.loss += bce.loss;
    for (std::size_t i = 0; i < dice.grad.size(); ++i) {
        dice.grad[i] += bce.grad[i];
    }
    return dice;
}

Tensor binarize(const Tensor& probs, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw UsageError("binarize: threshold must lie in (0, 1)");
    }
    Tensor out(probs.shape());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        out[i] = probs[i] >= threshold ? 1.0f : 0.0f;
    }
    return out;
}

void adam_step(std::span<const std::span<float>> params, std::span<const std::span<const float>> grads,
               AdamState& state, const TrainConfig& cfg) {
    if (params.size() != grads.size()) {
        throw UsageError("adam_step: parameter and gradient lists differ in length");
    }
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), 0.0f);
            state.v.emplace_back(p.size(), 0.0f);
        }
    }
    if (state.m.size() != params.size()) {
        throw UsageError("adam_step: optimizer state does not match parameter list");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (grads[k].size() != params[k].size() || state.m[k].size() != params[k].size()) {
            throw UsageError("adam_step: size mismatch in parameter " + std::to_string(k));
        }
        for (float g : grads[k]) {
            if (!std::isfinite(g)) {
                throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(k));
            }
        }
    }
    ++state.t;
    const double b1 = cfg.beta1;
    const double b2 = cfg.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        std::span<float> p = params[k];
        std::span<const float> g = grads[k];
        std::vector<float>& m = state.m[k];
        std::vector<float>& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            const double mi = b1 * m[i] + (1.0 - b1) * gi;
            const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double update = cfg.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + cfg.adam_epsilon);
            p[i] = static_cast<float>(p[i] - update);
        }
    }
}

void adam_step(Model& model, const ParamGradients& grads, AdamState& state, const TrainConfig& cfg) {
    std::vector<std::span<float>> params;
    std::vector<std::span<const float>> gs;
    std::size_t k = 0;
    for (ParamRef& p : model.parameters()) {
        if (!p.trainable) {
            continue;
        }
        if (k >= grads.size() || grads[k].name != p.name) {
            throw UsageError("adam_step: gradient list does not match trainable parameter '" +
                             p.name + "'");
        }
        params.push_back(p.values);
        gs.push_back(grads[k].value.values());
        ++k;
    }
    if (k != grads.size()) {
        throw UsageError("adam_step: more gradients than trainable parameters");
    }
    adam_step(params, gs, state, cfg);
}

FitResult fit(Model& model, const std::vector<Sample>& train, const std::vector<Sample>& val,
              const TrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    if (train.empty()) {
        throw UsageError("fit: training set is empty");
    }
    const int multiple = model.config().spatial_multiple();
    std::vector<Tensor> images;
    std::vector<Tensor> masks;
    for (const Sample& s : train) {
        Tensor mask;
        images.push_back(padded_pair(s, multiple, &mask).first);
        masks.push_back(std::move(mask));
    }

    Rng rng(cfg.seed);
    AdamState adam;
    FitResult result;
    std::vector<std::vector<float>> best;
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        rng.shuffle(std::span(order));
        double loss_sum = 0.0;
        int batch_index = 0;
        for (std::size_t first = 0; first < order.size(); first += cfg.batch_size, ++batch_index) {
            const std::size_t last = std::min(order.size(), first + cfg.batch_size);
            std::vector<const Tensor*> xb;
            std::vector<const Tensor*> yb;
            for (std::size_t i = first; i < last; ++i) {
                xb.push_back(&images[order[i]]);
                yb.push_back(&masks[order[i]]);
            }
            const Tensor x = stack_batch(xb);
            const Tensor y = stack_batch(yb);
            const Tensor probs = model.forward(x, Mode::Train);
            LossResult loss = compute_loss(cfg.loss, probs, y, cfg.smooth);
            if (!std::isfinite(loss.loss)) {
                model.clear_cache();
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index + 1));
            }
            const ParamGradients grads = model.backward(loss.grad);
            try {
                adam_step(model, grads, adam, cfg);
            } catch (const NumericError& e) {
                throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batch_index + 1));
            }
            loss_sum += loss.loss * static_cast<double>(last - first);
            ++result.steps;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(train.size());
        if (!val.empty()) {
            rec.val_dice = evaluate(model, val, cfg.threshold).mean;
            rec.val_loss = mean_loss(model, val, cfg);
        }
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

        const bool improved = val.empty() || !result.best_val_dice || *rec.val_dice > *result.best_val_dice;
        if (improved) {
            result.best_epoch = epoch;
            result.best_val_dice = rec.val_dice;
            if (!val.empty() && epoch < cfg.epochs) {
                best = model.snapshot();
            } else {
                best.clear();
            }
        }
        result.epochs.push_back(rec);
        if (on_epoch) {
            on_epoch(rec);
        }
    }
    if (!best.empty()) {
        model.restore(best);
    }
    return result;
}

Tensor predict(const Model& model, const Tensor& image) {
    auto [padded, crop] = pad_to_multiple(image, model.config().spatial_multiple());
    return crop_back(model.infer(padded), crop);
}

EvalReport evaluate(const Model& model, const std::vector<Sample>& dataset, double threshold) {
    if (dataset.empty()) {
        throw UsageError("evaluate: dataset is empty");
    }
    EvalReport report;
    for (const Sample& s : dataset) {
        const Tensor mask = binarize(predict(model, s.image), threshold);
        report.dice.push_back(dice_score(mask, s.mask));
    }
    report.count = report.dice.size();
    double sum = 0.0;
    for (double d : report.dice) sum += d;
    report.mean = sum / static_cast<double>(report.count);
    report.max = *std::max_element(report.dice.begin(), report.dice.end());
    return report;
}

double mean_loss(const Model& model, const std::vector<Sample>& dataset, const TrainConfig& cfg) {
    if (dataset.empty()) {
        throw UsageError("mean_loss: dataset is empty");
    }
    double sum = 0.0;
    for (const Sample& s : dataset) {
        sum += compute_loss(cfg.loss, predict(model, s.image), s.mask, cfg.smooth).loss;
    }
    return sum / static_cast<double>(dataset.size());
}

std::string metrics_header() { return "epoch,train_loss,val_dice,seconds"; }

std::string format_metrics_line(const EpochRecord& record, bool include_time) {
    char buf[160];
    char dice[32] = "NA";
    if (record.val_dice) {
        std::snprintf(dice, sizeof dice, "%.9g", *record.val_dice);
    }
    std::snprintf(buf, sizeof buf, "%d,%.9g,%s,%.3f", record.epoch, record.train_loss, dice,
                  include_time ? record.seconds : 0.0);
    return buf;
}

}  // namespace tinyunet
