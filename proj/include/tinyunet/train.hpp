// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tinyunet/data.hpp"
#include "tinyunet/model.hpp"

namespace tinyunet {

enum class LossKind { SoftDice, DiceBce };

const char* to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& name);  // "dice" | "dice+bce"

struct TrainConfig {
    double learning_rate = 1e-5;
    int epochs = 30;
    int batch_size = 8;
    LossKind loss = LossKind::SoftDice;
    double smooth = 1.0;
    double threshold = 0.5;
    std::uint64_t seed = 42;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const;
};

struct LossResult {
    double loss = 0.0;
    Tensor grad;  // d loss / d probs
};

/// 2|A∩B| / (|A| + |B|) on {0,1} masks; two empty masks score 1.
double dice_score(const Tensor& pred, const Tensor& truth);

/// 1 - (2 Σpt + s) / (Σp + Σt + s) per sample, averaged over the batch.
LossResult soft_dice_loss(const Tensor& probs, const Tensor& truth, double smooth = 1.0);

/// Mean binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
LossResult bce_loss(const Tensor& probs, const Tensor& truth);

/// Soft dice, or soft dice + BCE with equal unit weights.
LossResult compute_loss(LossKind kind, const Tensor& probs, const Tensor& truth, double smooth);

/// 1 where prob >= threshold, else 0.
Tensor binarize(const Tensor& probs, double threshold);

struct AdamState {
    std::vector<std::vector<float>> m;
    std::vector<std::vector<float>> v;
    std::int64_t t = 0;
};

/// One bias-corrected Adam update over parallel lists of parameter and
/// gradient buffers. All gradients are checked for finiteness before any
/// parameter changes; a non-finite gradient throws NumericError.
void adam_step(std::span<const std::span<float>> params, std::span<const std::span<const float>> grads,
               AdamState& state, const TrainConfig& cfg);

/// Applies `grads` (from Model::backward) to the model's trainable parameters.
void adam_step(Model& model, const ParamGradients& grads, AdamState& state, const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    std::optional<double> val_dice;
    std::optional<double> val_loss;
    double seconds = 0.0;
};

struct FitResult {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    std::optional<double> best_val_dice;
    std::int64_t steps = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch training with Adam. Each epoch reshuffles the training set
/// with the seeded generator, then scores the validation set in eval mode.
/// On return the model holds the parameters of the best-validation-dice
/// epoch (the last epoch when `val` is empty).
FitResult fit(Model& model, const std::vector<Sample>& train, const std::vector<Sample>& val,
              const TrainConfig& cfg, const EpochCallback& on_epoch = {});

struct EvalReport {
    std::vector<double> dice;
    double mean = 0.0;
    double max = 0.0;
    std::size_t count = 0;
};

/// Eval-mode probabilities for one (1, c, h, w) image of any extent; padding
/// to the model's spatial multiple and cropping back are handled here.
Tensor predict(const Model& model, const Tensor& image);

EvalReport evaluate(const Model& model, const std::vector<Sample>& dataset, double threshold = 0.5);

/// Mean loss over `dataset` in eval mode, one image at a time.
double mean_loss(const Model& model, const std::vector<Sample>& dataset, const TrainConfig& cfg);

/// "epoch,train_loss,val_dice,seconds" rows; an absent val_dice is written as NA.
std::string metrics_header();
std::string format_metrics_line(const EpochRecord& record, bool include_time = true);

}  // namespace tinyunet
