// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <variant>
#include <vector>

#include "tinyunet/tensor.hpp"

namespace tinyunet {

enum class Mode { Train, Eval };

/// Convolution parameters. Weights are laid out (out_channels, in_channels, kh, kw)
/// for both regular and transposed convolutions.
struct ConvKernel {
    Tensor weights;
    std::vector<float> bias;
    int padding = 0;
    int stride = 1;

    int out_channels() const noexcept { return weights.shape().n; }
    int in_channels() const noexcept { return weights.shape().c; }
    int kernel_h() const noexcept { return weights.shape().h; }
    int kernel_w() const noexcept { return weights.shape().w; }
};

/// Zero-initialised kernel of the given geometry.
ConvKernel make_conv_kernel(int in_channels, int out_channels, int kernel, int padding, int stride);

struct BatchNormState {
    std::vector<float> gamma;
    std::vector<float> beta;
    std::vector<float> running_mean;
    std::vector<float> running_var;
    float momentum = 0.1f;
    float epsilon = 1e-5f;

    int channels() const noexcept { return static_cast<int>(gamma.size()); }
};

BatchNormState make_batchnorm_state(int channels, float momentum = 0.1f, float epsilon = 1e-5f);

enum class OpKind { Conv2d, ConvTranspose2d, MaxPool2x2, BatchNorm, Relu, Sigmoid, Concat };

const char* to_string(OpKind kind);

// Cached forward state, one struct per op kind. Each holds exactly what the
// backward pass reads, so gradients never require a second forward.

struct Conv2dRecord {
    Tensor input;
    ConvKernel kernel;
    Shape output;
};

struct ConvTranspose2dRecord {
    Tensor input;
    ConvKernel kernel;
    Shape output;
};

struct MaxPoolRecord {
    Shape input;
    Shape output;
    std::vector<std::uint32_t> argmax;  // flat input offset per output element
};

struct BatchNormRecord {
    Tensor normalized;  // x-hat
    std::vector<float> gamma;
    std::vector<float> inv_std;
    bool batch_statistics = true;
};

struct ReluRecord {
    Tensor input;
};

struct SigmoidRecord {
    Tensor output;
};

struct ConcatRecord {
    Shape first;
    Shape second;
};

using OpRecord = std::variant<std::monostate, Conv2dRecord, ConvTranspose2dRecord, MaxPoolRecord,
                              BatchNormRecord, ReluRecord, SigmoidRecord, ConcatRecord>;

/// Kind tag of a populated record. Throws UsageError on an empty record.
OpKind record_kind(const OpRecord& record);

/// Analytic gradients produced by backprop().
/// inputs: one tensor per forward input (two for concat).
/// params: conv -> {weights, bias as (c,1,1,1)}; batchnorm -> {gamma, beta}.
struct OpGradients {
    std::vector<Tensor> inputs;
    std::vector<Tensor> params;
};

// Forward kernels. When `record` is non-null it receives the state needed by
// backprop(); otherwise nothing is cached.

Tensor conv2d(const Tensor& x, const ConvKernel& k, OpRecord* record = nullptr);
Tensor conv_transpose2d(const Tensor& x, const ConvKernel& k, OpRecord* record = nullptr);
Tensor maxpool2x2(const Tensor& x, OpRecord* record = nullptr);

/// Train mode normalizes with biased batch statistics and updates the running
/// statistics of `state` in place; eval mode reads the running statistics.
Tensor batchnorm(const Tensor& x, BatchNormState& state, Mode mode, OpRecord* record = nullptr);

/// Eval-mode normalization without touching `state`.
Tensor batchnorm_eval(const Tensor& x, const BatchNormState& state, OpRecord* record = nullptr);

Tensor relu(const Tensor& x, OpRecord* record = nullptr);
Tensor sigmoid(const Tensor& x, OpRecord* record = nullptr);
Tensor concat_channels(const Tensor& a, const Tensor& b, OpRecord* record = nullptr);

/// Inverse of concat_channels: splits x after channel `first_channels`.
std::pair<Tensor, Tensor> split_channels(const Tensor& x, int first_channels);

OpGradients backprop(const OpRecord& record, const Tensor& upstream);

/// Scalar sigmoid in the overflow-free branch form.
inline float stable_sigmoid(float x) noexcept {
    if (x >= 0.0f) {
        return 1.0f / (1.0f + std::exp(-x));
    }
    const float e = std::exp(x);
    return e / (1.0f + e);
}

}  // namespace tinyunet
