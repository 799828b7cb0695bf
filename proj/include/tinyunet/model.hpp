// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tinyunet/ops.hpp"
#include "tinyunet/tensor.hpp"

namespace tinyunet {

/// Architecture hyperparameters of the encoder-decoder network.
///
/// Level i of the encoder carries base_width * 2^i channels; `depth` is the
/// number of 2x2 pooling stages, so the network has depth + 1 resolution
/// levels and accepts inputs whose height and width are multiples of 2^depth.
struct ModelConfig {
    int base_width = 8;
    int depth = 4;
    int in_channels = 1;
    int out_channels = 1;
    bool use_batchnorm = true;
    float bn_momentum = 0.1f;
    float bn_epsilon = 1e-5f;

    /// Throws ConfigError when any field is out of range.
    void validate() const;

    int width_at(int level) const { return base_width << level; }

    /// Spatial multiple required of inputs (2^depth).
    int spatial_multiple() const { return 1 << depth; }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class LayerKind { Conv3x3, BatchNorm, ConvTranspose2x2, Conv1x1 };

const char* to_string(LayerKind kind);

/// A weighted layer of the network in execution order.
struct LayerInfo {
    std::string name;
    LayerKind kind;
    int in_channels;
    int out_channels;
    int level;  // resolution level the layer's output lives at
};

/// Weighted layers of the network described by `config`, in forward order.
/// Batch-norm entries follow the convolution they normalize.
std::vector<LayerInfo> describe_layers(const ModelConfig& config);

/// Mutable view of one named parameter tensor inside a Model.
struct ParamRef {
    std::string name;
    std::span<float> values;
    std::vector<int> dims;  // logical extents: 4 for kernels, 1 for vectors
    bool trainable;
};

struct ConstParamRef {
    std::string name;
    std::span<const float> values;
    std::vector<int> dims;
    bool trainable;
};

struct NamedTensor {
    std::string name;
    Tensor value;
};

/// Gradients for every trainable parameter, in parameter-store order.
using ParamGradients = std::vector<NamedTensor>;

struct LayerParams {
    std::string name;
    LayerKind kind;
    std::int64_t trainable = 0;
    std::int64_t non_trainable = 0;
};

struct ParamReport {
    std::vector<LayerParams> layers;
    std::int64_t trainable = 0;
    std::int64_t non_trainable = 0;

    std::int64_t total() const { return trainable + non_trainable; }
};

struct LayerFlops {
    std::string name;
    std::string kind;  // "conv3x3", "convT2x2", "conv1x1", "batchnorm", "relu", "maxpool", "sigmoid"
    std::int64_t macs = 0;
    std::int64_t elementwise = 0;
};

struct FlopReport {
    std::vector<LayerFlops> layers;
    std::int64_t macs = 0;
    std::int64_t elementwise = 0;

    /// One multiply-accumulate counts as two floating-point operations.
    std::int64_t flops() const { return 2 * macs; }
};

/// U-Net: per level two (3x3 conv [+ BN] + ReLU) units, 2x2 max pooling
/// between encoder levels, 2x2 transposed-conv upsampling with skip
/// concatenation in the decoder, and a 1x1 conv + sigmoid head.
class Model {
public:
    Model(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return config_; }
    const std::vector<LayerInfo>& layers() const noexcept { return layers_; }

    /// Named parameter tensors in stable order, including BN running statistics.
    std::vector<ParamRef> parameters();
    std::vector<ConstParamRef> parameters() const;

    /// Train mode uses batch statistics for BN (updating the running ones)
    /// and records every op for backward(). `record` may be forced on in
    /// eval mode to differentiate through frozen BN statistics.
    Tensor forward(const Tensor& batch, Mode mode);
    Tensor forward(const Tensor& batch, Mode mode, bool record);

    /// Eval-mode inference. Does not touch the model, so concurrent calls are safe.
    Tensor infer(const Tensor& batch) const;

    /// Reverse pass over the recorded forward. Consumes the cache.
    ParamGradients backward(const Tensor& loss_grad);

    bool has_cache() const noexcept { return cache_.has_value(); }

    /// Piecewise branch taken by the recorded forward: one entry per ReLU
    /// element (1 if active) followed by every maxpool argmax. Two passes
    /// with equal signatures lie on the same smooth piece.
    std::vector<std::uint32_t> branch_signature() const;
    void clear_cache() noexcept { cache_.reset(); }

    /// Copies parameter values (all of them, including running stats).
    std::vector<std::vector<float>> snapshot() const;
    void restore(const std::vector<std::vector<float>>& values);

private:
    struct ConvUnit {
        std::string conv_name;
        std::string bn_name;
        ConvKernel conv;
        std::optional<BatchNormState> bn;
    };
    struct EncoderLevel {
        ConvUnit first;
        ConvUnit second;
    };
    struct DecoderLevel {
        std::string up_name;
        ConvKernel up;
        ConvUnit first;
        ConvUnit second;
    };
    struct UnitRecord {
        OpRecord conv;
        OpRecord bn;
        OpRecord act;
    };
    struct Cache {
        Shape input;
        Shape output;
        std::vector<UnitRecord> encoder;  // two per level
        std::vector<OpRecord> pool;
        std::vector<OpRecord> up;
        std::vector<OpRecord> concat;
        std::vector<UnitRecord> decoder;  // two per level, indexed by level
        OpRecord head;
        OpRecord sigmoid;
    };

    ConvUnit make_unit(const std::string& prefix, int index, int cin, int cout) const;
    void check_input(const Tensor& batch) const;
    template <typename Self, typename Ref>
    static std::vector<Ref> collect(Self& self);

    ModelConfig config_;
    std::vector<LayerInfo> layers_;
    std::vector<EncoderLevel> encoder_;
    std::vector<DecoderLevel> decoder_;  // indexed by level 0..depth-1
    std::string head_name_ = "head";
    ConvKernel head_;
    std::optional<Cache> cache_;
};

Model build_unet(const ModelConfig& config, std::uint64_t seed);

ParamReport count_parameters(const Model& model);

/// Analytic operation counts for a forward pass on `input` (n, c, h, w).
FlopReport count_flops(const ModelConfig& config, const Shape& input);

}  // namespace tinyunet
