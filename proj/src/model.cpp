// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tinyunet/model.hpp"

#include <cmath>
#include <map>
#include <variant>

#include "tinyunet/errors.hpp"
#include "tinyunet/rng.hpp"

namespace tinyunet {

namespace {

std::string level_prefix(const char* side, int level) {
    return std::string(side) + std::to_string(level);
}

void he_uniform(ConvKernel& k, int fan_in, Rng& rng) {
    const double limit = std::sqrt(6.0 / fan_in);
    for (float& w : k.weights.values()) {
        w = static_cast<float>(rng.uniform(-limit, limit));
    }
}

}  // namespace

void ModelConfig::validate() const {
    if (base_width < 1) {
        throw ConfigError("base_width must be >= 1, got " + std::to_string(base_width));
    }
    if (depth < 1) {
        throw ConfigError("depth must be >= 1, got " + std::to_string(depth));
    }
    if (depth > 12 || (static_cast<std::int64_t>(base_width) << depth) > (1 << 20)) {
        throw ConfigError("base_width * 2^depth is unreasonably large");
    }
    if (in_channels < 1 || out_channels < 1) {
        throw ConfigError("in_channels and out_channels must be >= 1");
    }
    if (!(bn_momentum > 0.0f && bn_momentum <= 1.0f)) {
        throw ConfigError("bn_momentum must lie in (0, 1]");
    }
    if (!(bn_epsilon > 0.0f)) {
        throw ConfigError("bn_epsilon must be positive");
    }
}

const char* to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv3x3: return "conv3x3";
        case LayerKind::BatchNorm: return "batchnorm";
        case LayerKind::ConvTranspose2x2: return "convT2x2";
        case LayerKind::Conv1x1: return "conv1x1";
    }
    return "unknown";
}

std::vector<LayerInfo> describe_layers(const ModelConfig& config) {
    config.validate();
    std::vector<LayerInfo> out;
    auto unit = [&](const std::string& prefix, int idx, int cin, int cout, int level) {
        out.push_back({prefix + ".conv" + std::to_string(idx), LayerKind::Conv3x3, cin, cout, level});
        if (config.use_batchnorm) {
            out.push_back({prefix + ".bn" + std::to_string(idx), LayerKind::BatchNorm, cout, cout, level});
        }
    };
    int channels = config.in_channels;
    for (int level = 0; level <= config.depth; ++level) {
        const int width = config.width_at(level);
        const std::string prefix = level_prefix("enc", level);
        unit(prefix, 1, channels, width, level);
        unit(prefix, 2, width, width, level);
        channels = width;
    }
    for (int level = config.depth - 1; level >= 0; --level) {
        const int width = config.width_at(level);
        const std::string prefix = level_prefix("dec", level);
        out.push_back({prefix + ".up", LayerKind::ConvTranspose2x2, channels, width, level});
        unit(prefix, 1, 2 * width, width, level);
        unit(prefix, 2, width, width, level);
        channels = width;
    }
    out.push_back({"head", LayerKind::Conv1x1, channels, config.out_channels, 0});
    return out;
}

Model::ConvUnit Model::make_unit(const std::string& prefix, int index, int cin, int cout) const {
    ConvUnit u;
    u.conv_name = prefix + ".conv" + std::to_string(index);
    u.conv = make_conv_kernel(cin, cout, 3, 1, 1);
    if (config_.use_batchnorm) {
        u.bn_name = prefix + ".bn" + std::to_string(index);
        u.bn = make_batchnorm_state(cout, config_.bn_momentum, config_.bn_epsilon);
    }
    return u;
}

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    layers_ = describe_layers(config_);
    int channels = config_.in_channels;
    for (int level = 0; level <= config_.depth; ++level) {
        const int width = config_.width_at(level);
        const std::string prefix = level_prefix("enc", level);
        encoder_.push_back({make_unit(prefix, 1, channels, width), make_unit(prefix, 2, width, width)});
        channels = width;
    }
    decoder_.resize(static_cast<std::size_t>(config_.depth));
    for (int level = config_.depth - 1; level >= 0; --level) {
        const int width = config_.width_at(level);
        const std::string prefix = level_prefix("dec", level);
        DecoderLevel& d = decoder_[static_cast<std::size_t>(level)];
        d.up_name = prefix + ".up";
        d.up = make_conv_kernel(channels, width, 2, 0, 2);
        d.first = make_unit(prefix, 1, 2 * width, width);
        d.second = make_unit(prefix, 2, width, width);
        channels = width;
    }
    head_ = make_conv_kernel(channels, config_.out_channels, 1, 0, 1);

    // Initialization walks the layers in forward order so the draw sequence
    // is a pure function of (config, seed).
    Rng rng(seed);
    for (EncoderLevel& e : encoder_) {
        he_uniform(e.first.conv, e.first.conv.in_channels() * 9, rng);
        he_uniform(e.second.conv, e.second.conv.in_channels() * 9, rng);
    }
    for (int level = config_.depth - 1; level >= 0; --level) {
        DecoderLevel& d = decoder_[static_cast<std::size_t>(level)];
        he_uniform(d.up, d.up.in_channels(), rng);
        he_uniform(d.first.conv, d.first.conv.in_channels() * 9, rng);
        he_uniform(d.second.conv, d.second.conv.in_channels() * 9, rng);
    }
    he_uniform(head_, head_.in_channels(), rng);
}

template <typename Self, typename Ref>
std::vector<Ref> Model::collect(Self& self) {
    std::vector<Ref> out;
    auto conv = [&](const std::string& name, auto& k) {
        const Shape& s = k.weights.shape();
        out.push_back({name + ".weight", k.weights.values(), {s.n, s.c, s.h, s.w}, true});
        out.push_back({name + ".bias", std::span(k.bias), {static_cast<int>(k.bias.size())}, true});
    };
    auto unit = [&](auto& u) {
        conv(u.conv_name, u.conv);
        if (u.bn) {
            auto& bn = *u.bn;
            const std::vector<int> dims{bn.channels()};
            out.push_back({u.bn_name + ".gamma", std::span(bn.gamma), dims, true});
            out.push_back({u.bn_name + ".beta", std::span(bn.beta), dims, true});
            out.push_back({u.bn_name + ".running_mean", std::span(bn.running_mean), dims, false});
            out.push_back({u.bn_name + ".running_var", std::span(bn.running_var), dims, false});
        }
    };
    for (auto& e : self.encoder_) {
        unit(e.first);
        unit(e.second);
    }
    for (int level = self.config_.depth - 1; level >= 0; --level) {
        auto& d = self.decoder_[static_cast<std::size_t>(level)];
        conv(d.up_name, d.up);
        unit(d.first);
        unit(d.second);
    }
    conv(self.head_name_, self.head_);
    return out;
}

std::vector<ParamRef> Model::parameters() { return collect<Model, ParamRef>(*this); }

std::vector<ConstParamRef> Model::parameters() const {
    return collect<const Model, ConstParamRef>(*this);
}

std::vector<std::vector<float>> Model::snapshot() const {
    std::vector<std::vector<float>> out;
    for (const ConstParamRef& p : parameters()) {
        out.emplace_back(p.values.begin(), p.values.end());
    }
    return out;
}

void Model::restore(const std::vector<std::vector<float>>& values) {
    std::vector<ParamRef> params = parameters();
    if (values.size() != params.size()) {
        throw UsageError("restore: snapshot has " + std::to_string(values.size()) +
                         " tensors, model has " + std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (values[i].size() != params[i].values.size()) {
            throw UsageError("restore: size mismatch for " + params[i].name);
        }
        std::copy(values[i].begin(), values[i].end(), params[i].values.begin());
    }
}

void Model::check_input(const Tensor& batch) const {
    const Shape& s = batch.shape();
    if (s.c != config_.in_channels) {
        throw ConfigError("model expects " + std::to_string(config_.in_channels) +
                          " input channels, got " + std::to_string(s.c));
    }
    const int m = config_.spatial_multiple();
    if (s.h % m != 0 || s.w % m != 0) {
        throw ConfigError("input extent " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                          " is not divisible by " + std::to_string(m) +
                          "; pad it with pad_to_multiple first");
    }
}

Tensor Model::infer(const Tensor& batch) const {
    check_input(batch);
    auto unit = [](const ConvUnit& u, const Tensor& x) {
        Tensor y = conv2d(x, u.conv);
        if (u.bn) {
            y = batchnorm_eval(y, *u.bn);
        }
        return relu(y);
    };
    std::vector<Tensor> skips;
    Tensor x = batch;
    for (int level = 0; level <= config_.depth; ++level) {
        const EncoderLevel& e = encoder_[static_cast<std::size_t>(level)];
        x = unit(e.second, unit(e.first, x));
        if (level < config_.depth) {
            skips.push_back(x);
            x = maxpool2x2(x);
        }
    }
    for (int level = config_.depth - 1; level >= 0; --level) {
        const DecoderLevel& d = decoder_[static_cast<std::size_t>(level)];
        x = concat_channels(conv_transpose2d(x, d.up), skips[static_cast<std::size_t>(level)]);
        x = unit(d.second, unit(d.first, x));
    }
    return sigmoid(conv2d(x, head_));
}

Tensor Model::forward(const Tensor& batch, Mode mode) {
    return forward(batch, mode, mode == Mode::Train);
}

Tensor Model::forward(const Tensor& batch, Mode mode, bool record) {
    if (!record) {
        cache_.reset();
        if (mode == Mode::Eval) {
            return infer(batch);
        }
    }
    check_input(batch);
    Cache c;
    const std::size_t levels = static_cast<std::size_t>(config_.depth);
    c.input = batch.shape();
    c.encoder.resize(2 * (levels + 1));
    c.pool.resize(levels);
    c.up.resize(levels);
    c.concat.resize(levels);
    c.decoder.resize(2 * levels);

    auto unit = [&](ConvUnit& u, const Tensor& x, UnitRecord& r) {
        Tensor y = conv2d(x, u.conv, record ? &r.conv : nullptr);
        if (u.bn) {
            y = batchnorm(y, *u.bn, mode, record ? &r.bn : nullptr);
        }
        return relu(y, record ? &r.act : nullptr);
    };

    std::vector<Tensor> skips;
    Tensor x = batch;
    for (std::size_t level = 0; level <= levels; ++level) {
        EncoderLevel& e = encoder_[level];
        x = unit(e.first, x, c.encoder[2 * level]);
        x = unit(e.second, x, c.encoder[2 * level + 1]);
        if (level < levels) {
            skips.push_back(x);
            x = maxpool2x2(x, record ? &c.pool[level] : nullptr);
        }
    }
    for (std::size_t i = levels; i-- > 0;) {
        DecoderLevel& d = decoder_[i];
        Tensor up = conv_transpose2d(x, d.up, record ? &c.up[i] : nullptr);
        x = concat_channels(up, skips[i], record ? &c.concat[i] : nullptr);
        x = unit(d.first, x, c.decoder[2 * i]);
        x = unit(d.second, x, c.decoder[2 * i + 1]);
    }
    Tensor logits = conv2d(x, head_, record ? &c.head : nullptr);
    Tensor probs = sigmoid(logits, record ? &c.sigmoid : nullptr);
    if (record) {
        c.output = probs.shape();
        cache_ = std::move(c);
    } else {
        cache_.reset();
    }
    return probs;
}

std::vector<std::uint32_t> Model::branch_signature() const {
    if (!cache_) {
        throw UsageError("branch_signature called without a recorded forward pass");
    }
    std::vector<std::uint32_t> sig;
    auto units = [&](const std::vector<UnitRecord>& records) {
        for (const UnitRecord& r : records) {
            const Tensor& in = std::get<ReluRecord>(r.act).input;
            for (float v : in.values()) sig.push_back(v > 0.0f ? 1u : 0u);
        }
    };
    units(cache_->encoder);
    units(cache_->decoder);
    for (const OpRecord& p : cache_->pool) {
        const auto& argmax = std::get<MaxPoolRecord>(p).argmax;
        sig.insert(sig.end(), argmax.begin(), argmax.end());
    }
    return sig;
}

ParamGradients Model::backward(const Tensor& loss_grad) {
    if (!cache_) {
        throw UsageError("backward called without a recorded forward pass");
    }
    Cache c = std::move(*cache_);
    cache_.reset();
    if (loss_grad.shape() != c.output) {
        throw UsageError("loss gradient shape " + to_string(loss_grad.shape()) +
                         " does not match model output " + to_string(c.output));
    }

    std::map<std::string, Tensor> grads;
    auto store = [&](const std::string& name, OpGradients& g) {
        grads[name + ".weight"] = std::move(g.params[0]);
        grads[name + ".bias"] = std::move(g.params[1]);
    };
    auto unit_back = [&](const ConvUnit& u, UnitRecord& r, const Tensor& upstream) {
        Tensor g = backprop(r.act, upstream).inputs[0];
        if (u.bn) {
            OpGradients bg = backprop(r.bn, g);
            grads[u.bn_name + ".gamma"] = std::move(bg.params[0]);
            grads[u.bn_name + ".beta"] = std::move(bg.params[1]);
            g = std::move(bg.inputs[0]);
        }
        OpGradients cg = backprop(r.conv, g);
        store(u.conv_name, cg);
        r = UnitRecord{};  // release activations as soon as they are consumed
        return std::move(cg.inputs[0]);
    };

    const std::size_t levels = static_cast<std::size_t>(config_.depth);
    Tensor g = backprop(c.sigmoid, loss_grad).inputs[0];
    {
        OpGradients hg = backprop(c.head, g);
        store(head_name_, hg);
        g = std::move(hg.inputs[0]);
    }
    std::vector<Tensor> skip_grads(levels);
    for (std::size_t i = 0; i < levels; ++i) {
        const DecoderLevel& d = decoder_[i];
        g = unit_back(d.second, c.decoder[2 * i + 1], g);
        g = unit_back(d.first, c.decoder[2 * i], g);
        OpGradients split = backprop(c.concat[i], g);
        skip_grads[i] = std::move(split.inputs[1]);
        OpGradients ug = backprop(c.up[i], split.inputs[0]);
        store(d.up_name, ug);
        g = std::move(ug.inputs[0]);
    }
    for (std::size_t level = levels + 1; level-- > 0;) {
        if (level < levels) {
            g = backprop(c.pool[level], g).inputs[0];
            const Tensor& s = skip_grads[level];
            for (std::size_t k = 0; k < g.size(); ++k) {
                g[k] += s[k];
            }
        }
        const EncoderLevel& e = encoder_[level];
        g = unit_back(e.second, c.encoder[2 * level + 1], g);
        g = unit_back(e.first, c.encoder[2 * level], g);
    }

    ParamGradients out;
    for (const ConstParamRef& p : std::as_const(*this).parameters()) {
        if (!p.trainable) {
            continue;
        }
        auto it = grads.find(p.name);
        Tensor t = std::move(it->second);
        if (p.dims.size() == 1) {
            t = Tensor(Shape{p.dims[0], 1, 1, 1}, std::vector<float>(t.values().begin(), t.values().end()));
        }
        out.push_back({p.name, std::move(t)});
    }
    return out;
}

Model build_unet(const ModelConfig& config, std::uint64_t seed) { return Model(config, seed); }

ParamReport count_parameters(const Model& model) {
    ParamReport report;
    std::map<std::string, std::size_t> index;
    for (const LayerInfo& l : model.layers()) {
        index[l.name] = report.layers.size();
        report.layers.push_back({l.name, l.kind, 0, 0});
    }
    for (const ConstParamRef& p : model.parameters()) {
        const std::string layer = p.name.substr(0, p.name.rfind('.'));
        LayerParams& lp = report.layers[index.at(layer)];
        const auto n = static_cast<std::int64_t>(p.values.size());
        (p.trainable ? lp.trainable : lp.non_trainable) += n;
    }
    for (const LayerParams& lp : report.layers) {
        report.trainable += lp.trainable;
        report.non_trainable += lp.non_trainable;
    }
    return report;
}

FlopReport count_flops(const ModelConfig& config, const Shape& input) {
    config.validate();
    const int m = config.spatial_multiple();
    if (!input.valid() || input.c != config.in_channels || input.h % m != 0 || input.w % m != 0) {
        throw ConfigError("count_flops: input " + to_string(input) + " is not valid for the model");
    }
    FlopReport report;
    auto pixels = [&](int level) {
        return static_cast<std::int64_t>(input.n) * (input.h >> level) * (input.w >> level);
    };
    auto add = [&](std::string name, std::string kind, std::int64_t macs, std::int64_t elementwise) {
        report.macs += macs;
        report.elementwise += elementwise;
        report.layers.push_back({std::move(name), std::move(kind), macs, elementwise});
    };
    // relu (and pooling at encoder level ends) follow the unit's last layer
    auto finish_unit = [&](const LayerInfo& l, std::int64_t px) {
        const std::string unit = l.name.substr(0, l.name.rfind('.'));
        add(unit + ".relu" + l.name.substr(l.name.size() - 1), "relu", 0, l.out_channels * px);
        if (l.name.starts_with("enc") && l.name.back() == '2' && l.level < config.depth) {
            add(unit + ".pool", "maxpool", 0, l.out_channels * px);
        }
    };
    for (const LayerInfo& l : describe_layers(config)) {
        const std::int64_t px = pixels(l.level);
        const std::int64_t cin = l.in_channels;
        const std::int64_t cout = l.out_channels;
        switch (l.kind) {
            case LayerKind::Conv3x3:
                add(l.name, "conv3x3", 9 * cin * cout * px, 0);
                if (!config.use_batchnorm) {
                    finish_unit(l, px);
                }
                break;
            case LayerKind::BatchNorm:
                add(l.name, "batchnorm", 0, cout * px);
                finish_unit(l, px);
                break;
            case LayerKind::ConvTranspose2x2:
                // px is the output resolution; each output pixel takes one tap per input channel
                add(l.name, "convT2x2", cin * cout * px, 0);
                break;
            case LayerKind::Conv1x1:
                add(l.name, "conv1x1", cin * cout * px, 0);
                add("head.sigmoid", "sigmoid", 0, cout * px);
                break;
        }
    }
    return report;
}

}  // namespace tinyunet
