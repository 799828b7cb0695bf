// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tinyunet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "tinyunet/errors.hpp"

namespace tinyunet {

std::string to_string(const Shape& s) {
    return std::to_string(s.n) + "x" + std::to_string(s.c) + "x" + std::to_string(s.h) + "x" +
           std::to_string(s.w);
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape) {
    if (!shape.valid()) {
        throw ConfigError("tensor extents must be >= 1, got " + to_string(shape));
    }
    data_.assign(shape.numel(), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(shape), data_(std::move(values)) {
    if (!shape.valid()) {
        throw ConfigError("tensor extents must be >= 1, got " + to_string(shape));
    }
    if (data_.size() != shape.numel()) {
        throw ConfigError("tensor " + to_string(shape) + " needs " + std::to_string(shape.numel()) +
                          " values, got " + std::to_string(data_.size()));
    }
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

Tensor Tensor::slice_batch(int first, int count) const {
    if (first < 0 || count < 1 || first + count > shape_.n) {
        throw UsageError("batch slice [" + std::to_string(first) + ", " +
                         std::to_string(first + count) + ") out of range for " + to_string(shape_));
    }
    Shape s = shape_;
    s.n = count;
    Tensor out(s);
    const std::size_t stride = static_cast<std::size_t>(shape_.c) * shape_.h * shape_.w;
    std::memcpy(out.data(), data() + stride * first, stride * count * sizeof(float));
    return out;
}

Tensor stack_batch(std::span<const Tensor* const> items) {
    if (items.empty()) {
        throw UsageError("cannot stack an empty batch");
    }
    Shape s = items.front()->shape();
    int total = 0;
    for (const Tensor* t : items) {
        const Shape& ts = t->shape();
        if (ts.c != s.c || ts.h != s.h || ts.w != s.w) {
            throw ConfigError("batch members differ in shape: " + to_string(s) + " vs " +
                              to_string(ts));
        }
        total += ts.n;
    }
    s.n = total;
    Tensor out(s);
    float* dst = out.data();
    for (const Tensor* t : items) {
        std::memcpy(dst, t->data(), t->size() * sizeof(float));
        dst += t->size();
    }
    return out;
}

}  // namespace tinyunet
