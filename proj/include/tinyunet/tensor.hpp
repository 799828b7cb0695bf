// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tinyunet {

/// Extents of an NCHW tensor. All four are at least 1.
struct Shape {
    int n = 1;
    int c = 1;
    int h = 1;
    int w = 1;

    std::size_t numel() const noexcept {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
    bool valid() const noexcept { return n >= 1 && c >= 1 && h >= 1 && w >= 1; }

    friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Dense single-precision NCHW tensor, contiguous and row-major.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<float> values() noexcept { return data_; }
    std::span<const float> values() const noexcept { return data_; }
    float* data() noexcept { return data_.data(); }
    const float* data() const noexcept { return data_.data(); }

    float& operator[](std::size_t i) noexcept { return data_[i]; }
    float operator[](std::size_t i) const noexcept { return data_[i]; }

    std::size_t offset(int n, int c, int h, int w) const noexcept {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }
    float& at(int n, int c, int h, int w) noexcept { return data_[offset(n, c, h, w)]; }
    float at(int n, int c, int h, int w) const noexcept { return data_[offset(n, c, h, w)]; }

    /// Pointer to the (h, w) plane of sample n, channel c.
    float* plane(int n, int c) noexcept { return data_.data() + offset(n, c, 0, 0); }
    const float* plane(int n, int c) const noexcept { return data_.data() + offset(n, c, 0, 0); }

    void fill(float v);
    bool all_finite() const noexcept;

    /// Copy of samples [first, first + count).
    Tensor slice_batch(int first, int count) const;

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_{};
    std::vector<float> data_;
};

/// Stacks single-sample tensors of equal (c, h, w) along the batch axis.
Tensor stack_batch(std::span<const Tensor* const> items);

}  // namespace tinyunet
