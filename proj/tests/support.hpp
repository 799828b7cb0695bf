// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <unistd.h>

#include "tinyunet/ops.hpp"
#include "tinyunet/rng.hpp"
#include "tinyunet/tensor.hpp"

namespace testing {

using tinyunet::ConvKernel;
using tinyunet::Rng;
using tinyunet::Shape;
using tinyunet::Tensor;

inline Tensor random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(s);
    for (float& v : t.values()) {
        v = static_cast<float>(rng.uniform(lo, hi));
    }
    return t;
}

inline ConvKernel random_kernel(int in, int out, int k, int pad, int stride, Rng& rng) {
    ConvKernel kernel = tinyunet::make_conv_kernel(in, out, k, pad, stride);
    for (float& v : kernel.weights.values()) {
        v = static_cast<float>(rng.uniform(-0.5, 0.5));
    }
    for (float& b : kernel.bias) {
        b = static_cast<float>(rng.uniform(-0.5, 0.5));
    }
    return kernel;
}

// Seven-loop reference convolution in double precision.
inline std::vector<double> naive_conv2d(const Tensor& x, const ConvKernel& k) {
    const Shape s = x.shape();
    const int kh = k.kernel_h();
    const int kw = k.kernel_w();
    const int oh = (s.h + 2 * k.padding - kh) / k.stride + 1;
    const int ow = (s.w + 2 * k.padding - kw) / k.stride + 1;
    const int co = k.out_channels();
    std::vector<double> y(static_cast<std::size_t>(s.n) * co * oh * ow, 0.0);
    for (int n = 0; n < s.n; ++n)
        for (int o = 0; o < co; ++o)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    double acc = k.bias[o];
                    for (int c = 0; c < s.c; ++c)
                        for (int a = 0; a < kh; ++a)
                            for (int b = 0; b < kw; ++b) {
                                const int r = i * k.stride + a - k.padding;
                                const int q = j * k.stride + b - k.padding;
                                if (r < 0 || r >= s.h || q < 0 || q >= s.w) continue;
                                acc += static_cast<double>(x.at(n, c, r, q)) * k.weights.at(o, c, a, b);
                            }
                    y[((static_cast<std::size_t>(n) * co + o) * oh + i) * ow + j] = acc;
                }
    return y;
}

// Scatter reference for the 2x2 stride-2 transposed convolution.
inline std::vector<double> naive_conv_transpose2d(const Tensor& x, const ConvKernel& k) {
    const Shape s = x.shape();
    const int co = k.out_channels();
    const int oh = s.h * 2;
    const int ow = s.w * 2;
    std::vector<double> y(static_cast<std::size_t>(s.n) * co * oh * ow, 0.0);
    for (int n = 0; n < s.n; ++n)
        for (int o = 0; o < co; ++o)
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    double acc = k.bias[o];
                    for (int c = 0; c < s.c; ++c) {
                        acc += static_cast<double>(x.at(n, c, i / 2, j / 2)) * k.weights.at(o, c, i % 2, j % 2);
                    }
                    y[((static_cast<std::size_t>(n) * co + o) * oh + i) * ow + j] = acc;
                }
    return y;
}

inline double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return s;
}

// Central differences of a scalar function over `values`, double-precision
// quotients on single-precision perturbations.
inline std::vector<double> numeric_gradient(std::span<float> values, const std::function<double()>& f,
                                            double step = 1e-3) {
    std::vector<double> g(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const float saved = values[i];
        values[i] = static_cast<float>(saved + step);
        const double up = f();
        const double actual_up = static_cast<double>(values[i]) - saved;
        values[i] = static_cast<float>(saved - step);
        const double down = f();
        const double actual_down = saved - static_cast<double>(values[i]);
        values[i] = saved;
        g[i] = (up - down) / (actual_up + actual_down);
    }
    return g;
}

// max |a - n| / max(max |a|, max |n|): error relative to the gradient's scale.
inline double relative_error(std::span<const float> analytic, const std::vector<double>& numeric) {
    double diff = 0.0;
    double scale = 1e-12;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
        scale = std::max({scale, std::abs(static_cast<double>(analytic[i])), std::abs(numeric[i])});
    }
    return diff / scale;
}

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("tinyunet_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace testing
