// Copyright 2026 The TinyUNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "tinyunet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "gemm.hpp"
#include "tinyunet/errors.hpp"

namespace tinyunet {

namespace {

using detail::view;

void require_finite(const Tensor& x, const char* op) {
    if (!x.all_finite()) {
        throw NumericError(std::string(op) + ": input contains NaN or Inf");
    }
}

void check_kernel(const ConvKernel& k, const char* op) {
    if (k.weights.empty()) {
        throw ConfigError(std::string(op) + ": kernel has no weights");
    }
    if (static_cast<int>(k.bias.size()) != k.out_channels()) {
        throw ConfigError(std::string(op) + ": bias length " + std::to_string(k.bias.size()) +
                          " != out_channels " + std::to_string(k.out_channels()));
    }
    if (k.padding < 0 || k.stride < 1) {
        throw ConfigError(std::string(op) + ": invalid padding/stride");
    }
}

void check_channels(const Tensor& x, const ConvKernel& k, const char* op) {
    if (x.shape().c != k.in_channels()) {
        throw ConfigError(std::string(op) + ": input has " + std::to_string(x.shape().c) +
                          " channels, kernel expects " + std::to_string(k.in_channels()));
    }
}

// Patch matrix for one sample: rows (c, ky, kx), columns output pixels.
void im2col(const float* x, int channels, int h, int w, int kh, int kw, int pad, int oh, int ow,
            float* cols) {
    const std::size_t hw = static_cast<std::size_t>(oh) * ow;
    for (int c = 0; c < channels; ++c) {
        const float* plane = x + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                float* row = cols + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) * hw;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy + ky - pad;
                    float* dst = row + static_cast<std::size_t>(oy) * ow;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + ow, 0.0f);
                        continue;
                    }
                    const float* src = plane + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox + kx - pad;
                        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im_add(const float* cols, int channels, int h, int w, int kh, int kw, int pad, int oh,
                int ow, float* x) {
    const std::size_t hw = static_cast<std::size_t>(oh) * ow;
    for (int c = 0; c < channels; ++c) {
        float* plane = x + static_cast<std::size_t>(c) * h * w;
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const float* row = cols + ((static_cast<std::size_t>(c) * kh + ky) * kw + kx) * hw;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy + ky - pad;
                    if (iy < 0 || iy >= h) {
                        continue;
                    }
                    const float* src = row + static_cast<std::size_t>(oy) * ow;
                    float* dst = plane + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox + kx - pad;
                        if (ix >= 0 && ix < w) {
                            dst[ix] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

Shape conv_output_shape(const Shape& in, const ConvKernel& k) {
    const int oh = in.h + 2 * k.padding - k.kernel_h() + 1;
    const int ow = in.w + 2 * k.padding - k.kernel_w() + 1;
    if (oh < 1 || ow < 1) {
        throw ConfigError("conv2d: kernel larger than padded input " + to_string(in));
    }
    return {in.n, k.out_channels(), oh, ow};
}

bool is_pointwise(const ConvKernel& k) {
    return k.kernel_h() == 1 && k.kernel_w() == 1 && k.padding == 0;
}

// Rearranges (o, c, a, b) transposed-conv weights into a (o*4 + a*2 + b, c) matrix.
detail::RowMatrix scatter_matrix(const ConvKernel& k) {
    const int cout = k.out_channels();
    const int cin = k.in_channels();
    detail::RowMatrix m(cout * 4, cin);
    for (int o = 0; o < cout; ++o) {
        for (int c = 0; c < cin; ++c) {
            for (int t = 0; t < 4; ++t) {
                m(o * 4 + t, c) = k.weights.at(o, c, t / 2, t % 2);
            }
        }
    }
    return m;
}

Tensor bias_gradient(const Tensor& upstream) {
    const Shape& s = upstream.shape();
    Tensor db(Shape{s.c, 1, 1, 1});
    for (int c = 0; c < s.c; ++c) {
        double acc = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const float* p = upstream.plane(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) {
                acc += p[i];
            }
        }
        db[c] = static_cast<float>(acc);
    }
    return db;
}

void check_upstream(const Shape& expected, const Tensor& upstream, OpKind kind) {
    if (upstream.shape() != expected) {
        throw UsageError(std::string("backprop(") + to_string(kind) + "): upstream shape " +
                         to_string(upstream.shape()) + " does not match forward output " +
                         to_string(expected));
    }
}

OpGradients conv2d_backward(const Conv2dRecord& r, const Tensor& dy) {
    check_upstream(r.output, dy, OpKind::Conv2d);
    const ConvKernel& k = r.kernel;
    const Shape& in = r.input.shape();
    const int cout = k.out_channels();
    const int kdim = k.in_channels() * k.kernel_h() * k.kernel_w();
    const int oh = r.output.h;
    const int ow = r.output.w;
    const std::size_t hw = static_cast<std::size_t>(oh) * ow;

    Tensor dx(in);
    Tensor dw(k.weights.shape());
    auto dW = view(dw.data(), cout, kdim);
    auto W = view(k.weights.data(), cout, kdim);
    const bool pointwise = is_pointwise(k);
    std::vector<float> cols(pointwise ? 0 : static_cast<std::size_t>(kdim) * hw);
    std::vector<float> dcols(pointwise ? 0 : static_cast<std::size_t>(kdim) * hw);

    for (int n = 0; n < in.n; ++n) {
        const float* xs = r.input.plane(n, 0);
        const float* patches = xs;
        if (!pointwise) {
            im2col(xs, in.c, in.h, in.w, k.kernel_h(), k.kernel_w(), k.padding, oh, ow, cols.data());
            patches = cols.data();
        }
        auto dY = view(dy.plane(n, 0), cout, static_cast<Eigen::Index>(hw));
        auto P = view(patches, kdim, static_cast<Eigen::Index>(hw));
        dW.noalias() += dY * P.transpose();
        if (pointwise) {
            auto dX = view(dx.plane(n, 0), kdim, static_cast<Eigen::Index>(hw));
            dX.noalias() = W.transpose() * dY;
        } else {
            auto dP = view(dcols.data(), kdim, static_cast<Eigen::Index>(hw));
            dP.noalias() = W.transpose() * dY;
            col2im_add(dcols.data(), in.c, in.h, in.w, k.kernel_h(), k.kernel_w(), k.padding, oh,
                       ow, dx.plane(n, 0));
        }
    }
    OpGradients g;
    g.inputs.push_back(std::move(dx));
    g.params.push_back(std::move(dw));
    g.params.push_back(bias_gradient(dy));
    return g;
}

OpGradients conv_transpose2d_backward(const ConvTranspose2dRecord& r, const Tensor& dy) {
    check_upstream(r.output, dy, OpKind::ConvTranspose2d);
    const ConvKernel& k = r.kernel;
    const Shape& in = r.input.shape();
    const int cout = k.out_channels();
    const int cin = k.in_channels();
    const std::size_t hw = in.plane();
    const int ow = r.output.w;

    const detail::RowMatrix m = scatter_matrix(k);
    detail::RowMatrix dm = detail::RowMatrix::Zero(cout * 4, cin);
    detail::RowMatrix gathered(cout * 4, static_cast<Eigen::Index>(hw));
    Tensor dx(in);

    for (int n = 0; n < in.n; ++n) {
        for (int o = 0; o < cout; ++o) {
            const float* plane = dy.plane(n, o);
            for (int t = 0; t < 4; ++t) {
                const int a = t / 2;
                const int b = t % 2;
                float* row = gathered.row(o * 4 + t).data();
                for (int i = 0; i < in.h; ++i) {
                    const float* src = plane + static_cast<std::size_t>(2 * i + a) * ow + b;
                    for (int j = 0; j < in.w; ++j) {
                        row[static_cast<std::size_t>(i) * in.w + j] = src[2 * j];
                    }
                }
            }
        }
        auto X = view(r.input.plane(n, 0), cin, static_cast<Eigen::Index>(hw));
        auto dX = view(dx.plane(n, 0), cin, static_cast<Eigen::Index>(hw));
        dX.noalias() = m.transpose() * gathered;
        dm.noalias() += gathered * X.transpose();
    }

    Tensor dw(k.weights.shape());
    for (int o = 0; o < cout; ++o) {
        for (int c = 0; c < cin; ++c) {
            for (int t = 0; t < 4; ++t) {
                dw.at(o, c, t / 2, t % 2) = dm(o * 4 + t, c);
            }
        }
    }
    OpGradients g;
    g.inputs.push_back(std::move(dx));
    g.params.push_back(std::move(dw));
    g.params.push_back(bias_gradient(dy));
    return g;
}

OpGradients maxpool_backward(const MaxPoolRecord& r, const Tensor& dy) {
    check_upstream(r.output, dy, OpKind::MaxPool2x2);
    Tensor dx(r.input);
    for (std::size_t i = 0; i < dy.size(); ++i) {
        dx[r.argmax[i]] += dy[i];
    }
    OpGradients g;
    g.inputs.push_back(std::move(dx));
    return g;
}

OpGradients batchnorm_backward(const BatchNormRecord& r, const Tensor& dy) {
    check_upstream(r.normalized.shape(), dy, OpKind::BatchNorm);
    const Shape& s = dy.shape();
    const double count = static_cast<double>(s.n) * s.h * s.w;
    Tensor dx(s);
    Tensor dgamma(Shape{s.c, 1, 1, 1});
    Tensor dbeta(Shape{s.c, 1, 1, 1});
    for (int c = 0; c < s.c; ++c) {
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const float* g = dy.plane(n, c);
            const float* xh = r.normalized.plane(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) {
                sum_dy += g[i];
                sum_dy_xhat += static_cast<double>(g[i]) * xh[i];
            }
        }
        dgamma[c] = static_cast<float>(sum_dy_xhat);
        dbeta[c] = static_cast<float>(sum_dy);
        const double scale = static_cast<double>(r.gamma[c]) * r.inv_std[c];
        const double mean_dy = sum_dy / count;
        const double mean_dy_xhat = sum_dy_xhat / count;
        for (int n = 0; n < s.n; ++n) {
            const float* g = dy.plane(n, c);
            const float* xh = r.normalized.plane(n, c);
            float* d = dx.plane(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) {
                if (r.batch_statistics) {
                    d[i] = static_cast<float>(scale * (g[i] - mean_dy - xh[i] * mean_dy_xhat));
                } else {
                    d[i] = static_cast<float>(scale * g[i]);
                }
            }
        }
    }
    OpGradients g;
    g.inputs.push_back(std::move(dx));
    g.params.push_back(std::move(dgamma));
    g.params.push_back(std::move(dbeta));
    return g;
}

OpGradients relu_backward(const ReluRecord& r, const Tensor& dy) {
    check_upstream(r.input.shape(), dy, OpKind::Relu);
    Tensor dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) {
        dx[i] = r.input[i] > 0.0f ? dy[i] : 0.0f;
    }
    OpGradients g;
    g.inputs.push_back(std::move(dx));
    return g;
}

OpGradients sigmoid_backward(const SigmoidRecord& r, const Tensor& dy) {
    check_upstream(r.output.shape(), dy, OpKind::Sigmoid);
    Tensor dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) {
        const float y = r.output[i];
        dx[i] = dy[i] * y * (1.0f - y);
    }
    OpGradients g;
    g.inputs.push_back(std::move(dx));
    return g;
}

OpGradients concat_backward(const ConcatRecord& r, const Tensor& dy) {
    Shape out = r.first;
    out.c += r.second.c;
    check_upstream(out, dy, OpKind::Concat);
    auto [da, db] = split_channels(dy, r.first.c);
    OpGradients g;
    g.inputs.push_back(std::move(da));
    g.inputs.push_back(std::move(db));
    return g;
}

Tensor normalize(const Tensor& x, const BatchNormState& s, std::span<const float> mean,
                 std::span<const float> inv_std, OpRecord* record, bool batch_statistics) {
    const Shape& shape = x.shape();
    Tensor y(shape);
    Tensor xhat = record ? Tensor(shape) : Tensor();
    for (int n = 0; n < shape.n; ++n) {
        for (int c = 0; c < shape.c; ++c) {
            const float* src = x.plane(n, c);
            float* dst = y.plane(n, c);
            float* nh = record ? xhat.plane(n, c) : nullptr;
            const float m = mean[c];
            const float is = inv_std[c];
            const float g = s.gamma[c];
            const float b = s.beta[c];
            for (std::size_t i = 0; i < shape.plane(); ++i) {
                const float v = (src[i] - m) * is;
                if (nh) {
                    nh[i] = v;
                }
                dst[i] = g * v + b;
            }
        }
    }
    if (record) {
        *record = BatchNormRecord{std::move(xhat), s.gamma,
                                  std::vector<float>(inv_std.begin(), inv_std.end()),
                                  batch_statistics};
    }
    return y;
}

void check_bn_state(const Tensor& x, const BatchNormState& s) {
    const auto c = static_cast<std::size_t>(x.shape().c);
    if (s.gamma.size() != c || s.beta.size() != c || s.running_mean.size() != c ||
        s.running_var.size() != c) {
        throw ConfigError("batchnorm: state has " + std::to_string(s.gamma.size()) +
                          " channels, input has " + std::to_string(c));
    }
    if (!(s.epsilon > 0.0f)) {
        throw ConfigError("batchnorm: epsilon must be positive");
    }
}

}  // namespace

const char* to_string(OpKind kind) {
    switch (kind) {
        case OpKind::Conv2d: return "conv2d";
        case OpKind::ConvTranspose2d: return "conv_transpose2d";
        case OpKind::MaxPool2x2: return "maxpool2x2";
        case OpKind::BatchNorm: return "batchnorm";
        case OpKind::Relu: return "relu";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Concat: return "concat";
    }
    return "unknown";
}

ConvKernel make_conv_kernel(int in_channels, int out_channels, int kernel, int padding, int stride) {
    ConvKernel k;
    k.weights = Tensor(Shape{out_channels, in_channels, kernel, kernel});
    k.bias.assign(static_cast<std::size_t>(out_channels), 0.0f);
    k.padding = padding;
    k.stride = stride;
    return k;
}

BatchNormState make_batchnorm_state(int channels, float momentum, float epsilon) {
    BatchNormState s;
    s.gamma.assign(static_cast<std::size_t>(channels), 1.0f);
    s.beta.assign(static_cast<std::size_t>(channels), 0.0f);
    s.running_mean.assign(static_cast<std::size_t>(channels), 0.0f);
    s.running_var.assign(static_cast<std::size_t>(channels), 1.0f);
    s.momentum = momentum;
    s.epsilon = epsilon;
    return s;
}

OpKind record_kind(const OpRecord& record) {
    switch (record.index()) {
        case 1: return OpKind::Conv2d;
        case 2: return OpKind::ConvTranspose2d;
        case 3: return OpKind::MaxPool2x2;
        case 4: return OpKind::BatchNorm;
        case 5: return OpKind::Relu;
        case 6: return OpKind::Sigmoid;
        case 7: return OpKind::Concat;
        default: throw UsageError("op record is empty (no forward pass was recorded)");
    }
}

Tensor conv2d(const Tensor& x, const ConvKernel& k, OpRecord* record) {
    check_kernel(k, "conv2d");
    check_channels(x, k, "conv2d");
    if (k.stride != 1) {
        throw ConfigError("conv2d: only stride 1 is supported");
    }
    require_finite(x, "conv2d");
    const Shape& in = x.shape();
    const Shape out = conv_output_shape(in, k);
    const int cout = k.out_channels();
    const int kdim = k.in_channels() * k.kernel_h() * k.kernel_w();
    const std::size_t hw = out.plane();

    Tensor y(out);
    auto W = view(k.weights.data(), cout, kdim);
    const bool pointwise = is_pointwise(k);
    std::vector<float> cols(pointwise ? 0 : static_cast<std::size_t>(kdim) * hw);
    for (int n = 0; n < in.n; ++n) {
        const float* patches = x.plane(n, 0);
        if (!pointwise) {
            im2col(x.plane(n, 0), in.c, in.h, in.w, k.kernel_h(), k.kernel_w(), k.padding, out.h,
                   out.w, cols.data());
            patches = cols.data();
        }
        auto Y = view(y.plane(n, 0), cout, static_cast<Eigen::Index>(hw));
        Y.noalias() = W * view(patches, kdim, static_cast<Eigen::Index>(hw));
        for (int o = 0; o < cout; ++o) {
            Y.row(o).array() += k.bias[o];
        }
    }
    if (record) {
        *record = Conv2dRecord{x, k, out};
    }
    return y;
}

Tensor conv_transpose2d(const Tensor& x, const ConvKernel& k, OpRecord* record) {
    check_kernel(k, "conv_transpose2d");
    check_channels(x, k, "conv_transpose2d");
    if (k.kernel_h() != 2 || k.kernel_w() != 2 || k.stride != 2 || k.padding != 0) {
        throw ConfigError("conv_transpose2d: only 2x2 kernels with stride 2, padding 0");
    }
    require_finite(x, "conv_transpose2d");
    const Shape& in = x.shape();
    const int cout = k.out_channels();
    const Shape out{in.n, cout, in.h * 2, in.w * 2};
    const std::size_t hw = in.plane();

    const detail::RowMatrix m = scatter_matrix(k);
    detail::RowMatrix blocks(cout * 4, static_cast<Eigen::Index>(hw));
    Tensor y(out);
    for (int n = 0; n < in.n; ++n) {
        blocks.noalias() = m * view(x.plane(n, 0), k.in_channels(), static_cast<Eigen::Index>(hw));
        for (int o = 0; o < cout; ++o) {
            float* plane = y.plane(n, o);
            const float b = k.bias[o];
            for (int t = 0; t < 4; ++t) {
                const float* row = blocks.row(o * 4 + t).data();
                for (int i = 0; i < in.h; ++i) {
                    float* dst = plane + static_cast<std::size_t>(2 * i + t / 2) * out.w + t % 2;
                    for (int j = 0; j < in.w; ++j) {
                        dst[2 * j] = row[static_cast<std::size_t>(i) * in.w + j] + b;
                    }
                }
            }
        }
    }
    if (record) {
        *record = ConvTranspose2dRecord{x, k, out};
    }
    return y;
}

Tensor maxpool2x2(const Tensor& x, OpRecord* record) {
    const Shape& in = x.shape();
    if (in.h % 2 != 0 || in.w % 2 != 0) {
        throw ConfigError("maxpool2x2: spatial extents must be even, got " + to_string(in));
    }
    const Shape out{in.n, in.c, in.h / 2, in.w / 2};
    Tensor y(out);
    std::vector<std::uint32_t> argmax(record ? out.numel() : 0);
    std::size_t o = 0;
    for (int n = 0; n < in.n; ++n) {
        for (int c = 0; c < in.c; ++c) {
            const std::size_t base = x.offset(n, c, 0, 0);
            for (int i = 0; i < out.h; ++i) {
                for (int j = 0; j < out.w; ++j, ++o) {
                    const std::size_t top = base + static_cast<std::size_t>(2 * i) * in.w + 2 * j;
                    const std::size_t cand[4] = {top, top + 1, top + in.w, top + in.w + 1};
                    std::size_t best = cand[0];
                    // strict comparison keeps the first maximum in row-major order
                    for (int t = 1; t < 4; ++t) {
                        if (x[cand[t]] > x[best]) {
                            best = cand[t];
                        }
                    }
                    y[o] = x[best];
                    if (record) {
                        argmax[o] = static_cast<std::uint32_t>(best);
                    }
                }
            }
        }
    }
    if (record) {
        *record = MaxPoolRecord{in, out, std::move(argmax)};
    }
    return y;
}

Tensor batchnorm(const Tensor& x, BatchNormState& state, Mode mode, OpRecord* record) {
    if (mode == Mode::Eval) {
        return batchnorm_eval(x, state, record);
    }
    check_bn_state(x, state);
    require_finite(x, "batchnorm");
    const Shape& s = x.shape();
    const std::size_t count = static_cast<std::size_t>(s.n) * s.plane();
    if (count < 2) {
        throw NumericError("batchnorm: train mode needs at least 2 values per channel, got " +
                           std::to_string(count));
    }
    std::vector<float> mean(s.c);
    std::vector<float> inv_std(s.c);
    for (int c = 0; c < s.c; ++c) {
        double sum = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const float* p = x.plane(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) {
                sum += p[i];
            }
        }
        const double mu = sum / static_cast<double>(count);
        double sq = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const float* p = x.plane(n, c);
            for (std::size_t i = 0; i < s.plane(); ++i) {
                const double d = p[i] - mu;
                sq += d * d;
            }
        }
        const double var = sq / static_cast<double>(count);
        mean[c] = static_cast<float>(mu);
        inv_std[c] = static_cast<float>(1.0 / std::sqrt(var + state.epsilon));
        const float m = state.momentum;
        state.running_mean[c] = (1.0f - m) * state.running_mean[c] + m * static_cast<float>(mu);
        state.running_var[c] = (1.0f - m) * state.running_var[c] + m * static_cast<float>(var);
    }
    return normalize(x, state, mean, inv_std, record, true);
}

Tensor batchnorm_eval(const Tensor& x, const BatchNormState& state, OpRecord* record) {
    check_bn_state(x, state);
    require_finite(x, "batchnorm");
    const int channels = x.shape().c;
    std::vector<float> inv_std(channels);
    for (int c = 0; c < channels; ++c) {
        if (state.running_var[c] < 0.0f) {
            throw NumericError("batchnorm: negative running variance in channel " +
                               std::to_string(c));
        }
        inv_std[c] = static_cast<float>(
            1.0 / std::sqrt(static_cast<double>(state.running_var[c]) + state.epsilon));
    }
    return normalize(x, state, state.running_mean, inv_std, record, false);
}

Tensor relu(const Tensor& x, OpRecord* record) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] > 0.0f ? x[i] : 0.0f;
    }
    if (record) {
        *record = ReluRecord{x};
    }
    return y;
}

Tensor sigmoid(const Tensor& x, OpRecord* record) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = stable_sigmoid(x[i]);
    }
    if (record) {
        *record = SigmoidRecord{y};
    }
    return y;
}

Tensor concat_channels(const Tensor& a, const Tensor& b, OpRecord* record) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
        throw ConfigError("concat_channels: " + to_string(sa) + " and " + to_string(sb) +
                          " differ outside the channel axis");
    }
    Tensor y(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
    const std::size_t na = static_cast<std::size_t>(sa.c) * sa.plane();
    const std::size_t nb = static_cast<std::size_t>(sb.c) * sb.plane();
    for (int n = 0; n < sa.n; ++n) {
        std::memcpy(y.plane(n, 0), a.plane(n, 0), na * sizeof(float));
        std::memcpy(y.plane(n, sa.c), b.plane(n, 0), nb * sizeof(float));
    }
    if (record) {
        *record = ConcatRecord{sa, sb};
    }
    return y;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& x, int first_channels) {
    const Shape& s = x.shape();
    if (first_channels < 1 || first_channels >= s.c) {
        throw ConfigError("split_channels: split point " + std::to_string(first_channels) +
                          " outside (0, " + std::to_string(s.c) + ")");
    }
    Tensor a(Shape{s.n, first_channels, s.h, s.w});
    Tensor b(Shape{s.n, s.c - first_channels, s.h, s.w});
    const std::size_t na = a.size() / s.n;
    const std::size_t nb = b.size() / s.n;
    for (int n = 0; n < s.n; ++n) {
        std::memcpy(a.plane(n, 0), x.plane(n, 0), na * sizeof(float));
        std::memcpy(b.plane(n, 0), x.plane(n, first_channels), nb * sizeof(float));
    }
    return {std::move(a), std::move(b)};
}

OpGradients backprop(const OpRecord& record, const Tensor& upstream) {
    record_kind(record);  // rejects empty records
    return std::visit(
        [&](const auto& r) -> OpGradients {
            using R = std::decay_t<decltype(r)>;
            if constexpr (std::is_same_v<R, std::monostate>) {
                throw UsageError("op record is empty");
            } else if constexpr (std::is_same_v<R, Conv2dRecord>) {
                return conv2d_backward(r, upstream);
            } else if constexpr (std::is_same_v<R, ConvTranspose2dRecord>) {
                return conv_transpose2d_backward(r, upstream);
            } else if constexpr (std::is_same_v<R, MaxPoolRecord>) {
                return maxpool_backward(r, upstream);
            } else if constexpr (std::is_same_v<R, BatchNormRecord>) {
                return batchnorm_backward(r, upstream);
            } else if constexpr (std::is_same_v<R, ReluRecord>) {
                return relu_backward(r, upstream);
            } else if constexpr (std::is_same_v<R, SigmoidRecord>) {
                return sigmoid_backward(r, upstream);
            } else {
                return concat_backward(r, upstream);
            }
        },
        record);
}

}  // namespace tinyunet
