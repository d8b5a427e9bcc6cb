// Copyright 2026 The FRDet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "frdet/ops.hpp"

#include <algorithm>
#include <cmath>

#include "autograd.hpp"
#include "blas.hpp"

namespace frdet {

using detail::attach_backward;
using detail::any_requires_grad;

namespace {

void require_rank4(const Shape& s, const char* op) {
    if (s.size() != 4) {
        throw ShapeError(std::string(op) + ": expected NCHW input, got shape " + shape_to_string(s));
    }
}

template <typename T>
void im2col(const T* image, int channels, int height, int width, int kernel, int pad, int stride,
            int out_h, int out_w, T* col) {
    const int plane = out_h * out_w;
    for (int c = 0; c < channels; ++c) {
        for (int kh = 0; kh < kernel; ++kh) {
            for (int kw = 0; kw < kernel; ++kw) {
                T* row = col + static_cast<std::size_t>((c * kernel + kh) * kernel + kw) * plane;
                const T* src = image + static_cast<std::size_t>(c) * height * width;
                for (int oh = 0; oh < out_h; ++oh) {
                    const int ih = oh * stride - pad + kh;
                    T* dst = row + oh * out_w;
                    if (ih < 0 || ih >= height) {
                        std::fill(dst, dst + out_w, T(0));
                        continue;
                    }
                    for (int ow = 0; ow < out_w; ++ow) {
                        const int iw = ow * stride - pad + kw;
                        dst[ow] = (iw >= 0 && iw < width) ? src[ih * width + iw] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, int channels, int height, int width, int kernel, int pad, int stride,
                int out_h, int out_w, T* image) {
    const int plane = out_h * out_w;
    for (int c = 0; c < channels; ++c) {
        for (int kh = 0; kh < kernel; ++kh) {
            for (int kw = 0; kw < kernel; ++kw) {
                const T* row = col + static_cast<std::size_t>((c * kernel + kh) * kernel + kw) * plane;
                T* dst = image + static_cast<std::size_t>(c) * height * width;
                for (int oh = 0; oh < out_h; ++oh) {
                    const int ih = oh * stride - pad + kh;
                    if (ih < 0 || ih >= height) continue;
                    for (int ow = 0; ow < out_w; ++ow) {
                        const int iw = ow * stride - pad + kw;
                        if (iw >= 0 && iw < width) dst[ih * width + iw] += row[oh * out_w + ow];
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
ConvParams<T> ConvParams<T>::make(int in_channels, int out_channels, int kernel_size, int stride) {
    if (in_channels <= 0 || out_channels <= 0) {
        throw ConfigError("conv channels must be positive, got " + std::to_string(in_channels) +
                          "->" + std::to_string(out_channels));
    }
    ConvParams p;
    p.kernel_size = kernel_size;
    p.stride = stride;
    p.padding = (kernel_size - 1) / 2;
    const auto k = static_cast<std::size_t>(kernel_size);
    p.weight = Tensor<T>({static_cast<std::size_t>(out_channels), static_cast<std::size_t>(in_channels), k, k});
    p.bias = Tensor<T>({static_cast<std::size_t>(out_channels)});
    p.weight.set_requires_grad();
    p.bias.set_requires_grad();
    p.validate();
    return p;
}

template <typename T>
void ConvParams<T>::validate() const {
    if (kernel_size != 1 && kernel_size != 3) {
        throw ConfigError("conv kernel_size must be 1 or 3, got " + std::to_string(kernel_size));
    }
    if (padding != (kernel_size - 1) / 2) {
        throw ConfigError("conv padding must be (K-1)/2 = " + std::to_string((kernel_size - 1) / 2) +
                          ", got " + std::to_string(padding));
    }
    if (stride < 1) throw ConfigError("conv stride must be positive");
    if (weight.rank() != 4 || weight.dim(2) != static_cast<std::size_t>(kernel_size) ||
        weight.dim(3) != static_cast<std::size_t>(kernel_size)) {
        throw ShapeError("conv weight shape " + shape_to_string(weight.shape()) +
                         " does not match kernel_size " + std::to_string(kernel_size));
    }
    if (bias.numel() != weight.dim(0)) {
        throw ShapeError("conv bias has " + std::to_string(bias.numel()) + " entries for " +
                         std::to_string(weight.dim(0)) + " output channels");
    }
}

template <typename T>
BatchNormParams<T> BatchNormParams<T>::make(int channels) {
    const Shape s{static_cast<std::size_t>(channels)};
    BatchNormParams p;
    p.scale = Tensor<T>(s, T(1));
    p.shift = Tensor<T>(s, T(0));
    p.running_mean = Tensor<T>(s, T(0));
    p.running_var = Tensor<T>(s, T(1));
    p.scale.set_requires_grad();
    p.shift.set_requires_grad();
    return p;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvParams<T>& params) {
    require_rank4(input.shape(), "conv2d");
    params.validate();
    const int batch = static_cast<int>(input.dim(0));
    const int in_c = static_cast<int>(input.dim(1));
    const int in_h = static_cast<int>(input.dim(2));
    const int in_w = static_cast<int>(input.dim(3));
    const int out_c = params.out_channels();
    const int k = params.kernel_size;
    const int pad = params.padding;
    const int stride = params.stride;
    if (in_c != params.in_channels()) {
        throw ShapeError("conv2d: input has " + std::to_string(in_c) + " channels, weight " +
                         shape_to_string(params.weight.shape()) + " expects " +
                         std::to_string(params.in_channels()));
    }
    const int out_h = (in_h + 2 * pad - k) / stride + 1;
    const int out_w = (in_w + 2 * pad - k) / stride + 1;
    if (out_h <= 0 || out_w <= 0) {
        throw ShapeError("conv2d: input " + shape_to_string(input.shape()) + " too small for kernel");
    }
    const int rows = in_c * k * k;
    const int plane = out_h * out_w;
    const bool direct = (k == 1 && stride == 1);

    Tensor<T> out({input.dim(0), static_cast<std::size_t>(out_c), static_cast<std::size_t>(out_h),
                   static_cast<std::size_t>(out_w)});
    std::vector<T> col(direct ? 0 : static_cast<std::size_t>(rows) * plane);
    const T* w = params.weight.data();
    const T* b = params.bias.data();
    for (int n = 0; n < batch; ++n) {
        const T* x = input.data() + static_cast<std::size_t>(n) * in_c * in_h * in_w;
        const T* src = x;
        if (!direct) {
            im2col(x, in_c, in_h, in_w, k, pad, stride, out_h, out_w, col.data());
            src = col.data();
        }
        T* y = out.data() + static_cast<std::size_t>(n) * out_c * plane;
        for (int c = 0; c < out_c; ++c) std::fill(y + c * plane, y + (c + 1) * plane, b[c]);
        detail::gemm(false, false, out_c, plane, rows, T(1), w, rows, src, plane, T(1), y, plane);
    }

    if (any_requires_grad({&input, &params.weight, &params.bias})) {
        attach_backward(out, {&input, &params.weight, &params.bias},
                        [input, weight = params.weight, bias = params.bias, batch, in_c, in_h, in_w,
                         out_c, k, pad, stride, out_h, out_w, rows, plane,
                         direct](detail::TensorNode<T>& self) mutable {
            const T* dy_all = self.grad.data();
            T* dw = detail::grad_or_null(weight);
            T* db = detail::grad_or_null(bias);
            T* dx_all = detail::grad_or_null(input);
            std::vector<T> col(direct ? 0 : static_cast<std::size_t>(rows) * plane);
            for (int n = 0; n < batch; ++n) {
                const T* dy = dy_all + static_cast<std::size_t>(n) * out_c * plane;
                const std::size_t in_off = static_cast<std::size_t>(n) * in_c * in_h * in_w;
                if (db) {
                    for (int c = 0; c < out_c; ++c) {
                        T acc(0);
                        for (int i = 0; i < plane; ++i) acc += dy[c * plane + i];
                        db[c] += acc;
                    }
                }
                if (dw) {
                    const T* src = input.data() + in_off;
                    if (!direct) {
                        im2col(src, in_c, in_h, in_w, k, pad, stride, out_h, out_w, col.data());
                        src = col.data();
                    }
                    detail::gemm(false, true, out_c, rows, plane, T(1), dy, plane, src, plane, T(1),
                                 dw, rows);
                }
                if (dx_all) {
                    T* dx = dx_all + in_off;
                    if (direct) {
                        detail::gemm(true, false, rows, plane, out_c, T(1), weight.data(), rows, dy,
                                     plane, T(1), dx, plane);
                    } else {
                        detail::gemm(true, false, rows, plane, out_c, T(1), weight.data(), rows, dy,
                                     plane, T(0), col.data(), plane);
                        col2im_add(col.data(), in_c, in_h, in_w, k, pad, stride, out_h, out_w, dx);
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& input, double slope) {
    Tensor<T> out(input.shape());
    const T a = static_cast<T>(slope);
    const auto x = input.values();
    auto y = out.values();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : a * x[i];
    if (any_requires_grad({&input})) {
        attach_backward(out, {&input}, [input, a](detail::TensorNode<T>& self) mutable {
            auto dx = input.grad();
            const auto x = input.values();
            for (std::size_t i = 0; i < x.size(); ++i) {
                dx[i] += x[i] > T(0) ? self.grad[i] : a * self.grad[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, BatchNormParams<T>& params, bool training) {
    require_rank4(input.shape(), "batch_norm");
    const std::size_t batch = input.dim(0);
    const std::size_t channels = input.dim(1);
    const std::size_t plane = input.dim(2) * input.dim(3);
    if (channels != static_cast<std::size_t>(params.channels())) {
        throw ShapeError("batch_norm: input has " + std::to_string(channels) +
                         " channels, parameters have " + std::to_string(params.channels()));
    }
    if (params.epsilon < 0) throw ConfigError("batch_norm: epsilon must be non-negative");
    const std::size_t count = batch * plane;
    if (training && count == 0) throw ShapeError("batch_norm: empty batch in training mode");

    std::vector<T> mean(channels), inv_std(channels);
    if (training) {
        for (std::size_t c = 0; c < channels; ++c) {
            double s = 0.0, ss = 0.0;
            for (std::size_t n = 0; n < batch; ++n) {
                const T* x = input.data() + (n * channels + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) s += x[i];
            }
            const double mu = s / static_cast<double>(count);
            for (std::size_t n = 0; n < batch; ++n) {
                const T* x = input.data() + (n * channels + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) ss += (x[i] - mu) * (x[i] - mu);
            }
            const double var = ss / static_cast<double>(count);
            const double denom = var + params.epsilon;
            mean[c] = static_cast<T>(mu);
            inv_std[c] = denom > 0 ? static_cast<T>(1.0 / std::sqrt(denom)) : T(0);
            const double unbiased = count > 1 ? ss / static_cast<double>(count - 1) : var;
            const double m = params.momentum;
            params.running_mean[c] = static_cast<T>(m * params.running_mean[c] + (1.0 - m) * mu);
            params.running_var[c] = static_cast<T>(m * params.running_var[c] + (1.0 - m) * unbiased);
        }
    } else {
        for (std::size_t c = 0; c < channels; ++c) {
            const double denom = static_cast<double>(params.running_var[c]) + params.epsilon;
            if (params.running_var[c] < 0 || denom <= 0) {
                throw DomainError("batch_norm: running variance must be non-negative with var+eps > 0");
            }
            mean[c] = params.running_mean[c];
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(denom));
        }
    }

    Tensor<T> out(input.shape());
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t c = 0; c < channels; ++c) {
            const T* x = input.data() + (n * channels + c) * plane;
            T* y = out.data() + (n * channels + c) * plane;
            const T g = params.scale[c] * inv_std[c];
            const T b = params.shift[c];
            const T mu = mean[c];
            for (std::size_t i = 0; i < plane; ++i) y[i] = g * (x[i] - mu) + b;
        }
    }

    if (any_requires_grad({&input, &params.scale, &params.shift})) {
        attach_backward(out, {&input, &params.scale, &params.shift},
                        [input, scale = params.scale, shift = params.shift, mean = std::move(mean),
                         inv_std = std::move(inv_std), batch, channels, plane, count,
                         training](detail::TensorNode<T>& self) mutable {
            T* dscale = detail::grad_or_null(scale);
            T* dshift = detail::grad_or_null(shift);
            T* dx = detail::grad_or_null(input);
            for (std::size_t c = 0; c < channels; ++c) {
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::size_t n = 0; n < batch; ++n) {
                    const std::size_t off = (n * channels + c) * plane;
                    const T* x = input.data() + off;
                    const T* dy = self.grad.data() + off;
                    for (std::size_t i = 0; i < plane; ++i) {
                        sum_dy += dy[i];
                        sum_dy_xhat += dy[i] * (x[i] - mean[c]) * inv_std[c];
                    }
                }
                if (dscale) dscale[c] += static_cast<T>(sum_dy_xhat);
                if (dshift) dshift[c] += static_cast<T>(sum_dy);
                if (!dx) continue;
                const T g = scale[c] * inv_std[c];
                for (std::size_t n = 0; n < batch; ++n) {
                    const std::size_t off = (n * channels + c) * plane;
                    const T* x = input.data() + off;
                    const T* dy = self.grad.data() + off;
                    T* dxc = dx + off;
                    if (training) {
                        // dx = g/m * (m*dy - sum(dy) - xhat*sum(dy*xhat))
                        const T mean_dy = static_cast<T>(sum_dy / static_cast<double>(count));
                        const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / static_cast<double>(count));
                        for (std::size_t i = 0; i < plane; ++i) {
                            const T xhat = (x[i] - mean[c]) * inv_std[c];
                            dxc[i] += g * (dy[i] - mean_dy - xhat * mean_dy_xhat);
                        }
                    } else {
                        for (std::size_t i = 0; i < plane; ++i) dxc[i] += g * dy[i];
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank4(a.shape(), "concat_channels");
    require_rank4(b.shape(), "concat_channels");
    if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
        throw ShapeError("concat_channels: cannot join " + shape_to_string(a.shape()) + " and " +
                         shape_to_string(b.shape()) + " (N,H,W must agree)");
    }
    const std::size_t batch = a.dim(0);
    const std::size_t ca = a.dim(1), cb = b.dim(1);
    const std::size_t plane = a.dim(2) * a.dim(3);
    Tensor<T> out({batch, ca + cb, a.dim(2), a.dim(3)});
    for (std::size_t n = 0; n < batch; ++n) {
        T* y = out.data() + n * (ca + cb) * plane;
        std::copy_n(a.data() + n * ca * plane, ca * plane, y);
        std::copy_n(b.data() + n * cb * plane, cb * plane, y + ca * plane);
    }
    if (any_requires_grad({&a, &b})) {
        attach_backward(out, {&a, &b}, [a, b, batch, ca, cb, plane](detail::TensorNode<T>& self) mutable {
            T* da = detail::grad_or_null(a);
            T* db = detail::grad_or_null(b);
            for (std::size_t n = 0; n < batch; ++n) {
                const T* dy = self.grad.data() + n * (ca + cb) * plane;
                if (da) {
                    T* d = da + n * ca * plane;
                    for (std::size_t i = 0; i < ca * plane; ++i) d[i] += dy[i];
                }
                if (db) {
                    T* d = db + n * cb * plane;
                    for (std::size_t i = 0; i < cb * plane; ++i) d[i] += dy[ca * plane + i];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> residual_add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("residual_add: shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    }
    Tensor<T> out(a.shape());
    const auto x = a.values();
    const auto z = b.values();
    auto y = out.values();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + z[i];
    if (any_requires_grad({&a, &b})) {
        attach_backward(out, {&a, &b}, [a, b](detail::TensorNode<T>& self) mutable {
            for (const Tensor<T>* t : {&a, &b}) {
                if (!t->requires_grad()) continue;
                auto d = t->grad();
                for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& input) {
    require_rank4(input.shape(), "upsample2x");
    const std::size_t planes = input.dim(0) * input.dim(1);
    const std::size_t h = input.dim(2), w = input.dim(3);
    Tensor<T> out({input.dim(0), input.dim(1), 2 * h, 2 * w});
    for (std::size_t p = 0; p < planes; ++p) {
        const T* x = input.data() + p * h * w;
        T* y = out.data() + p * 4 * h * w;
        for (std::size_t i = 0; i < 2 * h; ++i) {
            for (std::size_t j = 0; j < 2 * w; ++j) y[i * 2 * w + j] = x[(i / 2) * w + j / 2];
        }
    }
    if (any_requires_grad({&input})) {
        attach_backward(out, {&input}, [input, planes, h, w](detail::TensorNode<T>& self) mutable {
            auto dx = input.grad();
            for (std::size_t p = 0; p < planes; ++p) {
                const T* dy = self.grad.data() + p * 4 * h * w;
                T* d = dx.data() + p * h * w;
                for (std::size_t i = 0; i < 2 * h; ++i) {
                    for (std::size_t j = 0; j < 2 * w; ++j) d[(i / 2) * w + j / 2] += dy[i * 2 * w + j];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& input) {
    T acc(0);
    for (T v : input.values()) acc += v;
    Tensor<T> out({1}, acc);
    if (any_requires_grad({&input})) {
        attach_backward(out, {&input}, [input](detail::TensorNode<T>& self) mutable {
            for (auto& d : input.grad()) d += self.grad[0];
        });
    }
    return out;
}

template <typename T>
Tensor<T> weighted_sum(const Tensor<T>& input, const Tensor<T>& weights) {
    if (input.numel() != weights.numel()) {
        throw ShapeError("weighted_sum: " + std::to_string(input.numel()) + " values vs " +
                         std::to_string(weights.numel()) + " weights");
    }
    T acc(0);
    for (std::size_t i = 0; i < input.numel(); ++i) acc += input[i] * weights[i];
    Tensor<T> out({1}, acc);
    if (any_requires_grad({&input})) {
        attach_backward(out, {&input}, [input, weights](detail::TensorNode<T>& self) mutable {
            auto d = input.grad();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += self.grad[0] * weights[i];
        });
    }
    return out;
}

#define FRDET_INSTANTIATE_OPS(T)                                                   \
    template struct ConvParams<T>;                                                 \
    template struct BatchNormParams<T>;                                            \
    template Tensor<T> conv2d(const Tensor<T>&, const ConvParams<T>&);             \
    template Tensor<T> leaky_relu(const Tensor<T>&, double);                       \
    template Tensor<T> batch_norm(const Tensor<T>&, BatchNormParams<T>&, bool);    \
    template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);        \
    template Tensor<T> residual_add(const Tensor<T>&, const Tensor<T>&);           \
    template Tensor<T> upsample2x(const Tensor<T>&);                               \
    template Tensor<T> sum(const Tensor<T>&);                                      \
    template Tensor<T> weighted_sum(const Tensor<T>&, const Tensor<T>&);

FRDET_INSTANTIATE_OPS(float)
FRDET_INSTANTIATE_OPS(double)

}  // namespace frdet
