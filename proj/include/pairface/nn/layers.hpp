#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pairface/nn/param.hpp"
#include "pairface/tensor.hpp"

namespace pairface {

// Convolution engine: im2col + GEMM, single-threaded and deterministic.
// All layers are stateless across passes; whatever backward needs is kept in
// explicit per-pass caches so several forward passes (main, identity, ...)
// can be backpropagated independently.

namespace nnops {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ColMat = Eigen::MatrixXf;
template <class M>
using Map = Eigen::Map<M>;
template <class M>
using ConstMap = Eigen::Map<const M>;

inline int conv_out_size(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

inline int tconv_out_size(int in, int k, int stride, int pad) {
    return (in - 1) * stride - 2 * pad + k;
}

// Patch matrix of x: one column per output position, K = C*k*k rows.
inline ColMat im2col(const Tensor& x, int k, int stride, int pad) {
    const int c_n = x.channels(), h = x.height(), w = x.width();
    const int oh = conv_out_size(h, k, stride, pad), ow = conv_out_size(w, k, stride, pad);
    ColMat cols(c_n * k * k, oh * ow);
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            float* col = cols.col(oy * ow + ox).data();
            for (int c = 0; c < c_n; ++c)
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - pad + ky;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - pad + kx;
                        *col++ = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? x.at(c, iy, ix) : 0.0f;
                    }
                }
        }
    return cols;
}

// Scatter-add of a patch matrix back into image space (adjoint of im2col).
inline void col2im_add(const ColMat& cols, int k, int stride, int pad, Tensor& x) {
    const int c_n = x.channels(), h = x.height(), w = x.width();
    const int oh = conv_out_size(h, k, stride, pad), ow = conv_out_size(w, k, stride, pad);
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
            const float* col = cols.col(oy * ow + ox).data();
            for (int c = 0; c < c_n; ++c)
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - pad + ky;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - pad + kx;
                        if (iy >= 0 && iy < h && ix >= 0 && ix < w) x.at(c, iy, ix) += *col;
                        ++col;
                    }
                }
        }
}

}  // namespace nnops

// ---------------------------------------------------------------------------
// Conv2d (kernel k, stride s, zero padding p)
// ---------------------------------------------------------------------------

struct Conv2d {
    int in_c, out_c, k, stride, pad;
    ParamPtr weight;  // {out_c, in_c*k*k}
    ParamPtr bias;    // {out_c}

    Conv2d(const std::string& name, int in_c_, int out_c_, int k_, int stride_, int pad_)
        : in_c(in_c_), out_c(out_c_), k(k_), stride(stride_), pad(pad_) {
        weight = std::make_shared<Param>(name + ".weight", std::vector<int>{out_c, in_c * k * k});
        bias = std::make_shared<Param>(name + ".bias", std::vector<int>{out_c});
    }

    template <class Engine>
    void init(Engine& eng, float stddev = 0.02f) {
        weight->value.fill_normal(eng, 0.0f, stddev);
        bias->value.fill(0.0f);
    }

    Tensor forward(const Tensor& x) const {
        if (x.channels() != in_c) throw ShapeMismatch("conv2d: channel count");
        const int oh = nnops::conv_out_size(x.height(), k, stride, pad);
        const int ow = nnops::conv_out_size(x.width(), k, stride, pad);
        if (oh <= 0 || ow <= 0) throw ShapeMismatch("conv2d: input too small for kernel");
        Tensor y({out_c, oh, ow});
        nnops::ColMat cols = nnops::im2col(x, k, stride, pad);
        nnops::ConstMap<nnops::RowMat> w_map(weight->value.data(), out_c, in_c * k * k);
        nnops::Map<nnops::RowMat> y_map(y.data(), out_c, oh * ow);
        y_map.noalias() = w_map * cols;
        for (int c = 0; c < out_c; ++c) y_map.row(c).array() += bias->value[c];
        return y;
    }

    // gy: grad wrt output; x: the forward input. Returns grad wrt x.
    Tensor backward(const Tensor& x, const Tensor& gy, bool param_grads = true) const {
        const int oh = gy.dim(1), ow = gy.dim(2);
        nnops::ColMat cols = nnops::im2col(x, k, stride, pad);
        nnops::ConstMap<nnops::RowMat> gy_map(gy.data(), out_c, oh * ow);
        if (param_grads) {
            nnops::Map<nnops::RowMat> gw(weight->grad.data(), out_c, in_c * k * k);
            gw.noalias() += gy_map * cols.transpose();
            for (int c = 0; c < out_c; ++c) bias->grad[c] += gy_map.row(c).sum();
        }
        nnops::ConstMap<nnops::RowMat> w_map(weight->value.data(), out_c, in_c * k * k);
        nnops::ColMat gcols = w_map.transpose() * gy_map;
        Tensor gx(x.shape());
        nnops::col2im_add(gcols, k, stride, pad, gx);
        return gx;
    }

    std::vector<ParamPtr> params() const { return {weight, bias}; }
};

// ---------------------------------------------------------------------------
// Transposed Conv2d
// ---------------------------------------------------------------------------

struct TConv2d {
    int in_c, out_c, k, stride, pad;
    ParamPtr weight;  // {in_c, out_c*k*k}
    ParamPtr bias;    // {out_c}

    TConv2d(const std::string& name, int in_c_, int out_c_, int k_, int stride_, int pad_)
        : in_c(in_c_), out_c(out_c_), k(k_), stride(stride_), pad(pad_) {
        weight = std::make_shared<Param>(name + ".weight", std::vector<int>{in_c, out_c * k * k});
        bias = std::make_shared<Param>(name + ".bias", std::vector<int>{out_c});
    }

    template <class Engine>
    void init(Engine& eng, float stddev = 0.02f) {
        weight->value.fill_normal(eng, 0.0f, stddev);
        bias->value.fill(0.0f);
    }

    Tensor forward(const Tensor& x) const {
        if (x.channels() != in_c) throw ShapeMismatch("tconv2d: channel count");
        const int ih = x.height(), iw = x.width();
        const int oh = nnops::tconv_out_size(ih, k, stride, pad);
        const int ow = nnops::tconv_out_size(iw, k, stride, pad);
        if (oh <= 0 || ow <= 0) throw ShapeMismatch("tconv2d: input too small");
        // cols = W^T x, then scatter kernel windows into the output.
        nnops::ConstMap<nnops::RowMat> w_map(weight->value.data(), in_c, out_c * k * k);
        nnops::ConstMap<nnops::RowMat> x_map(x.data(), in_c, ih * iw);
        nnops::ColMat cols = w_map.transpose() * x_map;  // {out_c*k*k, ih*iw}
        Tensor y({out_c, oh, ow});
        for (int iy = 0; iy < ih; ++iy)
            for (int ix = 0; ix < iw; ++ix) {
                const float* col = cols.col(iy * iw + ix).data();
                for (int c = 0; c < out_c; ++c)
                    for (int ky = 0; ky < k; ++ky) {
                        const int oy = iy * stride - pad + ky;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ox = ix * stride - pad + kx;
                            if (oy >= 0 && oy < oh && ox >= 0 && ox < ow) y.at(c, oy, ox) += *col;
                            ++col;
                        }
                    }
            }
        for (int c = 0; c < out_c; ++c) {
            float* row = y.data() + static_cast<std::size_t>(c) * oh * ow;
            for (int i = 0; i < oh * ow; ++i) row[i] += bias->value[c];
        }
        return y;
    }

    Tensor backward(const Tensor& x, const Tensor& gy, bool param_grads = true) const {
        const int ih = x.height(), iw = x.width();
        // Gathering gy's kernel windows at every input position is the exact
        // adjoint of the forward scatter.
        nnops::ColMat gcols = nnops::im2col(gy, k, stride, pad);  // {out_c*k*k, ih*iw}
        nnops::ConstMap<nnops::RowMat> w_map(weight->value.data(), in_c, out_c * k * k);
        if (param_grads) {
            nnops::ConstMap<nnops::RowMat> x_map(x.data(), in_c, ih * iw);
            nnops::Map<nnops::RowMat> gw(weight->grad.data(), in_c, out_c * k * k);
            gw.noalias() += x_map * gcols.transpose();
            for (int c = 0; c < out_c; ++c) {
                const float* g = gy.data() + static_cast<std::size_t>(c) * gy.dim(1) * gy.dim(2);
                double sum = 0.0;
                for (int i = 0; i < gy.dim(1) * gy.dim(2); ++i) sum += g[i];
                bias->grad[c] += static_cast<float>(sum);
            }
        }
        Tensor gx(x.shape());
        nnops::Map<nnops::RowMat> gx_map(gx.data(), in_c, ih * iw);
        gx_map.noalias() = w_map * gcols;
        return gx;
    }

    std::vector<ParamPtr> params() const { return {weight, bias}; }
};

// ---------------------------------------------------------------------------
// Per-channel spatial normalization (instance norm / batch norm at batch 1)
// ---------------------------------------------------------------------------

enum class NormKind { batch, instance };

struct Norm2d {
    NormKind kind;
    int channels;
    float eps = 1e-5f;
    float momentum = 0.1f;  // running-stat update rate for batch kind
    ParamPtr gamma;
    ParamPtr beta;
    Tensor running_mean;  // batch kind only
    Tensor running_var;

    Norm2d(const std::string& name, NormKind kind_, int channels_)
        : kind(kind_), channels(channels_) {
        gamma = std::make_shared<Param>(name + ".gamma", std::vector<int>{channels});
        beta = std::make_shared<Param>(name + ".beta", std::vector<int>{channels});
        gamma->value.fill(1.0f);
        beta->value.fill(0.0f);
        if (kind == NormKind::batch) {
            running_mean = Tensor({channels});
            running_var = Tensor({channels}, 1.0f);
        }
    }

    template <class Engine>
    void init(Engine& eng, float stddev = 0.02f) {
        gamma->value.fill_normal(eng, 1.0f, stddev);
        beta->value.fill(0.0f);
    }

    Tensor forward(const Tensor& x, bool train) {
        if (x.channels() != channels) throw ShapeMismatch("norm2d: channel count");
        const int m = x.height() * x.width();
        Tensor y(x.shape());
        if (!train && kind == NormKind::batch) {
            for (int c = 0; c < channels; ++c) {
                const float inv = 1.0f / std::sqrt(running_var[c] + eps);
                const float* xs = x.data() + static_cast<std::size_t>(c) * m;
                float* ys = y.data() + static_cast<std::size_t>(c) * m;
                for (int i = 0; i < m; ++i)
                    ys[i] = gamma->value[c] * (xs[i] - running_mean[c]) * inv + beta->value[c];
            }
            return y;
        }
        for (int c = 0; c < channels; ++c) {
            const float* xs = x.data() + static_cast<std::size_t>(c) * m;
            float* ys = y.data() + static_cast<std::size_t>(c) * m;
            double mean = 0.0, var = 0.0;
            for (int i = 0; i < m; ++i) mean += xs[i];
            mean /= m;
            for (int i = 0; i < m; ++i) var += (xs[i] - mean) * (xs[i] - mean);
            var /= m;
            const float inv = 1.0f / std::sqrt(static_cast<float>(var) + eps);
            for (int i = 0; i < m; ++i)
                ys[i] = gamma->value[c] * (xs[i] - static_cast<float>(mean)) * inv + beta->value[c];
            if (train && kind == NormKind::batch) {
                running_mean[c] = (1 - momentum) * running_mean[c] + momentum * static_cast<float>(mean);
                running_var[c] = (1 - momentum) * running_var[c] + momentum * static_cast<float>(var);
            }
        }
        return y;
    }

    // Train-mode backward; statistics are recomputed from the cached input.
    Tensor backward(const Tensor& x, const Tensor& gy, bool param_grads = true) const {
        const int m = x.height() * x.width();
        Tensor gx(x.shape());
        for (int c = 0; c < channels; ++c) {
            const float* xs = x.data() + static_cast<std::size_t>(c) * m;
            const float* gs = gy.data() + static_cast<std::size_t>(c) * m;
            float* gxs = gx.data() + static_cast<std::size_t>(c) * m;
            double mean = 0.0, var = 0.0;
            for (int i = 0; i < m; ++i) mean += xs[i];
            mean /= m;
            for (int i = 0; i < m; ++i) var += (xs[i] - mean) * (xs[i] - mean);
            var /= m;
            const double inv = 1.0 / std::sqrt(var + eps);
            double sum_g = 0.0, sum_gx = 0.0;
            for (int i = 0; i < m; ++i) {
                const double xh = (xs[i] - mean) * inv;
                sum_g += gs[i];
                sum_gx += gs[i] * xh;
            }
            if (param_grads) {
                gamma->grad[c] += static_cast<float>(sum_gx);
                beta->grad[c] += static_cast<float>(sum_g);
            }
            const double g_scale = gamma->value[c] * inv;
            for (int i = 0; i < m; ++i) {
                const double xh = (xs[i] - mean) * inv;
                gxs[i] = static_cast<float>(g_scale * (gs[i] - sum_g / m - xh * sum_gx / m));
            }
        }
        return gx;
    }

    std::vector<ParamPtr> params() const { return {gamma, beta}; }
};

// ---------------------------------------------------------------------------
// Elementwise activations (backward from cached pre-activation or output)
// ---------------------------------------------------------------------------

inline Tensor leaky_relu(const Tensor& x, float slope = 0.2f) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : slope * x[i];
    return y;
}

inline Tensor leaky_relu_backward(const Tensor& x, const Tensor& gy, float slope = 0.2f) {
    Tensor gx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0f ? gy[i] : slope * gy[i];
    return gx;
}

inline Tensor relu(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
    return y;
}

inline Tensor relu_backward(const Tensor& x, const Tensor& gy) {
    Tensor gx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > 0.0f ? gy[i] : 0.0f;
    return gx;
}

inline Tensor tanh_act(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    return y;
}

inline Tensor tanh_backward_from_output(const Tensor& y, const Tensor& gy) {
    Tensor gx(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] = gy[i] * (1.0f - y[i] * y[i]);
    return gx;
}

// Inverted dropout; mask values are 0 or 1/(1-rate).
inline Tensor dropout_mask(const std::vector<int>& shape, float rate, std::mt19937_64& eng) {
    Tensor mask(shape);
    std::bernoulli_distribution keep(1.0 - rate);
    const float scale = 1.0f / (1.0f - rate);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = keep(eng) ? scale : 0.0f;
    return mask;
}

inline Tensor apply_mask(const Tensor& x, const Tensor& mask) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * mask[i];
    return y;
}

}  // namespace pairface
