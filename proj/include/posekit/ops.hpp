#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "posekit/error.hpp"
#include "posekit/parallel.hpp"
#include "posekit/tensor.hpp"

namespace posekit {

/// Convolution / transposed-convolution parameters.
/// kernel layout is (c_out, c_in_per_group, kh, kw) for both directions;
/// deconv2d reads the same layout with c_out as the *output* channel count.
struct ConvWeights {
    int c_out = 0;
    int c_in_per_group = 0;
    int kh = 0;
    int kw = 0;
    int groups = 1;
    int stride_y = 1;
    int stride_x = 1;
    int pad_y = 0;
    int pad_x = 0;
    std::vector<float> kernel;  // c_out * c_in_per_group * kh * kw
    std::vector<float> bias;    // empty or c_out

    size_t kidx(int co, int ci, int ky, int kx) const {
        return ((size_t(co) * c_in_per_group + ci) * kh + ky) * kw + kx;
    }
    bool has_bias() const { return !bias.empty(); }
};

/// Inference-mode batch-norm parameters, one entry per channel.
struct BnParams {
    std::vector<float> gamma;
    std::vector<float> beta;
    std::vector<float> running_mean;
    std::vector<float> running_var;
    float eps = 1e-5f;
};

namespace detail {

inline bool supported_kernel(int k) { return k == 1 || k == 3 || k == 4 || k == 5; }

inline void check_conv_args(const Tensor& input, const ConvWeights& w, const char* op) {
    if (!supported_kernel(w.kh) || !supported_kernel(w.kw))
        throw ConfigError(std::string(op) + ": kernel size " + std::to_string(w.kh) + "x" +
                          std::to_string(w.kw) + " outside supported set {1,3,4,5}");
    if (w.groups < 1) throw ConfigError(std::string(op) + ": groups must be >= 1");
    if (w.c_out <= 0 || w.c_out % w.groups != 0)
        throw ConfigError(std::string(op) + ": c_out " + std::to_string(w.c_out) +
                          " not divisible by groups " + std::to_string(w.groups));
    if (input.shape().c != w.groups * w.c_in_per_group)
        throw ConfigError(std::string(op) + ": input channels " + std::to_string(input.shape().c) +
                          " != groups*c_in_per_group " + std::to_string(w.groups * w.c_in_per_group));
    if (w.stride_y < 1 || w.stride_x < 1)
        throw ConfigError(std::string(op) + ": stride must be >= 1");
    if (w.pad_y < 0 || w.pad_x < 0)
        throw ConfigError(std::string(op) + ": padding must be >= 0");
    if (int64_t(w.kernel.size()) != int64_t(w.c_out) * w.c_in_per_group * w.kh * w.kw)
        throw ConfigError(std::string(op) + ": kernel array length " +
                          std::to_string(w.kernel.size()) + " does not match dimensions");
    if (w.has_bias() && int(w.bias.size()) != w.c_out)
        throw ConfigError(std::string(op) + ": bias length " + std::to_string(w.bias.size()) +
                          " != c_out " + std::to_string(w.c_out));
}

inline int div_floor(int a, int b) {  // b > 0
    int q = a / b;
    return (a % b != 0 && (a < 0)) ? q - 1 : q;
}

inline int div_ceil(int a, int b) {  // b > 0
    return -div_floor(-a, b);
}

}  // namespace detail

inline Shape conv2d_output_shape(const Shape& in, const ConvWeights& w) {
    int oh = (in.h + 2 * w.pad_y - w.kh) / w.stride_y + 1;
    int ow = (in.w + 2 * w.pad_x - w.kw) / w.stride_x + 1;
    if (oh < 1 || ow < 1)
        throw ConfigError("conv2d: non-positive output size for input " + to_string(in));
    return {in.n, w.c_out, oh, ow};
}

inline Shape deconv2d_output_shape(const Shape& in, const ConvWeights& w) {
    int oh = (in.h - 1) * w.stride_y - 2 * w.pad_y + w.kh;
    int ow = (in.w - 1) * w.stride_x - 2 * w.pad_x + w.kw;
    if (oh < 1 || ow < 1)
        throw ConfigError("deconv2d: non-positive output size for input " + to_string(in));
    return {in.n, w.c_out, oh, ow};
}

/// 2-D convolution with zero padding. Accumulation is kernel-position-major
/// (ky, kx, ci) per output element in fp32, bit-identical to reference_conv2d.
inline Tensor conv2d(const Tensor& input, const ConvWeights& w, int threads = 1) {
    detail::check_conv_args(input, w, "conv2d");
    const Shape in = input.shape();
    const Shape os = conv2d_output_shape(in, w);
    Tensor out(os);
    const int cog = w.c_out / w.groups;  // out channels per group
    const int cig = w.c_in_per_group;

    parallel_for(int64_t(in.n) * w.c_out, threads, [&](int64_t job) {
        const int n = int(job / w.c_out);
        const int co = int(job % w.c_out);
        const int g = co / cog;
        const float b = w.has_bias() ? w.bias[size_t(co)] : 0.0f;
        for (int oy = 0; oy < os.h; ++oy) {
            float* row = out.plane(n, co) + size_t(oy) * os.w;
            for (int ox = 0; ox < os.w; ++ox) row[ox] = b;
            for (int ky = 0; ky < w.kh; ++ky) {
                const int iy = oy * w.stride_y - w.pad_y + ky;
                if (iy < 0 || iy >= in.h) continue;
                for (int kx = 0; kx < w.kw; ++kx) {
                    // ox range with ix = ox*sx - px + kx inside [0, in.w)
                    const int lo = std::max(0, detail::div_ceil(w.pad_x - kx, w.stride_x));
                    const int hi = std::min(os.w,
                        detail::div_floor(in.w - 1 + w.pad_x - kx, w.stride_x) + 1);
                    if (lo >= hi) continue;
                    for (int ci = 0; ci < cig; ++ci) {
                        const float wv = w.kernel[w.kidx(co, ci, ky, kx)];
                        const float* irow =
                            input.plane(n, g * cig + ci) + size_t(iy) * in.w;
                        const int base = -w.pad_x + kx;
                        for (int ox = lo; ox < hi; ++ox)
                            row[ox] += wv * irow[ox * w.stride_x + base];
                    }
                }
            }
        }
    });
    return out;
}

/// Transposed convolution (gather form), groups unsupported by design.
/// Output element (oy,ox) sums input positions (iy,ix) with
/// iy*stride - pad + ky == oy; accumulation order matches reference_deconv2d.
inline Tensor deconv2d(const Tensor& input, const ConvWeights& w, int threads = 1) {
    detail::check_conv_args(input, w, "deconv2d");
    if (w.groups != 1) throw ConfigError("deconv2d: grouped transposed convolution unsupported");
    const Shape in = input.shape();
    const Shape os = deconv2d_output_shape(in, w);
    Tensor out(os);

    parallel_for(int64_t(in.n) * w.c_out, threads, [&](int64_t job) {
        const int n = int(job / w.c_out);
        const int co = int(job % w.c_out);
        const float b = w.has_bias() ? w.bias[size_t(co)] : 0.0f;
        for (int oy = 0; oy < os.h; ++oy) {
            float* row = out.plane(n, co) + size_t(oy) * os.w;
            for (int ox = 0; ox < os.w; ++ox) row[ox] = b;
            for (int ky = 0; ky < w.kh; ++ky) {
                const int ty = oy + w.pad_y - ky;
                if (ty < 0 || ty % w.stride_y != 0) continue;
                const int iy = ty / w.stride_y;
                if (iy >= in.h) continue;
                for (int kx = 0; kx < w.kw; ++kx) {
                    // ox = kx - px + ix*sx for ix in [ix_lo, ix_hi)
                    const int ix_lo = std::max(0, detail::div_ceil(w.pad_x - kx, w.stride_x));
                    const int ix_hi = std::min(in.w,
                        detail::div_floor(os.w - 1 + w.pad_x - kx, w.stride_x) + 1);
                    if (ix_lo >= ix_hi) continue;
                    const int base = kx - w.pad_x;
                    for (int ci = 0; ci < in.c; ++ci) {
                        const float wv = w.kernel[w.kidx(co, ci, ky, kx)];
                        const float* irow = input.plane(n, ci) + size_t(iy) * in.w;
                        for (int ix = ix_lo; ix < ix_hi; ++ix)
                            row[base + ix * w.stride_x] += wv * irow[ix];
                    }
                }
            }
        }
    });
    return out;
}

/// Naive quadruple-loop convolution, the oracle the optimized path must match
/// bit for bit.
inline Tensor reference_conv2d(const Tensor& input, const ConvWeights& w) {
    detail::check_conv_args(input, w, "reference_conv2d");
    const Shape in = input.shape();
    const Shape os = conv2d_output_shape(in, w);
    Tensor out(os);
    const int cog = w.c_out / w.groups;
    const int cig = w.c_in_per_group;
    for (int n = 0; n < in.n; ++n)
        for (int co = 0; co < w.c_out; ++co) {
            const int g = co / cog;
            for (int oy = 0; oy < os.h; ++oy)
                for (int ox = 0; ox < os.w; ++ox) {
                    float acc = w.has_bias() ? w.bias[size_t(co)] : 0.0f;
                    for (int ky = 0; ky < w.kh; ++ky) {
                        const int iy = oy * w.stride_y - w.pad_y + ky;
                        if (iy < 0 || iy >= in.h) continue;
                        for (int kx = 0; kx < w.kw; ++kx) {
                            const int ix = ox * w.stride_x - w.pad_x + kx;
                            if (ix < 0 || ix >= in.w) continue;
                            for (int ci = 0; ci < cig; ++ci)
                                acc += w.kernel[w.kidx(co, ci, ky, kx)] *
                                       input.at(n, g * cig + ci, iy, ix);
                        }
                    }
                    out.at(n, co, oy, ox) = acc;
                }
        }
    return out;
}

/// Naive transposed convolution oracle (gather form, same index rules as
/// deconv2d).
inline Tensor reference_deconv2d(const Tensor& input, const ConvWeights& w) {
    detail::check_conv_args(input, w, "reference_deconv2d");
    if (w.groups != 1)
        throw ConfigError("reference_deconv2d: grouped transposed convolution unsupported");
    const Shape in = input.shape();
    const Shape os = deconv2d_output_shape(in, w);
    Tensor out(os);
    for (int n = 0; n < in.n; ++n)
        for (int co = 0; co < w.c_out; ++co)
            for (int oy = 0; oy < os.h; ++oy)
                for (int ox = 0; ox < os.w; ++ox) {
                    float acc = w.has_bias() ? w.bias[size_t(co)] : 0.0f;
                    for (int ky = 0; ky < w.kh; ++ky) {
                        const int ty = oy + w.pad_y - ky;
                        if (ty < 0 || ty % w.stride_y != 0) continue;
                        const int iy = ty / w.stride_y;
                        if (iy >= in.h) continue;
                        for (int kx = 0; kx < w.kw; ++kx) {
                            const int tx = ox + w.pad_x - kx;
                            if (tx < 0 || tx % w.stride_x != 0) continue;
                            const int ix = tx / w.stride_x;
                            if (ix >= in.w) continue;
                            for (int ci = 0; ci < in.c; ++ci)
                                acc += w.kernel[w.kidx(co, ci, ky, kx)] * input.at(n, ci, iy, ix);
                        }
                    }
                    out.at(n, co, oy, ox) = acc;
                }
    return out;
}

inline void check_bn_params(const Tensor& input, const BnParams& p) {
    const size_t c = size_t(input.shape().c);
    if (p.gamma.size() != c || p.beta.size() != c || p.running_mean.size() != c ||
        p.running_var.size() != c)
        throw ConfigError("batchnorm: parameter arrays do not match " + std::to_string(c) +
                          " channels");
    if (p.eps <= 0.0f) throw ConfigError("batchnorm: eps must be > 0");
    for (float v : p.running_var)
        if (v < 0.0f) throw ConfigError("batchnorm: negative running variance");
}

/// y = scale_c * x + shift_c with scale = gamma/sqrt(var+eps),
/// shift = beta - mean*scale.
inline Tensor batchnorm_inference(const Tensor& input, const BnParams& p) {
    check_bn_params(input, p);
    const Shape s = input.shape();
    Tensor out(s);
    for (int c = 0; c < s.c; ++c) {
        const float scale = p.gamma[size_t(c)] / std::sqrt(p.running_var[size_t(c)] + p.eps);
        const float shift = p.beta[size_t(c)] - p.running_mean[size_t(c)] * scale;
        for (int n = 0; n < s.n; ++n) {
            const float* src = input.plane(n, c);
            float* dst = out.plane(n, c);
            const int64_t plane = int64_t(s.h) * s.w;
            for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] * scale + shift;
        }
    }
    return out;
}

/// Folds inference batch-norm into the preceding convolution:
/// conv2d(x, fused) == batchnorm_inference(conv2d(x, w), p) up to rounding.
inline ConvWeights fuse_conv_bn(const ConvWeights& w, const BnParams& p) {
    if (int(p.gamma.size()) != w.c_out || int(p.beta.size()) != w.c_out ||
        int(p.running_mean.size()) != w.c_out || int(p.running_var.size()) != w.c_out)
        throw ConfigError("fuse_conv_bn: batch-norm channels " + std::to_string(p.gamma.size()) +
                          " != convolution output channels " + std::to_string(w.c_out));
    if (p.eps <= 0.0f) throw ConfigError("fuse_conv_bn: eps must be > 0");
    ConvWeights f = w;
    f.bias.assign(size_t(w.c_out), 0.0f);
    const size_t per_out = size_t(w.c_in_per_group) * w.kh * w.kw;
    for (int co = 0; co < w.c_out; ++co) {
        const float scale = p.gamma[size_t(co)] / std::sqrt(p.running_var[size_t(co)] + p.eps);
        const float shift = p.beta[size_t(co)] - p.running_mean[size_t(co)] * scale;
        for (size_t i = 0; i < per_out; ++i) f.kernel[co * per_out + i] = w.kernel[co * per_out + i] * scale;
        const float b = w.has_bias() ? w.bias[size_t(co)] : 0.0f;
        f.bias[size_t(co)] = b * scale + shift;
    }
    return f;
}

inline Tensor relu(const Tensor& input) {
    Tensor out = input;
    float* d = out.data();
    for (int64_t i = 0, n = out.numel(); i < n; ++i) d[i] = d[i] > 0.0f ? d[i] : 0.0f;
    return out;
}

inline Tensor leaky_relu(const Tensor& input, float slope) {
    if (!(slope >= 0.0f && slope < 1.0f))
        throw ConfigError("leaky_relu: slope must be in [0, 1)");
    Tensor out = input;
    float* d = out.data();
    for (int64_t i = 0, n = out.numel(); i < n; ++i)
        if (d[i] < 0.0f) d[i] *= slope;
    return out;
}

/// Numerically stable softmax along one axis (0=n, 1=c, 2=h, 3=w).
inline Tensor softmax(const Tensor& input, int axis) {
    if (axis < 0 || axis > 3) throw ConfigError("softmax: axis must be in [0, 3]");
    const Shape s = input.shape();
    const int dims[4] = {s.n, s.c, s.h, s.w};
    const int64_t strides[4] = {int64_t(s.c) * s.h * s.w, int64_t(s.h) * s.w, s.w, 1};
    const int axis_len = dims[axis];
    const int64_t axis_stride = strides[axis];
    Tensor out(s);
    // iterate over all positions with axis index 0
    const int64_t total = s.numel();
    const float* src = input.data();
    float* dst = out.data();
    for (int64_t base = 0; base < total; ++base) {
        // decompose and skip positions that are not axis-origin
        int64_t rem = base;
        int idx[4];
        for (int d = 0; d < 4; ++d) {
            idx[d] = int(rem / strides[d]);
            rem %= strides[d];
        }
        if (idx[axis] != 0) continue;
        float mx = -std::numeric_limits<float>::infinity();
        for (int i = 0; i < axis_len; ++i) mx = std::max(mx, src[base + i * axis_stride]);
        float sum = 0.0f;
        for (int i = 0; i < axis_len; ++i) {
            const float e = std::exp(src[base + i * axis_stride] - mx);
            dst[base + i * axis_stride] = e;
            sum += e;
        }
        for (int i = 0; i < axis_len; ++i) dst[base + i * axis_stride] /= sum;
    }
    return out;
}

namespace detail {

inline void check_pool_args(const Shape& in, int k, int stride, int pad, const char* op) {
    if (k < 1) throw ConfigError(std::string(op) + ": window must be >= 1");
    if (stride < 1) throw ConfigError(std::string(op) + ": stride must be >= 1");
    if (pad < 0 || 2 * pad > k)
        throw ConfigError(std::string(op) + ": padding must satisfy 0 <= 2*pad <= window");
    if (in.h + 2 * pad < k || in.w + 2 * pad < k)
        throw ConfigError(std::string(op) + ": window " + std::to_string(k) +
                          " larger than padded input " + to_string(in));
}

}  // namespace detail

inline Tensor maxpool(const Tensor& input, int k, int stride, int pad) {
    const Shape in = input.shape();
    detail::check_pool_args(in, k, stride, pad, "maxpool");
    const int oh = (in.h + 2 * pad - k) / stride + 1;
    const int ow = (in.w + 2 * pad - k) / stride + 1;
    Tensor out({in.n, in.c, oh, ow});
    for (int n = 0; n < in.n; ++n)
        for (int c = 0; c < in.c; ++c)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    float best = -std::numeric_limits<float>::infinity();
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= in.h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= in.w) continue;
                            best = std::max(best, input.at(n, c, iy, ix));
                        }
                    }
                    out.at(n, c, oy, ox) = best;
                }
    return out;
}

/// Average pooling; the mean is taken over in-bounds elements only, so border
/// windows are not diluted by padding.
inline Tensor avgpool(const Tensor& input, int k, int stride, int pad) {
    const Shape in = input.shape();
    detail::check_pool_args(in, k, stride, pad, "avgpool");
    const int oh = (in.h + 2 * pad - k) / stride + 1;
    const int ow = (in.w + 2 * pad - k) / stride + 1;
    Tensor out({in.n, in.c, oh, ow});
    for (int n = 0; n < in.n; ++n)
        for (int c = 0; c < in.c; ++c)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    float sum = 0.0f;
                    int count = 0;
                    for (int ky = 0; ky < k; ++ky) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= in.h) continue;
                        for (int kx = 0; kx < k; ++kx) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= in.w) continue;
                            sum += input.at(n, c, iy, ix);
                            ++count;
                        }
                    }
                    out.at(n, c, oy, ox) = count > 0 ? sum / float(count) : 0.0f;
                }
    return out;
}

inline Tensor eltwise_sum(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ConfigError("eltwise_sum: shape mismatch " + to_string(a.shape()) + " vs " +
                          to_string(b.shape()));
    Tensor out = a;
    float* d = out.data();
    const float* s = b.data();
    for (int64_t i = 0, n = out.numel(); i < n; ++i) d[i] += s[i];
    return out;
}

/// Channel-axis concatenation preserving list order.
inline Tensor concat(const std::vector<const Tensor*>& inputs) {
    if (inputs.empty()) throw ConfigError("concat: empty input list");
    const Shape first = inputs[0]->shape();
    int c_total = 0;
    for (const Tensor* t : inputs) {
        const Shape s = t->shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w)
            throw ConfigError("concat: shape mismatch " + to_string(s) + " vs " + to_string(first));
        c_total += s.c;
    }
    Tensor out({first.n, c_total, first.h, first.w});
    for (int n = 0; n < first.n; ++n) {
        int c_off = 0;
        for (const Tensor* t : inputs) {
            const int64_t block = int64_t(t->shape().c) * first.h * first.w;
            std::copy(t->plane(n, 0), t->plane(n, 0) + block, out.plane(n, c_off));
            c_off += t->shape().c;
        }
    }
    return out;
}

}  // namespace posekit
