#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "posekit/error.hpp"
#include "posekit/infer.hpp"
#include "posekit/tensor.hpp"

namespace posekit {

// ---------------------------------------------------------------------------
// FP16 simulation
// ---------------------------------------------------------------------------

namespace detail {

inline uint16_t f32_bits_to_f16_bits(uint32_t x) {
    const uint16_t sign = uint16_t((x >> 16) & 0x8000);
    const int32_t e = int32_t((x >> 23) & 0xff);
    uint32_t m = x & 0x7fffff;
    if (e == 255) return uint16_t(sign | 0x7c00 | (m ? 0x200 | (m >> 13) : 0));
    int32_t ne = e - 127 + 15;
    if (ne >= 31) return uint16_t(sign | 0x7c00);
    if (ne <= 0) {
        if (ne < -10) return sign;  // underflows to zero even after rounding
        m |= 0x800000;
        const int shift = 14 - ne;
        uint32_t q = m >> shift;
        const uint32_t rem = m & ((1u << shift) - 1);
        const uint32_t half = 1u << (shift - 1);
        if (rem > half || (rem == half && (q & 1))) ++q;  // round to nearest even
        return uint16_t(sign | q);
    }
    uint32_t q = m >> 13;
    const uint32_t rem = m & 0x1fff;
    if (rem > 0x1000 || (rem == 0x1000 && (q & 1))) {
        ++q;
        if (q == 0x400) {
            q = 0;
            if (++ne >= 31) return uint16_t(sign | 0x7c00);
        }
    }
    return uint16_t(sign | uint16_t(ne << 10) | uint16_t(q));
}

inline uint32_t f16_bits_to_f32_bits(uint16_t h) {
    const uint32_t sign = uint32_t(h & 0x8000) << 16;
    uint32_t e = (h >> 10) & 0x1f;
    uint32_t m = h & 0x3ff;
    if (e == 0) {
        if (m == 0) return sign;
        int exp = -14;
        while (!(m & 0x400)) {
            m <<= 1;
            --exp;
        }
        m &= 0x3ff;
        return sign | uint32_t(exp + 127) << 23 | (m << 13);
    }
    if (e == 31) return sign | 0x7f800000 | (m << 13);
    return sign | uint32_t(e - 15 + 127) << 23 | (m << 13);
}

}  // namespace detail

/// Rounds to the nearest half-precision value (round-to-nearest-even,
/// subnormals preserved) and widens back to fp32. Finite inputs that
/// overflow half precision are a numeric fault rather than +-inf.
inline float fp16_round(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    const uint16_t h = detail::f32_bits_to_f16_bits(bits);
    const uint32_t back = detail::f16_bits_to_f32_bits(h);
    float out;
    std::memcpy(&out, &back, 4);
    if (std::isfinite(v) && !std::isfinite(out))
        throw NumericError("fp16 overflow: |" + std::to_string(v) + "| exceeds 65504");
    return out;
}

inline Tensor fp16_round(const Tensor& t) {
    Tensor out = t;
    float* d = out.data();
    for (int64_t i = 0, n = out.numel(); i < n; ++i) {
        uint32_t bits;
        std::memcpy(&bits, &d[i], 4);
        const uint32_t back = detail::f16_bits_to_f32_bits(detail::f32_bits_to_f16_bits(bits));
        float v;
        std::memcpy(&v, &back, 4);
        if (std::isfinite(d[i]) && !std::isfinite(v))
            throw NumericError("fp16 overflow at element " + std::to_string(i));
        d[i] = v;
    }
    return out;
}

// ---------------------------------------------------------------------------
// INT8 symmetric quantization
// ---------------------------------------------------------------------------

/// Symmetric per-tensor scale; zero point fixed at 0, representable range
/// [-127, 127] (-128 is never produced).
struct QuantParams {
    float scale = 1.0f;
};

inline QuantParams calibrate_maxabs(const std::vector<const Tensor*>& samples) {
    if (samples.empty()) throw ConfigError("calibrate_maxabs: empty sample list");
    float maxabs = 0.0f;
    for (const Tensor* t : samples) {
        const float* d = t->data();
        for (int64_t i = 0, n = t->numel(); i < n; ++i) maxabs = std::max(maxabs, std::fabs(d[i]));
    }
    return {maxabs > 0.0f ? maxabs / 127.0f : 1.0f};
}

inline int8_t quantize_value(float x, const QuantParams& q) {
    const long v = std::lround(double(x) / double(q.scale));  // half away from zero
    return int8_t(std::clamp<long>(v, -127, 127));
}

/// Exact dequantized value n*scale. Tensor-level dequantization stores the
/// nearest f32 of this product.
inline double dequantize_value(int8_t n, const QuantParams& q) {
    return double(n) * double(q.scale);
}

inline std::vector<int8_t> quantize_tensor(const Tensor& t, const QuantParams& q) {
    std::vector<int8_t> out(size_t(t.numel()));
    const float* d = t.data();
    for (size_t i = 0; i < out.size(); ++i) out[i] = quantize_value(d[i], q);
    return out;
}

inline Tensor dequantize_tensor(const std::vector<int8_t>& a, const QuantParams& q, Shape shape) {
    if (int64_t(a.size()) != shape.numel())
        throw ConfigError("dequantize_tensor: data length does not match shape");
    Tensor out(shape);
    float* d = out.data();
    for (size_t i = 0; i < a.size(); ++i) d[i] = float(double(a[i]) * double(q.scale));
    return out;
}

struct Int8Tensor {
    Shape shape;
    std::vector<int8_t> data;
};

/// Integer convolution weights: same geometry fields as ConvWeights, int8
/// kernel, bias held as int32 at scale input_scale * weight_scale.
struct Int8ConvWeights {
    int c_out = 0;
    int c_in_per_group = 0;
    int kh = 0, kw = 0;
    int groups = 1;
    int stride_y = 1, stride_x = 1;
    int pad_y = 0, pad_x = 0;
    std::vector<int8_t> kernel;
    std::vector<int32_t> bias;

    size_t kidx(int co, int ci, int ky, int kx) const {
        return ((size_t(co) * c_in_per_group + ci) * kh + ky) * kw + kx;
    }
};

namespace detail {

inline int8_t requantize(int64_t acc, double multiplier) {
    if (acc > std::numeric_limits<int32_t>::max() || acc < std::numeric_limits<int32_t>::min())
        throw NumericError("int8 accumulator overflow");
    const long long v = std::llround(double(acc) * multiplier);  // half away from zero
    return int8_t(std::clamp<long long>(v, -127, 127));
}

}  // namespace detail

/// int8 x int8 convolution with 32-bit integer accumulation and
/// deterministic requantization to out_qp. Integer math is exact, so the
/// result is bit-identical across runs, platforms, and loop orderings.
inline Int8Tensor quantized_conv2d(const Int8Tensor& input, const Int8ConvWeights& w,
                                   QuantParams input_qp, QuantParams w_qp, QuantParams out_qp) {
    const Shape in = input.shape;
    if (in.c != w.groups * w.c_in_per_group)
        throw ConfigError("quantized_conv2d: channel/group mismatch");
    const int oh = (in.h + 2 * w.pad_y - w.kh) / w.stride_y + 1;
    const int ow = (in.w + 2 * w.pad_x - w.kw) / w.stride_x + 1;
    if (oh < 1 || ow < 1) throw ConfigError("quantized_conv2d: non-positive output size");
    Int8Tensor out{{in.n, w.c_out, oh, ow}, {}};
    out.data.resize(size_t(out.shape.numel()));
    const double mult = double(input_qp.scale) * double(w_qp.scale) / double(out_qp.scale);
    const int cog = w.c_out / w.groups;
    auto in_at = [&](int n, int c, int y, int x) {
        return input.data[((size_t(n) * in.c + c) * in.h + y) * in.w + x];
    };
    for (int n = 0; n < in.n; ++n)
        for (int co = 0; co < w.c_out; ++co) {
            const int g = co / cog;
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    int64_t acc = w.bias.empty() ? 0 : w.bias[size_t(co)];
                    for (int ky = 0; ky < w.kh; ++ky) {
                        const int iy = oy * w.stride_y - w.pad_y + ky;
                        if (iy < 0 || iy >= in.h) continue;
                        for (int kx = 0; kx < w.kw; ++kx) {
                            const int ix = ox * w.stride_x - w.pad_x + kx;
                            if (ix < 0 || ix >= in.w) continue;
                            for (int ci = 0; ci < w.c_in_per_group; ++ci)
                                acc += int32_t(w.kernel[w.kidx(co, ci, ky, kx)]) *
                                       int32_t(in_at(n, g * w.c_in_per_group + ci, iy, ix));
                        }
                    }
                    out.data[((size_t(n) * w.c_out + co) * oh + oy) * ow + ox] =
                        detail::requantize(acc, mult);
                }
        }
    return out;
}

/// int8 transposed convolution (gather form), mirroring deconv2d.
inline Int8Tensor quantized_deconv2d(const Int8Tensor& input, const Int8ConvWeights& w,
                                     QuantParams input_qp, QuantParams w_qp, QuantParams out_qp) {
    const Shape in = input.shape;
    if (w.groups != 1) throw ConfigError("quantized_deconv2d: groups unsupported");
    if (in.c != w.c_in_per_group) throw ConfigError("quantized_deconv2d: channel mismatch");
    const int oh = (in.h - 1) * w.stride_y - 2 * w.pad_y + w.kh;
    const int ow = (in.w - 1) * w.stride_x - 2 * w.pad_x + w.kw;
    if (oh < 1 || ow < 1) throw ConfigError("quantized_deconv2d: non-positive output size");
    Int8Tensor out{{in.n, w.c_out, oh, ow}, {}};
    out.data.resize(size_t(out.shape.numel()));
    const double mult = double(input_qp.scale) * double(w_qp.scale) / double(out_qp.scale);
    auto in_at = [&](int n, int c, int y, int x) {
        return input.data[((size_t(n) * in.c + c) * in.h + y) * in.w + x];
    };
    for (int n = 0; n < in.n; ++n)
        for (int co = 0; co < w.c_out; ++co)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    int64_t acc = w.bias.empty() ? 0 : w.bias[size_t(co)];
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
                                acc += int32_t(w.kernel[w.kidx(co, ci, ky, kx)]) *
                                       int32_t(in_at(n, ci, iy, ix));
                        }
                    }
                    out.data[((size_t(n) * w.c_out + co) * oh + oy) * ow + ox] =
                        detail::requantize(acc, mult);
                }
    return out;
}

// ---------------------------------------------------------------------------
// Whole-model post-training quantization
// ---------------------------------------------------------------------------

/// Folded graph plus per-layer weight scales and per-edge activation scales.
/// Edge scales are indexed by node position in `model.graph`.
struct QuantizedModel {
    FoldedModel model;
    std::map<std::string, QuantParams> weight_scales;
    std::map<std::string, Int8ConvWeights> int8_weights;  // bias filled lazily per edge scale
    std::vector<QuantParams> edge_scales;
    QuantParams input_scale;
};

/// Calibrates activation ranges with float forward passes over `calib`,
/// folds batch-norm into convolutions, and quantizes weights with max-abs
/// per-tensor scales.
inline QuantizedModel quantize_model(const Graph& g, const WeightStore& ws,
                                     const std::vector<Tensor>& calib, int threads = 1) {
    if (calib.empty()) throw ConfigError("quantize_model: empty calibration set");
    QuantizedModel qm;
    qm.model = fold_batchnorm(g, ws);
    const Graph& fg = qm.model.graph;

    std::vector<float> edge_max(fg.nodes.size(), 0.0f);
    float input_max = 0.0f;
    InferOptions opts;
    opts.threads = threads;
    for (const Tensor& t : calib) {
        const float* d = t.data();
        for (int64_t i = 0, n = t.numel(); i < n; ++i) input_max = std::max(input_max, std::fabs(d[i]));
        infer(fg, qm.model.weights, t, opts,
              [&](int idx, const GraphNode&, const Tensor& out) {
                  const float* od = out.data();
                  for (int64_t i = 0, n = out.numel(); i < n; ++i)
                      edge_max[size_t(idx)] = std::max(edge_max[size_t(idx)], std::fabs(od[i]));
              });
    }
    qm.input_scale = {input_max > 0.0f ? input_max / 127.0f : 1.0f};
    qm.edge_scales.resize(fg.nodes.size());
    for (size_t i = 0; i < fg.nodes.size(); ++i)
        qm.edge_scales[i] = {edge_max[i] > 0.0f ? edge_max[i] / 127.0f : 1.0f};
    // ReLU and max-pooling keep their producer's scale: both then act exactly
    // on the integer grid instead of resampling it.
    for (size_t i = 0; i < fg.nodes.size(); ++i) {
        const GraphNode& n = fg.nodes[i];
        if (n.kind == LayerKind::ReLU || n.kind == LayerKind::MaxPool) {
            const int p = n.inputs[0];
            qm.edge_scales[i] = p == kGraphInput ? qm.input_scale : qm.edge_scales[size_t(p)];
        }
    }

    for (size_t i = 0; i < fg.nodes.size(); ++i) {
        const GraphNode& n = fg.nodes[i];
        if (!n.is_conv_like()) continue;
        const ParamArray& w = qm.model.weights.get(n.id, "weight");
        float wmax = 0.0f;
        for (float v : w.data) wmax = std::max(wmax, std::fabs(v));
        const QuantParams wqp{wmax > 0.0f ? wmax / 127.0f : 1.0f};
        qm.weight_scales[n.id] = wqp;

        Int8ConvWeights iw;
        iw.c_out = w.shape[0];
        iw.c_in_per_group = w.shape[1];
        iw.kh = w.shape[2];
        iw.kw = w.shape[3];
        iw.groups = n.groups;
        iw.stride_y = iw.stride_x = n.stride;
        iw.pad_y = iw.pad_x = n.pad;
        iw.kernel.resize(w.data.size());
        for (size_t j = 0; j < w.data.size(); ++j) iw.kernel[j] = quantize_value(w.data[j], wqp);

        const float in_scale =
            n.inputs[0] == kGraphInput ? qm.input_scale.scale : qm.edge_scales[size_t(n.inputs[0])].scale;
        const ParamArray& b = qm.model.weights.get(n.id, "bias");
        iw.bias.resize(b.data.size());
        const double bias_scale = double(in_scale) * double(wqp.scale);
        for (size_t j = 0; j < b.data.size(); ++j)
            iw.bias[j] = int32_t(std::llround(double(b.data[j]) / bias_scale));
        qm.int8_weights[n.id] = std::move(iw);
    }
    return qm;
}

/// Simulated int8 forward pass. Convolutions run in integer arithmetic;
/// ReLU and max-pooling act directly on the int8 grid (zero point 0);
/// everything else dequantizes, runs in fp32, and requantizes to the edge
/// scale. Returns the dequantized network output.
inline Tensor run_int8(const QuantizedModel& qm, const Tensor& input,
                       const NodeHook& hook = nullptr) {
    const Graph& g = qm.model.graph;
    if (input.shape().n != 1)
        throw ConfigError("run_int8: single-image batches only");

    std::vector<Int8Tensor> values(g.nodes.size());
    Int8Tensor in_q{input.shape(), quantize_tensor(input, qm.input_scale)};

    auto edge_qp = [&](int idx) {
        return idx == kGraphInput ? qm.input_scale : qm.edge_scales[size_t(idx)];
    };
    auto arg = [&](const GraphNode& n, int i) -> const Int8Tensor& {
        const int idx = n.inputs[size_t(i)];
        return idx == kGraphInput ? in_q : values[size_t(idx)];
    };
    auto arg_float = [&](const GraphNode& n, int i) {
        const int idx = n.inputs[size_t(i)];
        const Int8Tensor& t = arg(n, i);
        return dequantize_tensor(t.data, edge_qp(idx), t.shape);
    };

    for (size_t i = 0; i < g.nodes.size(); ++i) {
        const GraphNode& n = g.nodes[i];
        const QuantParams out_qp = qm.edge_scales[i];
        Int8Tensor out;
        switch (n.kind) {
            case LayerKind::Conv:
                out = quantized_conv2d(arg(n, 0), qm.int8_weights.at(n.id),
                                       edge_qp(n.inputs[0]), qm.weight_scales.at(n.id), out_qp);
                break;
            case LayerKind::Deconv:
                out = quantized_deconv2d(arg(n, 0), qm.int8_weights.at(n.id),
                                         edge_qp(n.inputs[0]), qm.weight_scales.at(n.id), out_qp);
                break;
            case LayerKind::ReLU: {
                out = arg(n, 0);  // shares the producer scale; zero point is 0
                for (int8_t& v : out.data) v = std::max<int8_t>(v, 0);
                break;
            }
            case LayerKind::MaxPool: {
                const Int8Tensor& src = arg(n, 0);
                const Shape is = src.shape;
                const int oh = (is.h + 2 * n.pad - n.kernel) / n.stride + 1;
                const int ow = (is.w + 2 * n.pad - n.kernel) / n.stride + 1;
                out = {{is.n, is.c, oh, ow}, {}};
                out.data.resize(size_t(out.shape.numel()));
                for (int b = 0; b < is.n; ++b)
                    for (int c = 0; c < is.c; ++c)
                        for (int oy = 0; oy < oh; ++oy)
                            for (int ox = 0; ox < ow; ++ox) {
                                int best = std::numeric_limits<int>::min();
                                for (int ky = 0; ky < n.kernel; ++ky) {
                                    const int iy = oy * n.stride - n.pad + ky;
                                    if (iy < 0 || iy >= is.h) continue;
                                    for (int kx = 0; kx < n.kernel; ++kx) {
                                        const int ix = ox * n.stride - n.pad + kx;
                                        if (ix < 0 || ix >= is.w) continue;
                                        best = std::max<int>(
                                            best,
                                            src.data[((size_t(b) * is.c + c) * is.h + iy) * is.w + ix]);
                                    }
                                }
                                out.data[((size_t(b) * is.c + c) * oh + oy) * ow + ox] =
                                    int8_t(best);
                            }
                break;
            }
            default: {
                Tensor f;
                switch (n.kind) {
                    case LayerKind::BatchNorm: {
                        f = batchnorm_inference(arg_float(n, 0),
                                                bn_params_for(n, qm.model.weights));
                        break;
                    }
                    case LayerKind::LeakyReLU: f = leaky_relu(arg_float(n, 0), n.slope); break;
                    case LayerKind::Softmax: f = softmax(arg_float(n, 0), n.axis); break;
                    case LayerKind::AvgPool: f = avgpool(arg_float(n, 0), n.kernel, n.stride, n.pad); break;
                    case LayerKind::EltwiseSum: f = eltwise_sum(arg_float(n, 0), arg_float(n, 1)); break;
                    case LayerKind::Concat: {
                        std::vector<Tensor> hold;
                        hold.reserve(n.inputs.size());
                        for (size_t j = 0; j < n.inputs.size(); ++j) hold.push_back(arg_float(n, int(j)));
                        std::vector<const Tensor*> ptrs;
                        for (const Tensor& t : hold) ptrs.push_back(&t);
                        f = concat(ptrs);
                        break;
                    }
                    default: throw ConfigError("run_int8: unsupported layer " + n.id);
                }
                out = {f.shape(), quantize_tensor(f, out_qp)};
            }
        }
        if (hook) {
            Tensor deq = dequantize_tensor(out.data, out_qp, out.shape);
            hook(int(i), n, deq);
        }
        values[i] = std::move(out);
    }
    const Int8Tensor& fin = values[size_t(g.output)];
    return dequantize_tensor(fin.data, qm.edge_scales[size_t(g.output)], fin.shape);
}

/// FP16-simulated forward pass: weights rounded once, every layer output
/// rounded to half precision; accumulation stays fp32.
inline Tensor run_fp16(const FoldedModel& fm, const Tensor& input, const NodeHook& hook = nullptr,
                       int threads = 1) {
    WeightStore ws16 = fm.weights;
    for (auto& [layer, params] : ws16.layers)
        for (auto& [name, arr] : params)
            for (float& v : arr.data) v = fp16_round(v);

    const Graph& g = fm.graph;
    Tensor in16 = fp16_round(input);
    std::vector<std::optional<Tensor>> values(g.nodes.size());
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        const GraphNode& n = g.nodes[i];
        Tensor out = fp16_round(detail::eval_node(g, n, ws16, values, in16, threads));
        if (hook) hook(int(i), n, out);
        values[i] = std::move(out);
    }
    return *values[size_t(g.output)];
}

// ---------------------------------------------------------------------------
// Precision comparison (FP32 vs FP16 vs INT8)
// ---------------------------------------------------------------------------

struct LayerError {
    std::string id;
    double max_abs = 0.0;
    double mean_abs = 0.0;
};

struct PrecisionReport {
    LayerError fp16_output;  // network output, fp16 path vs fp32
    LayerError int8_output;
    std::vector<LayerError> fp16_layers;
    std::vector<LayerError> int8_layers;
};

namespace detail {

inline void accumulate_error(LayerError& e, const Tensor& ref, const Tensor& got, int64_t& count) {
    const float* a = ref.data();
    const float* b = got.data();
    for (int64_t i = 0, n = ref.numel(); i < n; ++i) {
        const double d = std::fabs(double(a[i]) - double(b[i]));
        e.max_abs = std::max(e.max_abs, d);
        e.mean_abs += d;  // finalized by caller
        ++count;
    }
}

}  // namespace detail

/// Runs the three precision paths over `inputs` and reports elementwise
/// deviation of FP16 and INT8 from the FP32 (folded) reference, per layer
/// and at the network output.
inline PrecisionReport compare_outputs(const Graph& g, const WeightStore& ws,
                                       const QuantizedModel& qm, const std::vector<Tensor>& inputs,
                                       int threads = 1) {
    PrecisionReport rep;
    const Graph& fg = qm.model.graph;
    rep.fp16_layers.resize(fg.nodes.size());
    rep.int8_layers.resize(fg.nodes.size());
    for (size_t i = 0; i < fg.nodes.size(); ++i) {
        rep.fp16_layers[i].id = fg.nodes[i].id;
        rep.int8_layers[i].id = fg.nodes[i].id;
    }
    std::vector<int64_t> fp16_counts(fg.nodes.size(), 0), int8_counts(fg.nodes.size(), 0);
    int64_t out16_count = 0, out8_count = 0;

    InferOptions opts;
    opts.threads = threads;
    FoldedModel fm = fold_batchnorm(g, ws);
    for (const Tensor& input : inputs) {
        std::vector<Tensor> ref(fg.nodes.size());
        Tensor ref_out = infer(fm.graph, fm.weights, input, opts,
                               [&](int idx, const GraphNode&, const Tensor& t) { ref[size_t(idx)] = t; });

        Tensor out16 = run_fp16(fm, input,
                                [&](int idx, const GraphNode&, const Tensor& t) {
                                    detail::accumulate_error(rep.fp16_layers[size_t(idx)],
                                                             ref[size_t(idx)], t,
                                                             fp16_counts[size_t(idx)]);
                                },
                                threads);
        detail::accumulate_error(rep.fp16_output, ref_out, out16, out16_count);

        Tensor out8 = run_int8(qm, input, [&](int idx, const GraphNode&, const Tensor& t) {
            detail::accumulate_error(rep.int8_layers[size_t(idx)], ref[size_t(idx)], t,
                                     int8_counts[size_t(idx)]);
        });
        detail::accumulate_error(rep.int8_output, ref_out, out8, out8_count);
    }
    for (size_t i = 0; i < fg.nodes.size(); ++i) {
        if (fp16_counts[i]) rep.fp16_layers[i].mean_abs /= double(fp16_counts[i]);
        if (int8_counts[i]) rep.int8_layers[i].mean_abs /= double(int8_counts[i]);
    }
    if (out16_count) rep.fp16_output.mean_abs /= double(out16_count);
    if (out8_count) rep.int8_output.mean_abs /= double(out8_count);
    return rep;
}

// ---------------------------------------------------------------------------
// Quantization sidecar (scales only; int8 payloads are reproducible from the
// float weights and these scales)
// ---------------------------------------------------------------------------

inline void save_quantization_sidecar(const QuantizedModel& qm, const std::string& path) {
    nlohmann::json j;
    j["format"] = "posekit-quant";
    j["version"] = 1;
    j["input_scale"] = qm.input_scale.scale;
    nlohmann::json weights = nlohmann::json::array();
    for (const auto& [layer, qp] : qm.weight_scales)
        weights.push_back({{"layer_id", layer}, {"scale", qp.scale}});
    j["weight_scales"] = weights;
    nlohmann::json edges = nlohmann::json::array();
    for (size_t i = 0; i < qm.edge_scales.size(); ++i)
        edges.push_back({{"node", qm.model.graph.nodes[i].id}, {"scale", qm.edge_scales[i].scale}});
    j["edge_scales"] = edges;
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << j.dump(2) << "\n";
    if (!os) throw IoError("write failed: " + path);
}

}  // namespace posekit
