#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "posekit/heatmap.hpp"
#include "posekit/ops.hpp"
#include "posekit/tensor.hpp"

namespace testutil {

// [0,1) from the raw engine; keeps streams identical across library versions.
inline double unit(std::mt19937_64& rng) {
    return double(rng() >> 11) * (1.0 / 9007199254740992.0);
}

inline double urand(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * unit(rng);
}

inline int irand(std::mt19937_64& rng, int lo, int hi) {  // inclusive
    return lo + int(rng() % uint64_t(hi - lo + 1));
}

inline posekit::Tensor random_tensor(std::mt19937_64& rng, posekit::Shape shape, float lo = -10.0f,
                                     float hi = 10.0f) {
    posekit::Tensor t(shape);
    float* d = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) d[i] = float(urand(rng, lo, hi));
    return t;
}

inline posekit::ConvWeights random_conv_weights(std::mt19937_64& rng, int c_in, int c_out, int k,
                                                int stride, int pad, int groups, bool bias) {
    posekit::ConvWeights w;
    w.c_out = c_out;
    w.c_in_per_group = c_in / groups;
    w.kh = w.kw = k;
    w.groups = groups;
    w.stride_y = w.stride_x = stride;
    w.pad_y = w.pad_x = pad;
    w.kernel.resize(size_t(c_out) * w.c_in_per_group * k * k);
    for (float& v : w.kernel) v = float(urand(rng, -1.0, 1.0));
    if (bias) {
        w.bias.resize(size_t(c_out));
        for (float& v : w.bias) v = float(urand(rng, -1.0, 1.0));
    }
    return w;
}

inline posekit::BnParams random_bn(std::mt19937_64& rng, int c, float var_floor = 1e-3f) {
    posekit::BnParams p;
    p.gamma.resize(size_t(c));
    p.beta.resize(size_t(c));
    p.running_mean.resize(size_t(c));
    p.running_var.resize(size_t(c));
    for (int i = 0; i < c; ++i) {
        p.gamma[size_t(i)] = float(urand(rng, -2.0, 2.0));
        p.beta[size_t(i)] = float(urand(rng, -2.0, 2.0));
        p.running_mean[size_t(i)] = float(urand(rng, -2.0, 2.0));
        p.running_var[size_t(i)] = var_floor + float(urand(rng, 0.0, 4.0));
    }
    p.eps = 1e-5f;
    return p;
}

inline double max_abs_diff(const posekit::Tensor& a, const posekit::Tensor& b) {
    double m = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::fabs(double(a.data()[i]) - double(b.data()[i])));
    return m;
}

inline bool bit_identical(const posekit::Tensor& a, const posekit::Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a.data()[i] != b.data()[i] || std::signbit(a.data()[i]) != std::signbit(b.data()[i]))
            return false;
    return true;
}

inline double dot(const posekit::Tensor& a, const posekit::Tensor& b) {
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += double(a.data()[i]) * double(b.data()[i]);
    return s;
}

}  // namespace testutil
