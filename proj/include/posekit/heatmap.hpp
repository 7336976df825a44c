#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "posekit/error.hpp"
#include "posekit/tensor.hpp"

namespace posekit {

/// Per-person stack of K keypoint heatmaps.
struct HeatmapSet {
    int num_kp = 0;
    int h = 0;
    int w = 0;
    std::vector<float> maps;  // (K, h, w) row-major

    HeatmapSet() = default;
    HeatmapSet(int k, int hh, int ww)
        : num_kp(k), h(hh), w(ww), maps(size_t(k) * hh * ww, 0.0f) {}

    float& at(int k, int y, int x) { return maps[(size_t(k) * h + y) * w + x]; }
    float at(int k, int y, int x) const { return maps[(size_t(k) * h + y) * w + x]; }
    const float* map(int k) const { return maps.data() + size_t(k) * h * w; }
    float* map(int k) { return maps.data() + size_t(k) * h * w; }
};

/// Extracts image `n` of a (n, K, h, w) network output as a HeatmapSet.
inline HeatmapSet heatmaps_from_tensor(const Tensor& t, int n) {
    const Shape s = t.shape();
    HeatmapSet hs(s.c, s.h, s.w);
    std::copy(t.plane(n, 0), t.plane(n, 0) + hs.maps.size(), hs.maps.data());
    return hs;
}

struct GaussianSpec {
    double sigma = 2.0;  // heatmap pixels
};

struct KeypointTarget {
    double x = 0.0;
    double y = 0.0;
    bool visible = true;
};

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    double score = 0.0;
};

struct DecodedKeypoint {
    double x = 0.0;
    double y = 0.0;
    double score = 0.0;
    bool fallback = false;  // dark decode fell back to quarter-offset
};

struct PersonBox {
    double cx = 0.0;
    double cy = 0.0;
    double width = 0.0;
    double height = 0.0;
};

// ---------------------------------------------------------------------------
// Target encoding
// ---------------------------------------------------------------------------

/// Renders one unnormalized Gaussian per visible keypoint, peak 1 at the
/// sub-pixel center. Invisible keypoints produce all-zero maps; centers
/// outside the grid simply truncate.
inline HeatmapSet encode_gaussian_targets(const std::vector<KeypointTarget>& kps, int h, int w,
                                          const GaussianSpec& g) {
    if (h < 1 || w < 1) throw ConfigError("encode_gaussian_targets: size must be positive");
    if (!(g.sigma > 0.0)) throw ConfigError("encode_gaussian_targets: sigma must be > 0");
    HeatmapSet hs(int(kps.size()), h, w);
    const double inv = 1.0 / (2.0 * g.sigma * g.sigma);
    for (size_t k = 0; k < kps.size(); ++k) {
        const KeypointTarget& kp = kps[k];
        if (!kp.visible) continue;
        if (!std::isfinite(kp.x) || !std::isfinite(kp.y))
            throw ConfigError("encode_gaussian_targets: non-finite keypoint coordinates");
        for (int y = 0; y < h; ++y) {
            const double dy = y - kp.y;
            for (int x = 0; x < w; ++x) {
                const double dx = x - kp.x;
                hs.at(int(k), y, x) = float(std::exp(-(dx * dx + dy * dy) * inv));
            }
        }
    }
    return hs;
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

namespace detail {

struct Peak {
    int x = 0;
    int y = 0;
    float value = 0.0f;
};

// First maximum in row-major scan order (deterministic tie-break).
inline Peak find_peak(const float* m, int h, int w) {
    Peak p;
    p.value = m[0];
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float v = m[size_t(y) * w + x];
            if (v > p.value) p = {x, y, v};
        }
    return p;
}

inline double clamp_score(double v) { return std::min(1.0, std::max(0.0, v)); }

inline DecodedKeypoint quarter_decode_map(const float* m, int h, int w) {
    const Peak p = find_peak(m, h, w);
    auto value = [&](int y, int x) -> float {
        return (x < 0 || x >= w || y < 0 || y >= h) ? 0.0f : m[size_t(y) * w + x];
    };
    DecodedKeypoint out;
    out.x = p.x;
    out.y = p.y;
    out.score = clamp_score(p.value);
    const float xr = value(p.y, p.x + 1), xl = value(p.y, p.x - 1);
    if (xr > xl) out.x += 0.25;
    else if (xr < xl) out.x -= 0.25;
    const float yd = value(p.y + 1, p.x), yu = value(p.y - 1, p.x);
    if (yd > yu) out.y += 0.25;
    else if (yd < yu) out.y -= 0.25;
    return out;
}

// Zero-padded separable Gaussian blur, kernel truncated at ceil(3*sigma),
// then rescaled so the blurred peak matches the original peak.
inline std::vector<double> modulate_map(const float* m, int h, int w, double sigma) {
    const int r = int(std::ceil(3.0 * sigma));
    std::vector<double> kernel(size_t(2 * r + 1));
    for (int i = -r; i <= r; ++i) kernel[size_t(i + r)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    double ksum = 0.0;
    for (double v : kernel) ksum += v;
    for (double& v : kernel) v /= ksum;

    std::vector<double> tmp(size_t(h) * w, 0.0), out(size_t(h) * w, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) {
                const int xx = x + i;
                if (xx < 0 || xx >= w) continue;
                acc += kernel[size_t(i + r)] * m[size_t(y) * w + xx];
            }
            tmp[size_t(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int i = -r; i <= r; ++i) {
                const int yy = y + i;
                if (yy < 0 || yy >= h) continue;
                acc += kernel[size_t(i + r)] * tmp[size_t(yy) * w + x];
            }
            out[size_t(y) * w + x] = acc;
        }

    double orig_max = m[0], new_max = out[0];
    for (int64_t i = 0; i < int64_t(h) * w; ++i) {
        orig_max = std::max(orig_max, double(m[i]));
        new_max = std::max(new_max, out[i]);
    }
    if (new_max > 0.0) {
        const double s = orig_max / new_max;
        for (double& v : out) v *= s;
    }
    return out;
}

}  // namespace detail

/// Integer argmax plus a quarter-pixel shift toward the larger neighbor on
/// each axis; equal neighbors (including out-of-bounds, read as zero) shift
/// nothing. Scores are the clamped peak values.
inline std::vector<DecodedKeypoint> decode_argmax_quarter(const HeatmapSet& hs) {
    if (hs.h < 2 || hs.w < 2)
        throw ConfigError("decode_argmax_quarter: maps must be at least 2x2");
    std::vector<DecodedKeypoint> out(size_t(hs.num_kp));
    for (int k = 0; k < hs.num_kp; ++k) out[size_t(k)] = detail::quarter_decode_map(hs.map(k), hs.h, hs.w);
    return out;
}

/// Distribution-aware sub-pixel decode: Gaussian modulation at the training
/// sigma, log transform, then one Newton step from the argmax using central
/// finite differences. Border peaks and non-concave stencils fall back to the
/// quarter-offset decode with the fallback flag set.
inline std::vector<DecodedKeypoint> decode_dark(const HeatmapSet& hs, const GaussianSpec& g) {
    if (hs.h < 3 || hs.w < 3) throw ConfigError("decode_dark: maps must be at least 3x3");
    if (!(g.sigma > 0.0)) throw ConfigError("decode_dark: sigma must be > 0");
    std::vector<DecodedKeypoint> out(size_t(hs.num_kp));
    for (int k = 0; k < hs.num_kp; ++k) {
        const float* m = hs.map(k);
        const double score = detail::clamp_score(detail::find_peak(m, hs.h, hs.w).value);
        const std::vector<double> smooth = detail::modulate_map(m, hs.h, hs.w, g.sigma);

        int px = 0, py = 0;
        double best = smooth[0];
        for (int y = 0; y < hs.h; ++y)
            for (int x = 0; x < hs.w; ++x)
                if (smooth[size_t(y) * hs.w + x] > best) {
                    best = smooth[size_t(y) * hs.w + x];
                    px = x;
                    py = y;
                }

        auto fallback = [&]() {
            DecodedKeypoint q = detail::quarter_decode_map(m, hs.h, hs.w);
            q.fallback = true;
            q.score = score;
            return q;
        };
        if (px < 1 || px >= hs.w - 1 || py < 1 || py >= hs.h - 1) {
            out[size_t(k)] = fallback();
            continue;
        }

        auto L = [&](int y, int x) {
            return std::log(std::max(smooth[size_t(y) * hs.w + x], 1e-10));
        };
        const double dx = 0.5 * (L(py, px + 1) - L(py, px - 1));
        const double dy = 0.5 * (L(py + 1, px) - L(py - 1, px));
        const double dxx = L(py, px + 1) - 2.0 * L(py, px) + L(py, px - 1);
        const double dyy = L(py + 1, px) - 2.0 * L(py, px) + L(py - 1, px);
        const double dxy =
            0.25 * (L(py + 1, px + 1) - L(py + 1, px - 1) - L(py - 1, px + 1) + L(py - 1, px - 1));
        const double det = dxx * dyy - dxy * dxy;
        if (det == 0.0 || dxx >= 0.0 || dyy >= 0.0) {
            out[size_t(k)] = fallback();
            continue;
        }
        // offset = -H^{-1} D
        const double ox = -(dyy * dx - dxy * dy) / det;
        const double oy = -(dxx * dy - dxy * dx) / det;
        out[size_t(k)] = {px + ox, py + oy, score, false};
    }
    return out;
}

// ---------------------------------------------------------------------------
// Image <-> model-input coordinate mapping
// ---------------------------------------------------------------------------

/// Row-major 2x3 affine map.
struct AffineTransform {
    double m[6] = {1, 0, 0, 0, 1, 0};

    void apply(double x, double y, double& ox, double& oy) const {
        ox = m[0] * x + m[1] * y + m[2];
        oy = m[3] * x + m[4] * y + m[5];
    }

    AffineTransform inverse() const {
        const double det = m[0] * m[4] - m[1] * m[3];
        if (std::abs(det) < 1e-12) throw ConfigError("affine transform is not invertible");
        AffineTransform inv;
        inv.m[0] = m[4] / det;
        inv.m[1] = -m[1] / det;
        inv.m[3] = -m[3] / det;
        inv.m[4] = m[0] / det;
        inv.m[2] = -(inv.m[0] * m[2] + inv.m[1] * m[5]);
        inv.m[5] = -(inv.m[3] * m[2] + inv.m[4] * m[5]);
        return inv;
    }
};

/// Expands the box to the model input aspect ratio by growing the short
/// side, scales it by `margin` about its center, and maps that region onto
/// [0,w) x [0,h). No rotation; the scale is isotropic by construction.
inline AffineTransform box_to_input_transform(const PersonBox& b, int input_h, int input_w,
                                              double margin = 1.25) {
    if (!(b.width > 0.0) || !(b.height > 0.0))
        throw ConfigError("box_to_input_transform: degenerate box");
    if (!(margin >= 1.0)) throw ConfigError("box_to_input_transform: margin must be >= 1");
    const double aspect = double(input_w) / double(input_h);
    double rw = b.width, rh = b.height;
    if (rw / rh < aspect) rw = rh * aspect;
    else rh = rw / aspect;
    rw *= margin;
    rh *= margin;
    AffineTransform t;
    const double sx = input_w / rw;
    const double sy = input_h / rh;
    t.m[0] = sx;
    t.m[1] = 0.0;
    t.m[2] = -(b.cx - rw / 2.0) * sx;
    t.m[3] = 0.0;
    t.m[4] = sy;
    t.m[5] = -(b.cy - rh / 2.0) * sy;
    return t;
}

/// Maps decoded heatmap-grid keypoints back to image space. Heatmap cell
/// (i, j) represents model-input location (stride*j + stride/2 - 0.5,
/// stride*i + stride/2 - 0.5); that point is pulled back through the inverse
/// of the image->input transform.
inline std::vector<Keypoint> heatmap_to_image_coords(const std::vector<DecodedKeypoint>& kps,
                                                     const AffineTransform& t, int stride = 4) {
    const AffineTransform inv = t.inverse();
    std::vector<Keypoint> out(kps.size());
    const double half = stride / 2.0 - 0.5;
    for (size_t i = 0; i < kps.size(); ++i) {
        double ix, iy;
        inv.apply(stride * kps[i].x + half, stride * kps[i].y + half, ix, iy);
        out[i] = {ix, iy, kps[i].score};
    }
    return out;
}

}  // namespace posekit
