#pragma once

#include <cmath>
#include <string>

#include "posekit/error.hpp"
#include "posekit/heatmap.hpp"

namespace posekit {

struct LossConfig {
    double alpha = 1.0;  // distillation weight
};

namespace detail {

inline void check_same_shape(const HeatmapSet& a, const HeatmapSet& b, const char* op) {
    if (a.num_kp != b.num_kp || a.h != b.h || a.w != b.w)
        throw ConfigError(std::string(op) + ": heatmap shape mismatch (" +
                          std::to_string(a.num_kp) + "," + std::to_string(a.h) + "," +
                          std::to_string(a.w) + ") vs (" + std::to_string(b.num_kp) + "," +
                          std::to_string(b.h) + "," + std::to_string(b.w) + ")");
}

}  // namespace detail

/// Mean over all K*h*w elements of (pred - target)^2, accumulated in double.
inline double mse_heatmap_loss(const HeatmapSet& pred, const HeatmapSet& target) {
    detail::check_same_shape(pred, target, "mse_heatmap_loss");
    const size_t n = pred.maps.size();
    if (n == 0) return 0.0;
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double d = double(pred.maps[i]) - double(target.maps[i]);
        sum += d * d;
    }
    return sum / double(n);
}

/// L = mse(pred, gt) + alpha * mse(pred, teacher).
inline double combined_loss(const HeatmapSet& pred, const HeatmapSet& gt,
                            const HeatmapSet& teacher, const LossConfig& cfg) {
    detail::check_same_shape(pred, gt, "combined_loss");
    detail::check_same_shape(pred, teacher, "combined_loss");
    if (!std::isfinite(cfg.alpha) || cfg.alpha < 0.0)
        throw ConfigError("combined_loss: alpha must be finite and >= 0");
    return mse_heatmap_loss(pred, gt) + cfg.alpha * mse_heatmap_loss(pred, teacher);
}

/// dL/dpred = (2/N)(pred - gt) + alpha*(2/N)(pred - teacher).
inline HeatmapSet combined_loss_grad(const HeatmapSet& pred, const HeatmapSet& gt,
                                     const HeatmapSet& teacher, const LossConfig& cfg) {
    detail::check_same_shape(pred, gt, "combined_loss_grad");
    detail::check_same_shape(pred, teacher, "combined_loss_grad");
    if (!std::isfinite(cfg.alpha) || cfg.alpha < 0.0)
        throw ConfigError("combined_loss_grad: alpha must be finite and >= 0");
    HeatmapSet grad(pred.num_kp, pred.h, pred.w);
    const double inv = pred.maps.empty() ? 0.0 : 2.0 / double(pred.maps.size());
    for (size_t i = 0; i < pred.maps.size(); ++i) {
        const double p = pred.maps[i];
        grad.maps[i] = float(inv * (p - double(gt.maps[i])) +
                             cfg.alpha * inv * (p - double(teacher.maps[i])));
    }
    return grad;
}

}  // namespace posekit
