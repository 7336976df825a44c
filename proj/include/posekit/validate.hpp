#pragma once

#include <string>
#include <vector>

#include "posekit/config.hpp"
#include "posekit/graph.hpp"

namespace posekit {

enum class DiagLevel { Warning, Error };

struct Diagnostic {
    DiagLevel level = DiagLevel::Warning;
    std::string rule;
    std::string message;
};

namespace detail {

inline void diag_error(std::vector<Diagnostic>& out, const std::string& rule,
                       const std::string& msg) {
    out.push_back({DiagLevel::Error, rule, msg});
}

inline void diag_warn(std::vector<Diagnostic>& out, const std::string& rule,
                      const std::string& msg) {
    out.push_back({DiagLevel::Warning, rule, msg});
}

inline bool stage_kernel_ok(int k) { return k == 1 || k == 3 || k == 5; }

}  // namespace detail

/// Checks a configuration against the embeddable-architecture rules.
/// Structural impossibilities come back as errors; hardware-efficiency
/// violations (channel alignment, per-kernel channel caps, unfusable
/// normalization) as warnings. The final heatmap layer is exempt from the
/// channel rules: its width is the keypoint count.
inline std::vector<Diagnostic> validate_config(const ModelConfig& cfg) {
    using detail::diag_error;
    using detail::diag_warn;
    std::vector<Diagnostic> out;
    const EncoderSpec& e = cfg.encoder;

    if (e.activation != "relu" && e.activation != "leaky_relu")
        diag_error(out, "vocabulary",
                   "layer stem.act: activation '" + e.activation +
                       "' is not an available layer (use relu or leaky_relu)");
    if (e.activation == "leaky_relu" && !(e.leaky_slope >= 0.0f && e.leaky_slope < 1.0f))
        diag_error(out, "vocabulary", "leaky_relu slope must be in [0, 1)");

    if (e.stages.empty()) diag_error(out, "structure", "encoder has no stages");
    if (e.stem_channels < 1) diag_error(out, "structure", "stem_channels must be >= 1");
    if (!detail::stage_kernel_ok(e.stem_kernel))
        diag_error(out, "vocabulary",
                   "layer stem.conv: kernel " + std::to_string(e.stem_kernel) +
                       " not supported (use 1, 3, or 5)");
    if (e.final_channels < 0) diag_error(out, "structure", "final_channels must be >= 0");

    for (size_t i = 0; i < e.stages.size(); ++i) {
        const StageSpec& s = e.stages[i];
        const std::string where = "encoder stage " + std::to_string(i + 1);
        if (!detail::stage_kernel_ok(s.kernel))
            diag_error(out, "vocabulary",
                       where + ": kernel " + std::to_string(s.kernel) +
                           " not supported (use 1, 3, or 5)");
        if (s.stride != 1 && s.stride != 2)
            diag_error(out, "structure", where + ": stride must be 1 or 2");
        if (s.channels < 1) diag_error(out, "structure", where + ": channels must be >= 1");
        if (s.expand < 1) diag_error(out, "structure", where + ": expand must be >= 1");
        if (s.repeats < 1) diag_error(out, "structure", where + ": repeats must be >= 1");
    }

    if (cfg.deconv_channels.empty() || cfg.deconv_channels.size() > 4)
        diag_error(out, "structure",
                   "deconvolution level count " + std::to_string(cfg.deconv_channels.size()) +
                       " outside [1, 4]");
    for (int c : cfg.deconv_channels)
        if (c < 1) diag_error(out, "structure", "deconvolution channels must be >= 1");
    if (cfg.head_channels < 0) diag_error(out, "structure", "head_channels must be >= 0");
    if (cfg.num_keypoints < 1) diag_error(out, "structure", "num_keypoints must be >= 1");
    if (cfg.input_h < 32 || cfg.input_w < 32 || cfg.input_h % 32 != 0 || cfg.input_w % 32 != 0)
        diag_error(out, "structure",
                   "input size " + std::to_string(cfg.input_h) + "x" + std::to_string(cfg.input_w) +
                       " must be positive and divisible by 32");

    for (const Diagnostic& d : out)
        if (d.level == DiagLevel::Error) return out;

    Graph g;
    try {
        g = detail::build_graph_unchecked(cfg);
    } catch (const ConfigError& err) {
        diag_error(out, "structure", err.what());
        return out;
    }

    for (size_t i = 0; i < g.nodes.size(); ++i) {
        const GraphNode& n = g.nodes[i];
        if (n.is_conv_like() && !n.is_output && n.c_out % 8 != 0)
            diag_warn(out, "channel-multiple-of-8",
                      "layer " + n.id + ": channel " + std::to_string(n.c_out) +
                          " not a multiple of 8");
        if (n.kind == LayerKind::Conv && n.groups == 1 && (n.kernel == 3 || n.kernel == 5)) {
            const int limit = n.kernel == 3 ? 648 : 1816;
            const int widest = std::max(n.c_out, g.shape_of(n.inputs[0]).c);
            if (widest > limit)
                diag_warn(out, "max-channel",
                          "layer " + n.id + ": " + std::to_string(widest) +
                              " channels exceeds " + std::to_string(limit) + " max for " +
                              std::to_string(n.kernel) + "x" + std::to_string(n.kernel));
        }
        if (n.kind == LayerKind::BatchNorm) {
            const int producer = n.inputs[0];
            if (producer == kGraphInput || !g.nodes[size_t(producer)].is_conv_like())
                diag_warn(out, "fusion",
                          "layer " + n.id +
                              ": batch normalization does not follow a convolution; "
                              "conv+BN+ReLU fusion unavailable");
        }
    }
    return out;
}

inline bool has_errors(const std::vector<Diagnostic>& diags) {
    for (const Diagnostic& d : diags)
        if (d.level == DiagLevel::Error) return true;
    return false;
}

/// Compiles a configuration into the executable layer graph.
inline Graph build_model(const ModelConfig& cfg) {
    const std::vector<Diagnostic> diags = validate_config(cfg);
    for (const Diagnostic& d : diags)
        if (d.level == DiagLevel::Error) throw ConfigError(d.message);
    return detail::build_graph_unchecked(cfg);
}

}  // namespace posekit
