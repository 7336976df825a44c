#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "posekit/graph.hpp"
#include "posekit/validate.hpp"

namespace posekit {

/// Counting convention for transposed convolutions. Ordinary convolutions are
/// unaffected. Input-based counts the multiplies actually performed
/// (kh*kw*c_in*c_out per *input* position); output-based anchors the same
/// kernel volume at every *output* position, which is what most legacy
/// per-layer cost tools report and what the published cost tables match.
enum class MacConvention { InputBased, OutputBased };

struct LayerCost {
    std::string id;
    LayerKind kind = LayerKind::Conv;
    int64_t macs = 0;
    int64_t params = 0;
};

struct FlopsReport {
    std::vector<LayerCost> layers;
    int64_t total_macs = 0;
    int64_t total_params = 0;
    MacConvention convention = MacConvention::OutputBased;

    double gflops(bool double_count = false) const {
        return double(total_macs) * (double_count ? 2.0 : 1.0) * 1e-9;
    }
};

namespace detail {

inline LayerCost node_cost(const Graph& g, const GraphNode& n, MacConvention conv) {
    LayerCost c;
    c.id = n.id;
    c.kind = n.kind;
    const Shape in = g.shape_of(n.inputs.empty() ? kGraphInput : n.inputs[0]);
    const Shape out = n.out_shape;
    const int64_t k2 = int64_t(n.kernel) * n.kernel;
    switch (n.kind) {
        case LayerKind::Conv: {
            const int64_t cin_per_group = in.c / n.groups;
            c.macs = int64_t(out.h) * out.w * k2 * cin_per_group * n.c_out;
            c.params = k2 * cin_per_group * n.c_out + (n.has_bias ? n.c_out : 0);
            break;
        }
        case LayerKind::Deconv: {
            const int64_t pos = conv == MacConvention::InputBased ? int64_t(in.h) * in.w
                                                                  : int64_t(out.h) * out.w;
            c.macs = pos * k2 * in.c * n.c_out;
            c.params = k2 * int64_t(in.c) * n.c_out + (n.has_bias ? n.c_out : 0);
            break;
        }
        case LayerKind::BatchNorm:
            c.params = 4 * int64_t(out.c);  // gamma, beta, running mean/var
            break;
        default:
            break;  // activations, pools, sums, concats: zero MACs, zero params
    }
    return c;
}

}  // namespace detail

inline FlopsReport count_macs(const Graph& g, MacConvention conv = MacConvention::OutputBased) {
    FlopsReport r;
    r.convention = conv;
    for (const GraphNode& n : g.nodes) {
        LayerCost c = detail::node_cost(g, n, conv);
        r.total_macs += c.macs;
        r.total_params += c.params;
        r.layers.push_back(std::move(c));
    }
    return r;
}

inline FlopsReport count_macs(const ModelConfig& cfg,
                              MacConvention conv = MacConvention::OutputBased) {
    return count_macs(build_model(cfg), conv);
}

inline int64_t count_params(const Graph& g) {
    return count_macs(g, MacConvention::OutputBased).total_params;
}

inline int64_t count_params(const ModelConfig& cfg) { return count_params(build_model(cfg)); }

}  // namespace posekit
