#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "posekit/graph.hpp"
#include "posekit/ops.hpp"
#include "posekit/weights.hpp"

namespace posekit {

inline ConvWeights conv_weights_for(const Graph& g, const GraphNode& n, const WeightStore& ws) {
    const ParamArray& w = ws.get(n.id, "weight");
    ConvWeights cw;
    cw.c_out = w.shape[0];
    cw.c_in_per_group = w.shape[1];
    cw.kh = w.shape[2];
    cw.kw = w.shape[3];
    cw.groups = n.groups;
    cw.stride_y = cw.stride_x = n.stride;
    cw.pad_y = cw.pad_x = n.pad;
    cw.kernel = w.data;
    if (n.has_bias) cw.bias = ws.get(n.id, "bias").data;
    (void)g;
    return cw;
}

inline BnParams bn_params_for(const GraphNode& n, const WeightStore& ws) {
    BnParams p;
    p.gamma = ws.get(n.id, "gamma").data;
    p.beta = ws.get(n.id, "beta").data;
    p.running_mean = ws.get(n.id, "mean").data;
    p.running_var = ws.get(n.id, "var").data;
    p.eps = 1e-5f;
    return p;
}

// ---------------------------------------------------------------------------
// Conv+BN folding. A batch-norm is folded into its producer when the producer
// is a convolution whose only consumer is that batch-norm; everything else is
// left untouched. Activation nodes run unchanged after the fused convolution.
// ---------------------------------------------------------------------------

struct FoldedModel {
    Graph graph;
    WeightStore weights;
};

inline FoldedModel fold_batchnorm(const Graph& g, const WeightStore& ws) {
    std::vector<int> consumers(g.nodes.size(), 0);
    for (const GraphNode& n : g.nodes)
        for (int in : n.inputs)
            if (in != kGraphInput) ++consumers[size_t(in)];

    std::vector<bool> folded(g.nodes.size(), false);
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        const GraphNode& n = g.nodes[i];
        if (n.kind != LayerKind::BatchNorm) continue;
        const int p = n.inputs[0];
        if (p != kGraphInput && g.nodes[size_t(p)].is_conv_like() && consumers[size_t(p)] == 1)
            folded[i] = true;
    }

    FoldedModel out;
    out.graph.input_shape = g.input_shape;
    std::vector<int> remap(g.nodes.size(), -1);
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        if (folded[i]) {
            remap[i] = remap[size_t(g.nodes[i].inputs[0])];  // alias the fused conv
            continue;
        }
        GraphNode n = g.nodes[i];
        for (int& in : n.inputs)
            if (in != kGraphInput) in = remap[size_t(in)];
        if (n.is_conv_like()) n.has_bias = true;  // folding always introduces a bias
        remap[i] = int(out.graph.nodes.size());
        out.graph.nodes.push_back(std::move(n));
    }
    out.graph.output = remap[size_t(g.output)];

    for (size_t i = 0; i < g.nodes.size(); ++i) {
        const GraphNode& n = g.nodes[i];
        if (folded[i]) {
            const GraphNode& conv = g.nodes[size_t(n.inputs[0])];
            ConvWeights cw = conv_weights_for(g, conv, ws);
            ConvWeights fused = fuse_conv_bn(cw, bn_params_for(n, ws));
            out.weights.put(conv.id, "weight",
                            {fused.c_out, fused.c_in_per_group, fused.kh, fused.kw},
                            std::move(fused.kernel));
            out.weights.put(conv.id, "bias", {fused.c_out}, std::move(fused.bias));
        } else if (n.is_conv_like()) {
            if (ws.layers.count(n.id) == 0) ws.get(n.id, "weight");  // throws naming the layer
            auto params = ws.layers.at(n.id);
            if (params.count("bias") == 0)
                params["bias"] = ParamArray{{n.c_out}, std::vector<float>(size_t(n.c_out), 0.0f)};
            out.weights.layers[n.id] = std::move(params);
        } else if (n.kind == LayerKind::BatchNorm) {
            out.weights.layers[n.id] = ws.layers.at(n.id);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

struct InferOptions {
    bool fuse = false;
    int threads = 1;
    bool check_nan = true;
};

/// Called with each node's output before intermediate buffers are released.
using NodeHook = std::function<void(int node_index, const GraphNode&, const Tensor&)>;

namespace detail {

inline Tensor eval_node(const Graph& g, const GraphNode& n, const WeightStore& ws,
                        const std::vector<std::optional<Tensor>>& values, const Tensor& input,
                        int threads) {
    auto arg = [&](int i) -> const Tensor& {
        const int idx = n.inputs[size_t(i)];
        return idx == kGraphInput ? input : *values[size_t(idx)];
    };
    switch (n.kind) {
        case LayerKind::Conv: return conv2d(arg(0), conv_weights_for(g, n, ws), threads);
        case LayerKind::Deconv: return deconv2d(arg(0), conv_weights_for(g, n, ws), threads);
        case LayerKind::BatchNorm: return batchnorm_inference(arg(0), bn_params_for(n, ws));
        case LayerKind::ReLU: return relu(arg(0));
        case LayerKind::LeakyReLU: return leaky_relu(arg(0), n.slope);
        case LayerKind::Softmax: return softmax(arg(0), n.axis);
        case LayerKind::MaxPool: return maxpool(arg(0), n.kernel, n.stride, n.pad);
        case LayerKind::AvgPool: return avgpool(arg(0), n.kernel, n.stride, n.pad);
        case LayerKind::EltwiseSum: return eltwise_sum(arg(0), arg(1));
        case LayerKind::Concat: {
            std::vector<const Tensor*> list;
            for (size_t i = 0; i < n.inputs.size(); ++i) list.push_back(&arg(int(i)));
            return concat(list);
        }
    }
    throw ConfigError("unknown layer kind");
}

inline Tensor run_graph(const Graph& g, const WeightStore& ws, const Tensor& input,
                        const InferOptions& opts, const NodeHook& hook,
                        std::vector<double>* timings_ms) {
    if (input.shape().c != g.input_shape.c || input.shape().h != g.input_shape.h ||
        input.shape().w != g.input_shape.w)
        throw ConfigError("input shape " + to_string(input.shape()) +
                          " does not match model input " + to_string(g.input_shape));

    std::vector<int> remaining(g.nodes.size(), 0);
    for (const GraphNode& n : g.nodes)
        for (int in : n.inputs)
            if (in != kGraphInput) ++remaining[size_t(in)];
    if (!g.nodes.empty()) ++remaining[size_t(g.output)];

    std::vector<std::optional<Tensor>> values(g.nodes.size());
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        const GraphNode& n = g.nodes[i];
        const auto t0 = std::chrono::steady_clock::now();
        Tensor out = eval_node(g, n, ws, values, input, opts.threads);
        if (timings_ms) {
            const auto t1 = std::chrono::steady_clock::now();
            (*timings_ms)[i] += std::chrono::duration<double, std::milli>(t1 - t0).count();
        }
        if (opts.check_nan && !out.all_finite())
            throw NumericError("layer " + n.id + " produced non-finite values");
        if (hook) hook(int(i), n, out);
        values[i] = std::move(out);
        for (int in : n.inputs)
            if (in != kGraphInput && --remaining[size_t(in)] == 0) values[size_t(in)].reset();
    }
    return std::move(*values[size_t(g.output)]);
}

}  // namespace detail

/// Executes the graph on a batch. Images are processed one at a time with a
/// deterministic merge, so results do not depend on batch grouping or thread
/// count. With opts.fuse, batch-norms are folded into their convolutions
/// before execution.
inline Tensor infer(const Graph& g, const WeightStore& ws, const Tensor& input,
                    InferOptions opts = {}, const NodeHook& hook = nullptr,
                    std::vector<double>* timings_ms = nullptr) {
    const Graph* graph = &g;
    const WeightStore* weights = &ws;
    FoldedModel folded;
    if (opts.fuse) {
        folded = fold_batchnorm(g, ws);
        graph = &folded.graph;
        weights = &folded.weights;
    }
    check_weights(*graph, *weights);
    if (timings_ms) timings_ms->assign(graph->nodes.size(), 0.0);

    const Shape in = input.shape();
    if (in.n <= 1) return detail::run_graph(*graph, *weights, input, opts, hook, timings_ms);

    Tensor out;
    for (int i = 0; i < in.n; ++i) {
        Tensor one({1, in.c, in.h, in.w});
        std::copy(input.plane(i, 0), input.plane(i, 0) + one.numel(), one.data());
        Tensor r = detail::run_graph(*graph, *weights, one, opts, hook, timings_ms);
        if (i == 0) {
            Shape os = r.shape();
            os.n = in.n;
            out = Tensor(os);
        }
        std::copy(r.data(), r.data() + r.numel(), out.plane(i, 0));
    }
    return out;
}

}  // namespace posekit
