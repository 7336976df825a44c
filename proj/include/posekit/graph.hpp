#pragma once

#include <map>
#include <string>
#include <vector>

#include "posekit/config.hpp"
#include "posekit/error.hpp"
#include "posekit/ops.hpp"
#include "posekit/tensor.hpp"

namespace posekit {

enum class LayerKind {
    Conv,
    Deconv,
    BatchNorm,
    ReLU,
    LeakyReLU,
    Softmax,
    MaxPool,
    AvgPool,
    EltwiseSum,
    Concat,
};

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "conv";
        case LayerKind::Deconv: return "deconv";
        case LayerKind::BatchNorm: return "batchnorm";
        case LayerKind::ReLU: return "relu";
        case LayerKind::LeakyReLU: return "leaky_relu";
        case LayerKind::Softmax: return "softmax";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::AvgPool: return "avgpool";
        case LayerKind::EltwiseSum: return "eltwise_sum";
        case LayerKind::Concat: return "concat";
    }
    return "?";
}

/// Index value marking the graph input tensor as a node's producer.
inline constexpr int kGraphInput = -1;

struct GraphNode {
    std::string id;
    LayerKind kind = LayerKind::Conv;
    std::vector<int> inputs;  // node indices, or kGraphInput
    Shape out_shape;

    // Conv / Deconv / pooling parameters (square kernels throughout).
    int c_out = 0;
    int kernel = 1;
    int stride = 1;
    int pad = 0;
    int groups = 1;
    bool has_bias = false;
    float slope = 0.0f;  // LeakyReLU
    int axis = 1;        // Softmax
    bool is_output = false;

    bool is_conv_like() const { return kind == LayerKind::Conv || kind == LayerKind::Deconv; }
};

struct Graph {
    Shape input_shape;  // nominal batch of 1
    std::vector<GraphNode> nodes;
    int output = -1;

    const Shape& shape_of(int idx) const {
        return idx == kGraphInput ? input_shape : nodes[size_t(idx)].out_shape;
    }

    int find(const std::string& id) const {
        for (size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i].id == id) return int(i);
        return -1;
    }

    // Producers precede consumers and the output node exists.
    bool topology_ok() const {
        if (output < 0 || output >= int(nodes.size())) return false;
        for (size_t i = 0; i < nodes.size(); ++i)
            for (int in : nodes[i].inputs)
                if (in != kGraphInput && (in < 0 || in >= int(i))) return false;
        return true;
    }
};

namespace detail {

class GraphBuilder {
public:
    explicit GraphBuilder(const ModelConfig& cfg) : cfg_(cfg) {}

    Graph build() {
        g_.input_shape = {1, 3, cfg_.input_h, cfg_.input_w};
        const EncoderSpec& e = cfg_.encoder;
        stride_ = 1;

        int cur = conv_bn_act("stem", kGraphInput, e.stem_channels, e.stem_kernel, 2,
                              e.stem_kernel / 2, 1);
        stride_ *= 2;
        tap(cur);
        if (e.stem_maxpool) {
            cur = pool("stem.pool", cur, 3, 2, 1);
            stride_ *= 2;
            tap(cur);
        }

        for (size_t si = 0; si < e.stages.size(); ++si) {
            const StageSpec& s = e.stages[si];
            for (int b = 0; b < s.repeats; ++b) {
                const std::string prefix = "s" + std::to_string(si + 1) + ".b" + std::to_string(b);
                const int block_stride = b == 0 ? s.stride : 1;
                if (b == 0) stride_ *= block_stride;
                switch (e.family) {
                    case BlockFamily::MbConv:
                        cur = mbconv(prefix, cur, s, block_stride);
                        break;
                    case BlockFamily::ResnetBasic:
                        cur = resnet_basic(prefix, cur, s.channels, block_stride);
                        break;
                    case BlockFamily::ResnetBottleneck:
                        cur = resnet_bottleneck(prefix, cur, s.channels, block_stride);
                        break;
                }
            }
            tap(cur);
        }

        if (e.final_channels > 0) {
            cur = conv_bn_act("top", cur, e.final_channels, 1, 1, 0, 1);
            tap(cur);
        }

        if (cfg_.head_channels > 0) cur = conv_bn_act("head", cur, cfg_.head_channels, 1, 1, 0, 1);

        for (size_t li = 0; li < cfg_.deconv_channels.size(); ++li) {
            const int ch = cfg_.deconv_channels[li];
            const std::string prefix = "deconv" + std::to_string(li + 1);
            cur = deconv_bn_act(prefix, cur, ch);
            stride_ /= 2;
            if (cfg_.skip_mode != SkipMode::None) cur = skip(int(li + 1), cur, ch);
        }

        GraphNode fin;
        fin.id = "final";
        fin.kind = LayerKind::Conv;
        fin.inputs = {cur};
        fin.c_out = cfg_.num_keypoints;
        fin.kernel = 1;
        fin.has_bias = true;
        fin.is_output = true;
        fin.out_shape = conv_shape(g_.shape_of(cur), cfg_.num_keypoints, 1, 1, 0);
        g_.output = add(std::move(fin));
        return std::move(g_);
    }

private:
    int add(GraphNode n) {
        g_.nodes.push_back(std::move(n));
        return int(g_.nodes.size()) - 1;
    }

    void tap(int node) { taps_[stride_] = node; }

    static Shape conv_shape(const Shape& in, int c_out, int k, int stride, int pad) {
        ConvWeights w;
        w.c_out = c_out;
        w.c_in_per_group = in.c;
        w.kh = w.kw = k;
        w.stride_y = w.stride_x = stride;
        w.pad_y = w.pad_x = pad;
        w.kernel.resize(size_t(c_out) * in.c * k * k);
        return conv2d_output_shape(in, w);
    }

    int conv(const std::string& id, int in, int c_out, int k, int stride, int pad, int groups,
             bool bias = false) {
        GraphNode n;
        n.id = id;
        n.kind = LayerKind::Conv;
        n.inputs = {in};
        n.c_out = c_out;
        n.kernel = k;
        n.stride = stride;
        n.pad = pad;
        n.groups = groups;
        n.has_bias = bias;
        const Shape is = g_.shape_of(in);
        n.out_shape = {is.n, c_out, (is.h + 2 * pad - k) / stride + 1,
                       (is.w + 2 * pad - k) / stride + 1};
        return add(std::move(n));
    }

    int bn(const std::string& id, int in) {
        GraphNode n;
        n.id = id;
        n.kind = LayerKind::BatchNorm;
        n.inputs = {in};
        n.out_shape = g_.shape_of(in);
        n.c_out = n.out_shape.c;
        return add(std::move(n));
    }

    int act(const std::string& id, int in) {
        GraphNode n;
        n.id = id;
        n.kind = cfg_.encoder.activation == "leaky_relu" ? LayerKind::LeakyReLU : LayerKind::ReLU;
        n.slope = cfg_.encoder.leaky_slope;
        n.inputs = {in};
        n.out_shape = g_.shape_of(in);
        n.c_out = n.out_shape.c;
        return add(std::move(n));
    }

    int pool(const std::string& id, int in, int k, int stride, int pad) {
        GraphNode n;
        n.id = id;
        n.kind = LayerKind::MaxPool;
        n.inputs = {in};
        n.kernel = k;
        n.stride = stride;
        n.pad = pad;
        const Shape is = g_.shape_of(in);
        n.out_shape = {is.n, is.c, (is.h + 2 * pad - k) / stride + 1,
                       (is.w + 2 * pad - k) / stride + 1};
        n.c_out = is.c;
        return add(std::move(n));
    }

    int conv_bn_act(const std::string& prefix, int in, int c_out, int k, int stride, int pad,
                    int groups) {
        int c = conv(prefix + ".conv", in, c_out, k, stride, pad, groups);
        int b = bn(prefix + ".bn", c);
        return act(prefix + ".act", b);
    }

    int conv_bn(const std::string& prefix, int in, int c_out, int k, int stride, int pad,
                int groups) {
        int c = conv(prefix + ".conv", in, c_out, k, stride, pad, groups);
        return bn(prefix + ".bn", c);
    }

    int deconv_bn_act(const std::string& prefix, int in, int c_out) {
        GraphNode n;
        n.id = prefix + ".deconv";
        n.kind = LayerKind::Deconv;
        n.inputs = {in};
        n.c_out = c_out;
        n.kernel = 4;
        n.stride = 2;
        n.pad = 1;
        const Shape is = g_.shape_of(in);
        n.out_shape = {is.n, c_out, (is.h - 1) * 2 - 2 + 4, (is.w - 1) * 2 - 2 + 4};
        int d = add(std::move(n));
        int b = bn(prefix + ".bn", d);
        return act(prefix + ".act", b);
    }

    // Inverted bottleneck: expand (1x1) -> depthwise -> project (1x1, linear),
    // residual add when the block neither strides nor changes width.
    int mbconv(const std::string& prefix, int in, const StageSpec& s, int stride) {
        const int c_in = g_.shape_of(in).c;
        const int mid = c_in * s.expand;
        int cur = in;
        if (s.expand != 1) cur = conv_bn_act(prefix + ".expand", cur, mid, 1, 1, 0, 1);
        cur = conv_bn_act(prefix + ".dw", cur, mid, s.kernel, stride, s.kernel / 2, mid);
        cur = conv_bn(prefix + ".project", cur, s.channels, 1, 1, 0, 1);
        if (stride == 1 && c_in == s.channels) {
            GraphNode n;
            n.id = prefix + ".add";
            n.kind = LayerKind::EltwiseSum;
            n.inputs = {in, cur};
            n.out_shape = g_.shape_of(cur);
            n.c_out = s.channels;
            cur = add(std::move(n));
        }
        return cur;
    }

    int resnet_basic(const std::string& prefix, int in, int c_out, int stride) {
        const int c_in = g_.shape_of(in).c;
        int cur = conv_bn_act(prefix + ".conv1", in, c_out, 3, stride, 1, 1);
        cur = conv_bn(prefix + ".conv2", cur, c_out, 3, 1, 1, 1);
        int shortcut = in;
        if (stride != 1 || c_in != c_out)
            shortcut = conv_bn(prefix + ".downsample", in, c_out, 1, stride, 0, 1);
        GraphNode n;
        n.id = prefix + ".add";
        n.kind = LayerKind::EltwiseSum;
        n.inputs = {shortcut, cur};
        n.out_shape = g_.shape_of(cur);
        n.c_out = c_out;
        cur = add(std::move(n));
        return act(prefix + ".out", cur);
    }

    int resnet_bottleneck(const std::string& prefix, int in, int c_out, int stride) {
        const int c_in = g_.shape_of(in).c;
        const int mid = c_out / 4;
        int cur = conv_bn_act(prefix + ".conv1", in, mid, 1, 1, 0, 1);
        cur = conv_bn_act(prefix + ".conv2", cur, mid, 3, stride, 1, 1);
        cur = conv_bn(prefix + ".conv3", cur, c_out, 1, 1, 0, 1);
        int shortcut = in;
        if (stride != 1 || c_in != c_out)
            shortcut = conv_bn(prefix + ".downsample", in, c_out, 1, stride, 0, 1);
        GraphNode n;
        n.id = prefix + ".add";
        n.kind = LayerKind::EltwiseSum;
        n.inputs = {shortcut, cur};
        n.out_shape = g_.shape_of(cur);
        n.c_out = c_out;
        cur = add(std::move(n));
        return act(prefix + ".out", cur);
    }

    // Attention connection after a deconvolution level: "sum" projects the
    // matching-resolution encoder feature to the level width and adds it;
    // "concat" appends it and reduces back with a 1x1 convolution.
    int skip(int level, int cur, int ch) {
        auto it = taps_.find(stride_);
        if (it == taps_.end())
            throw ConfigError("skip connection level " + std::to_string(level) +
                              ": encoder exposes no feature at stride 1/" + std::to_string(stride_));
        const int tap_node = it->second;
        const std::string prefix = "skip" + std::to_string(level);
        if (cfg_.skip_mode == SkipMode::Sum) {
            int proj = conv_bn(prefix + ".proj", tap_node, ch, 1, 1, 0, 1);
            GraphNode n;
            n.id = prefix + ".add";
            n.kind = LayerKind::EltwiseSum;
            n.inputs = {cur, proj};
            n.out_shape = g_.shape_of(cur);
            n.c_out = ch;
            return add(std::move(n));
        }
        GraphNode n;
        n.id = prefix + ".cat";
        n.kind = LayerKind::Concat;
        n.inputs = {cur, tap_node};
        const Shape a = g_.shape_of(cur);
        n.out_shape = {a.n, a.c + g_.shape_of(tap_node).c, a.h, a.w};
        n.c_out = n.out_shape.c;
        int cat = add(std::move(n));
        return conv_bn_act(prefix + ".reduce", cat, ch, 1, 1, 0, 1);
    }

    const ModelConfig& cfg_;
    Graph g_;
    std::map<int, int> taps_;  // spatial stride -> last encoder node at it
    int stride_ = 1;
};

inline Graph build_graph_unchecked(const ModelConfig& cfg) { return GraphBuilder(cfg).build(); }

}  // namespace detail

}  // namespace posekit
