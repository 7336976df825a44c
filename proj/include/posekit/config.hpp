#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "posekit/error.hpp"

namespace posekit {

enum class SkipMode { None, Sum, Concat };
enum class BlockFamily { MbConv, ResnetBasic, ResnetBottleneck };

/// One encoder stage: `repeats` blocks, the first carrying `stride`.
/// For MBConv, `expand` is the inverted-bottleneck expansion ratio and
/// `kernel` the depthwise kernel size. ResNet stages ignore `expand`
/// (basic blocks) or derive the bottleneck width as channels/4.
struct StageSpec {
    int expand = 1;
    int kernel = 3;
    int stride = 1;
    int channels = 0;
    int repeats = 1;
};

struct EncoderSpec {
    std::string name;  // preset name, or "custom"
    BlockFamily family = BlockFamily::MbConv;
    int stem_channels = 32;
    int stem_kernel = 3;
    bool stem_maxpool = false;
    std::vector<StageSpec> stages;
    int final_channels = 0;  // trailing 1x1 expansion conv; 0 = none
    std::string activation = "relu";
    float leaky_slope = 0.1f;
};

struct ModelConfig {
    EncoderSpec encoder;
    int head_channels = 40;  // 0 = deconvolutions read the encoder output directly
    std::vector<int> deconv_channels{32, 32, 32};
    SkipMode skip_mode = SkipMode::None;
    int num_keypoints = 17;
    int input_h = 256;
    int input_w = 192;
};

// ---------------------------------------------------------------------------
// Encoder presets
// ---------------------------------------------------------------------------

namespace detail {

// EfficientNet-B0 stage grid: expand, kernel, stride, channels, repeats.
inline const StageSpec kEffnetB0[7] = {
    {1, 3, 1, 16, 1},  {6, 3, 2, 24, 2},  {6, 5, 2, 40, 2},  {6, 3, 2, 80, 3},
    {6, 5, 1, 112, 3}, {6, 5, 2, 192, 4}, {6, 3, 1, 320, 1},
};

inline int round_filters(int filters, double width, int divisor = 8) {
    if (width == 1.0) return filters;
    const double scaled = filters * width;
    int nf = std::max(divisor, int(scaled + divisor / 2.0) / divisor * divisor);
    if (nf < 0.9 * scaled) nf += divisor;
    return nf;
}

inline int round_repeats(int repeats, double depth) {
    return int(std::ceil(depth * repeats));
}

inline EncoderSpec make_reduced_efficientnet(const std::string& name, double width, double depth,
                                             bool force_3x3) {
    EncoderSpec e;
    e.name = name;
    e.family = BlockFamily::MbConv;
    e.stem_channels = round_filters(32, width);
    e.stem_kernel = 3;
    for (const StageSpec& s : kEffnetB0) {
        StageSpec t = s;
        t.channels = round_filters(s.channels, width);
        t.repeats = round_repeats(s.repeats, depth);
        if (force_3x3) t.kernel = 3;
        e.stages.push_back(t);
    }
    e.final_channels = round_filters(1280, width);
    return e;
}

inline EncoderSpec make_resnet(const std::string& name, BlockFamily family,
                               const std::vector<int>& repeats) {
    EncoderSpec e;
    e.name = name;
    e.family = family;
    e.stem_channels = 64;
    e.stem_kernel = 5;  // 7x7 is outside the layer vocabulary; 5x5 stride 2 stands in
    e.stem_maxpool = true;
    const int base[4] = {64, 128, 256, 512};
    const int expansion = family == BlockFamily::ResnetBottleneck ? 4 : 1;
    for (int i = 0; i < 4; ++i) {
        StageSpec s;
        s.kernel = 3;
        s.stride = i == 0 ? 1 : 2;
        s.channels = base[i] * expansion;
        s.repeats = repeats[size_t(i)];
        e.stages.push_back(s);
    }
    e.final_channels = 0;
    return e;
}

}  // namespace detail

/// Resolves a named encoder preset; throws ConfigError for unknown names.
inline EncoderSpec encoder_preset(const std::string& name) {
    struct Effnet {
        const char* name;
        double width, depth;
    };
    static const Effnet kVariants[] = {
        {"reduced-efficientnet-b0", 1.0, 1.0}, {"reduced-efficientnet-b1", 1.0, 1.1},
        {"reduced-efficientnet-b2", 1.1, 1.2}, {"reduced-efficientnet-b3", 1.2, 1.4},
        {"reduced-efficientnet-b4", 1.4, 1.8}, {"reduced-efficientnet-b5", 1.6, 2.2},
        {"reduced-efficientnet-b6", 1.8, 2.6},
    };
    for (const Effnet& v : kVariants)
        if (name == v.name) return detail::make_reduced_efficientnet(name, v.width, v.depth, false);
    if (name == "b1-fpga")
        return detail::make_reduced_efficientnet(name, 1.0, 1.1, /*force_3x3=*/true);
    if (name == "resnet-18") return detail::make_resnet(name, BlockFamily::ResnetBasic, {2, 2, 2, 2});
    if (name == "resnet-34") return detail::make_resnet(name, BlockFamily::ResnetBasic, {3, 4, 6, 3});
    if (name == "resnet-50")
        return detail::make_resnet(name, BlockFamily::ResnetBottleneck, {3, 4, 6, 3});
    throw ConfigError("unknown encoder '" + name + "'");
}

/// The configuration the command-line tools fall back to; mirrors
/// configs/default.json.
inline ModelConfig default_model_config() {
    ModelConfig cfg;
    cfg.encoder = encoder_preset("reduced-efficientnet-b2");
    cfg.head_channels = 40;
    cfg.deconv_channels = {32, 32, 32};
    cfg.skip_mode = SkipMode::None;
    cfg.num_keypoints = 17;
    cfg.input_h = 256;
    cfg.input_w = 192;
    return cfg;
}

// ---------------------------------------------------------------------------
// Config file parsing (JSON; unknown keys are errors)
// ---------------------------------------------------------------------------

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::vector<std::string>& known,
                                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const std::string& k : known)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

inline StageSpec parse_stage(const nlohmann::json& j, int index) {
    const std::string where = "encoder.stages[" + std::to_string(index) + "]";
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    reject_unknown_keys(j, {"expand", "kernel", "stride", "channels", "repeats"}, where);
    StageSpec s;
    s.expand = j.value("expand", 1);
    s.kernel = j.value("kernel", 3);
    s.stride = j.value("stride", 1);
    if (!j.contains("channels")) throw ConfigError(where + " missing 'channels'");
    s.channels = j.at("channels").get<int>();
    s.repeats = j.value("repeats", 1);
    return s;
}

inline EncoderSpec parse_encoder(const nlohmann::json& j) {
    if (j.is_string()) return encoder_preset(j.get<std::string>());
    if (!j.is_object()) throw ConfigError("'encoder' must be a preset name or an object");
    reject_unknown_keys(j,
                        {"family", "activation", "leaky_slope", "stages", "stem_channels",
                         "stem_kernel", "final_channels"},
                        "encoder");
    if (!j.contains("family")) throw ConfigError("encoder object missing 'family'");
    EncoderSpec e = encoder_preset(j.at("family").get<std::string>());
    if (j.contains("activation")) e.activation = j.at("activation").get<std::string>();
    if (j.contains("leaky_slope")) e.leaky_slope = j.at("leaky_slope").get<float>();
    if (j.contains("stem_channels")) e.stem_channels = j.at("stem_channels").get<int>();
    if (j.contains("stem_kernel")) e.stem_kernel = j.at("stem_kernel").get<int>();
    if (j.contains("final_channels")) e.final_channels = j.at("final_channels").get<int>();
    if (j.contains("stages")) {
        e.stages.clear();
        int i = 0;
        for (const auto& js : j.at("stages")) e.stages.push_back(parse_stage(js, i++));
        e.name = e.name + "+custom-stages";
    }
    return e;
}

}  // namespace detail

inline ModelConfig parse_model_config(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("model config root must be an object");
    detail::reject_unknown_keys(j,
                                {"encoder", "head_channels", "deconv_channels", "skip_mode",
                                 "num_keypoints", "input_size"},
                                "model config");
    ModelConfig cfg;
    if (!j.contains("encoder")) throw ConfigError("model config missing 'encoder'");
    cfg.encoder = detail::parse_encoder(j.at("encoder"));
    if (j.contains("head_channels")) cfg.head_channels = j.at("head_channels").get<int>();
    if (j.contains("deconv_channels"))
        cfg.deconv_channels = j.at("deconv_channels").get<std::vector<int>>();
    if (j.contains("skip_mode")) {
        const std::string m = j.at("skip_mode").get<std::string>();
        if (m == "none") cfg.skip_mode = SkipMode::None;
        else if (m == "sum") cfg.skip_mode = SkipMode::Sum;
        else if (m == "concat") cfg.skip_mode = SkipMode::Concat;
        else throw ConfigError("skip_mode must be one of none/sum/concat, got '" + m + "'");
    }
    if (j.contains("num_keypoints")) cfg.num_keypoints = j.at("num_keypoints").get<int>();
    if (j.contains("input_size")) {
        const auto& sz = j.at("input_size");
        if (!sz.is_array() || sz.size() != 2)
            throw ConfigError("input_size must be [height, width]");
        cfg.input_h = sz[0].get<int>();
        cfg.input_w = sz[1].get<int>();
    }
    return cfg;
}

inline ModelConfig load_model_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed config " + path + ": " + e.what());
    }
    return parse_model_config(j);
}

inline std::string skip_mode_name(SkipMode m) {
    switch (m) {
        case SkipMode::None: return "none";
        case SkipMode::Sum: return "sum";
        case SkipMode::Concat: return "concat";
    }
    return "?";
}

}  // namespace posekit
