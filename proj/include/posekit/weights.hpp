#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "posekit/error.hpp"
#include "posekit/graph.hpp"

namespace posekit {

struct ParamArray {
    std::vector<int> shape;
    std::vector<float> data;

    bool operator==(const ParamArray&) const = default;
};

/// layer id -> parameter name -> array. Convolutions own "weight" (+"bias"),
/// batch-norm layers own "gamma"/"beta"/"mean"/"var".
struct WeightStore {
    std::map<std::string, std::map<std::string, ParamArray>> layers;

    bool operator==(const WeightStore&) const = default;

    const ParamArray& get(const std::string& layer, const std::string& param) const {
        auto li = layers.find(layer);
        if (li == layers.end()) throw ConfigError("missing weights for layer " + layer);
        auto pi = li->second.find(param);
        if (pi == li->second.end())
            throw ConfigError("layer " + layer + " missing parameter '" + param + "'");
        return pi->second;
    }

    bool has(const std::string& layer, const std::string& param) const {
        auto li = layers.find(layer);
        return li != layers.end() && li->second.count(param) > 0;
    }

    void put(const std::string& layer, const std::string& param, std::vector<int> shape,
             std::vector<float> data) {
        int64_t n = 1;
        for (int d : shape) n *= d;
        if (n != int64_t(data.size()))
            throw ConfigError("parameter " + layer + "." + param + " shape/data mismatch");
        layers[layer][param] = ParamArray{std::move(shape), std::move(data)};
    }
};

// ---------------------------------------------------------------------------
// Manifest + blob serialization. The manifest is a JSON list of entries
// {layer_id, param, dtype, shape, offset}; the blob is the concatenated
// little-endian f32 payload. Entries must tile the blob exactly.
// ---------------------------------------------------------------------------

inline void save_weights(const WeightStore& ws, const std::string& manifest_path,
                         const std::string& blob_path) {
    nlohmann::json entries = nlohmann::json::array();
    std::ofstream blob(blob_path, std::ios::binary);
    if (!blob) throw IoError("cannot open for writing: " + blob_path);
    uint64_t offset = 0;
    for (const auto& [layer, params] : ws.layers) {
        for (const auto& [name, arr] : params) {
            entries.push_back({{"layer_id", layer},
                               {"param", name},
                               {"dtype", "f32"},
                               {"shape", arr.shape},
                               {"offset", offset}});
            static_assert(sizeof(float) == 4);
            blob.write(reinterpret_cast<const char*>(arr.data.data()),
                       std::streamsize(arr.data.size() * 4));
            offset += arr.data.size() * 4;
        }
    }
    if (!blob) throw IoError("write failed: " + blob_path);
    std::ofstream mf(manifest_path);
    if (!mf) throw IoError("cannot open for writing: " + manifest_path);
    mf << nlohmann::json{{"format", "posekit-weights"}, {"version", 1}, {"entries", entries}}
              .dump(2)
       << "\n";
    if (!mf) throw IoError("write failed: " + manifest_path);
}

inline WeightStore load_weights(const std::string& manifest_path, const std::string& blob_path) {
    std::ifstream mf(manifest_path);
    if (!mf) throw IoError("cannot open manifest: " + manifest_path);
    nlohmann::json j;
    try {
        mf >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed manifest " + manifest_path + ": " + e.what());
    }
    std::ifstream blob(blob_path, std::ios::binary | std::ios::ate);
    if (!blob) throw IoError("cannot open blob: " + blob_path);
    const uint64_t blob_size = uint64_t(blob.tellg());

    WeightStore ws;
    uint64_t expected_offset = 0;
    for (const auto& e : j.at("entries")) {
        const std::string layer = e.at("layer_id").get<std::string>();
        const std::string param = e.at("param").get<std::string>();
        const std::string dtype = e.at("dtype").get<std::string>();
        if (dtype != "f32")
            throw IoError("entry " + layer + "." + param + ": unsupported dtype " + dtype);
        const std::vector<int> shape = e.at("shape").get<std::vector<int>>();
        const uint64_t offset = e.at("offset").get<uint64_t>();
        if (offset != expected_offset)
            throw IoError("entry " + layer + "." + param + ": offset " + std::to_string(offset) +
                          " leaves a gap or overlap (expected " + std::to_string(expected_offset) +
                          ")");
        int64_t count = 1;
        for (int d : shape) {
            if (d <= 0) throw IoError("entry " + layer + "." + param + ": bad shape");
            count *= d;
        }
        if (offset + uint64_t(count) * 4 > blob_size)
            throw IoError("entry " + layer + "." + param + ": blob truncated");
        std::vector<float> data(static_cast<size_t>(count), 0.0f);
        blob.seekg(std::streamoff(offset));
        blob.read(reinterpret_cast<char*>(data.data()), std::streamsize(count * 4));
        if (!blob) throw IoError("blob read failed at " + layer + "." + param);
        ws.put(layer, param, shape, std::move(data));
        expected_offset = offset + uint64_t(count) * 4;
    }
    if (expected_offset != blob_size)
        throw IoError("manifest covers " + std::to_string(expected_offset) + " bytes but blob has " +
                      std::to_string(blob_size));
    return ws;
}

// ---------------------------------------------------------------------------
// Weight initialization and completeness checks against a graph
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<int> conv_weight_shape(const Graph& g, const GraphNode& n) {
    const int c_in = g.shape_of(n.inputs[0]).c;
    return {n.c_out, c_in / n.groups, n.kernel, n.kernel};
}

}  // namespace detail

/// Verifies that every parameterized layer has arrays of the right shape.
/// Throws ConfigError naming the first offending layer.
inline void check_weights(const Graph& g, const WeightStore& ws) {
    for (const GraphNode& n : g.nodes) {
        if (n.is_conv_like()) {
            const std::vector<int> want = detail::conv_weight_shape(g, n);
            const ParamArray& w = ws.get(n.id, "weight");
            if (w.shape != want)
                throw ConfigError("layer " + n.id + ": weight shape mismatch");
            if (n.has_bias) {
                const ParamArray& b = ws.get(n.id, "bias");
                if (b.shape != std::vector<int>{n.c_out})
                    throw ConfigError("layer " + n.id + ": bias shape mismatch");
            }
        } else if (n.kind == LayerKind::BatchNorm) {
            for (const char* p : {"gamma", "beta", "mean", "var"}) {
                const ParamArray& a = ws.get(n.id, p);
                if (a.shape != std::vector<int>{n.c_out})
                    throw ConfigError("layer " + n.id + ": " + p + " shape mismatch");
            }
        }
    }
}

/// Seeded He-uniform initialization; batch-norm starts as the identity
/// transform. Generation order is fixed by graph order, independent of
/// thread count.
inline WeightStore random_weights(const Graph& g, uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto uniform = [&rng](float lo, float hi) {
        // explicit mapping keeps the stream portable across libstdc++ versions
        const double u = double(rng() >> 11) * (1.0 / 9007199254740992.0);  // [0,1)
        return float(lo + (hi - lo) * u);
    };
    WeightStore ws;
    for (const GraphNode& n : g.nodes) {
        if (n.is_conv_like()) {
            const std::vector<int> shape = detail::conv_weight_shape(g, n);
            const int64_t fan_in = int64_t(shape[1]) * shape[2] * shape[3];
            const float bound = std::sqrt(6.0f / float(fan_in));
            int64_t count = int64_t(shape[0]) * fan_in;
            std::vector<float> data(static_cast<size_t>(count), 0.0f);
            for (float& v : data) v = uniform(-bound, bound);
            ws.put(n.id, "weight", shape, std::move(data));
            if (n.has_bias) ws.put(n.id, "bias", {n.c_out}, std::vector<float>(size_t(n.c_out), 0.0f));
        } else if (n.kind == LayerKind::BatchNorm) {
            ws.put(n.id, "gamma", {n.c_out}, std::vector<float>(size_t(n.c_out), 1.0f));
            ws.put(n.id, "beta", {n.c_out}, std::vector<float>(size_t(n.c_out), 0.0f));
            ws.put(n.id, "mean", {n.c_out}, std::vector<float>(size_t(n.c_out), 0.0f));
            ws.put(n.id, "var", {n.c_out}, std::vector<float>(size_t(n.c_out), 1.0f));
        }
    }
    return ws;
}

}  // namespace posekit
