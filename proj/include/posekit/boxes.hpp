#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "posekit/error.hpp"
#include "posekit/heatmap.hpp"

namespace posekit {

/// One person crop: the detection box in image coordinates, tagged with its
/// source image. The i-th box corresponds to the i-th crop in a heatmap or
/// input tensor dump.
struct BoxRecord {
    int64_t image_id = 0;
    PersonBox box;
};

inline std::vector<BoxRecord> load_boxes(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open boxes: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed boxes " + path + ": " + e.what());
    }
    if (!j.is_array()) throw IoError("boxes file must be a JSON array: " + path);
    std::vector<BoxRecord> out;
    size_t index = 0;
    for (const auto& b : j) {
        try {
            BoxRecord r;
            r.image_id = b.at("image_id").get<int64_t>();
            r.box.cx = b.at("cx").get<double>();
            r.box.cy = b.at("cy").get<double>();
            r.box.width = b.at("width").get<double>();
            r.box.height = b.at("height").get<double>();
            if (!(r.box.width > 0.0) || !(r.box.height > 0.0))
                throw ConfigError("degenerate box");
            out.push_back(r);
        } catch (const std::exception& e) {
            throw IoError("box record " + std::to_string(index) + ": " + e.what());
        }
        ++index;
    }
    return out;
}

inline void save_boxes(const std::vector<BoxRecord>& boxes, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const BoxRecord& b : boxes)
        j.push_back({{"image_id", b.image_id},
                     {"cx", b.box.cx},
                     {"cy", b.box.cy},
                     {"width", b.box.width},
                     {"height", b.box.height}});
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << j.dump(2) << "\n";
    if (!os) throw IoError("write failed: " + path);
}

}  // namespace posekit
