#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "posekit/error.hpp"
#include "posekit/heatmap.hpp"

namespace posekit {

struct GtInstance {
    int64_t image_id = 0;
    std::vector<float> keypoints;  // x, y, v triplets; v in {0,1,2}
    double area = 0.0;
    PersonBox box;

    int num_keypoints() const { return int(keypoints.size() / 3); }
    int num_visible() const {
        int n = 0;
        for (size_t i = 2; i < keypoints.size(); i += 3)
            if (keypoints[i] > 0.0f) ++n;
        return n;
    }
};

struct DetInstance {
    int64_t image_id = 0;
    std::vector<float> keypoints;  // x, y, confidence triplets
    double score = 0.0;

    int num_keypoints() const { return int(keypoints.size() / 3); }
};

/// Per-keypoint OKS falloff constants (COCO convention: twice the keypoint
/// sigma).
struct OksConstants {
    std::vector<double> k;
};

inline OksConstants default_oks_constants() {
    return {{0.052, 0.050, 0.050, 0.070, 0.070, 0.158, 0.158, 0.144, 0.144, 0.124, 0.124, 0.214,
             0.214, 0.174, 0.174, 0.178, 0.178}};
}

struct EvalResult {
    double ap = 0.0;
    double ap50 = 0.0;
    double ap_medium = 0.0;
    double ar = 0.0;
};

/// OKS over the ground truth's visible keypoints:
///   mean_i exp(-d_i^2 / (2 * area * k_i^2)),  i: vis_i > 0.
inline double compute_oks(const DetInstance& det, const GtInstance& gt,
                          const OksConstants& consts) {
    const int K = gt.num_keypoints();
    if (det.num_keypoints() != K || int(consts.k.size()) != K)
        throw ConfigError("compute_oks: keypoint count mismatch");
    if (!(gt.area > 0.0)) throw ConfigError("compute_oks: ground-truth area must be > 0");
    double sum = 0.0;
    int visible = 0;
    for (int i = 0; i < K; ++i) {
        if (gt.keypoints[size_t(3 * i + 2)] <= 0.0f) continue;
        const double dx = double(det.keypoints[size_t(3 * i)]) - double(gt.keypoints[size_t(3 * i)]);
        const double dy =
            double(det.keypoints[size_t(3 * i + 1)]) - double(gt.keypoints[size_t(3 * i + 1)]);
        const double denom = 2.0 * gt.area * consts.k[size_t(i)] * consts.k[size_t(i)];
        sum += std::exp(-(dx * dx + dy * dy) / denom);
        ++visible;
    }
    if (visible == 0) throw ConfigError("compute_oks: ground truth has no visible keypoints");
    return sum / double(visible);
}

// ---------------------------------------------------------------------------
// Matching
// ---------------------------------------------------------------------------

struct MatchResult {
    std::vector<int> det_to_gt;   // index into the gt list, or -1
    std::vector<char> det_ignored;  // matched an ignored gt; excluded from PR
};

namespace detail {

/// Greedy one-to-one matching. `dets` must already be in descending score
/// order. Each detection claims the unmatched non-ignored gt with the
/// highest OKS if that OKS >= threshold; failing that it may claim an
/// ignored gt, which removes the detection from precision/recall instead of
/// counting it as a false positive.
inline MatchResult match_greedy(const std::vector<const DetInstance*>& dets,
                                const std::vector<const GtInstance*>& gts,
                                const std::vector<char>& gt_ignored, double threshold,
                                const OksConstants& consts) {
    MatchResult r;
    r.det_to_gt.assign(dets.size(), -1);
    r.det_ignored.assign(dets.size(), 0);
    std::vector<char> taken(gts.size(), 0);
    for (size_t d = 0; d < dets.size(); ++d) {
        int best = -1;
        double best_oks = 0.0;
        bool best_is_ignored = false;
        for (size_t g = 0; g < gts.size(); ++g) {
            if (taken[g]) continue;
            const double oks = compute_oks(*dets[d], *gts[g], consts);
            if (oks < threshold) continue;
            // non-ignored gts take precedence over ignored ones
            if (best != -1 && !best_is_ignored && gt_ignored[g]) continue;
            const bool upgrade = best == -1 || (best_is_ignored && !gt_ignored[g]);
            if (upgrade || oks > best_oks) {
                best = int(g);
                best_oks = oks;
                best_is_ignored = gt_ignored[g] != 0;
            }
        }
        if (best >= 0) {
            taken[size_t(best)] = 1;
            r.det_to_gt[d] = best;
            r.det_ignored[d] = best_is_ignored ? 1 : 0;
        }
    }
    return r;
}

}  // namespace detail

/// Spec-level matching entry point: no ignored instances.
inline std::vector<int> match_instances(const std::vector<const DetInstance*>& dets,
                                        const std::vector<const GtInstance*>& gts, double threshold,
                                        const OksConstants& consts) {
    return detail::match_greedy(dets, gts, std::vector<char>(gts.size(), 0), threshold, consts)
        .det_to_gt;
}

// ---------------------------------------------------------------------------
// Dataset-level metrics
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> oks_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
    return t;
}

struct ImageData {
    std::vector<const DetInstance*> dets;  // sorted by score desc, stable
    std::vector<const GtInstance*> gts;    // evaluable only (>=1 visible keypoint)
};

inline std::map<int64_t, ImageData> group_by_image(const std::vector<DetInstance>& dets,
                                                   const std::vector<GtInstance>& gts,
                                                   int max_dets_per_image) {
    std::map<int64_t, ImageData> images;
    for (const GtInstance& g : gts)
        if (g.num_visible() > 0) images[g.image_id].gts.push_back(&g);
    for (const DetInstance& d : dets) {
        if (images.count(d.image_id) == 0) images[d.image_id];  // image with no (evaluable) gt
        images[d.image_id].dets.push_back(&d);
    }
    for (auto& [id, img] : images) {
        std::stable_sort(img.dets.begin(), img.dets.end(),
                         [](const DetInstance* a, const DetInstance* b) { return a->score > b->score; });
        if (max_dets_per_image > 0 && int(img.dets.size()) > max_dets_per_image)
            img.dets.resize(size_t(max_dets_per_image));
    }
    return images;
}

/// 101-point interpolated average precision for one threshold.
/// `tp` is the true/false flag per detection in global descending-score
/// order (ignored detections already removed); `total_gts` > 0.
inline double interpolated_ap(const std::vector<char>& tp, int total_gts) {
    const size_t n = tp.size();
    std::vector<double> precision(n), recall(n);
    int tp_cum = 0;
    for (size_t i = 0; i < n; ++i) {
        if (tp[i]) ++tp_cum;
        precision[i] = double(tp_cum) / double(i + 1);
        recall[i] = double(tp_cum) / double(total_gts);
    }
    // suffix max: best precision achievable at or after each rank
    std::vector<double> best(n);
    double run = 0.0;
    for (size_t i = n; i-- > 0;) {
        run = std::max(run, precision[i]);
        best[i] = run;
    }
    double sum = 0.0;
    for (int ri = 0; ri <= 100; ++ri) {
        const double r = ri / 100.0;
        // first rank with recall >= r (recall is non-decreasing)
        const auto it = std::lower_bound(recall.begin(), recall.end(), r);
        if (it != recall.end()) sum += best[size_t(it - recall.begin())];
    }
    return sum / 101.0;
}

struct ApOutcome {
    double ap = 0.0;
    bool has_gts = false;
};

/// AP at one threshold over one area selection. `in_range` decides which
/// gts count; out-of-range gts become "ignore" regions.
template <typename AreaPred>
inline ApOutcome ap_at_threshold(const std::map<int64_t, ImageData>& images, double thr,
                                 const OksConstants& consts, AreaPred in_range) {
    struct Scored {
        double score;
        size_t order;
        char tp;
    };
    std::vector<Scored> all;
    int total_gts = 0;
    size_t order = 0;
    for (const auto& [id, img] : images) {
        std::vector<char> ignored(img.gts.size(), 0);
        int eligible = 0;
        for (size_t g = 0; g < img.gts.size(); ++g) {
            ignored[g] = in_range(*img.gts[g]) ? 0 : 1;
            if (!ignored[g]) ++eligible;
        }
        total_gts += eligible;
        const MatchResult m = match_greedy(img.dets, img.gts, ignored, thr, consts);
        for (size_t d = 0; d < img.dets.size(); ++d) {
            if (m.det_ignored[d]) continue;  // matched an ignore region
            all.push_back({img.dets[d]->score, order++, char(m.det_to_gt[d] >= 0 ? 1 : 0)});
        }
    }
    if (total_gts == 0) return {0.0, false};
    std::stable_sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
        return a.score > b.score;
    });
    std::vector<char> tp(all.size());
    for (size_t i = 0; i < all.size(); ++i) tp[i] = all[i].tp;
    return {interpolated_ap(tp, total_gts), true};
}

}  // namespace detail

/// COCO-style keypoint metrics:
///   ap        mean over OKS thresholds 0.50:0.05:0.95 of 101-point AP
///   ap50      AP at threshold 0.50
///   ap_medium AP restricted to gts with 32^2 < area < 96^2
///   ar        mean recall over the same thresholds, <= 20 detections/image
/// Ground-truth instances without visible keypoints are skipped.
inline EvalResult compute_metrics(const std::vector<DetInstance>& dets,
                                  const std::vector<GtInstance>& gts, const OksConstants& consts) {
    const auto images = detail::group_by_image(dets, gts, /*max_dets_per_image=*/0);
    int total_gts = 0;
    for (const auto& [id, img] : images) total_gts += int(img.gts.size());
    if (total_gts == 0) throw ConfigError("empty ground truth");

    const std::vector<double> thresholds = detail::oks_thresholds();
    auto any_area = [](const GtInstance&) { return true; };
    auto medium_area = [](const GtInstance& g) {
        return g.area > 32.0 * 32.0 && g.area < 96.0 * 96.0;
    };

    EvalResult r;
    double ap_sum = 0.0, apm_sum = 0.0;
    bool any_medium = false;
    for (size_t t = 0; t < thresholds.size(); ++t) {
        const auto all = detail::ap_at_threshold(images, thresholds[t], consts, any_area);
        ap_sum += all.ap;
        if (t == 0) r.ap50 = all.ap;
        const auto med = detail::ap_at_threshold(images, thresholds[t], consts, medium_area);
        apm_sum += med.ap;
        any_medium = any_medium || med.has_gts;
    }
    r.ap = ap_sum / double(thresholds.size());
    r.ap_medium = any_medium ? apm_sum / double(thresholds.size()) : 0.0;

    const auto capped = detail::group_by_image(dets, gts, /*max_dets_per_image=*/20);
    double ar_sum = 0.0;
    for (double thr : thresholds) {
        int matched = 0;
        for (const auto& [id, img] : capped) {
            const MatchResult m = detail::match_greedy(
                img.dets, img.gts, std::vector<char>(img.gts.size(), 0), thr, consts);
            for (int g : m.det_to_gt)
                if (g >= 0) ++matched;
        }
        ar_sum += double(matched) / double(total_gts);
    }
    r.ar = ar_sum / double(thresholds.size());
    return r;
}

// ---------------------------------------------------------------------------
// Annotation / detection / constants files
// ---------------------------------------------------------------------------

inline std::vector<GtInstance> load_annotations(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open annotations: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed annotations " + path + ": " + e.what());
    }
    std::vector<int64_t> image_ids;
    if (j.contains("images"))
        for (const auto& im : j.at("images")) image_ids.push_back(im.at("id").get<int64_t>());

    if (!j.contains("annotations") || !j.at("annotations").is_array() || j.at("annotations").empty())
        throw IoError("empty ground truth in " + path);

    std::vector<GtInstance> out;
    size_t index = 0;
    for (const auto& a : j.at("annotations")) {
        try {
            GtInstance g;
            g.image_id = a.at("image_id").get<int64_t>();
            if (!image_ids.empty() &&
                std::find(image_ids.begin(), image_ids.end(), g.image_id) == image_ids.end())
                throw ConfigError("unknown image_id " + std::to_string(g.image_id));
            g.keypoints = a.at("keypoints").get<std::vector<float>>();
            if (g.keypoints.size() % 3 != 0) throw ConfigError("keypoints not x,y,v triplets");
            for (size_t i = 2; i < g.keypoints.size(); i += 3) {
                const float v = g.keypoints[i];
                if (v != 0.0f && v != 1.0f && v != 2.0f)
                    throw ConfigError("visibility must be 0, 1 or 2");
            }
            g.area = a.at("area").get<double>();
            if (!(g.area > 0.0)) throw ConfigError("area must be > 0");
            const auto bbox = a.at("bbox").get<std::vector<double>>();
            if (bbox.size() != 4) throw ConfigError("bbox must be [x, y, w, h]");
            if (!(bbox[2] > 0.0) || !(bbox[3] > 0.0)) throw ConfigError("degenerate bbox");
            g.box = {bbox[0] + bbox[2] / 2.0, bbox[1] + bbox[3] / 2.0, bbox[2], bbox[3]};
            out.push_back(std::move(g));
        } catch (const std::exception& e) {
            throw IoError("annotation record " + std::to_string(index) + ": " + e.what());
        }
        ++index;
    }
    return out;
}

inline std::vector<DetInstance> load_detections(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open detections: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed detections " + path + ": " + e.what());
    }
    if (!j.is_array()) throw IoError("detections file must be a JSON array: " + path);
    std::vector<DetInstance> out;
    size_t index = 0;
    for (const auto& a : j) {
        try {
            DetInstance d;
            d.image_id = a.at("image_id").get<int64_t>();
            d.keypoints = a.at("keypoints").get<std::vector<float>>();
            if (d.keypoints.size() % 3 != 0)
                throw ConfigError("keypoints not x,y,confidence triplets");
            d.score = a.at("score").get<double>();
            if (!std::isfinite(d.score)) throw ConfigError("score must be finite");
            out.push_back(std::move(d));
        } catch (const std::exception& e) {
            throw IoError("detection record " + std::to_string(index) + ": " + e.what());
        }
        ++index;
    }
    return out;
}

inline void save_detections(const std::vector<DetInstance>& dets, const std::string& path) {
    nlohmann::json j = nlohmann::json::array();
    for (const DetInstance& d : dets)
        j.push_back({{"image_id", d.image_id}, {"keypoints", d.keypoints}, {"score", d.score}});
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << j.dump(2) << "\n";
    if (!os) throw IoError("write failed: " + path);
}

inline OksConstants load_oks_constants(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open OKS constants: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed OKS constants " + path + ": " + e.what());
    }
    OksConstants c;
    c.k = j.at("k").get<std::vector<double>>();
    for (double v : c.k)
        if (!(v > 0.0)) throw IoError("OKS constants must be > 0: " + path);
    return c;
}

}  // namespace posekit
