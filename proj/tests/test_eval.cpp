#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "posekit/eval.hpp"
#include "testutil.hpp"

using namespace posekit;

namespace {

// ---------------------------------------------------------------------------
// Exhaustive reference evaluator: fresh matching code and a direct
// scan-all-prefixes 101-point AP, no cumulative shortcuts.
// ---------------------------------------------------------------------------

struct OracleImage {
    std::vector<const DetInstance*> dets;
    std::vector<const GtInstance*> gts;
};

std::map<int64_t, OracleImage> oracle_group(const std::vector<DetInstance>& dets,
                                            const std::vector<GtInstance>& gts, int cap) {
    std::map<int64_t, OracleImage> images;
    for (const GtInstance& g : gts)
        if (g.num_visible() > 0) images[g.image_id].gts.push_back(&g);
    for (const DetInstance& d : dets) images[d.image_id].dets.push_back(&d);
    for (auto& [id, img] : images) {
        std::stable_sort(img.dets.begin(), img.dets.end(),
                         [](const DetInstance* a, const DetInstance* b) { return a->score > b->score; });
        if (cap > 0 && int(img.dets.size()) > cap) img.dets.resize(size_t(cap));
    }
    return images;
}

// returns per-det: 1 = true positive, 0 = false positive, -1 = ignored
std::vector<int> oracle_match(const OracleImage& img, const std::vector<bool>& gt_in_range,
                              double thr, const OksConstants& consts) {
    std::vector<int> result(img.dets.size(), 0);
    std::vector<bool> used(img.gts.size(), false);
    for (size_t d = 0; d < img.dets.size(); ++d) {
        int pick = -1;
        bool pick_in_range = false;
        double pick_oks = -1.0;
        for (size_t g = 0; g < img.gts.size(); ++g) {
            if (used[g]) continue;
            const double oks = compute_oks(*img.dets[d], *img.gts[g], consts);
            if (oks < thr) continue;
            if (pick >= 0 && pick_in_range && !gt_in_range[g]) continue;
            if (pick < 0 || (!pick_in_range && gt_in_range[g]) || oks > pick_oks) {
                pick = int(g);
                pick_in_range = gt_in_range[g];
                pick_oks = oks;
            }
        }
        if (pick >= 0) {
            used[size_t(pick)] = true;
            result[d] = pick_in_range ? 1 : -1;
        }
    }
    return result;
}

double oracle_ap_one_threshold(const std::map<int64_t, OracleImage>& images, double thr,
                               const OksConstants& consts, bool medium_only, bool* has_gts) {
    struct Entry {
        double score;
        int flag;  // 1 tp, 0 fp
    };
    std::vector<Entry> entries;
    int total = 0;
    for (const auto& [id, img] : images) {
        std::vector<bool> in_range(img.gts.size());
        for (size_t g = 0; g < img.gts.size(); ++g)
            in_range[g] = !medium_only ||
                          (img.gts[g]->area > 1024.0 && img.gts[g]->area < 9216.0);
        for (bool b : in_range)
            if (b) ++total;
        const std::vector<int> match = oracle_match(img, in_range, thr, consts);
        for (size_t d = 0; d < img.dets.size(); ++d)
            if (match[d] >= 0) entries.push_back({img.dets[d]->score, match[d]});
    }
    if (has_gts) *has_gts = total > 0;
    if (total == 0) return 0.0;
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.score > b.score; });
    double sum = 0.0;
    for (int ri = 0; ri <= 100; ++ri) {
        const double r = ri / 100.0;
        double best = 0.0;
        int tp = 0;
        for (size_t k = 0; k < entries.size(); ++k) {
            if (entries[k].flag) ++tp;
            const double recall = double(tp) / double(total);
            const double precision = double(tp) / double(k + 1);
            if (recall >= r) best = std::max(best, precision);
        }
        sum += best;
    }
    return sum / 101.0;
}

EvalResult oracle_metrics(const std::vector<DetInstance>& dets, const std::vector<GtInstance>& gts,
                          const OksConstants& consts) {
    const auto images = oracle_group(dets, gts, 0);
    int total = 0;
    for (const auto& [id, img] : images) total += int(img.gts.size());
    if (total == 0) throw ConfigError("empty ground truth");

    EvalResult r;
    double ap_sum = 0.0, apm_sum = 0.0;
    bool any_medium = false;
    for (int t = 0; t < 10; ++t) {
        const double thr = 0.5 + 0.05 * t;
        const double ap = oracle_ap_one_threshold(images, thr, consts, false, nullptr);
        ap_sum += ap;
        if (t == 0) r.ap50 = ap;
        bool has = false;
        apm_sum += oracle_ap_one_threshold(images, thr, consts, true, &has);
        any_medium = any_medium || has;
    }
    r.ap = ap_sum / 10.0;
    r.ap_medium = any_medium ? apm_sum / 10.0 : 0.0;

    const auto capped = oracle_group(dets, gts, 20);
    double ar_sum = 0.0;
    for (int t = 0; t < 10; ++t) {
        const double thr = 0.5 + 0.05 * t;
        int matched = 0;
        for (const auto& [id, img] : capped) {
            const std::vector<bool> in_range(img.gts.size(), true);
            for (int flag : oracle_match(img, in_range, thr, consts))
                if (flag == 1) ++matched;
        }
        ar_sum += double(matched) / double(total);
    }
    r.ar = ar_sum / 10.0;
    return r;
}

// ---------------------------------------------------------------------------
// fixtures
// ---------------------------------------------------------------------------

const OksConstants kMicroConsts{{0.10, 0.20, 0.15}};

GtInstance make_gt(int64_t image, double x, double y, double area) {
    GtInstance g;
    g.image_id = image;
    g.keypoints = {float(x), float(y), 2, float(x + 5), float(y), 2, float(x), float(y + 5), 1};
    g.area = area;
    g.box = {x, y, 20.0, 20.0};
    return g;
}

DetInstance make_det(int64_t image, const GtInstance& gt, double offset, double score) {
    DetInstance d;
    d.image_id = image;
    for (size_t i = 0; i < gt.keypoints.size(); i += 3) {
        d.keypoints.push_back(gt.keypoints[i] + float(offset));
        d.keypoints.push_back(gt.keypoints[i + 1]);
        d.keypoints.push_back(0.9f);
    }
    d.score = score;
    return d;
}

// detection at a controlled OKS against a single-visible-keypoint gt
std::pair<GtInstance, DetInstance> controlled_oks_pair(double oks_target, double area) {
    GtInstance g;
    g.image_id = 1;
    g.keypoints = {50, 50, 2, 0, 0, 0, 0, 0, 0};  // one visible keypoint
    g.area = area;
    g.box = {50, 50, 30, 30};
    const double k = kMicroConsts.k[0];
    const double d = std::sqrt(-2.0 * area * k * k * std::log(oks_target));
    DetInstance det;
    det.image_id = 1;
    det.keypoints = {float(50 + d), 50, 0.9f, 0, 0, 0.1f, 0, 0, 0.1f};
    det.score = 0.8;
    return {g, det};
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("posekit-eval-" + std::to_string(reinterpret_cast<uintptr_t>(this)));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST(Oks, PerfectDetectionScoresOne) {
    const GtInstance g = make_gt(1, 40, 40, 2000);
    const DetInstance d = make_det(1, g, 0.0, 0.9);
    EXPECT_NEAR(compute_oks(d, g, kMicroConsts), 1.0, 1e-12);
}

TEST(Oks, ClosedFormSingleKeypoint) {
    const double area = 3000.0;
    GtInstance g;
    g.image_id = 1;
    g.keypoints = {10, 10, 2, 0, 0, 0, 0, 0, 0};
    g.area = area;
    g.box = {10, 10, 10, 10};
    const double k = kMicroConsts.k[0];
    const double d = std::sqrt(2.0 * area * k * k);  // d^2 = 2*area*k^2
    DetInstance det;
    det.image_id = 1;
    det.keypoints = {float(10 + d), 10, 0.9f, 0, 0, 0, 0, 0, 0};
    det.score = 1.0;
    EXPECT_NEAR(compute_oks(det, g, kMicroConsts), std::exp(-1.0), 1e-9);
}

TEST(Oks, FarDetectionsApproachZero) {
    const GtInstance g = make_gt(1, 40, 40, 2000);
    DetInstance d = make_det(1, g, 1e6, 0.9);
    EXPECT_NEAR(compute_oks(d, g, kMicroConsts), 0.0, 1e-12);
}

TEST(Oks, NoVisibleKeypointsIsUndefined) {
    GtInstance g = make_gt(1, 40, 40, 2000);
    for (size_t i = 2; i < g.keypoints.size(); i += 3) g.keypoints[i] = 0.0f;
    const DetInstance d = make_det(1, g, 0.0, 0.9);
    EXPECT_THROW(compute_oks(d, g, kMicroConsts), ConfigError);
}

TEST(Matching, BasicClaimAndOneToOne) {
    const GtInstance g = make_gt(1, 40, 40, 2000);
    const DetInstance close = make_det(1, g, 1.0, 0.9);
    const DetInstance closer = make_det(1, g, 0.5, 0.95);
    {
        const auto m = match_instances({&close}, {&g}, 0.5, kMicroConsts);
        EXPECT_EQ(m[0], 0);
    }
    {
        // higher-scored detection claims the gt; the other is a false positive
        const auto m = match_instances({&closer, &close}, {&g}, 0.5, kMicroConsts);
        EXPECT_EQ(m[0], 0);
        EXPECT_EQ(m[1], -1);
    }
}

TEST(Matching, OksEqualToThresholdMatches) {
    const auto [g, d] = controlled_oks_pair(0.62, 3000.0);
    const double oks = compute_oks(d, g, kMicroConsts);
    const auto m = match_instances({&d}, {&g}, oks, kMicroConsts);  // >= rule
    EXPECT_EQ(m[0], 0);
    const auto m2 = match_instances({&d}, {&g}, std::nextafter(oks, 1.0), kMicroConsts);
    EXPECT_EQ(m2[0], -1);
}

TEST(Metrics, SingleInstanceOks08Fixture) {
    const auto [g, d] = controlled_oks_pair(0.82, 5000.0);  // in (0.80, 0.85)
    const EvalResult r = compute_metrics({d}, {g}, kMicroConsts);
    EXPECT_DOUBLE_EQ(r.ap, 0.70);
    EXPECT_DOUBLE_EQ(r.ap50, 1.0);
    EXPECT_DOUBLE_EQ(r.ar, 0.70);
    EXPECT_DOUBLE_EQ(r.ap_medium, 0.70);  // area 5000 is medium
}

TEST(Metrics, PerfectDetectionsScoreOne) {
    std::vector<GtInstance> gts{make_gt(1, 30, 30, 2000), make_gt(1, 80, 80, 5000),
                                make_gt(2, 50, 50, 3000)};
    std::vector<DetInstance> dets;
    for (const GtInstance& g : gts) dets.push_back(make_det(g.image_id, g, 0.0, 0.9));
    const EvalResult r = compute_metrics(dets, gts, kMicroConsts);
    EXPECT_DOUBLE_EQ(r.ap, 1.0);
    EXPECT_DOUBLE_EQ(r.ap50, 1.0);
    EXPECT_DOUBLE_EQ(r.ap_medium, 1.0);
    EXPECT_DOUBLE_EQ(r.ar, 1.0);
}

TEST(Metrics, NoDetectionsScoreZero) {
    const EvalResult r = compute_metrics({}, {make_gt(1, 30, 30, 2000)}, kMicroConsts);
    EXPECT_DOUBLE_EQ(r.ap, 0.0);
    EXPECT_DOUBLE_EQ(r.ar, 0.0);
}

TEST(Metrics, EmptyGroundTruthIsError) {
    EXPECT_THROW(compute_metrics({}, {}, kMicroConsts), ConfigError);
    GtInstance g = make_gt(1, 30, 30, 2000);
    for (size_t i = 2; i < g.keypoints.size(); i += 3) g.keypoints[i] = 0.0f;
    EXPECT_THROW(compute_metrics({}, {g}, kMicroConsts), ConfigError);  // nothing evaluable
}

namespace {

void random_dataset(std::mt19937_64& rng, std::vector<GtInstance>& gts,
                    std::vector<DetInstance>& dets) {
    gts.clear();
    dets.clear();
    const int images = testutil::irand(rng, 1, 5);
    for (int im = 1; im <= images; ++im) {
        const int ngt = testutil::irand(rng, 0, 4);
        std::vector<GtInstance> local;
        for (int i = 0; i < ngt; ++i) {
            GtInstance g;
            g.image_id = im;
            for (int k = 0; k < 3; ++k) {
                g.keypoints.push_back(float(testutil::urand(rng, 0, 100)));
                g.keypoints.push_back(float(testutil::urand(rng, 0, 100)));
                g.keypoints.push_back(float(testutil::irand(rng, 0, 2)));
            }
            g.area = testutil::urand(rng, 500.0, 12000.0);
            g.box = {50, 50, 20, 20};
            local.push_back(g);
            gts.push_back(local.back());
        }
        const int ndet = testutil::irand(rng, 0, 4);
        for (int i = 0; i < ndet; ++i) {
            DetInstance d;
            d.image_id = im;
            if (!local.empty() && testutil::irand(rng, 0, 2) > 0) {
                const GtInstance& g = local[size_t(testutil::irand(rng, 0, int(local.size()) - 1))];
                for (int k = 0; k < 3; ++k) {
                    d.keypoints.push_back(g.keypoints[size_t(3 * k)] +
                                          float(testutil::urand(rng, -8.0, 8.0)));
                    d.keypoints.push_back(g.keypoints[size_t(3 * k + 1)] +
                                          float(testutil::urand(rng, -8.0, 8.0)));
                    d.keypoints.push_back(float(testutil::urand(rng, 0.1, 1.0)));
                }
            } else {
                for (int k = 0; k < 3; ++k) {
                    d.keypoints.push_back(float(testutil::urand(rng, 0, 100)));
                    d.keypoints.push_back(float(testutil::urand(rng, 0, 100)));
                    d.keypoints.push_back(float(testutil::urand(rng, 0.1, 1.0)));
                }
            }
            d.score = testutil::urand(rng, 0.01, 1.0);
            dets.push_back(d);
        }
    }
}

bool has_evaluable_gt(const std::vector<GtInstance>& gts) {
    for (const GtInstance& g : gts)
        if (g.num_visible() > 0) return true;
    return false;
}

}  // namespace

TEST(Metrics, ExhaustiveOracleEquivalenceOn200RandomMicroDatasets) {
    std::mt19937_64 rng(77);
    int done = 0;
    while (done < 200) {
        std::vector<GtInstance> gts;
        std::vector<DetInstance> dets;
        random_dataset(rng, gts, dets);
        if (!has_evaluable_gt(gts)) continue;
        const EvalResult a = compute_metrics(dets, gts, kMicroConsts);
        const EvalResult b = oracle_metrics(dets, gts, kMicroConsts);
        EXPECT_EQ(a.ap, b.ap) << "dataset " << done;
        EXPECT_EQ(a.ap50, b.ap50) << "dataset " << done;
        EXPECT_EQ(a.ap_medium, b.ap_medium) << "dataset " << done;
        EXPECT_EQ(a.ar, b.ar) << "dataset " << done;
        ++done;
    }
}

TEST(Metrics, ScoreScalingInvariance) {
    std::mt19937_64 rng(88);
    for (int iter = 0; iter < 20; ++iter) {
        std::vector<GtInstance> gts;
        std::vector<DetInstance> dets;
        random_dataset(rng, gts, dets);
        if (!has_evaluable_gt(gts)) continue;
        const EvalResult a = compute_metrics(dets, gts, kMicroConsts);
        std::vector<DetInstance> scaled = dets;
        for (DetInstance& d : scaled) d.score *= 3.7;
        const EvalResult b = compute_metrics(scaled, gts, kMicroConsts);
        EXPECT_EQ(a.ap, b.ap);
        EXPECT_EQ(a.ap50, b.ap50);
        EXPECT_EQ(a.ap_medium, b.ap_medium);
        EXPECT_EQ(a.ar, b.ar);
    }
}

TEST(Metrics, MovingADetectionCloserNeverLowersAp) {
    std::mt19937_64 rng(99);
    for (int iter = 0; iter < 30; ++iter) {
        std::vector<GtInstance> gts;
        std::vector<DetInstance> dets;
        random_dataset(rng, gts, dets);
        if (!has_evaluable_gt(gts) || dets.empty()) continue;
        const EvalResult before = compute_metrics(dets, gts, kMicroConsts);
        // move every detection halfway toward the nearest gt of its image
        std::vector<DetInstance> moved = dets;
        for (DetInstance& d : moved) {
            const GtInstance* target = nullptr;
            for (const GtInstance& g : gts)
                if (g.image_id == d.image_id && g.num_visible() > 0) target = &g;
            if (!target) continue;
            for (size_t i = 0; i + 2 < d.keypoints.size(); i += 3) {
                d.keypoints[i] = 0.5f * (d.keypoints[i] + target->keypoints[i]);
                d.keypoints[i + 1] = 0.5f * (d.keypoints[i + 1] + target->keypoints[i + 1]);
            }
        }
        const EvalResult after = compute_metrics(moved, gts, kMicroConsts);
        EXPECT_GE(after.ap + 1e-12, before.ap) << "iteration " << iter;
    }
}

TEST(Metrics, Ap50IsNeverBelowAp) {
    std::mt19937_64 rng(111);
    for (int iter = 0; iter < 50; ++iter) {
        std::vector<GtInstance> gts;
        std::vector<DetInstance> dets;
        random_dataset(rng, gts, dets);
        if (!has_evaluable_gt(gts)) continue;
        const EvalResult r = compute_metrics(dets, gts, kMicroConsts);
        EXPECT_GE(r.ap50, r.ap);
    }
}

TEST(Files, AnnotationFixtureLoads) {
    TempDir tmp;
    {
        std::ofstream os(tmp.file("gt.json"));
        os << R"({
          "images": [{"id": 1, "width": 640, "height": 480},
                     {"id": 2, "width": 640, "height": 480}],
          "annotations": [
            {"image_id": 1, "keypoints": [10,20,2, 30,40,1, 50,60,0], "area": 1500.0,
             "bbox": [5, 15, 60, 70]},
            {"image_id": 1, "keypoints": [12,22,2, 32,42,2, 52,62,2], "area": 2500.0,
             "bbox": [6, 16, 61, 71]},
            {"image_id": 2, "keypoints": [0,0,0, 0,0,0, 9,9,2], "area": 3500.0,
             "bbox": [0, 0, 10, 10]}
          ]})";
    }
    const auto gts = load_annotations(tmp.file("gt.json"));
    ASSERT_EQ(gts.size(), 3u);
    EXPECT_EQ(gts[0].image_id, 1);
    EXPECT_EQ(gts[2].image_id, 2);
    EXPECT_DOUBLE_EQ(gts[0].area, 1500.0);
    EXPECT_DOUBLE_EQ(gts[0].box.cx, 35.0);  // 5 + 60/2
    EXPECT_EQ(gts[0].num_visible(), 2);
}

TEST(Files, DetectionRoundTripIsLossless) {
    TempDir tmp;
    std::mt19937_64 rng(5);
    std::vector<DetInstance> dets;
    for (int i = 0; i < 5; ++i) {
        DetInstance d;
        d.image_id = i;
        for (int k = 0; k < 4; ++k) {
            d.keypoints.push_back(float(testutil::urand(rng, -100, 700)));
            d.keypoints.push_back(float(testutil::urand(rng, -100, 700)));
            d.keypoints.push_back(float(testutil::urand(rng, 0, 1)));
        }
        d.score = testutil::urand(rng, 0, 1);
        dets.push_back(d);
    }
    save_detections(dets, tmp.file("dt.json"));
    const auto back = load_detections(tmp.file("dt.json"));
    ASSERT_EQ(back.size(), dets.size());
    for (size_t i = 0; i < dets.size(); ++i) {
        EXPECT_EQ(back[i].image_id, dets[i].image_id);
        EXPECT_EQ(back[i].keypoints, dets[i].keypoints);
        EXPECT_EQ(back[i].score, dets[i].score);
    }
}

TEST(Files, MalformedRecordNamesItsIndex) {
    TempDir tmp;
    {
        std::ofstream os(tmp.file("gt.json"));
        os << R"({"annotations": [
            {"image_id": 1, "keypoints": [1,2,2], "area": 100.0, "bbox": [0,0,5,5]},
            {"image_id": 2, "keypoints": [1,2,7], "area": 100.0, "bbox": [0,0,5,5]}
          ]})";
    }
    try {
        load_annotations(tmp.file("gt.json"));
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("record 1"), std::string::npos);
    }
}

TEST(Files, EmptyAnnotationListIsError) {
    TempDir tmp;
    {
        std::ofstream os(tmp.file("gt.json"));
        os << R"({"annotations": []})";
    }
    try {
        load_annotations(tmp.file("gt.json"));
        FAIL() << "expected IoError";
    } catch (const IoError& e) {
        EXPECT_NE(std::string(e.what()).find("empty ground truth"), std::string::npos);
    }
}

TEST(Files, OksConstantsLoaderValidates) {
    TempDir tmp;
    {
        std::ofstream os(tmp.file("k.json"));
        os << R"({"k": [0.1, 0.2, 0.3]})";
    }
    const OksConstants c = load_oks_constants(tmp.file("k.json"));
    ASSERT_EQ(c.k.size(), 3u);
    {
        std::ofstream os(tmp.file("bad.json"));
        os << R"({"k": [0.1, 0.0]})";
    }
    EXPECT_THROW(load_oks_constants(tmp.file("bad.json")), IoError);
    EXPECT_EQ(default_oks_constants().k.size(), 17u);
}

