// Command-line surface for the pose-estimation toolkit: model validation,
// cost accounting, inference, heatmap decoding, evaluation, benchmarking,
// and loss computation, all file-based and deterministic.
//
// Exit codes: 0 success, 1 validation/domain error, 2 I/O or usage error.

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "posekit/boxes.hpp"
#include "posekit/config.hpp"
#include "posekit/eval.hpp"
#include "posekit/flops.hpp"
#include "posekit/heatmap.hpp"
#include "posekit/infer.hpp"
#include "posekit/loss.hpp"
#include "posekit/quantize.hpp"
#include "posekit/tensor.hpp"
#include "posekit/validate.hpp"
#include "posekit/weights.hpp"

namespace {

using nlohmann::json;

uint64_t fnv1a(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = seed;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw posekit::IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    const std::string s = ss.str();
    return hex64(fnv1a(s.data(), s.size()));
}

/// Collects the machine-readable side of every command: echoed command line,
/// config hash, per-stage timings, outputs written, and warnings (including
/// flags for defaults the published work leaves unspecified).
struct RunReport {
    json j;
    std::vector<std::string> outputs;
    std::vector<std::string> warnings;
    std::map<std::string, double> timings_ms;

    explicit RunReport(const std::string& command, int argc, char** argv) {
        j["command"] = command;
        json args = json::array();
        for (int i = 0; i < argc; ++i) args.push_back(argv[i]);
        j["argv"] = args;
    }

    void assumption(const std::string& msg) { warnings.push_back("assumption: " + msg); }

    void write(const std::string& path) {
        j["outputs"] = outputs;
        j["warnings"] = warnings;
        j["timings_ms"] = timings_ms;
        std::ofstream os(path);
        if (!os) throw posekit::IoError("cannot open for writing: " + path);
        os << j.dump(2) << "\n";
        if (!os) throw posekit::IoError("write failed: " + path);
    }
};

class StageTimer {
public:
    StageTimer(RunReport& r, std::string stage)
        : report_(r), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
        const auto end = std::chrono::steady_clock::now();
        report_.timings_ms[stage_] +=
            std::chrono::duration<double, std::milli>(end - start_).count();
    }

private:
    RunReport& report_;
    std::string stage_;
    std::chrono::steady_clock::time_point start_;
};

std::string default_report_path(const std::string& primary_out, const std::string& command) {
    return primary_out.empty() ? command + ".report.json" : primary_out + ".report.json";
}

// ---------------------------------------------------------------------------
// flops
// ---------------------------------------------------------------------------

struct FlopsArgs {
    std::string config;
    std::string convention = "output";
    bool double_count = false;
    std::string out = "flops.json";
    std::string report;
};

int run_flops(const FlopsArgs& a, RunReport& rep) {
    posekit::ModelConfig cfg;
    {
        StageTimer t(rep, "load");
        cfg = posekit::load_model_config(a.config);
        rep.j["config_hash"] = file_hash(a.config);
    }
    const posekit::MacConvention conv = a.convention == "input"
                                            ? posekit::MacConvention::InputBased
                                            : posekit::MacConvention::OutputBased;
    posekit::FlopsReport fr;
    {
        StageTimer t(rep, "count");
        fr = posekit::count_macs(cfg, conv);
    }
    std::printf("%-24s %-12s %14s %14s\n", "layer", "kind", "macs", "params");
    for (const posekit::LayerCost& c : fr.layers)
        std::printf("%-24s %-12s %14lld %14lld\n", c.id.c_str(), posekit::layer_kind_name(c.kind),
                    static_cast<long long>(c.macs), static_cast<long long>(c.params));
    std::printf("total macs   %lld\n", static_cast<long long>(fr.total_macs));
    std::printf("total params %lld\n", static_cast<long long>(fr.total_params));
    std::printf("gflops (%s-based%s) %.4f\n", a.convention.c_str(),
                a.double_count ? ", multiply+add" : "", fr.gflops(a.double_count));

    json layers = json::array();
    for (const posekit::LayerCost& c : fr.layers)
        layers.push_back({{"id", c.id},
                          {"kind", posekit::layer_kind_name(c.kind)},
                          {"macs", c.macs},
                          {"params", c.params}});
    rep.j["convention"] = a.convention;
    rep.j["double_count"] = a.double_count;
    rep.j["layers"] = layers;
    rep.j["total_macs"] = fr.total_macs;
    rep.j["total_params"] = fr.total_params;
    rep.j["gflops"] = fr.gflops(a.double_count);
    {
        StageTimer t(rep, "write");
        std::ofstream os(a.out);
        if (!os) throw posekit::IoError("cannot open for writing: " + a.out);
        os << rep.j.dump(2) << "\n";
        rep.outputs.push_back(a.out);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

struct ValidateArgs {
    std::string config;
};

int run_validate(const ValidateArgs& a, RunReport& rep) {
    posekit::ModelConfig cfg;
    std::vector<posekit::Diagnostic> diags;
    {
        StageTimer t(rep, "load");
        try {
            cfg = posekit::load_model_config(a.config);
        } catch (const posekit::ConfigError& e) {
            diags.push_back({posekit::DiagLevel::Error, "parse", e.what()});
        }
    }
    if (diags.empty()) {
        StageTimer t(rep, "validate");
        diags = posekit::validate_config(cfg);
        rep.j["config_hash"] = file_hash(a.config);
    }
    int errors = 0, warnings = 0;
    json jd = json::array();
    for (const posekit::Diagnostic& d : diags) {
        const bool err = d.level == posekit::DiagLevel::Error;
        (err ? errors : warnings) += 1;
        std::printf("%s [%s] %s\n", err ? "error" : "warning", d.rule.c_str(), d.message.c_str());
        jd.push_back({{"level", err ? "error" : "warning"},
                      {"rule", d.rule},
                      {"message", d.message}});
    }
    std::printf("%d error(s), %d warning(s)\n", errors, warnings);
    rep.j["diagnostics"] = jd;
    rep.j["errors"] = errors;
    rep.j["warnings_count"] = warnings;
    return errors == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferArgs {
    std::string config, weights, blob, input;
    std::string out = "heatmaps.tnsr";
    std::string precision = "fp32";
    std::string calib;
    bool fuse = false;
    int threads = 1;
    std::string report;
};

int run_infer(const InferArgs& a, RunReport& rep) {
    if (a.precision == "int8" && a.calib.empty())
        throw posekit::ConfigError("--precision int8 requires --calib");

    posekit::ModelConfig cfg;
    posekit::Graph g;
    posekit::WeightStore ws;
    posekit::Tensor input;
    {
        StageTimer t(rep, "load");
        cfg = posekit::load_model_config(a.config);
        rep.j["config_hash"] = file_hash(a.config);
        g = posekit::build_model(cfg);
        ws = posekit::load_weights(a.weights, a.blob);
        input = posekit::load_tensor(a.input);
    }

    posekit::Tensor out;
    {
        StageTimer t(rep, "run");
        if (a.precision == "fp32") {
            posekit::InferOptions opts;
            opts.fuse = a.fuse;
            opts.threads = a.threads;
            out = posekit::infer(g, ws, input, opts);
        } else if (a.precision == "fp16") {
            const posekit::FoldedModel fm = posekit::fold_batchnorm(g, ws);
            const posekit::Shape in = input.shape();
            for (int i = 0; i < in.n; ++i) {
                posekit::Tensor one({1, in.c, in.h, in.w});
                std::copy(input.plane(i, 0), input.plane(i, 0) + one.numel(), one.data());
                posekit::Tensor r = posekit::run_fp16(fm, one, nullptr, a.threads);
                if (i == 0) {
                    posekit::Shape os = r.shape();
                    os.n = in.n;
                    out = posekit::Tensor(os);
                }
                std::copy(r.data(), r.data() + r.numel(), out.plane(i, 0));
            }
        } else if (a.precision == "int8") {
            const posekit::Tensor calib_batch = posekit::load_tensor(a.calib);
            std::vector<posekit::Tensor> calib;
            for (int i = 0; i < calib_batch.shape().n; ++i) {
                posekit::Tensor one({1, calib_batch.shape().c, calib_batch.shape().h,
                                     calib_batch.shape().w});
                std::copy(calib_batch.plane(i, 0), calib_batch.plane(i, 0) + one.numel(),
                          one.data());
                calib.push_back(std::move(one));
            }
            const posekit::QuantizedModel qm = posekit::quantize_model(g, ws, calib, a.threads);
            const posekit::Shape in = input.shape();
            for (int i = 0; i < in.n; ++i) {
                posekit::Tensor one({1, in.c, in.h, in.w});
                std::copy(input.plane(i, 0), input.plane(i, 0) + one.numel(), one.data());
                posekit::Tensor r = posekit::run_int8(qm, one);
                if (i == 0) {
                    posekit::Shape os = r.shape();
                    os.n = in.n;
                    out = posekit::Tensor(os);
                }
                std::copy(r.data(), r.data() + r.numel(), out.plane(i, 0));
            }
            const std::string sidecar = a.out + ".quant.json";
            posekit::save_quantization_sidecar(qm, sidecar);
            rep.outputs.push_back(sidecar);
        } else {
            throw posekit::ConfigError("unknown precision '" + a.precision + "'");
        }
    }
    {
        StageTimer t(rep, "write");
        posekit::save_tensor(out, a.out);
        rep.outputs.push_back(a.out);
    }
    rep.j["precision"] = a.precision;
    rep.j["fuse"] = a.fuse;
    rep.j["output_shape"] = {out.shape().n, out.shape().c, out.shape().h, out.shape().w};
    std::printf("wrote %s with shape %s\n", a.out.c_str(), posekit::to_string(out.shape()).c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// decode
// ---------------------------------------------------------------------------

struct DecodeArgs {
    std::string heatmaps, boxes;
    std::string method = "dark";
    double sigma = 2.0;
    double margin = 1.25;
    int stride = 4;
    std::string out = "detections.json";
    std::string report;
    bool sigma_set = false, margin_set = false;
};

int run_decode(const DecodeArgs& a, RunReport& rep) {
    posekit::Tensor hm;
    std::vector<posekit::BoxRecord> boxes;
    {
        StageTimer t(rep, "load");
        hm = posekit::load_tensor(a.heatmaps);
        boxes = posekit::load_boxes(a.boxes);
    }
    if (int(boxes.size()) != hm.shape().n)
        throw posekit::ConfigError("boxes count " + std::to_string(boxes.size()) +
                                   " != heatmap batch " + std::to_string(hm.shape().n));
    if (!a.sigma_set) rep.assumption("sigma defaulted to 2.0 (training sigma unpublished)");
    if (!a.margin_set) rep.assumption("box margin defaulted to 1.25 (crop margin unpublished)");

    const int input_h = hm.shape().h * a.stride;
    const int input_w = hm.shape().w * a.stride;
    std::vector<posekit::DetInstance> dets;
    int fallbacks = 0;
    {
        StageTimer t(rep, "decode");
        for (int i = 0; i < hm.shape().n; ++i) {
            const posekit::HeatmapSet hs = posekit::heatmaps_from_tensor(hm, i);
            std::vector<posekit::DecodedKeypoint> kps;
            if (a.method == "dark") kps = posekit::decode_dark(hs, {a.sigma});
            else if (a.method == "quarter") kps = posekit::decode_argmax_quarter(hs);
            else throw posekit::ConfigError("unknown decode method '" + a.method + "'");
            for (const posekit::DecodedKeypoint& k : kps)
                if (k.fallback) ++fallbacks;
            const posekit::AffineTransform t2 =
                posekit::box_to_input_transform(boxes[size_t(i)].box, input_h, input_w, a.margin);
            const std::vector<posekit::Keypoint> img = posekit::heatmap_to_image_coords(kps, t2, a.stride);
            posekit::DetInstance d;
            d.image_id = boxes[size_t(i)].image_id;
            double score_sum = 0.0;
            for (const posekit::Keypoint& k : img) {
                d.keypoints.push_back(float(k.x));
                d.keypoints.push_back(float(k.y));
                d.keypoints.push_back(float(k.score));
                score_sum += k.score;
            }
            d.score = img.empty() ? 0.0 : score_sum / double(img.size());
            dets.push_back(std::move(d));
        }
    }
    if (fallbacks > 0)
        rep.warnings.push_back(std::to_string(fallbacks) +
                               " keypoint(s) fell back to quarter-offset decoding");
    {
        StageTimer t(rep, "write");
        posekit::save_detections(dets, a.out);
        rep.outputs.push_back(a.out);
    }
    rep.j["method"] = a.method;
    rep.j["sigma"] = a.sigma;
    rep.j["margin"] = a.margin;
    rep.j["stride"] = a.stride;
    rep.j["num_instances"] = dets.size();
    rep.j["fallbacks"] = fallbacks;
    std::printf("decoded %zu instance(s) -> %s (%d fallback keypoints)\n", dets.size(),
                a.out.c_str(), fallbacks);
    return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string detections, annotations, oks_consts;
    std::string out = "eval.json";
    std::string report;
};

int run_eval(const EvalArgs& a, RunReport& rep) {
    std::vector<posekit::DetInstance> dets;
    std::vector<posekit::GtInstance> gts;
    posekit::OksConstants consts;
    {
        StageTimer t(rep, "load");
        dets = posekit::load_detections(a.detections);
        gts = posekit::load_annotations(a.annotations);
        if (a.oks_consts.empty()) {
            consts = posekit::default_oks_constants();
            rep.assumption("OKS falloff constants defaulted to the COCO 17-keypoint set");
        } else {
            consts = posekit::load_oks_constants(a.oks_consts);
        }
    }
    posekit::EvalResult r;
    {
        StageTimer t(rep, "evaluate");
        r = posekit::compute_metrics(dets, gts, consts);
    }
    std::printf("AP      %.4f\nAP50    %.4f\nAP^M    %.4f\nAR      %.4f\n", r.ap, r.ap50,
                r.ap_medium, r.ar);
    rep.j["ap"] = r.ap;
    rep.j["ap50"] = r.ap50;
    rep.j["ap_medium"] = r.ap_medium;
    rep.j["ar"] = r.ar;
    rep.j["num_detections"] = dets.size();
    rep.j["num_ground_truth"] = gts.size();
    {
        StageTimer t(rep, "write");
        std::ofstream os(a.out);
        if (!os) throw posekit::IoError("cannot open for writing: " + a.out);
        os << rep.j.dump(2) << "\n";
        rep.outputs.push_back(a.out);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

struct BenchArgs {
    std::string config, weights, blob;
    int iters = 10;
    int threads = 1;
    uint64_t seed = 1;
    std::string out = "bench.json";
    std::string report;
};

int run_bench(const BenchArgs& a, RunReport& rep) {
    posekit::ModelConfig cfg;
    posekit::Graph g;
    posekit::WeightStore ws;
    {
        StageTimer t(rep, "load");
        cfg = posekit::load_model_config(a.config);
        rep.j["config_hash"] = file_hash(a.config);
        g = posekit::build_model(cfg);
        if (!a.weights.empty()) {
            ws = posekit::load_weights(a.weights, a.blob);
        } else {
            ws = posekit::random_weights(g, a.seed);
            rep.warnings.push_back("no weights given; using seeded random weights (seed " +
                                   std::to_string(a.seed) + ")");
        }
    }
    posekit::Tensor input({1, 3, cfg.input_h, cfg.input_w});
    // deterministic synthetic input
    {
        std::mt19937_64 rng(a.seed ^ 0x9e3779b97f4a7c15ull);
        float* d = input.data();
        for (int64_t i = 0; i < input.numel(); ++i)
            d[i] = float(double(rng() >> 11) * (1.0 / 9007199254740992.0)) - 0.5f;
    }

    std::vector<double> timings;
    posekit::Tensor out;
    posekit::InferOptions opts;
    opts.threads = a.threads;
    {
        StageTimer t(rep, "run");
        for (int it = 0; it < a.iters; ++it) {
            std::vector<double> pass;
            out = posekit::infer(g, ws, input, opts, nullptr, &pass);
            if (timings.empty()) timings.assign(pass.size(), 0.0);
            for (size_t i = 0; i < pass.size(); ++i) timings[i] += pass[i];
        }
    }
    const uint64_t digest = fnv1a(out.data(), size_t(out.numel()) * 4);

    std::printf("%-24s %-12s %12s\n", "layer", "kind", "mean ms");
    json layers = json::array();
    double total = 0.0;
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        const double ms = timings[i] / double(a.iters);
        total += ms;
        std::printf("%-24s %-12s %12.4f\n", g.nodes[i].id.c_str(),
                    posekit::layer_kind_name(g.nodes[i].kind), ms);
        layers.push_back({{"id", g.nodes[i].id},
                          {"kind", posekit::layer_kind_name(g.nodes[i].kind)},
                          {"mean_ms", ms}});
    }
    std::printf("sum of per-layer means: %.3f ms over %d iteration(s)\n", total, a.iters);
    std::printf("output digest: %s\n", hex64(digest).c_str());
    rep.j["iters"] = a.iters;
    rep.j["threads"] = a.threads;
    rep.j["layers"] = layers;
    rep.j["total_ms"] = total;
    rep.j["output_digest"] = hex64(digest);
    {
        StageTimer t(rep, "write");
        std::ofstream os(a.out);
        if (!os) throw posekit::IoError("cannot open for writing: " + a.out);
        os << rep.j.dump(2) << "\n";
        rep.outputs.push_back(a.out);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// loss
// ---------------------------------------------------------------------------

struct LossArgs {
    std::string pred, gt, teacher;
    double alpha = 1.0;
    std::string grad_out;
    std::string out = "loss.json";
    std::string report;
    bool alpha_set = false;
};

posekit::HeatmapSet heatmap_file_as_set(const std::string& path) {
    const posekit::Tensor t = posekit::load_tensor(path);
    // (n, K, h, w) flattens to n*K maps so multi-person dumps are averaged too
    posekit::HeatmapSet hs(t.shape().n * t.shape().c, t.shape().h, t.shape().w);
    std::copy(t.data(), t.data() + t.numel(), hs.maps.data());
    return hs;
}

int run_loss(const LossArgs& a, RunReport& rep) {
    posekit::HeatmapSet pred, gt, teacher;
    {
        StageTimer t(rep, "load");
        pred = heatmap_file_as_set(a.pred);
        gt = heatmap_file_as_set(a.gt);
        teacher = heatmap_file_as_set(a.teacher);
    }
    if (!a.alpha_set) rep.assumption("distillation weight alpha defaulted to 1.0 (unpublished)");
    const posekit::LossConfig cfg{a.alpha};
    double supervised, distill, total;
    {
        StageTimer t(rep, "compute");
        supervised = posekit::mse_heatmap_loss(pred, gt);
        distill = posekit::mse_heatmap_loss(pred, teacher);
        total = posekit::combined_loss(pred, gt, teacher, cfg);
    }
    std::printf("supervised %.9g\ndistill    %.9g\ntotal      %.9g (alpha %.4g)\n", supervised,
                distill, total, a.alpha);
    rep.j["alpha"] = a.alpha;
    rep.j["supervised_loss"] = supervised;
    rep.j["distill_loss"] = distill;
    rep.j["total_loss"] = total;
    if (!a.grad_out.empty()) {
        StageTimer t(rep, "gradient");
        const posekit::HeatmapSet grad = posekit::combined_loss_grad(pred, gt, teacher, cfg);
        posekit::Tensor gt2({1, grad.num_kp, grad.h, grad.w});
        std::copy(grad.maps.begin(), grad.maps.end(), gt2.data());
        posekit::save_tensor(gt2, a.grad_out);
        rep.outputs.push_back(a.grad_out);
    }
    {
        StageTimer t(rep, "write");
        std::ofstream os(a.out);
        if (!os) throw posekit::IoError("cannot open for writing: " + a.out);
        os << rep.j.dump(2) << "\n";
        rep.outputs.push_back(a.out);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// gen-weights (developer utility: seeded random weights for a config)
// ---------------------------------------------------------------------------

struct GenArgs {
    std::string config;
    uint64_t seed = 1;
    std::string manifest = "weights.json";
    std::string blob = "weights.bin";
    std::string report;
};

int run_gen(const GenArgs& a, RunReport& rep) {
    posekit::ModelConfig cfg;
    posekit::Graph g;
    {
        StageTimer t(rep, "load");
        cfg = posekit::load_model_config(a.config);
        rep.j["config_hash"] = file_hash(a.config);
        g = posekit::build_model(cfg);
    }
    {
        StageTimer t(rep, "generate");
        const posekit::WeightStore ws = posekit::random_weights(g, a.seed);
        posekit::save_weights(ws, a.manifest, a.blob);
        rep.outputs.push_back(a.manifest);
        rep.outputs.push_back(a.blob);
    }
    rep.j["seed"] = a.seed;
    std::printf("wrote %s + %s (seed %llu)\n", a.manifest.c_str(), a.blob.c_str(),
                static_cast<unsigned long long>(a.seed));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"posekit: lightweight top-down pose estimation toolkit"};
    app.require_subcommand(1);

    FlopsArgs fa;
    CLI::App* flops = app.add_subcommand("flops", "per-layer MAC/parameter accounting");
    flops->add_option("--config", fa.config, "model config JSON")->required();
    flops->add_option("--convention", fa.convention, "deconv MAC convention: output|input")
        ->check(CLI::IsMember({"output", "input"}));
    flops->add_flag("--double-count", fa.double_count, "report multiply+add instead of MACs");
    flops->add_option("--out", fa.out, "structured report path");

    ValidateArgs va;
    CLI::App* validate = app.add_subcommand("validate", "check a config against the layer rules");
    validate->add_option("--config", va.config, "model config JSON")->required();

    InferArgs ia;
    CLI::App* infer = app.add_subcommand("infer", "run the network on tensor dumps");
    infer->add_option("--config", ia.config)->required();
    infer->add_option("--weights", ia.weights, "weight manifest JSON")->required();
    infer->add_option("--blob", ia.blob, "weight blob")->required();
    infer->add_option("--input", ia.input, "input TNSR (n,3,h,w)")->required();
    infer->add_option("--out", ia.out, "output heatmap TNSR");
    infer->add_flag("--fuse", ia.fuse, "fold batch-norm into convolutions");
    infer->add_option("--precision", ia.precision, "fp32|fp16|int8")
        ->check(CLI::IsMember({"fp32", "fp16", "int8"}));
    infer->add_option("--calib", ia.calib, "calibration TNSR (required for int8)");
    infer->add_option("--threads", ia.threads)->check(CLI::PositiveNumber);
    infer->add_option("--report", ia.report, "run report path");

    DecodeArgs da;
    CLI::App* decode = app.add_subcommand("decode", "heatmaps -> image-space keypoints");
    decode->add_option("--heatmaps", da.heatmaps, "heatmap TNSR (n,K,hh,ww)")->required();
    decode->add_option("--boxes", da.boxes, "person boxes JSON")->required();
    decode->add_option("--method", da.method, "dark|quarter")
        ->check(CLI::IsMember({"dark", "quarter"}));
    auto* sopt = decode->add_option("--sigma", da.sigma, "training target sigma");
    auto* mopt = decode->add_option("--margin", da.margin, "box expansion margin");
    decode->add_option("--stride", da.stride, "heatmap stride")->check(CLI::PositiveNumber);
    decode->add_option("--out", da.out, "detections JSON");
    decode->add_option("--report", da.report, "run report path");

    EvalArgs ea;
    CLI::App* eval = app.add_subcommand("eval", "OKS-based AP/AR metrics");
    eval->add_option("--detections", ea.detections)->required();
    eval->add_option("--annotations", ea.annotations)->required();
    eval->add_option("--oks-consts", ea.oks_consts, "per-keypoint constants JSON");
    eval->add_option("--out", ea.out, "metrics JSON");
    eval->add_option("--report", ea.report, "run report path");

    BenchArgs ba;
    CLI::App* bench = app.add_subcommand("bench", "per-layer timing report");
    bench->add_option("--config", ba.config)->required();
    bench->add_option("--weights", ba.weights, "weight manifest JSON (optional)");
    bench->add_option("--blob", ba.blob, "weight blob");
    bench->add_option("--iters", ba.iters)->check(CLI::PositiveNumber);
    bench->add_option("--threads", ba.threads)->check(CLI::PositiveNumber);
    bench->add_option("--seed", ba.seed);
    bench->add_option("--out", ba.out, "bench report path");
    bench->add_option("--report", ba.report, "run report path");

    LossArgs la;
    CLI::App* loss = app.add_subcommand("loss", "supervised + distillation heatmap loss");
    loss->add_option("--pred", la.pred)->required();
    loss->add_option("--gt", la.gt)->required();
    loss->add_option("--teacher", la.teacher)->required();
    auto* aopt = loss->add_option("--alpha", la.alpha, "distillation weight");
    loss->add_option("--grad-out", la.grad_out, "write gradient TNSR");
    loss->add_option("--out", la.out, "loss JSON");
    loss->add_option("--report", la.report, "run report path");

    GenArgs ga;
    CLI::App* gen = app.add_subcommand("gen-weights", "seeded random weights for a config");
    gen->add_option("--config", ga.config)->required();
    gen->add_option("--seed", ga.seed);
    gen->add_option("--manifest", ga.manifest);
    gen->add_option("--blob", ga.blob);
    gen->add_option("--report", ga.report, "run report path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage problems share the I/O exit code
    }

    try {
        if (*flops) {
            RunReport rep("flops", argc, argv);
            const int rc = run_flops(fa, rep);
            rep.write(fa.report.empty() ? default_report_path(fa.out, "flops") : fa.report);
            return rc;
        }
        if (*validate) {
            RunReport rep("validate", argc, argv);
            return run_validate(va, rep);
        }
        if (*infer) {
            RunReport rep("infer", argc, argv);
            const int rc = run_infer(ia, rep);
            rep.write(ia.report.empty() ? default_report_path(ia.out, "infer") : ia.report);
            return rc;
        }
        if (*decode) {
            da.sigma_set = sopt->count() > 0;
            da.margin_set = mopt->count() > 0;
            RunReport rep("decode", argc, argv);
            const int rc = run_decode(da, rep);
            rep.write(da.report.empty() ? default_report_path(da.out, "decode") : da.report);
            return rc;
        }
        if (*eval) {
            RunReport rep("eval", argc, argv);
            const int rc = run_eval(ea, rep);
            rep.write(ea.report.empty() ? default_report_path(ea.out, "eval") : ea.report);
            return rc;
        }
        if (*bench) {
            RunReport rep("bench", argc, argv);
            const int rc = run_bench(ba, rep);
            rep.write(ba.report.empty() ? default_report_path(ba.out, "bench") : ba.report);
            return rc;
        }
        if (*loss) {
            la.alpha_set = aopt->count() > 0;
            RunReport rep("loss", argc, argv);
            const int rc = run_loss(la, rep);
            rep.write(la.report.empty() ? default_report_path(la.out, "loss") : la.report);
            return rc;
        }
        if (*gen) {
            RunReport rep("gen-weights", argc, argv);
            const int rc = run_gen(ga, rep);
            rep.write(ga.report.empty() ? default_report_path(ga.manifest, "gen-weights")
                                        : ga.report);
            return rc;
        }
    } catch (const posekit::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const posekit::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const posekit::NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
