#include <gtest/gtest.h>

#include <cmath>

#include "posekit/quantize.hpp"
#include "posekit/validate.hpp"
#include "testutil.hpp"

using namespace posekit;

namespace {

// Independent integer-exact oracle: different loop order, same requantization
// definition (llround half-away, clamp to [-127, 127]).
Int8Tensor oracle_qconv(const Int8Tensor& in, const Int8ConvWeights& w, QuantParams iq,
                        QuantParams wq, QuantParams oq) {
    const Shape s = in.shape;
    const int oh = (s.h + 2 * w.pad_y - w.kh) / w.stride_y + 1;
    const int ow = (s.w + 2 * w.pad_x - w.kw) / w.stride_x + 1;
    Int8Tensor out{{s.n, w.c_out, oh, ow}, std::vector<int8_t>(size_t(s.n) * w.c_out * oh * ow)};
    const double mult = double(iq.scale) * double(wq.scale) / double(oq.scale);
    const int cog = w.c_out / w.groups;
    for (int n = 0; n < s.n; ++n)
        for (int co = 0; co < w.c_out; ++co)
            for (int oy = 0; oy < oh; ++oy)
                for (int ox = 0; ox < ow; ++ox) {
                    int64_t acc = w.bias.empty() ? 0 : w.bias[size_t(co)];
                    const int g = co / cog;
                    for (int ci = 0; ci < w.c_in_per_group; ++ci)  // channel-major on purpose
                        for (int ky = 0; ky < w.kh; ++ky)
                            for (int kx = 0; kx < w.kw; ++kx) {
                                const int iy = oy * w.stride_y - w.pad_y + ky;
                                const int ix = ox * w.stride_x - w.pad_x + kx;
                                if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w) continue;
                                acc += int(w.kernel[w.kidx(co, ci, ky, kx)]) *
                                       int(in.data[((size_t(n) * s.c + g * w.c_in_per_group + ci) *
                                                        s.h +
                                                    iy) *
                                                       s.w +
                                                   ix]);
                            }
                    const long long v = std::llround(double(acc) * mult);
                    out.data[((size_t(n) * w.c_out + co) * oh + oy) * ow + ox] =
                        int8_t(std::clamp<long long>(v, -127, 127));
                }
    return out;
}

ModelConfig micro_config() {
    ModelConfig cfg;
    cfg.encoder = encoder_preset("reduced-efficientnet-b0");
    cfg.encoder.name = "custom";
    cfg.encoder.stages = {{1, 3, 2, 8, 1}};
    cfg.encoder.stem_channels = 8;
    cfg.encoder.final_channels = 0;
    cfg.head_channels = 0;
    cfg.deconv_channels = {8};
    cfg.num_keypoints = 3;
    cfg.input_h = 32;
    cfg.input_w = 32;
    return cfg;
}

}  // namespace

TEST(Fp16, ExactAndNearestValues) {
    EXPECT_EQ(fp16_round(0.5f), 0.5f);
    EXPECT_EQ(fp16_round(0.0f), 0.0f);
    EXPECT_EQ(fp16_round(-0.0f), -0.0f);
    EXPECT_FLOAT_EQ(fp16_round(0.1f), 0.0999755859375f);
    EXPECT_EQ(fp16_round(65504.0f), 65504.0f);
    EXPECT_EQ(fp16_round(-1.5f), -1.5f);
}

TEST(Fp16, RoundToNearestEvenAtHalfwayPoints) {
    // 1 + 2^-11 is halfway between 1 and 1+2^-10: even mantissa wins (1.0)
    EXPECT_EQ(fp16_round(1.0f + float(std::ldexp(1.0, -11))), 1.0f);
    // 1 + 3*2^-11 is halfway between 1+2^-10 and 1+2^-9: rounds to even (up)
    EXPECT_EQ(fp16_round(1.0f + 3.0f * float(std::ldexp(1.0, -11))),
              1.0f + float(std::ldexp(1.0, -9)));
}

TEST(Fp16, SubnormalsSurvive) {
    const float tiny = float(std::ldexp(1.0, -24));  // smallest f16 subnormal
    EXPECT_EQ(fp16_round(tiny), tiny);
    EXPECT_EQ(fp16_round(tiny * 0.49f), 0.0f);
}

TEST(Fp16, OverflowIsAnError) {
    EXPECT_THROW(fp16_round(70000.0f), NumericError);
    EXPECT_THROW(fp16_round(-65520.0f), NumericError);
    EXPECT_NO_THROW(fp16_round(65519.0f));  // rounds down to 65504
}

TEST(Fp16, Idempotent) {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) {
        const float x = float(testutil::urand(rng, -100.0, 100.0));
        const float once = fp16_round(x);
        EXPECT_EQ(fp16_round(once), once);
    }
}

TEST(Calibrate, MaxAbsExamples) {
    Tensor a({1, 1, 1, 3}, {-1.27f, 0.5f, 1.0f});
    Tensor b({1, 1, 1, 2}, {1.27f, -0.3f});
    EXPECT_NEAR(calibrate_maxabs({&a, &b}).scale, 0.01f, 1e-8);

    Tensor z({1, 1, 2, 2});
    EXPECT_FLOAT_EQ(calibrate_maxabs({&z}).scale, 1.0f);

    Tensor s({1, 1, 1, 1}, {-5.0f});
    EXPECT_NEAR(calibrate_maxabs({&s}).scale, 5.0f / 127.0f, 1e-8);

    EXPECT_THROW(calibrate_maxabs({}), ConfigError);
}

TEST(Quantize, ValueExamples) {
    const QuantParams q{0.01f};
    EXPECT_EQ(quantize_value(0.0f, q), 0);
    EXPECT_EQ(quantize_value(0.553f, q), 55);
    EXPECT_EQ(quantize_value(10.0f, q), 127);
    EXPECT_EQ(quantize_value(-10.0f, q), -127);
    Tensor t({1, 1, 1, 3}, {0.0f, 0.553f, 10.0f});
    const auto ints = quantize_tensor(t, q);
    const Tensor back = dequantize_tensor(ints, q, t.shape());
    EXPECT_FLOAT_EQ(back.data()[0], 0.0f);
    EXPECT_FLOAT_EQ(back.data()[1], 0.55f);
    EXPECT_FLOAT_EQ(back.data()[2], 1.27f);
}

TEST(Quantize, RoundTripBoundHolds) {
    std::mt19937_64 rng(2);
    const QuantParams q{0.013f};
    const double lim = 127.0 * q.scale;
    for (int i = 0; i < 100000; ++i) {
        const float x = float(testutil::urand(rng, -lim, lim));
        const double back = dequantize_value(quantize_value(x, q), q);
        EXPECT_LE(std::fabs(back - double(x)), double(q.scale) / 2.0);
    }
}

TEST(Quantize, SymmetricAndMonotone) {
    std::mt19937_64 rng(3);
    const QuantParams q{0.02f};
    for (int i = 0; i < 10000; ++i) {
        const float x = float(testutil::urand(rng, -5.0, 5.0));
        EXPECT_EQ(quantize_value(-x, q), -quantize_value(x, q));
        const float y = x + float(testutil::urand(rng, 0.0, 1.0));
        EXPECT_GE(quantize_value(y, q), quantize_value(x, q));
    }
    // half-away at the midpoint
    EXPECT_EQ(quantize_value(0.01f, {0.02f}), 1);
    EXPECT_EQ(quantize_value(-0.01f, {0.02f}), -1);
}

TEST(QuantizedConv, BitIdenticalToIntegerOracleOver50RandomCases) {
    std::mt19937_64 rng(4);
    for (int iter = 0; iter < 50; ++iter) {
        const int c_in = testutil::irand(rng, 1, 4);
        const int c_out = testutil::irand(rng, 1, 4);
        const int ks[3] = {1, 3, 5};
        const int k = ks[testutil::irand(rng, 0, 2)];
        const int stride = testutil::irand(rng, 1, 2);
        const int pad = testutil::irand(rng, 0, k / 2);
        const int h = testutil::irand(rng, k, k + 6);
        const int w = testutil::irand(rng, k, k + 6);
        Int8Tensor in{{1, c_in, h, w}, {}};
        in.data.resize(size_t(c_in) * h * w);
        for (int8_t& v : in.data) v = int8_t(testutil::irand(rng, -127, 127));
        Int8ConvWeights cw;
        cw.c_out = c_out;
        cw.c_in_per_group = c_in;
        cw.kh = cw.kw = k;
        cw.stride_y = cw.stride_x = stride;
        cw.pad_y = cw.pad_x = pad;
        cw.kernel.resize(size_t(c_out) * c_in * k * k);
        for (int8_t& v : cw.kernel) v = int8_t(testutil::irand(rng, -127, 127));
        if (iter % 2 == 0) {
            cw.bias.resize(size_t(c_out));
            for (int32_t& v : cw.bias) v = testutil::irand(rng, -1000, 1000);
        }
        const QuantParams iq{float(testutil::urand(rng, 0.001, 0.05))};
        const QuantParams wq{float(testutil::urand(rng, 0.001, 0.05))};
        const QuantParams oq{float(testutil::urand(rng, 0.001, 0.2))};
        const Int8Tensor fast = quantized_conv2d(in, cw, iq, wq, oq);
        const Int8Tensor ref = oracle_qconv(in, cw, iq, wq, oq);
        ASSERT_EQ(fast.data.size(), ref.data.size());
        for (size_t i = 0; i < fast.data.size(); ++i)
            ASSERT_EQ(fast.data[i], ref.data[i]) << "iteration " << iter << " element " << i;
    }
}

TEST(QuantizedConv, IdentityKernelWithCancelingScales) {
    Int8Tensor in{{1, 1, 2, 2}, {5, -17, 99, 0}};
    Int8ConvWeights w;
    w.c_out = 1;
    w.c_in_per_group = 1;
    w.kh = w.kw = 1;
    w.kernel = {1};
    const QuantParams iq{0.02f}, wq{1.0f}, oq{0.02f};
    const Int8Tensor out = quantized_conv2d(in, w, iq, wq, oq);
    EXPECT_EQ(out.data, in.data);
}

TEST(QuantizedConv, ZeroInputGivesZeroOutput) {
    Int8Tensor in{{1, 2, 3, 3}, std::vector<int8_t>(18, 0)};
    std::mt19937_64 rng(5);
    Int8ConvWeights w;
    w.c_out = 2;
    w.c_in_per_group = 2;
    w.kh = w.kw = 3;
    w.pad_y = w.pad_x = 1;
    w.kernel.resize(36);
    for (int8_t& v : w.kernel) v = int8_t(testutil::irand(rng, -127, 127));
    const Int8Tensor out = quantized_conv2d(in, w, {0.01f}, {0.01f}, {0.01f});
    for (int8_t v : out.data) EXPECT_EQ(v, 0);
}

TEST(QuantizedConv, AccumulatorOverflowIsDetected) {
    const int c = 5400;  // 127*127*25*5400 exceeds int32
    Int8Tensor in{{1, c, 5, 5}, std::vector<int8_t>(size_t(c) * 25, 127)};
    Int8ConvWeights w;
    w.c_out = 1;
    w.c_in_per_group = c;
    w.kh = w.kw = 5;
    w.kernel.assign(size_t(c) * 25, 127);
    EXPECT_THROW(quantized_conv2d(in, w, {0.01f}, {0.01f}, {0.01f}), NumericError);
}

TEST(QuantizeModel, IdentityGraphGetsCalibratedEdgeScale) {
    Graph g;
    g.input_shape = {1, 1, 1, 3};
    GraphNode n;
    n.id = "id.conv";
    n.kind = LayerKind::Conv;
    n.inputs = {kGraphInput};
    n.c_out = 1;
    n.kernel = 1;
    n.out_shape = {1, 1, 1, 3};
    g.nodes.push_back(n);
    g.output = 0;
    WeightStore ws;
    ws.put("id.conv", "weight", {1, 1, 1, 1}, {1.0f});

    std::vector<Tensor> calib;
    calib.push_back(Tensor({1, 1, 1, 3}, {-1.27f, 0.0f, 1.27f}));
    const QuantizedModel qm = quantize_model(g, ws, calib);
    EXPECT_NEAR(qm.input_scale.scale, 0.01f, 1e-7);
    ASSERT_EQ(qm.edge_scales.size(), 1u);
    EXPECT_NEAR(qm.edge_scales[0].scale, 0.01f, 1e-7);
}

TEST(QuantizeModel, ZeroWeightsUseDegenerateScaleAndProduceZeros) {
    const ModelConfig cfg = micro_config();
    Graph g = build_model(cfg);
    WeightStore ws = random_weights(g, 6);
    for (auto& [layer, params] : ws.layers)
        for (auto& [name, arr] : params)
            if (name == "weight" || name == "bias" || name == "beta" || name == "mean")
                std::fill(arr.data.begin(), arr.data.end(), 0.0f);

    std::mt19937_64 rng(6);
    std::vector<Tensor> calib{testutil::random_tensor(rng, {1, 3, 32, 32}, -1.0f, 1.0f)};
    const QuantizedModel qm = quantize_model(g, ws, calib);
    for (const auto& [layer, qp] : qm.weight_scales) EXPECT_FLOAT_EQ(qp.scale, 1.0f) << layer;
    const Tensor out = run_int8(qm, calib[0]);
    for (int64_t i = 0; i < out.numel(); ++i) EXPECT_EQ(out.data()[i], 0.0f);
}

TEST(QuantizeModel, DequantizedWeightsWithinHalfScale) {
    const ModelConfig cfg = micro_config();
    Graph g = build_model(cfg);
    WeightStore ws = random_weights(g, 7);
    std::mt19937_64 rng(7);
    std::vector<Tensor> calib{testutil::random_tensor(rng, {1, 3, 32, 32}, -1.0f, 1.0f)};
    const QuantizedModel qm = quantize_model(g, ws, calib);
    for (const auto& [layer, iw] : qm.int8_weights) {
        const float scale = qm.weight_scales.at(layer).scale;
        const ParamArray& w = qm.model.weights.get(layer, "weight");
        for (size_t i = 0; i < w.data.size(); ++i)
            EXPECT_LE(std::fabs(double(iw.kernel[i]) * scale - double(w.data[i])),
                      double(scale) / 2.0 + 1e-9)
                << layer;
    }
    EXPECT_THROW(quantize_model(g, ws, {}), ConfigError);
}

TEST(Precision, Fp16PathBeatsInt8OnMicroEnsemble) {
    std::vector<double> fp16_errs, int8_errs;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        const ModelConfig cfg = micro_config();
        Graph g = build_model(cfg);
        WeightStore ws = random_weights(g, 100 + seed);
        std::mt19937_64 rng(200 + seed);
        std::vector<Tensor> calib;
        for (int i = 0; i < 3; ++i)
            calib.push_back(testutil::random_tensor(rng, {1, 3, 32, 32}, -1.0f, 1.0f));
        const QuantizedModel qm = quantize_model(g, ws, calib);
        std::vector<Tensor> inputs{testutil::random_tensor(rng, {1, 3, 32, 32}, -1.0f, 1.0f)};
        const PrecisionReport rep = compare_outputs(g, ws, qm, inputs);
        fp16_errs.push_back(rep.fp16_output.max_abs);
        int8_errs.push_back(rep.int8_output.max_abs);
    }
    std::sort(fp16_errs.begin(), fp16_errs.end());
    std::sort(int8_errs.begin(), int8_errs.end());
    EXPECT_LE(fp16_errs[fp16_errs.size() / 2], int8_errs[int8_errs.size() / 2]);
}

TEST(Precision, IdenticalFp32PathsHaveZeroError) {
    const ModelConfig cfg = micro_config();
    Graph g = build_model(cfg);
    WeightStore ws = random_weights(g, 8);
    const FoldedModel fm = fold_batchnorm(g, ws);
    std::mt19937_64 rng(8);
    Tensor in = testutil::random_tensor(rng, {1, 3, 32, 32}, -1.0f, 1.0f);
    const Tensor a = infer(fm.graph, fm.weights, in);
    const Tensor b = infer(fm.graph, fm.weights, in);
    EXPECT_TRUE(testutil::bit_identical(a, b));
}

TEST(Precision, TinyRangeErrorsStayBounded) {
    // all activations tiny: no clamping, int8 error bounded by the edge scales
    const ModelConfig cfg = micro_config();
    Graph g = build_model(cfg);
    WeightStore ws = random_weights(g, 9);
    std::mt19937_64 rng(9);
    std::vector<Tensor> calib{testutil::random_tensor(rng, {1, 3, 32, 32}, -1e-3f, 1e-3f)};
    const QuantizedModel qm = quantize_model(g, ws, calib);
    std::vector<Tensor> inputs{testutil::random_tensor(rng, {1, 3, 32, 32}, -1e-3f, 1e-3f)};
    const PrecisionReport rep = compare_outputs(g, ws, qm, inputs);
    double scale_sum = 0.0;
    for (const QuantParams& q : qm.edge_scales) scale_sum += q.scale;
    scale_sum += qm.input_scale.scale;
    EXPECT_LE(rep.int8_output.max_abs, scale_sum * double(qm.model.graph.nodes.size()));
}

TEST(Sidecar, WritesScalesForEveryConvAndEdge) {
    const ModelConfig cfg = micro_config();
    Graph g = build_model(cfg);
    WeightStore ws = random_weights(g, 10);
    std::mt19937_64 rng(10);
    std::vector<Tensor> calib{testutil::random_tensor(rng, {1, 3, 32, 32}, -1.0f, 1.0f)};
    const QuantizedModel qm = quantize_model(g, ws, calib);
    const std::string path =
        (std::filesystem::temp_directory_path() / "posekit-sidecar-test.json").string();
    save_quantization_sidecar(qm, path);
    std::ifstream is(path);
    nlohmann::json j;
    is >> j;
    EXPECT_EQ(j.at("weight_scales").size(), qm.int8_weights.size());
    EXPECT_EQ(j.at("edge_scales").size(), qm.model.graph.nodes.size());
    std::filesystem::remove(path);
}

