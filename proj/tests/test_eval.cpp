#include <cmath>

#include <gtest/gtest.h>

#include "lidarup/eval.hpp"
#include "lidarup/synth.hpp"

using namespace lidarup;

namespace {

ProjectionConfig small_proj(int h = 8, int w = 16) {
    return ProjectionConfig{h, w, 3.0, -25.0, 80.0};
}

// Sparse image whose known rows carry chosen per-row depth (meters) and
// reflectance values; generated rows are cleared.
RangeImage rows_image(const std::vector<double>& depth_m, const std::vector<double>& refl,
                      int rate, int w = 16) {
    int h = static_cast<int>(depth_m.size());
    RangeImage img(small_proj(h, w));
    for (int r = 0; r < h; ++r) {
        if (r % rate != 0) continue;
        for (int c = 0; c < w; ++c) {
            std::size_t k = img.idx(r, c);
            img.depth[k] = static_cast<float>(normalize_depth(depth_m[r], img.config.d_max));
            img.refl[k] = static_cast<float>(refl[r]);
            img.valid[k] = 1;
        }
    }
    return img;
}

} // namespace

TEST(InterpolateBaseline, NearestCopiesClosestKnownRow) {
    std::vector<double> d = {10, 0, 0, 0, 20, 0, 0, 0};
    std::vector<double> rf = {0.2, 0, 0, 0, 0.8, 0, 0, 0};
    RangeImage sparse = rows_image(d, rf, 4);
    RangeImage out = interpolate_baseline(sparse, InterpMethod::nearest, 4);
    EXPECT_NEAR(out.depth_m_at(1, 3), 10.0, 1e-4); // row 1 <- row 0
    EXPECT_NEAR(out.depth_m_at(3, 3), 20.0, 1e-4); // row 3 <- row 4
    EXPECT_NEAR(out.depth_m_at(2, 3), 10.0, 1e-4); // tie -> smaller row index
    EXPECT_NEAR(out.depth_m_at(7, 3), 20.0, 1e-4); // below last known row
    EXPECT_FLOAT_EQ(out.refl_at(1, 0), 0.2f);
}

TEST(InterpolateBaseline, BilinearUsesLinearWeights) {
    std::vector<double> d = {10, 0, 0, 0, 20, 0, 0, 0};
    std::vector<double> rf = {0.0, 0, 0, 0, 1.0, 0, 0, 0};
    RangeImage sparse = rows_image(d, rf, 4);
    RangeImage out = interpolate_baseline(sparse, InterpMethod::bilinear, 4);
    EXPECT_NEAR(out.depth_m_at(1, 5), 0.75 * 10.0 + 0.25 * 20.0, 1e-4);
    EXPECT_NEAR(out.depth_m_at(3, 5), 0.25 * 10.0 + 0.75 * 20.0, 1e-4);
    EXPECT_NEAR(out.refl_at(1, 5), 0.25, 1e-6);
}

TEST(InterpolateBaseline, CatmullRomReproducesPolynomialRows) {
    // Quadratic in the row index: Catmull-Rom tangents are exact for
    // degree <= 2, so all interior rows reproduce the polynomial.
    auto quad = [](double r) { return 5.0 + 0.3 * r + 0.05 * r * r; };
    std::vector<double> d(17, 0.0), rf(17, 0.5);
    for (int r = 0; r < 17; r += 4) d[r] = quad(r);
    RangeImage sparse = rows_image(d, rf, 4);
    RangeImage out = interpolate_baseline(sparse, InterpMethod::bicubic, 4);
    for (int r = 5; r < 12; ++r)
        EXPECT_NEAR(out.depth_m_at(r, 2), quad(r), 1e-4) << "row " << r;

    // Cubic data: the midpoint of each segment is exact (the cubic error term
    // u(u-1)(2u-1) vanishes there), which rate 2 exercises at every row.
    auto cubic = [](double r) { return 4.0 + 0.2 * r + 0.01 * r * r + 0.002 * r * r * r; };
    std::vector<double> d2(17, 0.0), rf2(17, 0.5);
    for (int r = 0; r < 17; r += 2) d2[r] = cubic(r);
    RangeImage sparse2 = rows_image(d2, rf2, 2);
    RangeImage out2 = interpolate_baseline(sparse2, InterpMethod::bicubic, 2);
    for (int r = 3; r < 14; r += 2)
        EXPECT_NEAR(out2.depth_m_at(r, 2), cubic(r), 1e-4) << "row " << r;
}

TEST(InterpolateBaseline, KnownRowsPassThroughBitExact) {
    SceneConfig scene;
    RangeImage gt = synth_scan(scene, small_proj(16, 64), 3);
    Mask m = upsampling_mask(16, 64, 4);
    RangeImage sparse = apply_mask(gt, m);
    for (InterpMethod method :
         {InterpMethod::nearest, InterpMethod::bilinear, InterpMethod::bicubic}) {
        RangeImage out = interpolate_baseline(sparse, method, 4);
        for (int r = 0; r < 16; r += 4)
            for (int c = 0; c < 64; ++c) {
                ASSERT_EQ(out.depth_at(r, c), sparse.depth_at(r, c));
                ASSERT_EQ(out.refl_at(r, c), sparse.refl_at(r, c));
                ASSERT_EQ(out.valid_at(r, c), sparse.valid_at(r, c));
            }
    }
}

TEST(InterpolateBaseline, LayoutMismatchRejected) {
    SceneConfig scene;
    RangeImage dense = synth_scan(scene, small_proj(16, 64), 3);
    EXPECT_THROW(interpolate_baseline(dense, InterpMethod::bilinear, 4), ConfigError);
}

TEST(InterpolateBaseline, MethodNames) {
    EXPECT_EQ(interp_method_from_name("nearest"), InterpMethod::nearest);
    EXPECT_EQ(interp_method_from_name("bilinear"), InterpMethod::bilinear);
    EXPECT_EQ(interp_method_from_name("bicubic"), InterpMethod::bicubic);
    EXPECT_THROW(interp_method_from_name("lanczos"), ConfigError);
}

TEST(MaskedMetrics, Examples) {
    RangeImage gt(small_proj(2, 2));
    gt.valid.assign(4, 1);
    RangeImage pred = gt;
    Mask m(2, 2, 0); // all four pixels generated
    MaskedError mae = masked_mae(pred, gt, m);
    EXPECT_EQ(mae.depth_m, 0.0);
    EXPECT_EQ(mae.refl, 0.0);

    // one pixel off by exactly 2 m
    pred.depth[3] = static_cast<float>(normalize_depth(2.0, 80.0));
    mae = masked_mae(pred, gt, m);
    EXPECT_NEAR(mae.depth_m, 0.5, 1e-6);
    MaskedError rmse = masked_rmse(pred, gt, m);
    EXPECT_NEAR(rmse.depth_m, 1.0, 1e-6);

    // errors on known pixels are invisible
    Mask known_one(2, 2, 0);
    known_one.bits[3] = 1;
    EXPECT_EQ(masked_mae(pred, gt, known_one).depth_m, 0.0);

    Mask all_known(2, 2, 1);
    EXPECT_THROW(masked_mae(pred, gt, all_known), ConfigError);
}

TEST(MaskedMetrics, MaePerSampleNeverExceedsRmse) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        RangeImage gt(small_proj(8, 16));
        RangeImage pred = gt;
        for (std::size_t i = 0; i < gt.npx(); ++i) {
            gt.depth[i] = static_cast<float>(rng.uniform());
            gt.refl[i] = static_cast<float>(rng.uniform());
            pred.depth[i] = static_cast<float>(rng.uniform());
            pred.refl[i] = static_cast<float>(rng.uniform());
        }
        Mask m = pepper_mask(8, 16, 0.6, trial + 1);
        if (m.unknown_count() == 0) continue;
        EXPECT_LE(masked_mae(pred, gt, m).depth_m, masked_rmse(pred, gt, m).depth_m + 1e-12);
        EXPECT_LE(masked_mae(pred, gt, m).refl, masked_rmse(pred, gt, m).refl + 1e-12);
    }
}

TEST(Evaluate, GroundTruthScoresZero) {
    SceneConfig scene;
    SyntheticDataset data(scene, small_proj(16, 64), 9, 4);
    std::vector<std::size_t> idx = {0, 1, 2, 3};
    EvalReport r = evaluate("gt", nullptr, data, idx, 4, 1);
    ASSERT_EQ(r.samples.size(), 4u);
    EXPECT_EQ(r.mean_depth_mae(), 0.0);
    EXPECT_EQ(r.mean_refl_rmse(), 0.0);
}

TEST(Evaluate, BaselineReportShape) {
    SceneConfig scene;
    SyntheticDataset data(scene, small_proj(16, 64), 11, 6);
    std::vector<std::size_t> idx = {0, 1, 2, 3, 4, 5};
    EvalReport r = evaluate("bilinear", baseline_fn(InterpMethod::bilinear, 4), data, idx, 4, 2);
    EXPECT_EQ(r.samples.size(), 6u);
    EXPECT_EQ(r.failed_ids.size(), 0u);
    EXPECT_GT(r.mean_depth_mae(), 0.0);
    // aggregate equals the mean of per-sample values
    double acc = 0.0;
    for (const auto& s : r.samples) acc += s.depth_mae;
    EXPECT_DOUBLE_EQ(r.mean_depth_mae(), acc / 6.0);
    // table mentions the method and the mask
    EXPECT_NE(r.text_table().find("bilinear"), std::string::npos);
    EXPECT_NE(r.text_table().find("rate=4"), std::string::npos);
}

TEST(Evaluate, DeterministicReportBytes) {
    SceneConfig scene;
    SyntheticDataset data(scene, small_proj(16, 64), 13, 4);
    std::vector<std::size_t> idx = {0, 1, 2, 3};
    EvalReport a = evaluate("nearest", baseline_fn(InterpMethod::nearest, 4), data, idx, 4, 5);
    EvalReport b = evaluate("nearest", baseline_fn(InterpMethod::nearest, 4), data, idx, 4, 5);
    EXPECT_EQ(a.text_table(), b.text_table());
    EXPECT_EQ(a.records(), b.records());
}

TEST(Evaluate, FailedSamplesExcludedAndCounted) {
    SceneConfig scene;
    SyntheticDataset data(scene, small_proj(16, 64), 15, 5);
    std::vector<std::size_t> idx = {0, 1, 2, 3, 4};
    UpsampleFn flaky = [](const RangeImage& sparse, const Mask&, std::uint64_t seed) {
        if (seed % 2 == 0) throw NumericError("synthetic failure");
        RangeImage out = sparse;
        for (std::size_t i = 0; i < out.npx(); ++i) out.valid[i] = 1;
        return out;
    };
    EvalReport r = evaluate("flaky", flaky, data, idx, 4, 3);
    EXPECT_EQ(r.samples.size() + r.failed_ids.size(), 5u);
    EXPECT_GT(r.failed_ids.size(), 0u);
    EXPECT_NE(r.records().find("failed"), std::string::npos);
}

TEST(BenchSampler, DenoiserCallCountIsLinearInSteps) {
    NoiseSchedule sched = build_schedule(512, ScheduleKind::cosine);
    SceneConfig scene;
    RangeImage img = synth_scan(scene, small_proj(8, 16), 21);
    Mask m = upsampling_mask(8, 16, 4);
    RangeImage sparse = apply_mask(img, m);
    TensorF obs = to_tensor<float>(sparse);

    int calls = 0;
    auto counting = [&calls](const TensorF& u, const Mask&, int) {
        ++calls;
        return TensorF(2, u.h, u.w);
    };
    for (int steps : {1, 8, 64}) {
        calls = 0;
        conditional_sample(obs, m, counting, sched, SamplerConfig{steps, 0.0, 1});
        EXPECT_EQ(calls, steps);
    }
}

TEST(BenchSampler, RowsAndFpsDefinition) {
    NoiseSchedule sched = build_schedule(512, ScheduleKind::cosine);
    SceneConfig scene;
    RangeImage img = synth_scan(scene, small_proj(8, 16), 22);
    Mask m = upsampling_mask(8, 16, 4);
    RangeImage sparse = apply_mask(img, m);
    auto fast_den = [](const TensorF& u, const Mask&, int) { return TensorF(2, u.h, u.w); };
    std::vector<BenchRow> rows = bench_sampler(fast_den, sparse, m, sched, {2, 8}, 1, 3, 0.0, 4);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].steps, 2);
    EXPECT_EQ(rows[1].steps, 8);
    for (const auto& r : rows) {
        EXPECT_GT(r.median_s, 0.0);
        EXPECT_NEAR(r.fps, 1.0 / r.median_s, 1e-9);
        EXPECT_EQ(r.runs, 3);
    }
    EXPECT_NE(bench_table(rows).find("steps"), std::string::npos);
}
