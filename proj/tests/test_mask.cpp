#include <algorithm>
#include <set>

#include <gtest/gtest.h>

#include "lidarup/mask.hpp"

using namespace lidarup;

namespace {

std::set<int> masked_rows(const Mask& m) {
    std::set<int> rows;
    for (int r = 0; r < m.h; ++r)
        for (int c = 0; c < m.w; ++c)
            if (!m.known(r, c)) rows.insert(r);
    return rows;
}

bool rows_uniform(const Mask& m) {
    for (int r = 0; r < m.h; ++r) {
        std::uint8_t first = m.bits[m.idx(r, 0)];
        for (int c = 1; c < m.w; ++c)
            if (m.bits[m.idx(r, c)] != first) return false;
    }
    return true;
}

} // namespace

TEST(UpsamplingMask, KnownRowsEveryRate) {
    Mask m = upsampling_mask(8, 4, 4);
    EXPECT_EQ(masked_rows(m), (std::set<int>{1, 2, 3, 5, 6, 7}));
    EXPECT_EQ(m.unknown_count(), 24u); // 75% of 32 pixels masked
    EXPECT_TRUE(rows_uniform(m));

    EXPECT_EQ(upsampling_mask(8, 4, 1).unknown_count(), 0u);

    Mask m64 = upsampling_mask(64, 16, 4);
    EXPECT_EQ(m64.known_count(), 16u * 16u); // exactly 16 known rows
}

TEST(UpsamplingMask, KnownFractionIsExact) {
    for (int h : {8, 64, 33}) {
        for (int rate : {2, 4, 8}) {
            if (rate > h) continue;
            Mask m = upsampling_mask(h, 16, rate);
            std::size_t expect = static_cast<std::size_t>((h + rate - 1) / rate) * 16;
            EXPECT_EQ(m.known_count(), expect) << "h=" << h << " rate=" << rate;
        }
    }
}

TEST(UpsamplingMask, RateErrors) {
    EXPECT_THROW(upsampling_mask(8, 4, 0), ConfigError);
    EXPECT_THROW(upsampling_mask(8, 4, 9), ConfigError);
}

TEST(StraightLinesMask, Extremes) {
    EXPECT_EQ(straight_lines_mask(16, 8, 0.0, 1).unknown_count(), 0u);
    EXPECT_EQ(straight_lines_mask(16, 8, 1.0, 1).unknown_count(), 16u * 8u);
}

TEST(StraightLinesMask, ExactRowCount) {
    Mask m = straight_lines_mask(64, 32, 0.75, 9);
    EXPECT_EQ(masked_rows(m).size(), 48u); // round(0.75 * 64)
    EXPECT_TRUE(rows_uniform(m));
    EXPECT_EQ(straight_lines_mask(64, 32, 0.75, 9).bits, m.bits); // determinism
    EXPECT_NE(straight_lines_mask(64, 32, 0.75, 10).bits, m.bits);
}

TEST(JitterLinesMask, Extremes) {
    EXPECT_EQ(jitter_lines_mask(16, 8, 0.0, 1).unknown_count(), 0u);
}

TEST(JitterLinesMask, StaysWithinOneRowOfSelection) {
    const int h = 64, w = 1024;
    const std::uint64_t seed = 21;
    Mask jit = jitter_lines_mask(h, w, 0.5, seed);
    // Same seed reproduces the same row selection through the straight mask.
    std::set<int> selected = masked_rows(straight_lines_mask(h, w, 0.5, seed));
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (jit.known(r, c)) continue;
            bool near = selected.count(r) || selected.count(r - 1) || selected.count(r + 1);
            ASSERT_TRUE(near) << "masked pixel at row " << r << " far from any selected row";
        }
    }
    EXPECT_EQ(jitter_lines_mask(h, w, 0.5, seed).bits, jit.bits);
    // Collisions only ever reduce the count below rows*W.
    EXPECT_LE(jit.unknown_count(), 32u * w);
    EXPECT_GT(jit.unknown_count(), 0u);
}

TEST(JitterLinesMask, SingleRowHasExactCount) {
    // One selected row cannot collide with itself: exactly W masked pixels.
    Mask m = jitter_lines_mask(64, 128, 1.0 / 64.0, 5);
    EXPECT_EQ(m.unknown_count(), 128u);
}

TEST(PepperMask, Extremes) {
    EXPECT_EQ(pepper_mask(16, 16, 0.0, 3).unknown_count(), 0u);
    EXPECT_EQ(pepper_mask(16, 16, 1.0, 3).unknown_count(), 256u);
}

TEST(PepperMask, BinomialBound) {
    // n = 65536, p = 0.5: mean 32768, sigma 128, 4-sigma window.
    Mask m = pepper_mask(64, 1024, 0.5, 77);
    EXPECT_GE(m.unknown_count(), 31744u);
    EXPECT_LE(m.unknown_count(), 33792u);
    EXPECT_EQ(pepper_mask(64, 1024, 0.5, 77).bits, m.bits);
}

TEST(AllMasks, BinaryInvariant) {
    for (const Mask& m :
         {upsampling_mask(16, 8, 4), straight_lines_mask(16, 8, 0.5, 1),
          jitter_lines_mask(16, 8, 0.5, 1), pepper_mask(16, 8, 0.3, 1)}) {
        EXPECT_NO_THROW(m.validate());
    }
}

TEST(SampleTrainingMask, SingleOptionIsDeterministicKind) {
    TaskConfig cfg; // upsample only, rates = {4}
    for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
        Mask m = sample_training_mask(cfg, 16, 8, seed);
        EXPECT_EQ(m.provenance.kind, MaskKind::upsample);
        EXPECT_EQ(m.provenance.rate, 4);
    }
}

TEST(SampleTrainingMask, RateMixIsUniform) {
    TaskConfig cfg;
    cfg.rates = {2, 4, 8};
    int counts[3] = {0, 0, 0};
    for (int i = 0; i < 3000; ++i) {
        Mask m = sample_training_mask(cfg, 16, 8, derive_seed(99, std::uint64_t(i)));
        if (m.provenance.rate == 2) ++counts[0];
        else if (m.provenance.rate == 4) ++counts[1];
        else if (m.provenance.rate == 8) ++counts[2];
        else FAIL() << "unexpected rate " << m.provenance.rate;
    }
    for (int k = 0; k < 3; ++k) {
        EXPECT_GE(counts[k], 1000 - 120);
        EXPECT_LE(counts[k], 1000 + 120);
    }
}

TEST(SampleTrainingMask, SeedDeterminism) {
    TaskConfig cfg;
    cfg.kinds = {MaskKind::straight, MaskKind::jitter, MaskKind::pepper, MaskKind::upsample};
    cfg.rates = {2, 4};
    Mask a = sample_training_mask(cfg, 32, 16, 1234);
    Mask b = sample_training_mask(cfg, 32, 16, 1234);
    EXPECT_EQ(a.bits, b.bits);
    EXPECT_EQ(a.provenance.kind, b.provenance.kind);
    EXPECT_EQ(a.provenance.param, b.provenance.param);
    EXPECT_EQ(a.provenance.seed, b.provenance.seed);
}

TEST(TaskConfig, Validation) {
    TaskConfig ok;
    EXPECT_NO_THROW(ok.validate());
    TaskConfig empty;
    empty.kinds.clear();
    EXPECT_THROW(empty.validate(), ConfigError);
    TaskConfig bad_ratio;
    bad_ratio.ratio_lo = 0.0;
    EXPECT_THROW(bad_ratio.validate(), ConfigError);
    TaskConfig no_rates;
    no_rates.rates.clear();
    EXPECT_THROW(no_rates.validate(), ConfigError);
}
