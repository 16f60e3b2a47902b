#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cropvqa/errors.hpp"
#include "cropvqa/geometry.hpp"
#include "test_support.hpp"

using namespace cropvqa;

namespace {

// Pixel-counting IoU, independent of the interval arithmetic under test.
double brute_iou(const Rect& a, const Rect& b) {
    const int W = std::max(a.x1, b.x1), H = std::max(a.y1, b.y1);
    long inter = 0, uni = 0;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const bool in_a = x >= a.x0 && x < a.x1 && y >= a.y0 && y < a.y1;
            const bool in_b = x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1;
            inter += in_a && in_b;
            uni += in_a || in_b;
        }
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Image checkerboard(int w, int h) {
    Image img(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            auto* p = img.pixel(x, y);
            p[0] = static_cast<std::uint8_t>(x * 16 + y);
            p[1] = ((x + y) % 2) ? 255 : 0;
            p[2] = static_cast<std::uint8_t>(y * 16 + x);
        }
    }
    return img;
}

}  // namespace

TEST(Area, Examples) {
    EXPECT_EQ(area(Rect{0, 0, 10, 10}), 100);
    EXPECT_EQ(area(Rect{5, 5, 6, 6}), 1);
    EXPECT_EQ(area(Rect{0, 0, 50, 20}), 1000);
}

TEST(RectMake, RejectsInvalid) {
    EXPECT_THROW(Rect::make(5, 0, 5, 10), DegenerateRectError);
    EXPECT_THROW(Rect::make(0, 3, 10, 2), DegenerateRectError);
    EXPECT_THROW(Rect::make(-1, 0, 10, 10), BoundsError);
    EXPECT_EQ(Rect::make(1, 2, 3, 4), (Rect{1, 2, 3, 4}));
}

TEST(RelSize, Examples) {
    EXPECT_DOUBLE_EQ(rel_size(Rect{0, 0, 50, 20}, 1000, 100), 0.01);
    EXPECT_DOUBLE_EQ(rel_size(Rect{0, 0, 1000, 100}, 1000, 100), 1.0);
    EXPECT_DOUBLE_EQ(rel_size(Rect{0, 0, 7, 7}, 100, 100), 0.0049);
    EXPECT_THROW(rel_size(Rect{90, 0, 101, 10}, 100, 100), BoundsError);
}

TEST(Iou, Examples) {
    EXPECT_DOUBLE_EQ(iou(Rect{3, 4, 10, 12}, Rect{3, 4, 10, 12}), 1.0);
    EXPECT_DOUBLE_EQ(iou(Rect{0, 0, 5, 5}, Rect{5, 5, 9, 9}), 0.0);
    EXPECT_DOUBLE_EQ(iou(Rect{0, 0, 10, 10}, Rect{0, 0, 10, 20}), 0.5);
}

TEST(ShrinkSide, Examples) {
    EXPECT_EQ(shrink_side(Rect{0, 0, 100, 200}, Side::top, 0.9), (Rect{0, 20, 100, 200}));
    EXPECT_EQ(shrink_side(Rect{0, 0, 100, 200}, Side::left, 0.9), (Rect{10, 0, 100, 200}));
    EXPECT_EQ(shrink_side(Rect{0, 0, 100, 100}, Side::bottom, 0.9), (Rect{0, 0, 100, 90}));
    EXPECT_EQ(shrink_side(Rect{0, 0, 100, 100}, Side::right, 0.9), (Rect{0, 0, 90, 100}));
}

TEST(ShrinkSide, HalfPixelCutRoundsUp) {
    // 5 * 0.1 = 0.5 removed from the top: the boundary moves from 0 to 1.
    EXPECT_EQ(shrink_side(Rect{0, 0, 4, 5}, Side::top, 0.9), (Rect{0, 1, 4, 5}));
}

TEST(ShrinkSide, DegenerateResultsThrow) {
    // A 1-pixel side cannot shrink.
    EXPECT_THROW(shrink_side(Rect{0, 0, 1, 10}, Side::left, 0.9), DegenerateRectError);
    // 4 * 0.1 = 0.4 px rounds back to the same boundary.
    EXPECT_THROW(shrink_side(Rect{0, 0, 4, 4}, Side::right, 0.9), DegenerateRectError);
    EXPECT_THROW(shrink_side(Rect{0, 0, 10, 10}, Side::top, 1.0), DegenerateRectError);
    EXPECT_THROW(shrink_side(Rect{0, 0, 10, 10}, Side::top, 0.0), DegenerateRectError);
}

TEST(ShrinkSide, TwentyStepsOnThousandPixels) {
    Rect r{0, 0, 1000, 1000};
    for (int i = 0; i < 20; ++i) r = shrink_side(r, Side::top, 0.9);
    const double expected = std::pow(0.9, 20) * 1000.0;  // 121.57...
    EXPECT_NEAR(r.height(), expected, 20.0);
    EXPECT_EQ(r.width(), 1000);
}

TEST(ShrinkSide, PropertiesOnRandomRects) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> ratios(0.05, 0.99);
    int checked = 0;
    for (int i = 0; i < 10000; ++i) {
        const Rect r = testsupport::random_rect(rng, 400, 300);
        const Side side = kAllSides[i % 4];
        const double ratio = ratios(rng);
        const bool vertical = side == Side::top || side == Side::bottom;
        const int extent = vertical ? r.height() : r.width();
        Rect s;
        try {
            s = shrink_side(r, side, ratio);
        } catch (const DegenerateRectError&) {
            // Only when the rounded cut is zero or leaves nothing.
            const double cut = (1.0 - ratio) * extent;
            EXPECT_TRUE(cut < 0.5 + 1e-9 || extent - round_half_up(cut) < 1) << to_string(r);
            continue;
        }
        ++checked;
        ASSERT_TRUE(s.valid());
        ASSERT_TRUE(r.contains(s));
        ASSERT_LT(area(s), area(r));
        const int new_extent = vertical ? s.height() : s.width();
        ASSERT_LE(std::abs(new_extent - ratio * extent), 0.5 + 1e-9);
        if (vertical) {
            ASSERT_EQ(s.x0, r.x0);
            ASSERT_EQ(s.x1, r.x1);
            ASSERT_EQ(side == Side::top ? s.y1 : s.y0, side == Side::top ? r.y1 : r.y0);
        } else {
            ASSERT_EQ(s.y0, r.y0);
            ASSERT_EQ(s.y1, r.y1);
            ASSERT_EQ(side == Side::left ? s.x1 : s.x0, side == Side::left ? r.x1 : r.x0);
        }
    }
    EXPECT_GT(checked, 5000);
}

TEST(ShrinkSide, RepeatedShrinkStaysNearGeometricExtent) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> extents(50, 2000);
    for (int i = 0; i < 500; ++i) {
        const int n = extents(rng);
        Rect r{0, 0, n, 10};
        int steps = 0;
        for (; steps < 20; ++steps) {
            try {
                r = shrink_side(r, Side::left, 0.9);
            } catch (const DegenerateRectError&) {
                break;
            }
        }
        const double ideal = std::pow(0.9, steps) * n;
        EXPECT_LE(std::abs(r.width() - ideal), steps + 1.0) << "n=" << n;
    }
}

TEST(Iou, MatchesPixelCountingOracle) {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 2000; ++i) {
        const Rect a = testsupport::random_rect(rng, 24, 18);
        const Rect b = testsupport::random_rect(rng, 24, 18);
        ASSERT_NEAR(iou(a, b), brute_iou(a, b), 1e-12) << to_string(a) << " " << to_string(b);
    }
}

TEST(Iou, Properties) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 10000; ++i) {
        const Rect a = testsupport::random_rect(rng, 200, 150);
        const Rect b = i % 5 == 0 ? a : testsupport::random_rect(rng, 200, 150);
        const double v = iou(a, b);
        ASSERT_EQ(v, iou(b, a));
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
        ASSERT_EQ(v == 1.0, a == b);
        ASSERT_EQ(v == 0.0, intersection_area(a, b) == 0);
        const double lo = static_cast<double>(std::min(area(a), area(b)));
        const double hi = static_cast<double>(std::max(area(a), area(b)));
        ASSERT_LE(v, lo / hi + 1e-12);
    }
}

TEST(CropImage, FullRectIsIdentity) {
    const Image img = checkerboard(7, 5);
    EXPECT_EQ(crop_image(img, img.bounds()), img);
}

TEST(CropImage, SinglePixel) {
    const Image img = checkerboard(7, 5);
    const Image c = crop_image(img, Rect{0, 0, 1, 1});
    ASSERT_EQ(c.width(), 1);
    ASSERT_EQ(c.height(), 1);
    EXPECT_TRUE(std::equal(c.pixel(0, 0), c.pixel(0, 0) + 3, img.pixel(0, 0)));
}

TEST(CropImage, QuadrantMatchesIndexArithmetic) {
    const Image img = checkerboard(4, 4);
    const Image c = crop_image(img, Rect{2, 2, 4, 4});
    ASSERT_EQ(c.width(), 2);
    ASSERT_EQ(c.height(), 2);
    const auto src = img.pixels();
    const auto dst = c.pixels();
    for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 2; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                EXPECT_EQ(dst[(y * 2 + x) * 3 + ch], src[((y + 2) * 4 + (x + 2)) * 3 + ch]);
            }
        }
    }
}

TEST(CropImage, OutOfBoundsThrows) {
    const Image img = checkerboard(4, 4);
    EXPECT_THROW(crop_image(img, Rect{2, 2, 5, 4}), BoundsError);
}

TEST(PatchToPixel, Examples) {
    EXPECT_EQ(patch_to_pixel_rect(Rect{0, 0, 3, 3}, 3, 3, 300, 300), (Rect{0, 0, 300, 300}));
    EXPECT_EQ(patch_to_pixel_rect(Rect{1, 1, 2, 2}, 3, 3, 300, 300), (Rect{100, 100, 200, 200}));
    // 100 / 3 = 33.33 rounds to 33.
    EXPECT_EQ(patch_to_pixel_rect(Rect{0, 0, 1, 1}, 3, 3, 100, 100), (Rect{0, 0, 33, 33}));
    EXPECT_THROW(patch_to_pixel_rect(Rect{0, 0, 4, 1}, 3, 3, 100, 100), BoundsError);
}

TEST(PatchToPixel, HalfBoundaryRoundsUp) {
    // 2 columns over 5 px: the middle boundary sits at 2.5 and becomes 3.
    EXPECT_EQ(patch_to_pixel_rect(Rect{0, 0, 1, 1}, 1, 2, 5, 4), (Rect{0, 0, 3, 4}));
}

TEST(PatchToPixel, FullGridIsFullImageForAnySize) {
    std::mt19937_64 rng(13);
    std::uniform_int_distribution<int> grid(1, 40), px(1, 1000);
    for (int i = 0; i < 2000; ++i) {
        const int rows = grid(rng), cols = grid(rng), w = px(rng), h = px(rng);
        ASSERT_EQ(patch_to_pixel_rect(Rect{0, 0, cols, rows}, rows, cols, w, h), (Rect{0, 0, w, h}));
    }
}

TEST(PatchToPixel, CellsTileTheImage) {
    // Adjacent cells share boundaries: summed widths equal the image width.
    for (int cols = 1; cols <= 16; ++cols) {
        for (int w = cols; w <= 64; ++w) {
            int total = 0;
            for (int j = 0; j < cols; ++j) {
                const Rect px = patch_to_pixel_rect(Rect{j, 0, j + 1, 1}, 1, cols, w, 8);
                const double ideal = static_cast<double>(j) * w / cols;
                ASSERT_EQ(px.x0, static_cast<int>(std::floor(ideal + 0.5 + 1e-9)));
                total += px.width();
            }
            ASSERT_EQ(total, w);
        }
    }
}

TEST(PatchMap, RejectsBadValues) {
    EXPECT_THROW(PatchMap(2, 2, {1, 2, 3}), Error);
    EXPECT_THROW(PatchMap(1, 2, {1, -1}), Error);
    EXPECT_THROW(PatchMap(1, 2, {1, std::nan("")}), Error);
}

TEST(RoundHalfUp, Values) {
    EXPECT_EQ(round_half_up(2.5), 3);
    EXPECT_EQ(round_half_up(2.4999), 2);
    EXPECT_EQ(round_half_up(0.1 * 5), 1);
    EXPECT_EQ(round_half_up(-0.5), 0);
    EXPECT_EQ(round_half_up(7.0), 7);
}
