#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <random>

#include "cropvqa/errors.hpp"
#include "cropvqa/strategies.hpp"
#include "cropvqa/synthetic.hpp"
#include "test_support.hpp"

using namespace cropvqa;

namespace {

StrategyConfig config(StrategyKind kind) {
    StrategyConfig c;
    c.kind = kind;
    return c;
}

double max_over_trace(const CropResult& r) {
    double m = -INFINITY;
    for (const auto& t : r.trace) m = std::max(m, t.score);
    return m;
}

// Deterministic pseudo-random score per rect, for properties that need an arbitrary scorer.
double hashed_score(const Rect& r, std::uint64_t salt) {
    std::uint64_t h = salt ^ 0x9e3779b97f4a7c15ULL;
    for (int v : {r.x0, r.y0, r.x1, r.y1}) {
        h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        h *= 0xff51afd7ed558ccdULL;
    }
    return static_cast<double>(h >> 11) / static_cast<double>(1ULL << 53);
}

// Four-neighbour components by repeated label relaxation; independent of the BFS under test.
Rect brute_component_box(const std::vector<double>& v, int rows, int cols, double tau) {
    const double mx = *std::max_element(v.begin(), v.end());
    int start = 0;
    for (int i = 0; i < rows * cols; ++i) {
        if (v[i] == mx) {
            start = i;
            break;
        }
    }
    std::vector<int> label(v.size());
    for (int i = 0; i < rows * cols; ++i) label[i] = v[i] / mx >= tau ? i : -1;
    bool changed = true;
    while (changed) {
        changed = false;
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                const int i = r * cols + c;
                if (label[i] < 0) continue;
                for (int j : {r > 0 ? i - cols : -1, r + 1 < rows ? i + cols : -1, c > 0 ? i - 1 : -1,
                              c + 1 < cols ? i + 1 : -1}) {
                    if (j >= 0 && label[j] >= 0 && label[j] < label[i]) {
                        label[i] = label[j];
                        changed = true;
                    }
                }
            }
        }
    }
    Rect box{cols, rows, 0, 0};
    for (int i = 0; i < rows * cols; ++i) {
        if (label[i] == label[start]) {
            box.x0 = std::min(box.x0, i % cols);
            box.y0 = std::min(box.y0, i / cols);
            box.x1 = std::max(box.x1, i % cols + 1);
            box.y1 = std::max(box.y1, i / cols + 1);
        }
    }
    return box;
}

}  // namespace

TEST(HumanCrop, UsesGroundTruthBox) {
    const Image img(100, 80);
    EXPECT_EQ(human_crop(img, Rect{10, 10, 50, 50}).rect, (Rect{10, 10, 50, 50}));
    EXPECT_TRUE(human_crop(img, Rect{10, 10, 50, 50}).trace.empty());
    EXPECT_FALSE(human_crop(img, Rect{10, 10, 50, 50}).score.has_value());
    EXPECT_EQ(human_crop(img, img.bounds()).rect, img.bounds());
    EXPECT_THROW(human_crop(img, std::nullopt), NotApplicableError);
}

TEST(IterativeRefine, ImprovesOnPlantedTopLeftTarget) {
    const Image img(1000, 1000);
    const Rect target{100, 80, 400, 360};
    const PlantedTargetScorer scorer(target);
    const auto res = iterative_refine(img, "q", scorer, config(StrategyKind::iterative));
    EXPECT_GT(iou(res.rect, target), iou(img.bounds(), target));
}

TEST(IterativeRefine, ConstantScorerKeepsFullImage) {
    const Image img(200, 150);
    const FunctionScorer scorer("const", [](const ImageRegion&, std::string_view) { return 0.5; });
    const auto res = iterative_refine(img, "q", scorer, config(StrategyKind::iterative));
    EXPECT_EQ(res.rect, img.bounds());
    EXPECT_EQ(res.trace.front().rect, img.bounds());
}

TEST(IterativeRefine, LeftPreferringScorerFollowsGeometricShrink) {
    const Image img(1000, 400);
    // Rewards a large x0 only, so the left shrink wins every round.
    const FunctionScorer scorer("left", [](const ImageRegion& r, std::string_view) { return r.rect.x0; });
    const auto res = iterative_refine(img, "q", scorer, config(StrategyKind::iterative));
    EXPECT_NEAR(res.rect.width(), std::pow(0.9, 20) * 1000, 20.0);
    EXPECT_EQ(res.rect.height(), 400);
    EXPECT_EQ(res.rect.x1, 1000);
}

TEST(IterativeRefine, CallCountAndNestedPath) {
    const Image img(640, 480);
    std::atomic<int> calls{0};
    const FunctionScorer scorer("count", [&](const ImageRegion& r, std::string_view) {
        ++calls;
        return hashed_score(r.rect, 1);
    });
    auto cfg = config(StrategyKind::iterative);
    const auto res = iterative_refine(img, "q", scorer, cfg);
    EXPECT_EQ(calls.load(), 4 * 20 + 1);
    ASSERT_EQ(res.trace.size(), 81u);
    Rect prev = img.bounds();
    for (std::size_t k = 1; k + 3 < res.trace.size(); k += 4) {
        std::size_t best = k;
        for (std::size_t j = k; j < k + 4; ++j) {
            EXPECT_TRUE(prev.contains(res.trace[j].rect));
            EXPECT_LT(area(res.trace[j].rect), area(prev));
            if (res.trace[j].score > res.trace[best].score) best = j;
        }
        prev = res.trace[best].rect;
    }

    calls = 0;
    cfg.include_full_image_candidate = false;
    cfg.iterations = 7;
    EXPECT_EQ(iterative_refine(img, "q", scorer, cfg).trace.size(), 28u);
    EXPECT_EQ(calls.load(), 28);
}

TEST(IterativeRefine, StopsEarlyWhenShrinkDegenerates) {
    const Image img(12, 12);
    std::atomic<int> calls{0};
    const FunctionScorer scorer("count", [&](const ImageRegion& r, std::string_view) {
        ++calls;
        return -static_cast<double>(area(r.rect));
    });
    const auto res = iterative_refine(img, "q", scorer, config(StrategyKind::iterative));
    EXPECT_LT(calls.load(), 81);
    EXPECT_EQ((calls.load() - 1) % 4, 0);
    EXPECT_EQ(res.score, max_over_trace(res));
}

TEST(SelectBest, ArgmaxAndTies) {
    const Image img(100, 100);
    const std::vector<Rect> cands{{0, 0, 10, 10}, {10, 10, 20, 20}, {20, 20, 30, 30}};
    const std::map<int, double> by_x{{0, 0.2}, {10, 0.8}, {20, 0.5}};
    const FunctionScorer scorer("table", [&](const ImageRegion& r, std::string_view) { return by_x.at(r.rect.x0); });
    auto res = select_best_candidate(img, "q", cands, scorer);
    EXPECT_EQ(res.rect, cands[1]);
    EXPECT_DOUBLE_EQ(*res.score, 0.8);

    const FunctionScorer flat("flat", [](const ImageRegion&, std::string_view) { return 0.8; });
    res = select_best_candidate(img, "q", std::vector<Rect>{cands[0], cands[1]}, flat);
    EXPECT_EQ(res.rect, cands[0]);

    res = select_best_candidate(img, "q", std::vector<Rect>{}, flat);
    EXPECT_EQ(res.rect, img.bounds());
    EXPECT_TRUE(res.fallback);
    ASSERT_EQ(res.trace.size(), 1u);
    EXPECT_TRUE(res.trace[0].fallback);
}

TEST(SelectBest, InvariantUnderMonotoneTransforms) {
    std::mt19937_64 rng(21);
    const Image img(120, 90);
    const std::vector<std::function<double(double)>> transforms{
        [](double s) { return 3 * s - 7; },
        [](double s) { return std::exp(5 * s); },
        [](double s) { return std::atan(s * 10); },
        [](double s) { return s * s * s; },
    };
    for (int i = 0; i < 300; ++i) {
        std::vector<Rect> cands;
        const int n = 1 + static_cast<int>(rng() % 12);
        for (int k = 0; k < n; ++k) cands.push_back(testsupport::random_rect(rng, 120, 90));
        const std::uint64_t salt = rng();
        const FunctionScorer base("b", [&](const ImageRegion& r, std::string_view) { return hashed_score(r.rect, salt); });
        const Rect chosen = select_best_candidate(img, "q", cands, base).rect;
        for (const auto& f : transforms) {
            const FunctionScorer t("t", [&](const ImageRegion& r, std::string_view) {
                return f(hashed_score(r.rect, salt));
            });
            ASSERT_EQ(select_best_candidate(img, "q", cands, t).rect, chosen);
        }
    }
}

TEST(DetectorCrop, Examples) {
    const Image img(200, 100);
    const PlantedTargetScorer scorer(Rect{20, 20, 60, 60});
    auto cfg = config(StrategyKind::detector);

    StubDetector one({{Rect{100, 10, 150, 90}, 0.9, "car"}});
    const PlantedTargetScorer on_box(Rect{100, 10, 150, 90});
    EXPECT_EQ(detector_crop(img, "q", one, on_box, cfg).rect, (Rect{100, 10, 150, 90}));
    cfg.include_full_image_candidate = false;
    EXPECT_EQ(detector_crop(img, "q", one, scorer, cfg).rect, (Rect{100, 10, 150, 90}));

    StubDetector none({});
    const auto fb = detector_crop(img, "q", none, scorer, cfg);
    EXPECT_EQ(fb.rect, img.bounds());
    EXPECT_TRUE(fb.fallback);

    StubDetector two({{Rect{0, 0, 100, 100}, 0.5, "a"}, {Rect{20, 20, 60, 60}, 0.4, "b"}});
    EXPECT_EQ(detector_crop(img, "q", two, scorer, cfg).rect, (Rect{20, 20, 60, 60}));
}

TEST(DetectorCrop, HonoursConfidenceThreshold) {
    const Image img(200, 100);
    const PlantedTargetScorer scorer(Rect{20, 20, 60, 60});
    StubDetector det({{Rect{20, 20, 60, 60}, 0.2, "low"}, {Rect{100, 0, 200, 100}, 0.3, "high"}});
    auto cfg = config(StrategyKind::detector);
    cfg.include_full_image_candidate = false;
    EXPECT_EQ(detector_crop(img, "q", det, scorer, cfg).rect, (Rect{100, 0, 200, 100}));
    cfg.detector_conf = 0.1;
    EXPECT_EQ(detector_crop(img, "q", det, scorer, cfg).rect, (Rect{20, 20, 60, 60}));
}

TEST(SegmenterCrop, Examples) {
    const Image img(200, 100);
    const PlantedTargetScorer scorer(Rect{20, 20, 60, 60});
    auto cfg = config(StrategyKind::segmenter);
    EXPECT_EQ(segmenter_crop(img, "q", StubSegmenter({Rect{5, 5, 15, 15}}), scorer, cfg).rect,
              img.bounds());  // full image overlaps the target better than the lone box
    cfg.include_full_image_candidate = false;
    EXPECT_EQ(segmenter_crop(img, "q", StubSegmenter({Rect{5, 5, 15, 15}}), scorer, cfg).rect, (Rect{5, 5, 15, 15}));
    const auto fb = segmenter_crop(img, "q", StubSegmenter({}), scorer, cfg);
    EXPECT_EQ(fb.rect, img.bounds());
    EXPECT_TRUE(fb.fallback);
    EXPECT_EQ(segmenter_crop(img, "q", StubSegmenter({Rect{0, 0, 100, 100}, Rect{20, 20, 60, 60}}), scorer, cfg).rect,
              (Rect{20, 20, 60, 60}));
}

TEST(SlidingWindow, CandidateEnumeration) {
    auto cfg = config(StrategyKind::sliding_window);
    cfg.window_fractions = {0.5};
    cfg.window_stride_fraction = 0.5;
    const auto cands = sliding_window_candidates(100, 100, cfg);
    ASSERT_EQ(cands.size(), 10u);
    std::vector<Rect> expected;
    for (int y : {0, 25, 50}) {
        for (int x : {0, 25, 50}) expected.push_back(Rect{x, y, x + 50, y + 50});
    }
    expected.push_back(Rect{0, 0, 100, 100});
    EXPECT_EQ(cands, expected);

    cfg.window_fractions = {1.0};
    EXPECT_EQ(sliding_window_candidates(100, 100, cfg), std::vector<Rect>{(Rect{0, 0, 100, 100})});
}

TEST(SlidingWindow, SnapsLastWindowToEdge) {
    auto cfg = config(StrategyKind::sliding_window);
    cfg.window_fractions = {0.4};
    cfg.window_stride_fraction = 0.5;
    cfg.include_full_image_candidate = false;
    // 0.4 * 103 = 41.2 -> 41 wide, stride 21: offsets 0, 21, 42, then 62 snapped.
    const auto cands = sliding_window_candidates(103, 41, cfg);
    std::vector<int> xs;
    for (const auto& r : cands) {
        if (r.y0 == 0) xs.push_back(r.x0);
    }
    EXPECT_EQ(xs, (std::vector<int>{0, 21, 42, 62}));
    for (const auto& r : cands) EXPECT_EQ(r.x1 - r.x0, 41);
}

TEST(SlidingWindow, SelectsWindowMatchingTarget) {
    const Image img(100, 100);
    const Rect target{50, 25, 100, 75};
    const PlantedTargetScorer scorer(target);
    auto cfg = config(StrategyKind::sliding_window);
    cfg.window_fractions = {0.5};
    const auto res = sliding_window_crop(img, "q", scorer, cfg);
    EXPECT_EQ(res.rect, target);
    EXPECT_DOUBLE_EQ(*res.score, 1.0);

    cfg.window_fractions = {1.0};
    EXPECT_EQ(sliding_window_crop(img, "q", scorer, cfg).rect, img.bounds());
}

TEST(Patchmap, Examples) {
    const Image img(300, 300);
    auto cfg = config(StrategyKind::patchmap);
    StubSaliency center(PatchMap(3, 3, {0, 0, 0, 0, 1, 0, 0, 0, 0}));
    EXPECT_EQ(patchmap_crop(img, "q", center, cfg).rect, (Rect{100, 100, 200, 200}));

    StubSaliency uniform(PatchMap(3, 3, std::vector<double>(9, 0.7)));
    const auto u = patchmap_crop(img, "q", uniform, cfg);
    EXPECT_EQ(u.rect, img.bounds());
    EXPECT_DOUBLE_EQ(*u.score, 0.7);

    // Blob A (top-left, holds the maximum) and blob B (bottom-right).
    StubSaliency blobs(PatchMap(4, 4, {0.9, 1.0, 0, 0,
                                       0.8, 0,   0, 0,
                                       0,   0,   0, 0.9,
                                       0,   0,   0.95, 0.6}));
    EXPECT_EQ(patchmap_crop(Image(400, 400), "q", blobs, cfg).rect, (Rect{0, 0, 200, 200}));

    StubSaliency zero(PatchMap(2, 2, {0, 0, 0, 0}));
    EXPECT_THROW(patchmap_crop(img, "q", zero, cfg), DegenerateSaliencyError);
}

TEST(Patchmap, ComponentMatchesBruteForce) {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const int rows = 1 + static_cast<int>(rng() % 9), cols = 1 + static_cast<int>(rng() % 9);
        std::vector<double> v(static_cast<std::size_t>(rows * cols));
        for (auto& x : v) x = u(rng) < 0.4 ? 0.0 : u(rng);
        if (*std::max_element(v.begin(), v.end()) <= 0) v[0] = 1.0;
        const double tau = 0.1 + 0.8 * u(rng);
        const PatchComponent comp = extract_patch_component(PatchMap(rows, cols, v), tau);
        ASSERT_EQ(comp.grid_rect, brute_component_box(v, rows, cols, tau)) << "case " << i;
    }
}

TEST(Strategies, ScoreEqualsTraceMaximum) {
    std::mt19937_64 rng(5);
    const Image img(160, 120);
    for (int i = 0; i < 50; ++i) {
        const std::uint64_t salt = rng();
        const FunctionScorer scorer("h", [&](const ImageRegion& r, std::string_view) { return hashed_score(r.rect, salt); });
        std::vector<Detection> dets;
        for (int k = 0; k < 5; ++k) dets.push_back({testsupport::random_rect(rng, 160, 120), 0.5, "x"});
        StubDetector det(dets);
        for (const auto& res : {iterative_refine(img, "q", scorer, config(StrategyKind::iterative)),
                                sliding_window_crop(img, "q", scorer, config(StrategyKind::sliding_window)),
                                detector_crop(img, "q", det, scorer, config(StrategyKind::detector))}) {
            ASSERT_TRUE(res.score.has_value());
            ASSERT_EQ(*res.score, max_over_trace(res));
            const bool rect_in_trace = std::any_of(res.trace.begin(), res.trace.end(),
                                                   [&](const TraceEntry& t) { return t.rect == res.rect; });
            ASSERT_TRUE(rect_in_trace);
        }
    }
}

TEST(Strategies, NeverScoreBelowFullImage) {
    std::mt19937_64 rng(17);
    for (int i = 0; i < 100; ++i) {
        const int w = 40 + static_cast<int>(rng() % 300), h = 40 + static_cast<int>(rng() % 300);
        const Image img(w, h);
        const std::uint64_t salt = rng();
        const FunctionScorer scorer("h", [&](const ImageRegion& r, std::string_view) { return hashed_score(r.rect, salt); });
        const double full = hashed_score(img.bounds(), salt);
        std::vector<Rect> boxes;
        for (int k = 0; k < 4; ++k) boxes.push_back(testsupport::random_rect(rng, w, h));
        StubSegmenter seg(boxes);
        ASSERT_GE(*iterative_refine(img, "q", scorer, config(StrategyKind::iterative)).score, full);
        ASSERT_GE(*sliding_window_crop(img, "q", scorer, config(StrategyKind::sliding_window)).score, full);
        ASSERT_GE(*segmenter_crop(img, "q", seg, scorer, config(StrategyKind::segmenter)).score, full);
    }
}

TEST(RunStrategy, MissingBackendIsConfigError) {
    const Image img(50, 50);
    BackendSet empty;
    EXPECT_THROW(run_strategy(config(StrategyKind::iterative), img, "q", empty, std::nullopt), ConfigError);
    EXPECT_THROW(run_strategy(config(StrategyKind::patchmap), img, "q", empty, std::nullopt), ConfigError);
    EXPECT_EQ(run_strategy(config(StrategyKind::none), img, "q", empty, std::nullopt).rect, img.bounds());
}

TEST(RunStrategy, NanScoreIsBackendError) {
    const Image img(50, 50);
    BackendSet b;
    b.scorer = std::make_shared<FunctionScorer>("nan", [](const ImageRegion&, std::string_view) { return NAN; });
    EXPECT_THROW(run_strategy(config(StrategyKind::iterative), img, "q", b, std::nullopt), BackendError);
}

TEST(StrategyConfig, Validation) {
    auto c = config(StrategyKind::iterative);
    EXPECT_NO_THROW(c.validate());
    c.ratio = 1.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = config(StrategyKind::iterative);
    c.iterations = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = config(StrategyKind::patchmap);
    c.patch_threshold = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = config(StrategyKind::sliding_window);
    c.window_fractions = {};
    EXPECT_THROW(c.validate(), ConfigError);
    c.window_fractions = {1.2};
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(StrategyKind, ParsesAliases) {
    EXPECT_EQ(parse_strategy_kind("clip"), StrategyKind::iterative);
    EXPECT_EQ(parse_strategy_kind("yolo"), StrategyKind::detector);
    EXPECT_EQ(parse_strategy_kind("sam"), StrategyKind::segmenter);
    EXPECT_EQ(parse_strategy_kind("sliding"), StrategyKind::sliding_window);
    EXPECT_THROW(parse_strategy_kind("bogus"), ConfigError);
    EXPECT_EQ(parse_feed_mode("crop-only"), FeedMode::crop_only);
    EXPECT_EQ(parse_feed_mode("concat"), FeedMode::concat_with_original);
}
