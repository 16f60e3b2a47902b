#include "cropvqa/strategies.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

#include "cropvqa/errors.hpp"

namespace cropvqa {

std::string to_string(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::none: return "none";
        case StrategyKind::human: return "human";
        case StrategyKind::iterative: return "iterative";
        case StrategyKind::detector: return "detector";
        case StrategyKind::segmenter: return "segmenter";
        case StrategyKind::sliding_window: return "sliding_window";
        case StrategyKind::patchmap: return "patchmap";
    }
    return "?";
}

std::string to_string(FeedMode mode) {
    return mode == FeedMode::crop_only ? "crop_only" : "concat_with_original";
}

StrategyKind parse_strategy_kind(std::string_view name) {
    if (name == "none") return StrategyKind::none;
    if (name == "human") return StrategyKind::human;
    if (name == "iterative" || name == "clip") return StrategyKind::iterative;
    if (name == "detector" || name == "yolo") return StrategyKind::detector;
    if (name == "segmenter" || name == "sam") return StrategyKind::segmenter;
    if (name == "sliding_window" || name == "sliding") return StrategyKind::sliding_window;
    if (name == "patchmap") return StrategyKind::patchmap;
    throw ConfigError("unknown strategy '" + std::string(name) + "'");
}

FeedMode parse_feed_mode(std::string_view name) {
    if (name == "crop_only" || name == "crop-only") return FeedMode::crop_only;
    if (name == "concat_with_original" || name == "concat") return FeedMode::concat_with_original;
    throw ConfigError("unknown feed mode '" + std::string(name) + "'");
}

void StrategyConfig::validate() const {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw ConfigError("ratio must lie in (0,1)");
    }
    if (iterations < 1) {
        throw ConfigError("iterations must be >= 1");
    }
    if (!(detector_conf >= 0.0 && detector_conf <= 1.0)) {
        throw ConfigError("detector confidence must lie in [0,1]");
    }
    if (!(patch_threshold > 0.0 && patch_threshold <= 1.0)) {
        throw ConfigError("patch threshold must lie in (0,1]");
    }
    if (kind == StrategyKind::sliding_window && window_fractions.empty()) {
        throw ConfigError("sliding window needs at least one window fraction");
    }
    for (double f : window_fractions) {
        if (!(f > 0.0 && f <= 1.0)) {
            throw ConfigError("window fractions must lie in (0,1]");
        }
    }
    if (!(window_stride_fraction > 0.0 && window_stride_fraction <= 1.0)) {
        throw ConfigError("window stride fraction must lie in (0,1]");
    }
}

CropResult no_crop(const Image& img) {
    return CropResult{img.bounds(), std::nullopt, {}, false};
}

CropResult human_crop(const Image& img, const std::optional<Rect>& ground_truth) {
    if (!ground_truth) {
        throw NotApplicableError("record has no ground-truth box");
    }
    if (!ground_truth->valid() || !img.bounds().contains(*ground_truth)) {
        throw BoundsError("ground-truth box " + to_string(*ground_truth) + " outside image");
    }
    return CropResult{*ground_truth, std::nullopt, {}, false};
}

namespace {

double checked_score(const RelevanceScorer& scorer, const Image& img, const Rect& r, std::string_view q) {
    const double s = scorer.score(ImageRegion{&img, r}, q);
    if (std::isnan(s)) {
        throw BackendError("scorer " + scorer.identity() + " returned NaN");
    }
    return s;
}

// First maximum over the trace.
CropResult best_of_trace(std::vector<TraceEntry> trace) {
    auto best = trace.begin();
    for (auto it = trace.begin(); it != trace.end(); ++it) {
        if (it->score > best->score) {
            best = it;
        }
    }
    CropResult out{best->rect, best->score, {}, best->fallback};
    out.trace = std::move(trace);
    return out;
}

}  // namespace

CropResult iterative_refine(const Image& img, std::string_view question, const RelevanceScorer& scorer,
                            const StrategyConfig& cfg) {
    if (cfg.iterations < 1) {
        throw ConfigError("iterations must be >= 1");
    }
    std::vector<TraceEntry> trace;
    trace.reserve(static_cast<std::size_t>(4 * cfg.iterations + 1));
    const Rect full = img.bounds();
    if (cfg.include_full_image_candidate) {
        trace.push_back({full, checked_score(scorer, img, full, question)});
    }

    Rect current = full;
    for (int it = 0; it < cfg.iterations; ++it) {
        std::vector<Rect> shrinks;
        try {
            for (Side side : kAllSides) {
                shrinks.push_back(shrink_side(current, side, cfg.ratio));
            }
        } catch (const DegenerateRectError&) {
            break;
        }
        std::size_t best = 0;
        double best_score = 0.0;
        for (std::size_t i = 0; i < shrinks.size(); ++i) {
            const double s = checked_score(scorer, img, shrinks[i], question);
            trace.push_back({shrinks[i], s});
            if (i == 0 || s > best_score) {
                best = i;
                best_score = s;
            }
        }
        current = shrinks[best];
    }

    if (trace.empty()) {
        // Full-image candidate off and the image too small to shrink even once.
        trace.push_back({full, checked_score(scorer, img, full, question)});
    }
    return best_of_trace(std::move(trace));
}

CropResult select_best_candidate(const Image& img, std::string_view question, std::span<const Rect> candidates,
                                 const RelevanceScorer& scorer) {
    std::vector<TraceEntry> trace;
    if (candidates.empty()) {
        const Rect full = img.bounds();
        trace.push_back({full, checked_score(scorer, img, full, question), true});
        return best_of_trace(std::move(trace));
    }
    trace.reserve(candidates.size());
    for (const Rect& r : candidates) {
        if (!r.valid() || !img.bounds().contains(r)) {
            throw BoundsError("candidate " + to_string(r) + " outside image");
        }
        trace.push_back({r, checked_score(scorer, img, r, question)});
    }
    return best_of_trace(std::move(trace));
}

namespace {

CropResult select_from_proposals(const Image& img, std::string_view question, std::vector<Rect> proposals,
                                 const RelevanceScorer& scorer, const StrategyConfig& cfg) {
    if (!proposals.empty() && cfg.include_full_image_candidate) {
        proposals.push_back(img.bounds());
    }
    return select_best_candidate(img, question, proposals, scorer);
}

}  // namespace

CropResult detector_crop(const Image& img, std::string_view question, const Detector& detector,
                         const RelevanceScorer& scorer, const StrategyConfig& cfg) {
    std::vector<Rect> boxes;
    for (const auto& d : detector.detect(img, cfg.detector_conf)) {
        boxes.push_back(d.box);
    }
    return select_from_proposals(img, question, std::move(boxes), scorer, cfg);
}

CropResult segmenter_crop(const Image& img, std::string_view question, const Segmenter& segmenter,
                          const RelevanceScorer& scorer, const StrategyConfig& cfg) {
    return select_from_proposals(img, question, segmenter.segment(img), scorer, cfg);
}

namespace {

std::vector<int> window_offsets(int extent, int window, int stride) {
    std::vector<int> out;
    for (int pos = 0; pos < extent - window; pos += stride) {
        out.push_back(pos);
    }
    out.push_back(extent - window);
    return out;
}

}  // namespace

std::vector<Rect> sliding_window_candidates(int width, int height, const StrategyConfig& cfg) {
    std::vector<Rect> out;
    auto add = [&out](const Rect& r) {
        if (std::find(out.begin(), out.end(), r) == out.end()) {
            out.push_back(r);
        }
    };
    for (double f : cfg.window_fractions) {
        const int ww = std::clamp(round_half_up(f * width), 1, width);
        const int wh = std::clamp(round_half_up(f * height), 1, height);
        const int sx = std::max(1, round_half_up(cfg.window_stride_fraction * ww));
        const int sy = std::max(1, round_half_up(cfg.window_stride_fraction * wh));
        for (int y : window_offsets(height, wh, sy)) {
            for (int x : window_offsets(width, ww, sx)) {
                add(Rect{x, y, x + ww, y + wh});
            }
        }
    }
    if (cfg.include_full_image_candidate) {
        add(Rect{0, 0, width, height});
    }
    return out;
}

CropResult sliding_window_crop(const Image& img, std::string_view question, const RelevanceScorer& scorer,
                               const StrategyConfig& cfg) {
    if (cfg.window_fractions.empty()) {
        throw ConfigError("sliding window needs at least one window fraction");
    }
    const auto candidates = sliding_window_candidates(img.width(), img.height(), cfg);
    return select_best_candidate(img, question, candidates, scorer);
}

PatchComponent extract_patch_component(const PatchMap& pm, double threshold) {
    const auto values = pm.values();
    const auto peak = std::max_element(values.begin(), values.end());  // first maximum
    if (*peak <= 0.0) {
        throw DegenerateSaliencyError("saliency map has no positive value");
    }
    const double max_value = *peak;
    const int cols = pm.cols();
    const int rows = pm.rows();
    const int start = static_cast<int>(peak - values.begin());

    auto hot = [&](int idx) { return values[static_cast<std::size_t>(idx)] / max_value >= threshold; };

    std::vector<char> seen(values.size(), 0);
    std::queue<int> frontier;
    frontier.push(start);
    seen[static_cast<std::size_t>(start)] = 1;

    Rect box{start % cols, start / cols, start % cols + 1, start / cols + 1};
    double sum = 0.0;
    std::size_t count = 0;
    while (!frontier.empty()) {
        const int idx = frontier.front();
        frontier.pop();
        const int r = idx / cols;
        const int c = idx % cols;
        sum += values[static_cast<std::size_t>(idx)];
        ++count;
        box.x0 = std::min(box.x0, c);
        box.y0 = std::min(box.y0, r);
        box.x1 = std::max(box.x1, c + 1);
        box.y1 = std::max(box.y1, r + 1);

        const int nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
        for (const auto& [nr, nc] : nbr) {
            if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) {
                continue;
            }
            const int n = nr * cols + nc;
            if (!seen[static_cast<std::size_t>(n)] && hot(n)) {
                seen[static_cast<std::size_t>(n)] = 1;
                frontier.push(n);
            }
        }
    }
    return {box, sum / static_cast<double>(count), count};
}

CropResult patchmap_crop(const Image& img, std::string_view question, const SaliencySource& saliency,
                         const StrategyConfig& cfg) {
    const PatchMap pm = saliency.saliency(img, question);
    const PatchComponent comp = extract_patch_component(pm, cfg.patch_threshold);
    const Rect px = patch_to_pixel_rect(comp.grid_rect, pm, img);
    return CropResult{px, comp.mean_value, {{px, comp.mean_value}}, false};
}

namespace {

template <typename T>
const T& require_backend(const std::shared_ptr<const T>& p, const char* what) {
    if (!p) {
        throw ConfigError(std::string("strategy needs a ") + what + " backend");
    }
    return *p;
}

}  // namespace

CropResult run_strategy(const StrategyConfig& cfg, const Image& img, std::string_view question,
                        const BackendSet& backends, const std::optional<Rect>& ground_truth) {
    switch (cfg.kind) {
        case StrategyKind::none:
            return no_crop(img);
        case StrategyKind::human:
            return human_crop(img, ground_truth);
        case StrategyKind::iterative:
            return iterative_refine(img, question, require_backend(backends.scorer, "scorer"), cfg);
        case StrategyKind::detector:
            return detector_crop(img, question, require_backend(backends.detector, "detector"),
                                 require_backend(backends.scorer, "scorer"), cfg);
        case StrategyKind::segmenter:
            return segmenter_crop(img, question, require_backend(backends.segmenter, "segmenter"),
                                  require_backend(backends.scorer, "scorer"), cfg);
        case StrategyKind::sliding_window:
            return sliding_window_crop(img, question, require_backend(backends.scorer, "scorer"), cfg);
        case StrategyKind::patchmap:
            return patchmap_crop(img, question, require_backend(backends.saliency, "saliency"), cfg);
    }
    throw ConfigError("unhandled strategy kind");
}

}  // namespace cropvqa
