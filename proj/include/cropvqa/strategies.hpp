#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cropvqa/backends.hpp"
#include "cropvqa/geometry.hpp"

namespace cropvqa {

enum class StrategyKind { none, human, iterative, detector, segmenter, sliding_window, patchmap };

/// How the crop reaches the VQA model: alone, or appended after the original.
enum class FeedMode { crop_only, concat_with_original };

std::string to_string(StrategyKind kind);
std::string to_string(FeedMode mode);
/// Accepts the canonical names plus the method aliases "clip", "yolo", "sam", "sliding".
StrategyKind parse_strategy_kind(std::string_view name);
FeedMode parse_feed_mode(std::string_view name);

struct StrategyConfig {
    StrategyKind kind = StrategyKind::none;
    double ratio = 0.9;
    int iterations = 20;
    double detector_conf = 0.25;
    std::vector<double> window_fractions{0.5, 0.65, 0.8};
    double window_stride_fraction = 0.5;
    double patch_threshold = 0.5;
    bool include_full_image_candidate = true;
    FeedMode feed_mode = FeedMode::concat_with_original;

    /// Throws ConfigError when a field is out of range.
    void validate() const;
};

struct TraceEntry {
    Rect rect;
    double score = 0.0;
    bool fallback = false;  // full image scored because there were no proposals

    friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

struct CropResult {
    Rect rect;
    std::optional<double> score;  // absent for the ground-truth and no-op crops
    std::vector<TraceEntry> trace;
    bool fallback = false;
};

CropResult no_crop(const Image& img);

/// Crops to the annotated answer box. Throws NotApplicableError without one.
CropResult human_crop(const Image& img, const std::optional<Rect>& ground_truth);

/**
 * Progressive refinement from the full image.
 *
 * Each iteration scores the four single-side shrinks of the current rect
 * (top, bottom, left, right) and moves to the best one. The result is the
 * best of every scored candidate, with the full image scored first when
 * include_full_image_candidate is set. Ties go to the earliest candidate.
 * Refinement stops early once any side can no longer shrink.
 */
CropResult iterative_refine(const Image& img, std::string_view question, const RelevanceScorer& scorer,
                            const StrategyConfig& cfg);

/// Scores every candidate and keeps the first maximum. An empty list scores
/// the full image and flags the result as a fallback.
CropResult select_best_candidate(const Image& img, std::string_view question, std::span<const Rect> candidates,
                                 const RelevanceScorer& scorer);

CropResult detector_crop(const Image& img, std::string_view question, const Detector& detector,
                         const RelevanceScorer& scorer, const StrategyConfig& cfg);

CropResult segmenter_crop(const Image& img, std::string_view question, const Segmenter& segmenter,
                          const RelevanceScorer& scorer, const StrategyConfig& cfg);

/// Window grid for each fraction, stride relative to window size, last
/// row/column snapped to the image edge. Duplicates removed, order kept.
std::vector<Rect> sliding_window_candidates(int width, int height, const StrategyConfig& cfg);

CropResult sliding_window_crop(const Image& img, std::string_view question, const RelevanceScorer& scorer,
                               const StrategyConfig& cfg);

/// Connected component (4-neighbourhood) of cells at or above
/// patch_threshold x max that contains the first maximal cell.
struct PatchComponent {
    Rect grid_rect;       // covering rect in grid coordinates
    double mean_value;    // mean raw saliency over the component's cells
    std::size_t cells;
};

/// Throws DegenerateSaliencyError when the map has no positive value.
PatchComponent extract_patch_component(const PatchMap& pm, double threshold);

CropResult patchmap_crop(const Image& img, std::string_view question, const SaliencySource& saliency,
                         const StrategyConfig& cfg);

/// Dispatches on cfg.kind. Throws ConfigError when a needed backend is missing.
CropResult run_strategy(const StrategyConfig& cfg, const Image& img, std::string_view question,
                        const BackendSet& backends, const std::optional<Rect>& ground_truth);

}  // namespace cropvqa
