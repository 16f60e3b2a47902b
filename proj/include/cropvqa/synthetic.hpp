#pragma once

// Deterministic stand-ins for the neural backends. They make the search
// strategies and the harness testable without model checkpoints.

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include "cropvqa/backends.hpp"

namespace cropvqa {

/// Locates a planted box inside an image, or nullopt when there is none.
using TargetLocator = std::function<std::optional<Rect>(const Image&)>;

/// Pure red (255,0,0) marks planted targets in synthetic images.
inline constexpr std::array<std::uint8_t, 3> kMarkerColor{255, 0, 0};

bool is_marker(const std::uint8_t* px);

/// Bounding box of all marker pixels.
std::optional<Rect> find_marker_box(const Image& img);

/// Grey background with a solid marker rectangle; the background carries a
/// faint deterministic texture so distinct images hash differently.
Image make_marker_image(int width, int height, const Rect& target, std::uint32_t texture_seed = 0);

/// score(r) = |r ∩ target| / |r ∪ target|, peaking at exactly 1.0 on the target.
class PlantedTargetScorer : public RelevanceScorer {
public:
    explicit PlantedTargetScorer(Rect target);
    /// Target found per source image, e.g. via find_marker_box.
    explicit PlantedTargetScorer(TargetLocator locator, std::string name = "marker");

    std::string identity() const override { return identity_; }
    double score(const ImageRegion& region, std::string_view text) const override;

private:
    TargetLocator locator_;
    std::string identity_;
};

/// Fraction of marker pixels in the region. Needs only the crop's pixels, so
/// it gives the same answer in-process and behind the wire protocol.
class MarkerDensityScorer : public RelevanceScorer {
public:
    std::string identity() const override { return "marker-density/1"; }
    double score(const ImageRegion& region, std::string_view text) const override;
};

class FunctionScorer : public RelevanceScorer {
public:
    using Fn = std::function<double(const ImageRegion&, std::string_view)>;
    FunctionScorer(std::string identity, Fn fn) : identity_(std::move(identity)), fn_(std::move(fn)) {}

    std::string identity() const override { return identity_; }
    double score(const ImageRegion& region, std::string_view text) const override { return fn_(region, text); }

private:
    std::string identity_;
    Fn fn_;
};

/// Returns a fixed list, filtered by threshold and clipped to the image.
class StubDetector : public Detector {
public:
    explicit StubDetector(std::vector<Detection> detections) : detections_(std::move(detections)) {}
    std::string identity() const override { return "stub-detector/1"; }
    std::vector<Detection> detect(const Image& img, double confidence_threshold) const override;

private:
    std::vector<Detection> detections_;
};

/// The marker box at confidence 0.9 plus the four image quadrants at 0.3, 0.2, 0.1, 0.05.
class MarkerDetector : public Detector {
public:
    std::string identity() const override { return "marker-detector/1"; }
    std::vector<Detection> detect(const Image& img, double confidence_threshold) const override;
};

class StubSegmenter : public Segmenter {
public:
    explicit StubSegmenter(std::vector<Rect> boxes) : boxes_(std::move(boxes)) {}
    std::string identity() const override { return "stub-segmenter/1"; }
    std::vector<Rect> segment(const Image& img) const override;

private:
    std::vector<Rect> boxes_;
};

/// Covering box of the marker mask followed by the four quadrants.
class MarkerSegmenter : public Segmenter {
public:
    std::string identity() const override { return "marker-segmenter/1"; }
    std::vector<Rect> segment(const Image& img) const override;
};

class StubSaliency : public SaliencySource {
public:
    explicit StubSaliency(PatchMap map) : map_(std::move(map)) {}
    std::string identity() const override { return "stub-saliency/1"; }
    PatchMap saliency(const Image&, std::string_view) const override { return map_; }

private:
    PatchMap map_;
};

/// Per-cell marker fraction on a fixed grid.
class MarkerSaliency : public SaliencySource {
public:
    MarkerSaliency(int rows, int cols) : rows_(rows), cols_(cols) {}
    std::string identity() const override;
    PatchMap saliency(const Image& img, std::string_view question) const override;

private:
    int rows_;
    int cols_;
};

/**
 * Answers from a question-text lookup table.
 *
 * With a grounding rule the scripted answer is only given when the last
 * supplied image region overlaps the planted target with IoU >= min_iou;
 * otherwise the fallback answer is returned.
 */
class ScriptedVqaModel : public VqaModel {
public:
    struct GroundingRule {
        TargetLocator locator;
        double min_iou = 0.5;
    };

    explicit ScriptedVqaModel(std::map<std::string, std::string> answers, std::string fallback = "unknown",
                              std::optional<GroundingRule> rule = std::nullopt);

    std::string identity() const override;
    VqaAnswer answer(std::span<const ImageRegion> images, std::string_view question) const override;

private:
    std::map<std::string, std::string, std::less<>> answers_;
    std::string fallback_;
    std::optional<GroundingRule> rule_;
};

/// The marker-based backend set served by the stub server.
BackendSet marker_backends(std::map<std::string, std::string> scripted_answers = {});

}  // namespace cropvqa
