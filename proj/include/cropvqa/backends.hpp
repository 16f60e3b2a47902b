#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cropvqa/geometry.hpp"

namespace cropvqa {

/// A sub-rectangle of a source image. Backends that talk over the wire crop
/// before encoding; synthetic backends may read the rect directly.
struct ImageRegion {
    const Image* image;
    Rect rect;

    static ImageRegion whole(const Image& img) { return {&img, img.bounds()}; }
    Image materialize() const { return crop_image(*image, rect); }
};

struct Detection {
    Rect box;
    double confidence = 0.0;
    std::string label;

    friend bool operator==(const Detection&, const Detection&) = default;
};

struct VqaAnswer {
    std::string text;
    std::optional<double> score;

    friend bool operator==(const VqaAnswer&, const VqaAnswer&) = default;
};

// Every backend carries an identity string. Two backends with the same
// identity must return the same output for the same input; the score cache
// relies on it.

class RelevanceScorer {
public:
    virtual ~RelevanceScorer() = default;
    virtual std::string identity() const = 0;
    /// Higher is more relevant. Scores are only comparable within one identity.
    virtual double score(const ImageRegion& region, std::string_view text) const = 0;
};

class Detector {
public:
    virtual ~Detector() = default;
    virtual std::string identity() const = 0;
    /// Every returned detection has confidence >= confidence_threshold.
    virtual std::vector<Detection> detect(const Image& img, double confidence_threshold) const = 0;
};

class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual std::string identity() const = 0;
    /// Covering boxes of the segmentation masks, all within the image.
    virtual std::vector<Rect> segment(const Image& img) const = 0;
};

class VqaModel {
public:
    virtual ~VqaModel() = default;
    virtual std::string identity() const = 0;
    /// images is non-empty; with two images the order is (original, crop).
    virtual VqaAnswer answer(std::span<const ImageRegion> images, std::string_view question) const = 0;
};

class SaliencySource {
public:
    virtual ~SaliencySource() = default;
    virtual std::string identity() const = 0;
    virtual PatchMap saliency(const Image& img, std::string_view question) const = 0;
};

/// The backends a run may need. Strategies check for the ones they use.
struct BackendSet {
    std::shared_ptr<const RelevanceScorer> scorer;
    std::shared_ptr<const Detector> detector;
    std::shared_ptr<const Segmenter> segmenter;
    std::shared_ptr<const VqaModel> vqa;
    std::shared_ptr<const SaliencySource> saliency;
};

/// Throws ProtocolError unless every detection is in-bounds, has confidence in
/// [0,1] and meets the threshold.
void check_detection_contract(std::span<const Detection> detections, const Image& img,
                              double confidence_threshold);

/// Throws ProtocolError unless every box is a valid rect inside the image.
void check_segment_contract(std::span<const Rect> boxes, const Image& img);

}  // namespace cropvqa
