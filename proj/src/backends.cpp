#include "cropvqa/backends.hpp"

#include "cropvqa/errors.hpp"

namespace cropvqa {

void check_detection_contract(std::span<const Detection> detections, const Image& img,
                              double confidence_threshold) {
    for (const auto& d : detections) {
        if (!d.box.valid() || !img.bounds().contains(d.box)) {
            throw ProtocolError("detection box " + to_string(d.box) + " outside image");
        }
        if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
            throw ProtocolError("detection confidence outside [0,1]");
        }
        if (d.confidence < confidence_threshold) {
            throw ProtocolError("detection confidence " + std::to_string(d.confidence) +
                                " below requested threshold " + std::to_string(confidence_threshold));
        }
    }
}

void check_segment_contract(std::span<const Rect> boxes, const Image& img) {
    for (const auto& b : boxes) {
        if (!b.valid() || !img.bounds().contains(b)) {
            throw ProtocolError("segment box " + to_string(b) + " outside image");
        }
    }
}

}  // namespace cropvqa
