#include "cropvqa/synthetic.hpp"

#include <algorithm>
#include <climits>

#include "cropvqa/digest.hpp"
#include "cropvqa/errors.hpp"

namespace cropvqa {

bool is_marker(const std::uint8_t* px) {
    return px[0] == kMarkerColor[0] && px[1] == kMarkerColor[1] && px[2] == kMarkerColor[2];
}

std::optional<Rect> find_marker_box(const Image& img) {
    Rect box{INT_MAX, INT_MAX, -1, -1};
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            if (is_marker(img.pixel(x, y))) {
                box.x0 = std::min(box.x0, x);
                box.y0 = std::min(box.y0, y);
                box.x1 = std::max(box.x1, x + 1);
                box.y1 = std::max(box.y1, y + 1);
            }
        }
    }
    if (box.x1 < 0) {
        return std::nullopt;
    }
    return box;
}

Image make_marker_image(int width, int height, const Rect& target, std::uint32_t texture_seed) {
    if (!Rect{0, 0, width, height}.contains(target) || !target.valid()) {
        throw BoundsError("planted target " + to_string(target) + " outside image");
    }
    Image img(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            auto* px = img.pixel(x, y);
            if (target.contains(Rect{x, y, x + 1, y + 1})) {
                std::copy(kMarkerColor.begin(), kMarkerColor.end(), px);
            } else {
                const auto grey = static_cast<std::uint8_t>(
                    100 + (static_cast<std::uint32_t>(x * 7 + y * 13) + texture_seed * 31u) % 40u);
                px[0] = px[1] = px[2] = grey;
            }
        }
    }
    return img;
}

PlantedTargetScorer::PlantedTargetScorer(Rect target)
    : locator_([target](const Image&) { return std::optional<Rect>(target); }),
      identity_("planted-target:" + to_string(target)) {}

PlantedTargetScorer::PlantedTargetScorer(TargetLocator locator, std::string name)
    : locator_(std::move(locator)), identity_("planted-target:" + std::move(name)) {}

double PlantedTargetScorer::score(const ImageRegion& region, std::string_view) const {
    const auto target = locator_(*region.image);
    if (!target) {
        return 0.0;
    }
    return iou(region.rect, *target);
}

double MarkerDensityScorer::score(const ImageRegion& region, std::string_view) const {
    const Rect& r = region.rect;
    std::int64_t hits = 0;
    for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) {
            hits += is_marker(region.image->pixel(x, y)) ? 1 : 0;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(area(r));
}

std::vector<Detection> StubDetector::detect(const Image& img, double confidence_threshold) const {
    std::vector<Detection> out;
    for (const auto& d : detections_) {
        if (d.confidence < confidence_threshold) {
            continue;
        }
        if (auto clipped = intersection(d.box, img.bounds())) {
            out.push_back({*clipped, d.confidence, d.label});
        }
    }
    return out;
}

namespace {

std::vector<Rect> quadrants(const Image& img) {
    const int mx = std::max(1, img.width() / 2);
    const int my = std::max(1, img.height() / 2);
    std::vector<Rect> out{{0, 0, mx, my}};
    if (mx < img.width()) out.push_back({mx, 0, img.width(), my});
    if (my < img.height()) out.push_back({0, my, mx, img.height()});
    if (mx < img.width() && my < img.height()) out.push_back({mx, my, img.width(), img.height()});
    return out;
}

}  // namespace

std::vector<Detection> MarkerDetector::detect(const Image& img, double confidence_threshold) const {
    std::vector<Detection> all;
    if (auto box = find_marker_box(img)) {
        all.push_back({*box, 0.9, "marker"});
    }
    static constexpr double kDecoyConf[] = {0.3, 0.2, 0.1, 0.05};
    const auto quads = quadrants(img);
    for (std::size_t i = 0; i < quads.size(); ++i) {
        all.push_back({quads[i], kDecoyConf[i], "quadrant"});
    }
    std::erase_if(all, [&](const Detection& d) { return d.confidence < confidence_threshold; });
    return all;
}

std::vector<Rect> StubSegmenter::segment(const Image& img) const {
    std::vector<Rect> out;
    for (const auto& b : boxes_) {
        if (auto clipped = intersection(b, img.bounds())) {
            out.push_back(*clipped);
        }
    }
    return out;
}

std::vector<Rect> MarkerSegmenter::segment(const Image& img) const {
    std::vector<Rect> out;
    if (auto box = find_marker_box(img)) {
        out.push_back(*box);
    }
    for (const auto& q : quadrants(img)) {
        out.push_back(q);
    }
    return out;
}

std::string MarkerSaliency::identity() const {
    return "marker-saliency/" + std::to_string(rows_) + "x" + std::to_string(cols_);
}

PatchMap MarkerSaliency::saliency(const Image& img, std::string_view) const {
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(rows_ * cols_));
    MarkerDensityScorer density;
    for (int r = 0; r < rows_; ++r) {
        for (int c = 0; c < cols_; ++c) {
            const Rect cell = patch_to_pixel_rect(Rect{c, r, c + 1, r + 1}, rows_, cols_, img.width(), img.height());
            values.push_back(density.score({&img, cell}, {}));
        }
    }
    return PatchMap(rows_, cols_, std::move(values));
}

ScriptedVqaModel::ScriptedVqaModel(std::map<std::string, std::string> answers, std::string fallback,
                                   std::optional<GroundingRule> rule)
    : answers_(answers.begin(), answers.end()), fallback_(std::move(fallback)), rule_(std::move(rule)) {}

std::string ScriptedVqaModel::identity() const {
    std::string table;
    for (const auto& [q, a] : answers_) {
        table += q + '\x1f' + a + '\x1e';
    }
    table += fallback_;
    if (rule_) {
        table += "|iou>=" + std::to_string(rule_->min_iou);
    }
    return "scripted-vqa:" + sha256_hex(table).substr(0, 16);
}

VqaAnswer ScriptedVqaModel::answer(std::span<const ImageRegion> images, std::string_view question) const {
    if (images.empty()) {
        throw BackendError("VQA model needs at least one image");
    }
    auto it = answers_.find(question);
    if (it == answers_.end()) {
        return {fallback_, std::nullopt};
    }
    if (rule_) {
        const ImageRegion& crop = images.back();
        const auto target = rule_->locator(*crop.image);
        if (!target || iou(crop.rect, *target) < rule_->min_iou) {
            return {fallback_, std::nullopt};
        }
    }
    return {it->second, 1.0};
}

BackendSet marker_backends(std::map<std::string, std::string> scripted_answers) {
    BackendSet set;
    set.scorer = std::make_shared<MarkerDensityScorer>();
    set.detector = std::make_shared<MarkerDetector>();
    set.segmenter = std::make_shared<MarkerSegmenter>();
    set.vqa = std::make_shared<ScriptedVqaModel>(std::move(scripted_answers));
    set.saliency = std::make_shared<MarkerSaliency>(8, 8);
    return set;
}

}  // namespace cropvqa
