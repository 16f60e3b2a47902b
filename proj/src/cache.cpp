#include "cropvqa/cache.hpp"

#include <cstdio>

#include "cropvqa/digest.hpp"
#include "cropvqa/errors.hpp"

namespace cropvqa {

namespace fs = std::filesystem;
using nlohmann::json;

ScoreCache::ScoreCache(const fs::path& dir) {
    fs::create_directories(dir);
    const fs::path file = dir / "cache.jsonl";
    bool needs_newline = false;
    if (std::ifstream is(file); is) {
        std::string line;
        while (std::getline(is, line)) {
            needs_newline = is.eof();
            try {
                json j = json::parse(line);
                entries_[j.at("k").get<std::string>()] = j.at("v");
            } catch (const json::exception&) {
                // A torn final line from an interrupted run.
            }
        }
    }
    log_.open(file, std::ios::app);
    if (!log_) {
        throw Error("cannot open cache file " + file.string());
    }
    if (needs_newline) {
        log_ << '\n';
    }
}

std::string ScoreCache::make_key(std::string_view kind, std::string_view backend_identity,
                                 std::string_view image_digest, const Rect& region, std::string_view text) {
    std::string key;
    key.reserve(160);
    key.append(kind).append("|").append(backend_identity).append("|").append(image_digest).append("|");
    key += std::to_string(region.x0) + "," + std::to_string(region.y0) + "," + std::to_string(region.x1) + "," +
           std::to_string(region.y1);
    key.append("|").append(sha256_hex(text));
    return key;
}

std::optional<json> ScoreCache::get(const std::string& key) const {
    std::shared_lock lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
        ++misses_;
        return std::nullopt;
    }
    ++hits_;
    return it->second;
}

void ScoreCache::put(const std::string& key, const json& value) {
    {
        std::unique_lock lock(mu_);
        entries_[key] = value;
    }
    if (log_.is_open()) {
        std::lock_guard lock(file_mu_);
        log_ << json{{"k", key}, {"v", value}}.dump() << '\n';
        log_.flush();
    }
}

std::size_t ScoreCache::size() const {
    std::shared_lock lock(mu_);
    return entries_.size();
}

namespace {

template <typename Compute>
json cached(ScoreCache& cache, const std::string& key, Compute&& compute) {
    if (auto hit = cache.get(key)) {
        return *hit;
    }
    json value = compute();
    cache.put(key, value);
    return value;
}

json rect_json(const Rect& r) {
    return json::array({r.x0, r.y0, r.x1, r.y1});
}

Rect rect_from(const json& j) {
    return Rect{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

class CachingScorer : public RelevanceScorer {
public:
    CachingScorer(std::shared_ptr<const RelevanceScorer> inner, std::shared_ptr<ScoreCache> cache)
        : inner_(std::move(inner)), cache_(std::move(cache)), id_(inner_->identity()) {}

    std::string identity() const override { return id_; }

    double score(const ImageRegion& region, std::string_view text) const override {
        const auto key = ScoreCache::make_key("score", id_, image_digest(*region.image), region.rect, text);
        return cached(*cache_, key, [&] { return json(inner_->score(region, text)); }).get<double>();
    }

private:
    std::shared_ptr<const RelevanceScorer> inner_;
    std::shared_ptr<ScoreCache> cache_;
    std::string id_;
};

class CachingDetector : public Detector {
public:
    CachingDetector(std::shared_ptr<const Detector> inner, std::shared_ptr<ScoreCache> cache)
        : inner_(std::move(inner)), cache_(std::move(cache)), id_(inner_->identity()) {}

    std::string identity() const override { return id_; }

    std::vector<Detection> detect(const Image& img, double conf) const override {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "conf=%.17g", conf);
        const auto key = ScoreCache::make_key("detect", id_, image_digest(img), img.bounds(), buf);
        const json j = cached(*cache_, key, [&] {
            json arr = json::array();
            for (const auto& d : inner_->detect(img, conf)) {
                arr.push_back({{"box", rect_json(d.box)}, {"conf", d.confidence}, {"label", d.label}});
            }
            return arr;
        });
        std::vector<Detection> out;
        for (const auto& d : j) {
            out.push_back({rect_from(d["box"]), d["conf"].get<double>(), d["label"].get<std::string>()});
        }
        return out;
    }

private:
    std::shared_ptr<const Detector> inner_;
    std::shared_ptr<ScoreCache> cache_;
    std::string id_;
};

class CachingSegmenter : public Segmenter {
public:
    CachingSegmenter(std::shared_ptr<const Segmenter> inner, std::shared_ptr<ScoreCache> cache)
        : inner_(std::move(inner)), cache_(std::move(cache)), id_(inner_->identity()) {}

    std::string identity() const override { return id_; }

    std::vector<Rect> segment(const Image& img) const override {
        const auto key = ScoreCache::make_key("segment", id_, image_digest(img), img.bounds(), "");
        const json j = cached(*cache_, key, [&] {
            json arr = json::array();
            for (const auto& b : inner_->segment(img)) arr.push_back(rect_json(b));
            return arr;
        });
        std::vector<Rect> out;
        for (const auto& b : j) out.push_back(rect_from(b));
        return out;
    }

private:
    std::shared_ptr<const Segmenter> inner_;
    std::shared_ptr<ScoreCache> cache_;
    std::string id_;
};

class CachingVqaModel : public VqaModel {
public:
    CachingVqaModel(std::shared_ptr<const VqaModel> inner, std::shared_ptr<ScoreCache> cache)
        : inner_(std::move(inner)), cache_(std::move(cache)), id_(inner_->identity()) {}

    std::string identity() const override { return id_; }

    VqaAnswer answer(std::span<const ImageRegion> images, std::string_view question) const override {
        if (images.empty()) {
            throw BackendError("VQA model needs at least one image");
        }
        // The first region fills the digest/rect slots; the rest join the text part.
        std::string extra(question);
        for (std::size_t i = 1; i < images.size(); ++i) {
            const Rect& r = images[i].rect;
            extra += "|" + image_digest(*images[i].image) + "@" + std::to_string(r.x0) + "," +
                     std::to_string(r.y0) + "," + std::to_string(r.x1) + "," + std::to_string(r.y1);
        }
        const auto key = ScoreCache::make_key("vqa", id_, image_digest(*images[0].image), images[0].rect, extra);
        const json j = cached(*cache_, key, [&] {
            const VqaAnswer a = inner_->answer(images, question);
            return json{{"answer", a.text}, {"answer_score", a.score ? json(*a.score) : json(nullptr)}};
        });
        VqaAnswer out{j["answer"].get<std::string>(), std::nullopt};
        if (!j["answer_score"].is_null()) out.score = j["answer_score"].get<double>();
        return out;
    }

private:
    std::shared_ptr<const VqaModel> inner_;
    std::shared_ptr<ScoreCache> cache_;
    std::string id_;
};

class CachingSaliency : public SaliencySource {
public:
    CachingSaliency(std::shared_ptr<const SaliencySource> inner, std::shared_ptr<ScoreCache> cache)
        : inner_(std::move(inner)), cache_(std::move(cache)), id_(inner_->identity()) {}

    std::string identity() const override { return id_; }

    PatchMap saliency(const Image& img, std::string_view question) const override {
        const auto key = ScoreCache::make_key("saliency", id_, image_digest(img), img.bounds(), question);
        const json j = cached(*cache_, key, [&] {
            const PatchMap pm = inner_->saliency(img, question);
            return json{{"rows", pm.rows()},
                        {"cols", pm.cols()},
                        {"values", std::vector<double>(pm.values().begin(), pm.values().end())}};
        });
        return PatchMap(j["rows"].get<int>(), j["cols"].get<int>(), j["values"].get<std::vector<double>>());
    }

private:
    std::shared_ptr<const SaliencySource> inner_;
    std::shared_ptr<ScoreCache> cache_;
    std::string id_;
};

}  // namespace

BackendSet with_cache(const BackendSet& backends, std::shared_ptr<ScoreCache> cache) {
    BackendSet out;
    if (backends.scorer) out.scorer = std::make_shared<CachingScorer>(backends.scorer, cache);
    if (backends.detector) out.detector = std::make_shared<CachingDetector>(backends.detector, cache);
    if (backends.segmenter) out.segmenter = std::make_shared<CachingSegmenter>(backends.segmenter, cache);
    if (backends.vqa) out.vqa = std::make_shared<CachingVqaModel>(backends.vqa, cache);
    if (backends.saliency) out.saliency = std::make_shared<CachingSaliency>(backends.saliency, cache);
    return out;
}

}  // namespace cropvqa
