#include "cropvqa/remote.hpp"

#include <httplib.h>

#include <cmath>

#include "cropvqa/digest.hpp"
#include "cropvqa/errors.hpp"
#include "cropvqa/image_io.hpp"

namespace cropvqa {

using nlohmann::json;

std::string encode_wire_image(const Image& img) {
    return base64_encode(encode_png(img));
}

Image decode_wire_image(const std::string& b64) {
    return decode_image(base64_decode(b64));
}

namespace {

httplib::Client make_client(const Endpoint& ep) {
    httplib::Client cli(ep.base_url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(ep.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(ep.timeout - secs);
    cli.set_connection_timeout(secs.count(), usecs.count());
    cli.set_read_timeout(secs.count(), usecs.count());
    cli.set_write_timeout(secs.count(), usecs.count());
    return cli;
}

[[noreturn]] void throw_transport(const Endpoint& ep, const std::string& path, httplib::Error err,
                                  std::chrono::steady_clock::duration elapsed) {
    const std::string what = ep.base_url + path + ": " + httplib::to_string(err);
    // httplib reports an expired read timeout as a plain Read error.
    if (err == httplib::Error::ConnectionTimeout || elapsed >= ep.timeout) {
        throw TimeoutError(what + " (timeout)");
    }
    throw TransportError(what);
}

template <typename Send>
json exchange(const Endpoint& ep, const std::string& path, Send&& send) {
    for (int attempt = 0;; ++attempt) {
        auto cli = make_client(ep);
        const auto start = std::chrono::steady_clock::now();
        httplib::Result res = send(cli);
        if (!res) {
            if (attempt < ep.retries) {
                continue;
            }
            throw_transport(ep, path, res.error(), std::chrono::steady_clock::now() - start);
        }
        if (res->status < 200 || res->status >= 300) {
            throw BackendError(ep.base_url + path + " returned HTTP " + std::to_string(res->status) + ": " +
                               res->body.substr(0, 200));
        }
        try {
            return json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw ProtocolError(ep.base_url + path + " returned non-JSON body: " + e.what());
        }
    }
}

const json& require(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) {
        throw ProtocolError(std::string("response lacks field '") + key + "'");
    }
    return j.at(key);
}

double require_finite(const json& j, const char* what) {
    if (!j.is_number()) {
        throw ProtocolError(std::string(what) + " is not a number");
    }
    const double v = j.get<double>();
    if (!std::isfinite(v)) {
        throw ProtocolError(std::string(what) + " is not finite");
    }
    return v;
}

}  // namespace

json post_json(const Endpoint& ep, const std::string& path, const json& body) {
    const std::string payload = body.dump();
    return exchange(ep, path, [&](httplib::Client& cli) { return cli.Post(path, payload, "application/json"); });
}

json get_json(const Endpoint& ep, const std::string& path) {
    return exchange(ep, path, [&](httplib::Client& cli) { return cli.Get(path); });
}

Rect parse_wire_box(const json& j) {
    if (!j.is_array() || j.size() != 4) {
        throw ProtocolError("box must be [x0,y0,x1,y1]");
    }
    for (const auto& v : j) {
        if (!v.is_number_integer()) {
            throw ProtocolError("box coordinates must be integers");
        }
    }
    Rect r{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
    if (!r.valid()) {
        throw ProtocolError("degenerate or negative box " + to_string(r));
    }
    return r;
}

double parse_score_response(const json& j) {
    return require_finite(require(j, "score"), "score");
}

std::vector<Detection> parse_detect_response(const json& j) {
    const json& arr = require(j, "detections");
    if (!arr.is_array()) {
        throw ProtocolError("'detections' is not an array");
    }
    std::vector<Detection> out;
    for (const auto& d : arr) {
        Detection det;
        det.box = parse_wire_box(require(d, "box"));
        det.confidence = require_finite(require(d, "conf"), "conf");
        if (d.contains("label")) {
            if (!d["label"].is_string()) {
                throw ProtocolError("'label' is not a string");
            }
            det.label = d["label"].get<std::string>();
        }
        out.push_back(std::move(det));
    }
    return out;
}

std::vector<Rect> parse_segment_response(const json& j) {
    const json& arr = require(j, "boxes");
    if (!arr.is_array()) {
        throw ProtocolError("'boxes' is not an array");
    }
    std::vector<Rect> out;
    for (const auto& b : arr) {
        out.push_back(parse_wire_box(b));
    }
    return out;
}

VqaAnswer parse_vqa_response(const json& j) {
    const json& a = require(j, "answer");
    if (!a.is_string()) {
        throw ProtocolError("'answer' is not a string");
    }
    VqaAnswer out{a.get<std::string>(), std::nullopt};
    if (j.contains("answer_score") && !j["answer_score"].is_null()) {
        out.score = require_finite(j["answer_score"], "answer_score");
    }
    return out;
}

PatchMap parse_saliency_response(const json& j) {
    const json& rows = require(j, "rows");
    const json& cols = require(j, "cols");
    const json& values = require(j, "values");
    if (!rows.is_number_integer() || !cols.is_number_integer() || !values.is_array()) {
        throw ProtocolError("saliency response has wrong field types");
    }
    std::vector<double> v;
    v.reserve(values.size());
    for (const auto& x : values) {
        v.push_back(require_finite(x, "saliency value"));
    }
    try {
        return PatchMap(rows.get<int>(), cols.get<int>(), std::move(v));
    } catch (const BoundsError& e) {
        throw ProtocolError(std::string("invalid patch map: ") + e.what());
    }
}

ServerIdentity remote_identity(const Endpoint& ep) {
    const json j = get_json(ep, "/identity");
    const json& name = require(j, "name");
    const json& version = require(j, "version");
    if (!name.is_string() || !version.is_string()) {
        throw ProtocolError("identity fields must be strings");
    }
    return {name.get<std::string>(), version.get<std::string>()};
}

double remote_score(const Endpoint& ep, const Image& img, const std::string& text) {
    return parse_score_response(post_json(ep, "/score", {{"image", encode_wire_image(img)}, {"text", text}}));
}

std::vector<Detection> remote_detect(const Endpoint& ep, const Image& img, double confidence_threshold) {
    auto dets = parse_detect_response(
        post_json(ep, "/detect", {{"image", encode_wire_image(img)}, {"conf", confidence_threshold}}));
    check_detection_contract(dets, img, confidence_threshold);
    return dets;
}

std::vector<Rect> remote_segment(const Endpoint& ep, const Image& img) {
    auto boxes = parse_segment_response(post_json(ep, "/segment", {{"image", encode_wire_image(img)}}));
    check_segment_contract(boxes, img);
    return boxes;
}

VqaAnswer remote_vqa(const Endpoint& ep, std::span<const Image> images, const std::string& question) {
    if (images.empty()) {
        throw BackendError("VQA request needs at least one image");
    }
    json arr = json::array();
    for (const auto& img : images) {
        arr.push_back(encode_wire_image(img));
    }
    return parse_vqa_response(post_json(ep, "/vqa", {{"images", std::move(arr)}, {"question", question}}));
}

PatchMap remote_saliency(const Endpoint& ep, const Image& img, const std::string& question) {
    return parse_saliency_response(
        post_json(ep, "/saliency", {{"image", encode_wire_image(img)}, {"question", question}}));
}

std::string RemoteBackendBase::remote_identity_tag() const {
    std::lock_guard lock(mu_);
    if (!identity_) {
        const auto id = remote_identity(ep_);
        identity_ = capability_ + ":" + id.name + "@" + id.version;
    }
    return *identity_;
}

double RemoteScorer::score(const ImageRegion& region, std::string_view text) const {
    return remote_score(endpoint(), region.materialize(), std::string(text));
}

std::vector<Detection> RemoteDetector::detect(const Image& img, double confidence_threshold) const {
    return remote_detect(endpoint(), img, confidence_threshold);
}

std::vector<Rect> RemoteSegmenter::segment(const Image& img) const {
    return remote_segment(endpoint(), img);
}

VqaAnswer RemoteVqaModel::answer(std::span<const ImageRegion> images, std::string_view question) const {
    std::vector<Image> crops;
    crops.reserve(images.size());
    for (const auto& region : images) {
        crops.push_back(region.materialize());
    }
    return remote_vqa(endpoint(), crops, std::string(question));
}

PatchMap RemoteSaliency::saliency(const Image& img, std::string_view question) const {
    return remote_saliency(endpoint(), img, std::string(question));
}

}  // namespace cropvqa
