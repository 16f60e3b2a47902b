#pragma once

// HTTP/JSON client for an external model server.
//
//   POST /score    {"image": b64png, "text": s}          -> {"score": f}
//   POST /detect   {"image": b64png, "conf": f}          -> {"detections": [{"box": [x0,y0,x1,y1], "conf": f, "label": s}]}
//   POST /segment  {"image": b64png}                     -> {"boxes": [[x0,y0,x1,y1], ...]}
//   POST /vqa      {"images": [b64png, ...], "question": s} -> {"answer": s, "answer_score": f|null}
//   POST /saliency {"image": b64png, "question": s}      -> {"rows": r, "cols": c, "values": [f, ...]}
//   GET  /identity                                       -> {"name": s, "version": s}

#include <chrono>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "cropvqa/backends.hpp"

namespace cropvqa {

struct Endpoint {
    std::string base_url;  // e.g. "http://127.0.0.1:8080"
    std::chrono::milliseconds timeout{60'000};
    int retries = 1;  // extra attempts after a transport error
};

/// Image payload as sent on the wire: base64 of a PNG.
std::string encode_wire_image(const Image& img);
Image decode_wire_image(const std::string& b64);

/// One request/response exchange. Throws TransportError/TimeoutError when no
/// response arrived (after retries), BackendError on non-2xx status and
/// ProtocolError when the body is not JSON.
nlohmann::json post_json(const Endpoint& ep, const std::string& path, const nlohmann::json& body);
nlohmann::json get_json(const Endpoint& ep, const std::string& path);

struct ServerIdentity {
    std::string name;
    std::string version;
};

ServerIdentity remote_identity(const Endpoint& ep);
double remote_score(const Endpoint& ep, const Image& img, const std::string& text);
std::vector<Detection> remote_detect(const Endpoint& ep, const Image& img, double confidence_threshold);
std::vector<Rect> remote_segment(const Endpoint& ep, const Image& img);
VqaAnswer remote_vqa(const Endpoint& ep, std::span<const Image> images, const std::string& question);
PatchMap remote_saliency(const Endpoint& ep, const Image& img, const std::string& question);

// Response parsers, shared with the conformance suite. Throw ProtocolError.
double parse_score_response(const nlohmann::json& j);
std::vector<Detection> parse_detect_response(const nlohmann::json& j);
std::vector<Rect> parse_segment_response(const nlohmann::json& j);
VqaAnswer parse_vqa_response(const nlohmann::json& j);
PatchMap parse_saliency_response(const nlohmann::json& j);
Rect parse_wire_box(const nlohmann::json& j);

/// Identity is fetched from /identity on first use and then reused.
class RemoteBackendBase {
public:
    RemoteBackendBase(Endpoint ep, std::string capability) : ep_(std::move(ep)), capability_(std::move(capability)) {}
    const Endpoint& endpoint() const { return ep_; }
    std::string remote_identity_tag() const;

private:
    Endpoint ep_;
    std::string capability_;
    mutable std::mutex mu_;
    mutable std::optional<std::string> identity_;
};

class RemoteScorer : public RelevanceScorer, private RemoteBackendBase {
public:
    explicit RemoteScorer(Endpoint ep) : RemoteBackendBase(std::move(ep), "score") {}
    std::string identity() const override { return remote_identity_tag(); }
    double score(const ImageRegion& region, std::string_view text) const override;
};

class RemoteDetector : public Detector, private RemoteBackendBase {
public:
    explicit RemoteDetector(Endpoint ep) : RemoteBackendBase(std::move(ep), "detect") {}
    std::string identity() const override { return remote_identity_tag(); }
    std::vector<Detection> detect(const Image& img, double confidence_threshold) const override;
};

class RemoteSegmenter : public Segmenter, private RemoteBackendBase {
public:
    explicit RemoteSegmenter(Endpoint ep) : RemoteBackendBase(std::move(ep), "segment") {}
    std::string identity() const override { return remote_identity_tag(); }
    std::vector<Rect> segment(const Image& img) const override;
};

class RemoteVqaModel : public VqaModel, private RemoteBackendBase {
public:
    explicit RemoteVqaModel(Endpoint ep) : RemoteBackendBase(std::move(ep), "vqa") {}
    std::string identity() const override { return remote_identity_tag(); }
    VqaAnswer answer(std::span<const ImageRegion> images, std::string_view question) const override;
};

class RemoteSaliency : public SaliencySource, private RemoteBackendBase {
public:
    explicit RemoteSaliency(Endpoint ep) : RemoteBackendBase(std::move(ep), "saliency") {}
    std::string identity() const override { return remote_identity_tag(); }
    PatchMap saliency(const Image& img, std::string_view question) const override;
};

}  // namespace cropvqa
