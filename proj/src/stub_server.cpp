#include "cropvqa/stub_server.hpp"

#include <httplib.h>

#include <atomic>
#include <map>
#include <mutex>
#include <thread>

#include "cropvqa/errors.hpp"

namespace cropvqa {

using nlohmann::json;

struct StubServer::Impl {
    BackendSet backends;
    ServerIdentity identity;
    httplib::Server server;
    std::thread thread;
    int port = 0;
    std::string host = "127.0.0.1";
    std::atomic<long long> delay_ms{0};
    mutable std::mutex mu;
    std::map<std::string, std::size_t> counts;

    void count(const std::string& route) {
        std::lock_guard lock(mu);
        ++counts[route];
    }

    void pause() const {
        if (const auto ms = delay_ms.load(); ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(ms));
        }
    }

    template <typename Handler>
    void route(const std::string& path, Handler handler) {
        server.Post(path, [this, path, handler](const httplib::Request& req, httplib::Response& res) {
            count(path);
            pause();
            json body;
            try {
                body = json::parse(req.body);
            } catch (const json::parse_error& e) {
                reply(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
                return;
            }
            try {
                reply(res, 200, handler(body));
            } catch (const NotConfigured& e) {
                reply(res, 501, {{"error", e.what()}});
            } catch (const BadRequest& e) {
                reply(res, 400, {{"error", e.what()}});
            } catch (const json::exception& e) {
                reply(res, 400, {{"error", e.what()}});
            } catch (const ProtocolError& e) {
                reply(res, 400, {{"error", e.what()}});
            } catch (const std::exception& e) {
                reply(res, 500, {{"error", e.what()}});
            }
        });
    }

    struct NotConfigured : std::runtime_error {
        using std::runtime_error::runtime_error;
    };
    struct BadRequest : std::runtime_error {
        using std::runtime_error::runtime_error;
    };

    static void reply(httplib::Response& res, int status, const json& j) {
        res.status = status;
        res.set_content(j.dump(), "application/json");
    }

    static const json& field(const json& body, const char* key) {
        if (!body.is_object() || !body.contains(key)) {
            throw BadRequest(std::string("missing field '") + key + "'");
        }
        return body.at(key);
    }

    static Image image_field(const json& body, const char* key) {
        const json& v = field(body, key);
        if (!v.is_string()) {
            throw BadRequest(std::string("field '") + key + "' must be a base64 string");
        }
        return decode_wire_image(v.get<std::string>());
    }

    template <typename T>
    static const T& need(const std::shared_ptr<const T>& p, const char* what) {
        if (!p) {
            throw NotConfigured(std::string(what) + " capability not configured");
        }
        return *p;
    }

    void install() {
        server.Get("/identity", [this](const httplib::Request&, httplib::Response& res) {
            count("/identity");
            reply(res, 200, {{"name", identity.name}, {"version", identity.version}});
        });
        route("/score", [this](const json& body) -> json {
            const auto& scorer = need(backends.scorer, "score");
            const Image img = image_field(body, "image");
            const std::string text = field(body, "text").get<std::string>();
            return {{"score", scorer.score(ImageRegion::whole(img), text)}};
        });
        route("/detect", [this](const json& body) -> json {
            const auto& det = need(backends.detector, "detect");
            const Image img = image_field(body, "image");
            const double conf = body.value("conf", 0.25);
            json arr = json::array();
            for (const auto& d : det.detect(img, conf)) {
                arr.push_back({{"box", {d.box.x0, d.box.y0, d.box.x1, d.box.y1}}, {"conf", d.confidence},
                               {"label", d.label}});
            }
            return {{"detections", arr}};
        });
        route("/segment", [this](const json& body) -> json {
            const auto& seg = need(backends.segmenter, "segment");
            const Image img = image_field(body, "image");
            json arr = json::array();
            for (const auto& b : seg.segment(img)) {
                arr.push_back({b.x0, b.y0, b.x1, b.y1});
            }
            return {{"boxes", arr}};
        });
        route("/vqa", [this](const json& body) -> json {
            const auto& vqa = need(backends.vqa, "vqa");
            const json& list = field(body, "images");
            if (!list.is_array() || list.empty()) {
                throw BadRequest("'images' must be a non-empty array");
            }
            std::vector<Image> images;
            for (const auto& b64 : list) {
                images.push_back(decode_wire_image(b64.get<std::string>()));
            }
            std::vector<ImageRegion> regions;
            for (const auto& img : images) {
                regions.push_back(ImageRegion::whole(img));
            }
            const auto a = vqa.answer(regions, field(body, "question").get<std::string>());
            return {{"answer", a.text}, {"answer_score", a.score ? json(*a.score) : json(nullptr)}};
        });
        route("/saliency", [this](const json& body) -> json {
            const auto& sal = need(backends.saliency, "saliency");
            const Image img = image_field(body, "image");
            const PatchMap pm = sal.saliency(img, field(body, "question").get<std::string>());
            return {{"rows", pm.rows()},
                    {"cols", pm.cols()},
                    {"values", std::vector<double>(pm.values().begin(), pm.values().end())}};
        });
    }
};

StubServer::StubServer(BackendSet backends, ServerIdentity identity) : impl_(std::make_unique<Impl>()) {
    impl_->backends = std::move(backends);
    impl_->identity = std::move(identity);
    impl_->install();
}

StubServer::~StubServer() {
    stop();
}

int StubServer::start(const std::string& host, int port) {
    impl_->host = host;
    impl_->port = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (impl_->port < 0) {
        throw Error("stub server cannot bind " + host + ":" + std::to_string(port));
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return impl_->port;
}

bool StubServer::listen(const std::string& host, int port) {
    impl_->host = host;
    impl_->port = port;
    return impl_->server.listen(host, port);
}

void StubServer::stop() {
    impl_->server.stop();
    if (impl_->thread.joinable()) {
        impl_->thread.join();
    }
}

std::string StubServer::url() const {
    return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

std::size_t StubServer::request_count(const std::string& route) const {
    std::lock_guard lock(impl_->mu);
    auto it = impl_->counts.find(route);
    return it == impl_->counts.end() ? 0 : it->second;
}

void StubServer::set_delay(std::chrono::milliseconds delay) {
    impl_->delay_ms = delay.count();
}

}  // namespace cropvqa
