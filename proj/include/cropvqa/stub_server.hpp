#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "cropvqa/backends.hpp"
#include "cropvqa/remote.hpp"

namespace cropvqa {

/**
 * Serves an in-process BackendSet over the model-server wire protocol.
 *
 * Used by tests (counting requests, injecting latency) and by the CLI's
 * stub-server command. Capabilities missing from the set answer 501;
 * malformed payloads answer 400.
 */
class StubServer {
public:
    explicit StubServer(BackendSet backends, ServerIdentity identity = {"cropvqa-stub", "1"});
    ~StubServer();
    StubServer(const StubServer&) = delete;
    StubServer& operator=(const StubServer&) = delete;

    /// Binds (port 0 picks a free port) and serves on a background thread.
    int start(const std::string& host = "127.0.0.1", int port = 0);
    /// Binds and blocks until stop() is called from elsewhere.
    bool listen(const std::string& host, int port);
    void stop();

    std::string url() const;
    std::size_t request_count(const std::string& route) const;
    void set_delay(std::chrono::milliseconds delay);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace cropvqa
