#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>

#include <json.hpp>

#include "cropvqa/backends.hpp"

namespace cropvqa {

/**
 * Response cache for backend calls, keyed by backend identity, source image
 * digest, region and request text.
 *
 * Values are stored as the JSON the backend result serialises to, so a hit
 * reproduces the original response exactly. With a directory the cache is
 * persisted as an append-only cache.jsonl; the last entry for a key wins.
 * Safe for concurrent use.
 */
class ScoreCache {
public:
    ScoreCache() = default;
    explicit ScoreCache(const std::filesystem::path& dir);

    static std::string make_key(std::string_view kind, std::string_view backend_identity, std::string_view image_digest,
                                const Rect& region, std::string_view text);

    std::optional<nlohmann::json> get(const std::string& key) const;
    void put(const std::string& key, const nlohmann::json& value);

    std::size_t size() const;
    std::size_t hits() const { return hits_; }
    std::size_t misses() const { return misses_; }

private:
    mutable std::shared_mutex mu_;
    std::unordered_map<std::string, nlohmann::json> entries_;
    std::mutex file_mu_;
    std::ofstream log_;
    mutable std::atomic<std::size_t> hits_{0};
    mutable std::atomic<std::size_t> misses_{0};
};

/// Wraps every backend in the set with a cache-through decorator.
BackendSet with_cache(const BackendSet& backends, std::shared_ptr<ScoreCache> cache);

}  // namespace cropvqa
