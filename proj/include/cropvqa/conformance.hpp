#pragma once

#include <string>
#include <vector>

#include "cropvqa/remote.hpp"

namespace cropvqa {

struct ConformanceCheck {
    enum class Status { pass, fail, skipped };

    std::string name;
    Status status = Status::fail;
    std::string detail;
};

const char* to_string(ConformanceCheck::Status s);

/// Probes every route of a model server against the wire contract. Routes
/// answering 501 are reported as skipped.
std::vector<ConformanceCheck> run_conformance(const Endpoint& ep);

}  // namespace cropvqa
