#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rimlab/pipeline.hpp"

namespace httplib {
class Server;
}

namespace rimlab::service {

struct Reply {
    int status = 200;
    nlohmann::json body;
};

/// Read-only lesion store plus stateless segmentation handlers for the /v1 API.
/// Handlers never throw; every failure becomes a structured 4xx reply.
class Service {
public:
    Service(std::vector<pipeline::LesionData> lesions, seg::LevelSetParams defaults);

    /// Loads every lesion named by the manifest up front.
    [[nodiscard]] static Service from_manifest(const std::filesystem::path& manifest_path,
                                               const seg::LevelSetParams& defaults);

    [[nodiscard]] Reply health() const;
    [[nodiscard]] Reply lesions() const;
    [[nodiscard]] Reply lesion(const std::string& id) const;
    [[nodiscard]] Reply segment(std::string_view request_body) const;

    [[nodiscard]] std::size_t size() const noexcept { return lesions_.size(); }

    /// Registers the /v1 routes on `server`. The service must outlive the server.
    void mount(httplib::Server& server) const;

private:
    std::vector<pipeline::LesionData> lesions_;
    std::map<std::string, std::size_t> index_;
    seg::LevelSetParams defaults_;
};

/// Binds and serves until the process is stopped.
int serve(const Service& service, const pipeline::ServiceConfig& config);

} // namespace rimlab::service
