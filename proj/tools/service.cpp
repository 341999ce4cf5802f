#include "service.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "rimlab/error.hpp"
#include "rimlab/rvol.hpp"
#include "rimlab/version.hpp"

namespace rimlab::service {
namespace {

using nlohmann::json;

struct Diagnostic {
    std::string field;
    std::string message;
};

Reply error_reply(int status, std::string code, std::string message) {
    return {status, {{"error", std::move(code)}, {"message", std::move(message)}}};
}

Reply invalid(const std::vector<Diagnostic>& diagnostics) {
    json details = json::array();
    for (const auto& d : diagnostics) details.push_back({{"field", d.field}, {"message", d.message}});
    return {422, {{"error", "invalid_request"}, {"message", "request failed validation"}, {"details", details}}};
}

json dims_json(const Dims& d) { return json::array({d.nx, d.ny, d.nz}); }

json spacing_json(const Spacing& s) { return json::array({s.sx, s.sy, s.sz}); }

std::string encode_payload(const Volume3D& v) { return base64::encode(rvol::encode(v)); }

std::string encode_payload(const Mask3D& m) { return base64::encode(rvol::encode(m)); }

// Leading word of a validation message names the offending parameter.
std::string field_of(const std::string& message) {
    const auto space = message.find(' ');
    return space == std::string::npos ? std::string("params") : message.substr(0, space);
}

template <typename Decode>
auto decode_field(const json& request, const char* field, Decode decode, std::vector<Diagnostic>& diagnostics)
    -> std::optional<decltype(decode(std::span<const std::uint8_t>{}))> {
    const auto& value = request.at(field);
    if (!value.is_string()) {
        diagnostics.push_back({field, "must be a base64 string"});
        return std::nullopt;
    }
    try {
        const auto bytes = base64::decode(value.get<std::string>());
        return decode(bytes);
    } catch (const Error& e) {
        diagnostics.push_back({field, e.what()});
        return std::nullopt;
    }
}

} // namespace

Service::Service(std::vector<pipeline::LesionData> lesions, seg::LevelSetParams defaults)
    : lesions_(std::move(lesions)), defaults_(defaults) {
    defaults_.validate();
    defaults_.record_energy = false;
    for (std::size_t i = 0; i < lesions_.size(); ++i) {
        if (!index_.emplace(lesions_[i].entry.id, i).second) {
            throw InvalidArgument(fmt::format("duplicate lesion id {}", lesions_[i].entry.id));
        }
    }
}

Service Service::from_manifest(const std::filesystem::path& manifest_path, const seg::LevelSetParams& defaults) {
    const auto manifest = sim::load_manifest(manifest_path);
    std::vector<pipeline::LesionData> lesions;
    lesions.reserve(manifest.entries.size());
    for (const auto& entry : manifest.entries) lesions.push_back(pipeline::load_lesion(manifest, entry));
    return Service(std::move(lesions), defaults);
}

Reply Service::health() const { return {200, {{"status", "ok"}, {"version", kVersion}}}; }

Reply Service::lesions() const {
    json list = json::array();
    for (const auto& l : lesions_) {
        list.push_back({{"id", l.entry.id},
                        {"label", sim::to_string(l.entry.label)},
                        {"has_ground_truth", l.rim.has_value()},
                        {"dims", dims_json(l.mask.dims())}});
    }
    return {200, list};
}

Reply Service::lesion(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) {
        Reply r = error_reply(404, "not_found", fmt::format("unknown lesion id '{}'", id));
        r.body["id"] = id;
        return r;
    }
    const auto& l = lesions_[it->second];
    return {200,
            {{"id", l.entry.id},
             {"label", sim::to_string(l.entry.label)},
             {"has_ground_truth", l.rim.has_value()},
             {"dims", dims_json(l.mask.dims())},
             {"spacing", spacing_json(l.mask.spacing())},
             {"volume", encode_payload(l.volume)},
             {"mask", encode_payload(l.mask)},
             {"rim", l.rim ? json(encode_payload(*l.rim)) : json(nullptr)}}};
}

Reply Service::segment(std::string_view request_body) const {
    json request;
    try {
        request = json::parse(request_body);
    } catch (const json::exception& e) {
        return error_reply(400, "bad_json", e.what());
    }
    if (!request.is_object()) return error_reply(400, "bad_json", "request body must be a JSON object");

    std::vector<Diagnostic> diagnostics;
    static const std::vector<std::string> known{"id", "volume", "mask", "rim", "w", "params"};
    for (const auto& item : request.items()) {
        if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
            diagnostics.push_back({item.key(), "unknown field"});
        }
    }

    seg::LevelSetParams params = defaults_;
    if (request.contains("params")) {
        const auto& overrides = request.at("params");
        if (!overrides.is_object()) {
            diagnostics.push_back({"params", "must be an object"});
        } else {
            for (const auto& item : overrides.items()) {
                try {
                    params = pipeline::levelset_from_json(json{{item.key(), item.value()}}, params);
                } catch (const InvalidArgument&) {
                    diagnostics.push_back({"params." + item.key(), "unknown parameter or wrong type"});
                }
            }
        }
    }
    if (request.contains("w")) {
        const auto& w = request.at("w");
        if (!w.is_number()) {
            diagnostics.push_back({"w", "must be a number"});
        } else {
            params.w = w.get<double>();
        }
    }
    try {
        params.validate();
    } catch (const InvalidArgument& e) {
        const auto field = field_of(e.what());
        diagnostics.push_back({field == "w" ? field : "params." + field, e.what()});
    }

    const bool by_id = request.contains("id");
    const bool inline_patch = request.contains("volume") || request.contains("mask");
    if (by_id == inline_patch) {
        diagnostics.push_back({"id", "give either a lesion id or inline volume and mask payloads"});
        return invalid(diagnostics);
    }

    const Volume3D* volume = nullptr;
    const Mask3D* mask = nullptr;
    const Mask3D* truth = nullptr;
    std::optional<Volume3D> inline_volume;
    std::optional<Mask3D> inline_mask;
    std::optional<Mask3D> inline_rim;
    std::optional<std::string> id;

    if (by_id) {
        if (!request.at("id").is_string()) {
            diagnostics.push_back({"id", "must be a string"});
            return invalid(diagnostics);
        }
        id = request.at("id").get<std::string>();
        if (!request.contains("rim") && diagnostics.empty()) {
            const auto it = index_.find(*id);
            if (it == index_.end()) {
                Reply r = error_reply(404, "not_found", fmt::format("unknown lesion id '{}'", *id));
                r.body["id"] = *id;
                return r;
            }
            const auto& l = lesions_[it->second];
            volume = &l.volume;
            mask = &l.mask;
            truth = l.rim ? &*l.rim : nullptr;
        } else if (request.contains("rim")) {
            diagnostics.push_back({"rim", "ground truth can only accompany an inline patch"});
        }
    } else {
        if (!request.contains("volume")) diagnostics.push_back({"volume", "required with an inline patch"});
        if (!request.contains("mask")) diagnostics.push_back({"mask", "required with an inline patch"});
        if (request.contains("volume")) {
            inline_volume = decode_field(request, "volume", rvol::decode_volume, diagnostics);
        }
        if (request.contains("mask")) inline_mask = decode_field(request, "mask", rvol::decode_mask, diagnostics);
        if (request.contains("rim")) inline_rim = decode_field(request, "rim", rvol::decode_mask, diagnostics);
        if (inline_volume && inline_mask && inline_volume->geometry() != inline_mask->geometry()) {
            diagnostics.push_back({"mask", "geometry differs from the volume"});
        }
        if (inline_rim && inline_mask && inline_rim->geometry() != inline_mask->geometry()) {
            diagnostics.push_back({"rim", "geometry differs from the mask"});
        }
        if (inline_volume) volume = &*inline_volume;
        if (inline_mask) mask = &*inline_mask;
        if (inline_rim) truth = &*inline_rim;
    }
    if (!diagnostics.empty()) return invalid(diagnostics);

    pipeline::SegmentOutcome outcome;
    try {
        outcome = pipeline::segment_lesion(*volume, *mask, params, truth);
    } catch (const Error& e) {
        return error_reply(422, "segmentation_failed", e.what());
    }
    const auto& r = outcome.result;
    json body{{"id", id ? json(*id) : json(nullptr)},
              {"w", params.w},
              {"dims", dims_json(mask->dims())},
              {"spacing", spacing_json(mask->spacing())},
              {"high_mask", encode_payload(r.high_mask)},
              {"low_mask", encode_payload(r.low_mask)},
              {"c1", r.c1},
              {"c2", r.c2},
              {"c1_ppb", r.c1_ppb},
              {"c2_ppb", r.c2_ppb},
              {"iterations", r.iterations},
              {"converged", r.converged},
              {"degenerate", r.degenerate},
              {"dice", outcome.dice ? json(*outcome.dice) : json(nullptr)},
              {"solver_ms", outcome.solver_ms}};
    return {200, std::move(body)};
}

void Service::mount(httplib::Server& server) const {
    auto send = [](httplib::Response& res, const Reply& reply) {
        res.status = reply.status;
        res.set_content(reply.body.dump(), "application/json");
    };
    server.Get("/v1/health", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
    server.Get("/v1/lesions", [this, send](const httplib::Request&, httplib::Response& res) { send(res, lesions()); });
    server.Get(R"(/v1/lesions/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, lesion(req.matches[1].str()));
    });
    server.Post("/v1/segment", [this, send](const httplib::Request& req, httplib::Response& res) {
        send(res, segment(req.body));
    });
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty()) return;
        const json body{{"error", res.status == 404 ? "not_found" : "http_error"},
                        {"message", fmt::format("{} {}", req.method, req.path)}};
        res.set_content(body.dump(), "application/json");
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string message = "internal error";
        try {
            std::rethrow_exception(ep);
        } catch (const std::exception& e) {
            message = e.what();
        } catch (...) {
        }
        res.status = 500;
        res.set_content(json{{"error", "internal"}, {"message", message}}.dump(), "application/json");
    });
}

int serve(const Service& service, const pipeline::ServiceConfig& config) {
    httplib::Server server;
    const auto threads = static_cast<std::size_t>(std::max(1, config.threads));
    server.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    service.mount(server);
    if (!server.bind_to_port(config.host, config.port)) {
        throw IoError(fmt::format("cannot bind {}:{}", config.host, config.port));
    }
    fmt::print("serving {} lesions on http://{}:{}/v1\n", service.size(), config.host, config.port);
    std::fflush(stdout);
    return server.listen_after_bind() ? 0 : 1;
}

} // namespace rimlab::service
