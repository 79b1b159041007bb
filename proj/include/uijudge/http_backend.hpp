#pragma once
#include "uijudge/gateway.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <memory>
#include <string>

// Chat-completions-style HTTP transport. Vision requests ride the same
// endpoint with the screenshot inlined as a base64 data URI.

namespace uijudge {

namespace detail {

inline std::string base64_encode(std::string_view bytes) {
    static constexpr char table[] =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                           (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                           static_cast<unsigned char>(bytes[i + 2]);
        out.push_back(table[(v >> 18) & 63]);
        out.push_back(table[(v >> 12) & 63]);
        out.push_back(table[(v >> 6) & 63]);
        out.push_back(table[v & 63]);
    }
    if (i < bytes.size()) {
        unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
        if (i + 1 < bytes.size()) v |= static_cast<unsigned char>(bytes[i + 1]) << 8;
        out.push_back(table[(v >> 18) & 63]);
        out.push_back(table[(v >> 12) & 63]);
        out.push_back(i + 1 < bytes.size() ? table[(v >> 6) & 63] : '=');
        out.push_back('=');
    }
    return out;
}

struct EndpointParts {
    std::string base;       // scheme://host[:port]
    std::string path_prefix; // e.g. "/v1"
};

inline EndpointParts split_endpoint(const std::string& endpoint) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos)
        throw Error("endpoint must include a scheme: " + endpoint);
    const auto path_start = endpoint.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {endpoint, ""};
    std::string prefix = endpoint.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {endpoint.substr(0, path_start), prefix};
}

} // namespace detail

class HttpBackend final : public Backend {
public:
    BackendResponse complete_once(const BackendConfig& cfg, const ChatRequest& req) override {
        nlohmann::json body;
        body["model"] = cfg.model;
        body["temperature"] = req.temperature;
        body["max_tokens"] = req.max_output_tokens;
        body["messages"] = nlohmann::json::array({
            {{"role", "system"}, {"content", req.system_prompt}},
            {{"role", "user"}, {"content", req.user_content}},
        });
        return post(cfg, body);
    }

    BackendResponse caption_once(const BackendConfig& cfg, const VisionRequest& req) override {
        const std::string data_uri = "data:" + std::string(image_mime(req.media_type)) +
                                     ";base64," + detail::base64_encode(req.image_bytes);
        nlohmann::json body;
        body["model"] = cfg.model;
        body["messages"] = nlohmann::json::array({
            {{"role", "system"}, {"content", req.system_prompt}},
            {{"role", "user"},
             {"content", nlohmann::json::array({
                             {{"type", "image_url"}, {"image_url", {{"url", data_uri}}}},
                         })}},
        });
        return post(cfg, body);
    }

private:
    BackendResponse post(const BackendConfig& cfg, const nlohmann::json& body) {
        const auto parts = detail::split_endpoint(cfg.endpoint);
        httplib::Client client(parts.base);
        client.set_connection_timeout(15);
        client.set_read_timeout(180);

        httplib::Headers headers;
        if (!cfg.credential_env.empty()) {
            const char* key = std::getenv(cfg.credential_env.c_str());
            if (key == nullptr || *key == '\0')
                throw AuthError("credential env var " + cfg.credential_env + " is not set");
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }

        auto res = client.Post(parts.path_prefix + "/chat/completions", headers, body.dump(),
                               "application/json");
        if (!res)
            throw TransientBackendError("connection to " + parts.base + " failed: " +
                                        httplib::to_string(res.error()));
        if (res->status == 401 || res->status == 403)
            throw AuthError("provider returned HTTP " + std::to_string(res->status));
        if (res->status == 408 || res->status == 429 || res->status >= 500)
            throw TransientBackendError("provider returned HTTP " + std::to_string(res->status));
        if (res->status != 200)
            throw PermanentBackendError("provider returned HTTP " + std::to_string(res->status) +
                                        ": " + res->body.substr(0, 200));

        nlohmann::json doc = nlohmann::json::parse(res->body, nullptr, false);
        if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty() ||
            !doc["choices"][0].contains("message"))
            throw PermanentBackendError("malformed provider response: " + res->body.substr(0, 200));

        BackendResponse out;
        out.text = doc["choices"][0]["message"].value("content", "");
        if (doc.contains("usage")) {
            out.prompt_tokens = doc["usage"].value("prompt_tokens", 0L);
            out.completion_tokens = doc["usage"].value("completion_tokens", 0L);
        }
        return out;
    }
};

} // namespace uijudge
