#pragma once
#include "uijudge/clock.hpp"
#include "uijudge/digest.hpp"
#include "uijudge/errors.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

// Uniform access to text-completion and vision-captioning backends.
// The gateway owns the cross-cutting concerns (retries, token-bucket rate
// limiting per provider, transcript logging, caption caching); transports
// only implement a single attempt.

namespace uijudge {

struct ChatRequest {
    std::string system_prompt;
    std::string user_content;
    double temperature = 0.0;
    int max_output_tokens = 4096;
};

enum class ImageType { png, jpeg, webp };

inline std::string_view image_mime(ImageType t) {
    switch (t) {
        case ImageType::png: return "image/png";
        case ImageType::jpeg: return "image/jpeg";
        case ImageType::webp: return "image/webp";
    }
    return "application/octet-stream";
}

// Recognizes the supported formats from their leading magic bytes.
inline std::optional<ImageType> detect_image_type(std::string_view bytes) {
    static constexpr std::string_view png_magic = "\x89PNG\r\n\x1a\n";
    if (bytes.size() >= 8 && bytes.substr(0, 8) == png_magic) return ImageType::png;
    if (bytes.size() >= 3 && bytes.substr(0, 3) == "\xff\xd8\xff") return ImageType::jpeg;
    if (bytes.size() >= 12 && bytes.substr(0, 4) == "RIFF" && bytes.substr(8, 4) == "WEBP")
        return ImageType::webp;
    return std::nullopt;
}

struct VisionRequest {
    std::string system_prompt;
    std::string image_bytes;
    ImageType media_type = ImageType::png;
};

struct BackendConfig {
    std::string provider;          // registry key, e.g. "scripted" or "openai"
    std::string model;
    std::string endpoint;          // base URL, or script path for "scripted"
    std::string credential_env;    // name of the env var holding the key
    int max_retries = 2;
    int requests_per_minute = 60;
};

struct UsageStats {
    long prompt_tokens = 0;
    long completion_tokens = 0;
    int attempts = 1;
};

struct CompletionResult {
    std::string text;
    UsageStats usage;
};

struct CallContext {
    std::string task_id;
    std::string stage; // "decomposer" | "reasoner" | "capturer"
};

class ProviderError : public Error {
public:
    explicit ProviderError(const std::string& what) : Error("provider error: " + what) {}
};

class AuthError : public Error {
public:
    explicit AuthError(const std::string& what) : Error("auth error: " + what) {}
};

class BudgetExceeded : public Error {
public:
    explicit BudgetExceeded(const std::string& what) : Error("budget exceeded: " + what) {}
};

// Thrown by transports for failures worth retrying (timeouts, 429, 5xx).
class TransientBackendError : public Error {
public:
    explicit TransientBackendError(const std::string& what) : Error(what) {}
};

// Thrown by transports for failures that retrying cannot fix.
class PermanentBackendError : public Error {
public:
    explicit PermanentBackendError(const std::string& what) : Error(what) {}
};

inline std::string chat_prompt_digest(const ChatRequest& req) {
    return sha256_hex(req.system_prompt + "\x1f" + req.user_content);
}

inline std::string vision_prompt_digest(const VisionRequest& req, const std::string& image_digest) {
    return sha256_hex(req.system_prompt + "\x1f" + image_digest);
}

struct TranscriptRecord {
    std::int64_t timestamp_ns = 0;
    std::string task_id;
    std::string stage;
    std::string kind; // "chat" | "vision"
    std::string prompt_digest;
    std::string image_digest; // vision only
    std::string response;
};

inline nlohmann::json transcript_record_to_json(const TranscriptRecord& r) {
    nlohmann::json j;
    j["timestamp_ns"] = r.timestamp_ns;
    j["task_id"] = r.task_id;
    j["stage"] = r.stage;
    j["kind"] = r.kind;
    j["prompt_digest"] = r.prompt_digest;
    if (!r.image_digest.empty()) j["image_digest"] = r.image_digest;
    j["response"] = r.response;
    return j;
}

inline TranscriptRecord transcript_record_from_json(const nlohmann::json& j) {
    TranscriptRecord r;
    r.timestamp_ns = j.value("timestamp_ns", std::int64_t{0});
    r.task_id = j.value("task_id", "");
    r.stage = j.value("stage", "");
    r.kind = j.value("kind", "");
    r.prompt_digest = j.value("prompt_digest", "");
    r.image_digest = j.value("image_digest", "");
    r.response = j.value("response", "");
    return r;
}

// Append-only log of every backend call, kept in memory and optionally
// mirrored to a JSONL file. Feeding the records back into a scripted
// backend replays a run bit-for-bit.
class TranscriptLog {
public:
    TranscriptLog() = default;

    void attach_file(const std::filesystem::path& path, bool truncate = false) {
        std::lock_guard lock(mu_);
        std::filesystem::create_directories(path.parent_path());
        file_.emplace(path, truncate ? std::ios::trunc : std::ios::app);
        if (!*file_) throw Error("cannot open transcript file " + path.string());
    }

    void append(TranscriptRecord record) {
        std::lock_guard lock(mu_);
        if (file_) {
            *file_ << transcript_record_to_json(record).dump() << '\n';
            file_->flush();
        }
        records_.push_back(std::move(record));
    }

    std::vector<TranscriptRecord> records() const {
        std::lock_guard lock(mu_);
        return records_;
    }

    std::size_t count(std::string_view kind) const {
        std::lock_guard lock(mu_);
        std::size_t n = 0;
        for (const auto& r : records_)
            if (r.kind == kind) ++n;
        return n;
    }

    static std::vector<TranscriptRecord> read_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw Error("cannot read transcript file " + path.string());
        std::vector<TranscriptRecord> out;
        std::string line;
        while (std::getline(in, line)) {
            if (trimmed_empty(line)) continue;
            out.push_back(transcript_record_from_json(nlohmann::json::parse(line)));
        }
        return out;
    }

private:
    static bool trimmed_empty(const std::string& s) {
        return s.find_first_not_of(" \t\r\n") == std::string::npos;
    }

    mutable std::mutex mu_;
    std::vector<TranscriptRecord> records_;
    mutable std::optional<std::ofstream> file_;
};

// Caption store keyed by (model, image digest). Re-captioning dominates
// evaluation cost, so hits must bypass the backend entirely.
class CaptionCache {
public:
    virtual ~CaptionCache() = default;
    virtual std::optional<std::string> get(const std::string& model, const std::string& digest) = 0;
    virtual void put(const std::string& model, const std::string& digest,
                     const std::string& caption) = 0;
};

class MemoryCaptionCache final : public CaptionCache {
public:
    std::optional<std::string> get(const std::string& model, const std::string& digest) override {
        std::lock_guard lock(mu_);
        auto it = entries_.find(key(model, digest));
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }
    void put(const std::string& model, const std::string& digest,
             const std::string& caption) override {
        std::lock_guard lock(mu_);
        entries_[key(model, digest)] = caption;
    }

private:
    static std::string key(const std::string& model, const std::string& digest) {
        return model + "\x1f" + digest;
    }
    std::mutex mu_;
    std::map<std::string, std::string> entries_;
};

struct BackendResponse {
    std::string text;
    long prompt_tokens = 0;
    long completion_tokens = 0;
};

// One transport attempt; the gateway drives retries around these.
class Backend {
public:
    virtual ~Backend() = default;
    virtual BackendResponse complete_once(const BackendConfig& cfg, const ChatRequest& req) = 0;
    virtual BackendResponse caption_once(const BackendConfig& cfg, const VisionRequest& req) = 0;
};

// Deterministic offline backend. Responses come from an ordered queue
// and/or keyed maps (chat keyed by prompt digest, captions by image
// digest). strict=false falls back to echoing the request.
class ScriptedBackend final : public Backend {
public:
    explicit ScriptedBackend(bool strict = true) : strict_(strict) {}

    void queue_completion(std::string text) {
        std::lock_guard lock(mu_);
        queue_.push_back(std::move(text));
    }
    void key_completion(std::string prompt_digest, std::string text) {
        std::lock_guard lock(mu_);
        keyed_[std::move(prompt_digest)] = std::move(text);
    }
    void key_caption(std::string image_digest, std::string caption) {
        std::lock_guard lock(mu_);
        captions_[std::move(image_digest)] = std::move(caption);
    }

    BackendResponse complete_once(const BackendConfig&, const ChatRequest& req) override {
        std::lock_guard lock(mu_);
        ++completion_calls_;
        auto it = keyed_.find(chat_prompt_digest(req));
        if (it != keyed_.end()) return {it->second};
        if (!queue_.empty()) {
            std::string text = std::move(queue_.front());
            queue_.pop_front();
            return {std::move(text)};
        }
        if (strict_)
            throw PermanentBackendError("scripted backend has no response for this request");
        return {req.user_content};
    }

    BackendResponse caption_once(const BackendConfig&, const VisionRequest& req) override {
        std::lock_guard lock(mu_);
        ++caption_calls_;
        const std::string digest = sha256_hex(req.image_bytes);
        auto it = captions_.find(digest);
        if (it != captions_.end()) return {it->second};
        if (!queue_.empty()) {
            std::string text = std::move(queue_.front());
            queue_.pop_front();
            return {std::move(text)};
        }
        if (strict_)
            throw PermanentBackendError("scripted backend has no caption for image " + digest);
        return {"image " + digest};
    }

    int completion_calls() const {
        std::lock_guard lock(mu_);
        return completion_calls_;
    }
    int caption_calls() const {
        std::lock_guard lock(mu_);
        return caption_calls_;
    }

    // Script file shape:
    // {"strict": true, "completions": [...],
    //  "keyed_completions": {digest: text}, "captions": {digest: caption}}
    static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw Error("cannot read scripted backend file " + path.string());
        nlohmann::json doc = nlohmann::json::parse(in);
        auto backend = std::make_shared<ScriptedBackend>(doc.value("strict", true));
        if (doc.contains("completions"))
            for (const auto& item : doc["completions"])
                backend->queue_completion(item.get<std::string>());
        if (doc.contains("keyed_completions"))
            for (const auto& [digest, text] : doc["keyed_completions"].items())
                backend->key_completion(digest, text.get<std::string>());
        if (doc.contains("captions"))
            for (const auto& [digest, caption] : doc["captions"].items())
                backend->key_caption(digest, caption.get<std::string>());
        return backend;
    }

    // Replays a recorded run: chat responses keyed by prompt digest,
    // captions keyed by image digest.
    static std::shared_ptr<ScriptedBackend> from_transcript(
        const std::vector<TranscriptRecord>& records) {
        auto backend = std::make_shared<ScriptedBackend>(true);
        for (const auto& r : records) {
            if (r.kind == "vision")
                backend->key_caption(r.image_digest, r.response);
            else
                backend->key_completion(r.prompt_digest, r.response);
        }
        return backend;
    }

private:
    mutable std::mutex mu_;
    bool strict_;
    std::deque<std::string> queue_;
    std::map<std::string, std::string> keyed_;
    std::map<std::string, std::string> captions_;
    int completion_calls_ = 0;
    int caption_calls_ = 0;
};

// Fixed-window token bucket: `capacity` requests per minute, replenished
// in whole-window batches so a burst can never exceed the per-minute
// budget inside one window.
class TokenBucket {
public:
    TokenBucket(int capacity, Clock::time_point start)
        : capacity_(capacity), tokens_(capacity), window_start_(start) {}

    // Blocks (via the clock) until a token is available. Fails instead of
    // waiting past `max_wait`.
    void acquire(Clock& clock, Clock::duration max_wait) {
        const auto deadline = clock.now() + max_wait;
        while (true) {
            Clock::time_point next_window;
            {
                std::lock_guard lock(mu_);
                refill(clock.now());
                if (tokens_ > 0) {
                    --tokens_;
                    return;
                }
                next_window = window_start_ + window;
            }
            if (next_window > deadline)
                throw BudgetExceeded("request budget exhausted; next window at +" +
                                     std::to_string(std::chrono::duration_cast<std::chrono::seconds>(
                                                        next_window.time_since_epoch())
                                                        .count()) +
                                     "s exceeds the wait cap");
            clock.sleep_until(next_window);
        }
    }

    static constexpr std::chrono::seconds window{60};

private:
    void refill(Clock::time_point now) {
        while (now >= window_start_ + window) {
            window_start_ += window;
            tokens_ = capacity_;
        }
    }

    std::mutex mu_;
    int capacity_;
    int tokens_;
    Clock::time_point window_start_;
};

struct GatewayOptions {
    std::shared_ptr<Clock> clock = std::make_shared<SystemClock>();
    std::shared_ptr<TranscriptLog> transcript = std::make_shared<TranscriptLog>();
    std::shared_ptr<CaptionCache> caption_cache = std::make_shared<MemoryCaptionCache>();
    std::chrono::milliseconds backoff_base{500};
    std::chrono::seconds max_budget_wait{600};
};

class ModelGateway {
public:
    ModelGateway() : ModelGateway(GatewayOptions{}) {}
    explicit ModelGateway(GatewayOptions opts) : opts_(std::move(opts)) {}

    void register_backend(const std::string& provider, std::shared_ptr<Backend> backend) {
        std::lock_guard lock(mu_);
        backends_[provider] = std::move(backend);
    }

    CompletionResult complete(const BackendConfig& cfg, const ChatRequest& req,
                              const CallContext& ctx) {
        if (req.system_prompt.empty() || req.user_content.empty())
            throw Error("chat request prompts must be non-empty");
        if (req.temperature < 0.0 || req.temperature > 1.0)
            throw Error("temperature must be within [0, 1]");
        if (req.max_output_tokens <= 0) throw Error("max_output_tokens must be positive");
        UsageStats usage;
        std::string text = call_with_retries(
            cfg, usage, [&](Backend& b) { return b.complete_once(cfg, req); });
        log(ctx, "chat", chat_prompt_digest(req), "", text);
        return {std::move(text), usage};
    }

    std::string caption(const BackendConfig& cfg, const VisionRequest& req,
                        const CallContext& ctx) {
        if (req.image_bytes.empty()) throw Error("vision request image must be non-empty");
        const std::string image_digest = sha256_hex(req.image_bytes);
        if (auto hit = opts_.caption_cache->get(cfg.model, image_digest)) return *hit;

        UsageStats usage;
        std::string text = call_with_retries(
            cfg, usage, [&](Backend& b) { return b.caption_once(cfg, req); });
        log(ctx, "vision", vision_prompt_digest(req, image_digest), image_digest, text);
        opts_.caption_cache->put(cfg.model, image_digest, text);
        return text;
    }

    std::shared_ptr<TranscriptLog> transcript() const { return opts_.transcript; }
    std::shared_ptr<CaptionCache> caption_cache() const { return opts_.caption_cache; }
    Clock& clock() const { return *opts_.clock; }

private:
    std::shared_ptr<Backend> backend_for(const BackendConfig& cfg) {
        std::lock_guard lock(mu_);
        auto it = backends_.find(cfg.provider);
        if (it == backends_.end())
            throw ProviderError("no backend registered for provider `" + cfg.provider + "`");
        return it->second;
    }

    TokenBucket& limiter_for(const BackendConfig& cfg) {
        std::lock_guard lock(mu_);
        auto it = limiters_.find(cfg.provider);
        if (it == limiters_.end()) {
            if (cfg.requests_per_minute < 1)
                throw Error("requests_per_minute must be >= 1");
            it = limiters_
                     .emplace(cfg.provider, std::make_unique<TokenBucket>(
                                                cfg.requests_per_minute, opts_.clock->now()))
                     .first;
        }
        return *it->second;
    }

    template <typename Fn>
    std::string call_with_retries(const BackendConfig& cfg, UsageStats& usage, Fn&& attempt) {
        if (cfg.max_retries < 0) throw Error("max_retries must be >= 0");
        auto backend = backend_for(cfg);
        std::string last_error;
        for (int i = 0; i <= cfg.max_retries; ++i) {
            usage.attempts = i + 1;
            limiter_for(cfg).acquire(*opts_.clock, opts_.max_budget_wait);
            try {
                BackendResponse resp = attempt(*backend);
                usage.prompt_tokens = resp.prompt_tokens;
                usage.completion_tokens = resp.completion_tokens;
                return std::move(resp.text);
            } catch (const TransientBackendError& e) {
                last_error = e.what();
                if (i < cfg.max_retries)
                    opts_.clock->sleep_for(opts_.backoff_base * (1 << i));
            } catch (const PermanentBackendError& e) {
                throw ProviderError(e.what());
            }
        }
        throw ProviderError("retries exhausted after " + std::to_string(cfg.max_retries + 1) +
                            " attempts: " + last_error);
    }

    void log(const CallContext& ctx, std::string kind, std::string prompt_digest,
             std::string image_digest, const std::string& response) {
        TranscriptRecord r;
        r.timestamp_ns = Clock::to_ns(opts_.clock->now());
        r.task_id = ctx.task_id;
        r.stage = ctx.stage;
        r.kind = std::move(kind);
        r.prompt_digest = std::move(prompt_digest);
        r.image_digest = std::move(image_digest);
        r.response = response;
        opts_.transcript->append(std::move(r));
    }

    GatewayOptions opts_;
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<Backend>> backends_;
    std::map<std::string, std::unique_ptr<TokenBucket>> limiters_;
};

} // namespace uijudge
