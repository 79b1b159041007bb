#include "uijudge/http_backend.hpp"

#include "support/testutil.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

using namespace uijudge;
namespace tu = uijudge::testutil;

namespace {

// Fake chat-completions provider on a loopback port.
class FakeProvider {
public:
    FakeProvider() {
        server_.Post("/v1/chat/completions",
                     [this](const httplib::Request& req, httplib::Response& res) {
                         last_body = req.body;
                         last_auth = req.get_header_value("Authorization");
                         ++hits;
                         if (fail_with != 0) {
                             res.status = fail_with;
                             res.set_content("{}", "application/json");
                             return;
                         }
                         if (respond_garbage) {
                             res.set_content("not json", "application/json");
                             return;
                         }
                         nlohmann::json body;
                         body["choices"] = {{{"message", {{"content", reply}}}}};
                         body["usage"] = {{"prompt_tokens", 42}, {"completion_tokens", 13}};
                         res.set_content(body.dump(), "application/json");
                     });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeProvider() {
        server_.stop();
        thread_.join();
    }

    std::string endpoint() const {
        return "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    }

    std::string reply = "provider says hi";
    int fail_with = 0;
    bool respond_garbage = false;
    std::atomic<int> hits{0};
    std::string last_body;
    std::string last_auth;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

BackendConfig http_cfg(const FakeProvider& provider, int retries = 0) {
    BackendConfig cfg;
    cfg.provider = "openai";
    cfg.model = "gpt-test";
    cfg.endpoint = provider.endpoint();
    cfg.credential_env = "UIJUDGE_TEST_KEY";
    cfg.max_retries = retries;
    cfg.requests_per_minute = 100000;
    return cfg;
}

ChatRequest chat() {
    ChatRequest req;
    req.system_prompt = "be terse";
    req.user_content = "say hi";
    req.temperature = 0.2;
    req.max_output_tokens = 64;
    return req;
}

class HttpBackendTest : public ::testing::Test {
protected:
    void SetUp() override { setenv("UIJUDGE_TEST_KEY", "sk-test-123", 1); }
};

TEST_F(HttpBackendTest, CompletionParsesTextAndUsage) {
    FakeProvider provider;
    HttpBackend backend;
    const BackendResponse resp = backend.complete_once(http_cfg(provider), chat());
    EXPECT_EQ(resp.text, "provider says hi");
    EXPECT_EQ(resp.prompt_tokens, 42);
    EXPECT_EQ(resp.completion_tokens, 13);
    EXPECT_EQ(provider.last_auth, "Bearer sk-test-123");

    const nlohmann::json sent = nlohmann::json::parse(provider.last_body);
    EXPECT_EQ(sent["model"], "gpt-test");
    EXPECT_EQ(sent["messages"][0]["role"], "system");
    EXPECT_EQ(sent["messages"][1]["content"], "say hi");
    EXPECT_DOUBLE_EQ(sent["temperature"].get<double>(), 0.2);
}

TEST_F(HttpBackendTest, VisionRequestSendsDataUri) {
    FakeProvider provider;
    provider.reply = "a screenshot of the home page";
    HttpBackend backend;
    VisionRequest req{"describe the screen", tu::fake_png("shot"), ImageType::png};
    const BackendResponse resp = backend.caption_once(http_cfg(provider), req);
    EXPECT_EQ(resp.text, "a screenshot of the home page");

    const nlohmann::json sent = nlohmann::json::parse(provider.last_body);
    const std::string url = sent["messages"][1]["content"][0]["image_url"]["url"];
    EXPECT_EQ(url.rfind("data:image/png;base64,", 0), 0u);
}

TEST_F(HttpBackendTest, UnauthorizedBecomesAuthError) {
    FakeProvider provider;
    provider.fail_with = 401;
    HttpBackend backend;
    EXPECT_THROW(backend.complete_once(http_cfg(provider), chat()), AuthError);
}

TEST_F(HttpBackendTest, ServerErrorsAreTransientAndRetriedByGateway) {
    FakeProvider provider;
    provider.fail_with = 500;
    GatewayOptions opts;
    opts.backoff_base = std::chrono::milliseconds(0);
    ModelGateway gateway(opts);
    gateway.register_backend("openai", std::make_shared<HttpBackend>());

    EXPECT_THROW(gateway.complete(http_cfg(provider, 2), chat(), {"t", "reasoner"}),
                 ProviderError);
    EXPECT_EQ(provider.hits.load(), 3); // initial call plus two retries
}

TEST_F(HttpBackendTest, MalformedProviderJsonIsPermanent) {
    FakeProvider provider;
    provider.respond_garbage = true;
    HttpBackend backend;
    EXPECT_THROW(backend.complete_once(http_cfg(provider), chat()), PermanentBackendError);
}

TEST_F(HttpBackendTest, MissingCredentialIsAuthErrorBeforeAnyRequest) {
    FakeProvider provider;
    BackendConfig cfg = http_cfg(provider);
    cfg.credential_env = "UIJUDGE_TEST_KEY_DOES_NOT_EXIST";
    HttpBackend backend;
    EXPECT_THROW(backend.complete_once(cfg, chat()), AuthError);
    EXPECT_EQ(provider.hits.load(), 0);
}

TEST_F(HttpBackendTest, EndpointMustCarryScheme) {
    HttpBackend backend;
    BackendConfig cfg;
    cfg.provider = "openai";
    cfg.model = "m";
    cfg.endpoint = "api.example.com/v1";
    EXPECT_THROW(backend.complete_once(cfg, chat()), Error);
}

TEST(Base64, EncodesKnownVectors) {
    EXPECT_EQ(detail::base64_encode(""), "");
    EXPECT_EQ(detail::base64_encode("f"), "Zg==");
    EXPECT_EQ(detail::base64_encode("fo"), "Zm8=");
    EXPECT_EQ(detail::base64_encode("foo"), "Zm9v");
    EXPECT_EQ(detail::base64_encode("foobar"), "Zm9vYmFy");
}

} // namespace
