// RemoteSurrogate against an in-process chat-completion stub.

#include <gtest/gtest.h>

#include <cstdlib>
#include <deque>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "cohorts.hpp"

using namespace diagbed;

namespace {

struct Reply {
    int status = 200;
    std::string content;
};

class ChatStub {
public:
    ChatStub() {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mutex_);
            requests_.push_back(nlohmann::json::parse(req.body));
            auth_.push_back(req.get_header_value("Authorization"));
            Reply r = fallback_;
            if (!script_.empty()) {
                r = script_.front();
                script_.pop_front();
            }
            res.status = r.status;
            if (r.status == 200) {
                nlohmann::json body{{"choices", {{{"message", {{"role", "assistant"}, {"content", r.content}}}}}}};
                res.set_content(body.dump(), "application/json");
            } else {
                res.set_content(r.content, "text/plain");
            }
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~ChatStub() {
        server_.stop();
        thread_.join();
    }

    void script(std::vector<Reply> replies, Reply fallback = {500, "script exhausted"}) {
        std::lock_guard lock(mutex_);
        script_.assign(replies.begin(), replies.end());
        fallback_ = std::move(fallback);
    }

    std::size_t calls() {
        std::lock_guard lock(mutex_);
        return requests_.size();
    }

    nlohmann::json request(std::size_t i) {
        std::lock_guard lock(mutex_);
        return requests_.at(i);
    }

    std::string auth(std::size_t i) {
        std::lock_guard lock(mutex_);
        return auth_.at(i);
    }

    SurrogateConfig config(int retries = 3) const {
        SurrogateConfig c;
        c.kind = SurrogateKind::Remote;
        c.endpoint_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
        c.model_name = "stub-model";
        c.temperature = 1.0;
        c.max_retries = retries;
        c.timeout = std::chrono::milliseconds(2000);
        c.initial_backoff = std::chrono::milliseconds(1);
        c.max_in_flight = 2;
        c.api_key_env = "DIAGBED_TEST_STUB_KEY";
        return c;
    }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::mutex mutex_;
    std::deque<Reply> script_;
    Reply fallback_{500, "script exhausted"};
    std::vector<nlohmann::json> requests_;
    std::vector<std::string> auth_;
};

DatasetSchema liver_schema() {
    return cohorts::make_schema("liver", {cohorts::numeric("age", true), cohorts::numeric("ALT"),
                                          cohorts::numeric("AST"), cohorts::numeric("GGT"),
                                          cohorts::binary("Ascites")});
}

}  // namespace

TEST(Remote, ParsesNumericSample) {
    ChatStub stub;
    stub.script({{200, "2.3\n"}});
    const auto schema = liver_schema();
    RemoteSurrogate sur(stub.config());
    const auto ctx = SurrogateContext::make(schema, "1", {{"age", 50.0}});
    const auto draws = sur.sample_outcomes(ctx, "ALT", 1, 0);
    ASSERT_EQ(draws.size(), 1u);
    EXPECT_EQ(draws[0].value, FeatureValue{2.3});
    EXPECT_EQ(draws[0].raw_response, "2.3\n");
    EXPECT_EQ(sur.counter().sample(), 1u);
}

TEST(Remote, CategoricalSampleMustBeDeclared) {
    ChatStub stub;
    stub.script({{200, "'pos'"}, {200, "positive"}, {200, "positive"}}, {200, "positive"});
    const auto schema = liver_schema();
    RemoteSurrogate sur(stub.config(1));
    const auto ctx = SurrogateContext::make(schema, "1", {{"age", 50.0}});
    EXPECT_EQ(sur.sample_outcomes(ctx, "Ascites", 1, 0)[0].value, FeatureValue{std::string("pos")});
    try {
        sur.sample_outcomes(ctx, "Ascites", 1, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Parse);
        EXPECT_EQ(e.raw(), "positive");
    }
}

TEST(Remote, RiskRequestShape) {
    ::setenv("DIAGBED_TEST_STUB_KEY", "sekret", 1);
    ChatStub stub;
    stub.script({{200, "0.73"}});
    const auto schema = liver_schema();
    RemoteSurrogate sur(stub.config());
    const auto ctx = SurrogateContext::make(schema, "1", {{"age", 50.0}});
    EXPECT_DOUBLE_EQ(sur.estimate_risk(ctx, 0, 0), 0.73);
    const auto req = stub.request(0);
    EXPECT_EQ(req["model"], "stub-model");
    EXPECT_EQ(req["temperature"], 1.0);
    ASSERT_EQ(req["messages"].size(), 2u);
    EXPECT_EQ(req["messages"][0]["role"], "system");
    EXPECT_EQ(req["messages"][1]["content"], risk_prompt(ctx));
    EXPECT_EQ(stub.auth(0), "Bearer sekret");
    ::unsetenv("DIAGBED_TEST_STUB_KEY");
}

TEST(Remote, RiskClampedToUnitInterval) {
    ChatStub stub;
    stub.script({{200, "1.4"}});
    const auto schema = liver_schema();
    RemoteSurrogate sur(stub.config());
    EXPECT_EQ(sur.estimate_risk(SurrogateContext::make(schema, "1", {{"age", 50.0}}), 0, 0), 1.0);
}

TEST(Remote, ImplicitAndGlobalSelection) {
    ChatStub stub;
    stub.script({{200, "AST"}, {200, "['GGT','ALT']"}});
    const auto schema = liver_schema();
    RemoteSurrogate sur(stub.config());
    const auto ctx = SurrogateContext::make(schema, "1", {{"age", 50.0}});
    EXPECT_EQ(sur.implicit_select(ctx, {"ALT", "AST", "GGT"}, 0), "AST");
    EXPECT_EQ(sur.global_select(schema, {"ALT", "AST", "GGT"}, 2), (std::vector<std::string>{"GGT", "ALT"}));
    EXPECT_EQ(sur.counter().selection(), 2u);
    EXPECT_NE(stub.request(0)["messages"][1]["content"].get<std::string>().find("['ALT', 'AST', 'GGT']"),
              std::string::npos);
}

TEST(Remote, RetriesUntilSuccessWithinBudget) {
    for (int failures = 0; failures <= 3; ++failures) {
        SCOPED_TRACE(failures);
        ChatStub stub;
        std::vector<Reply> replies;
        for (int k = 0; k < failures; ++k) replies.push_back(k % 2 ? Reply{200, "0.9 (high risk)"} : Reply{503, "busy"});
        replies.push_back({200, "0.25"});
        stub.script(replies);
        const auto schema = liver_schema();
        RemoteSurrogate sur(stub.config(3));
        EXPECT_DOUBLE_EQ(sur.estimate_risk(SurrogateContext::make(schema, "1", {{"age", 50.0}}), 0, 0), 0.25);
        EXPECT_EQ(sur.attempts(), static_cast<std::uint64_t>(failures + 1));
        EXPECT_EQ(sur.counter().risk(), 1u);
    }
}

TEST(Remote, AlwaysFailingTransportIsUpstreamError) {
    ChatStub stub;
    stub.script({}, {500, "down"});
    const auto schema = liver_schema();
    RemoteSurrogate sur(stub.config(2));
    try {
        sur.estimate_risk(SurrogateContext::make(schema, "1", {{"age", 50.0}}), 0, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Upstream);
    }
    EXPECT_EQ(stub.calls(), 3u);
}

TEST(Remote, AlwaysUnparseableIsParseErrorWithRaw) {
    ChatStub stub;
    stub.script({}, {200, "I think about 0.4"});
    const auto schema = liver_schema();
    RemoteSurrogate sur(stub.config(1));
    try {
        sur.estimate_risk(SurrogateContext::make(schema, "1", {{"age", 50.0}}), 0, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Parse);
        EXPECT_EQ(e.raw(), "I think about 0.4");
    }
    EXPECT_EQ(stub.calls(), 2u);
}

TEST(Remote, EmptyReplyIsRetried) {
    ChatStub stub;
    stub.script({{200, ""}}, {200, "0.5"});
    const auto schema = liver_schema();
    RemoteSurrogate sur(stub.config(2));
    EXPECT_DOUBLE_EQ(sur.estimate_risk(SurrogateContext::make(schema, "1", {{"age", 50.0}}), 0, 0), 0.5);
}

TEST(Remote, UnreachableEndpointIsUpstream) {
    SurrogateConfig c;
    c.kind = SurrogateKind::Remote;
    c.endpoint_url = "http://127.0.0.1:1/v1/chat/completions";
    c.max_retries = 1;
    c.timeout = std::chrono::milliseconds(300);
    c.initial_backoff = std::chrono::milliseconds(1);
    const auto schema = liver_schema();
    RemoteSurrogate sur(c);
    try {
        sur.estimate_risk(SurrogateContext::make(schema, "1", {{"age", 50.0}}), 0, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Upstream);
    }
}

TEST(Remote, PartialBatchKeepsValidDraws) {
    ChatStub stub;
    stub.script({{200, "10"}, {200, "11"}, {200, "12"}}, {200, "not a number"});
    const auto schema = liver_schema();
    RemoteSurrogate sur(stub.config(0));
    const auto draws = sur.sample_outcomes(SurrogateContext::make(schema, "1", {{"age", 50.0}}), "GGT", 5, 0);
    EXPECT_EQ(draws.size(), 3u);
    EXPECT_EQ(stub.calls(), 5u);
}

TEST(Remote, EndpointParsing) {
    const auto e = Endpoint::parse("https://api.example.org:8443/v1/chat/completions");
    EXPECT_EQ(e.base, "https://api.example.org:8443");
    EXPECT_EQ(e.path, "/v1/chat/completions");
    EXPECT_EQ(Endpoint::parse("http://h").path, "/");
    EXPECT_THROW(Endpoint::parse("localhost/v1"), Error);
}

TEST(Remote, EngineStepOverStub) {
    ChatStub stub;
    stub.script({}, {200, "0.5"});
    const auto schema = cohorts::make_schema("r", {cohorts::numeric("age", true), cohorts::numeric("x")});
    RemoteSurrogate sur(stub.config(0));
    auto s = SessionState::start(schema, "1", {{"age", 40.0}});
    const auto rec = recommend(s, sur, 3, Criterion::Kl, {});
    EXPECT_EQ(rec.prior.p(), 0.5);
    ASSERT_EQ(rec.evaluations.size(), 1u);
    EXPECT_EQ(rec.evaluations[0].posterior_draws.size(), 3u);
    EXPECT_EQ(stub.calls(), 3u + 3u + 3u);
    EXPECT_EQ(s.queries_used, 9u);
}
