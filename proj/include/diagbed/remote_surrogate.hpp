#pragma once

// Surrogate backed by any JSON chat-completion endpoint:
//   request  {model, messages: [{role, content}...], temperature}
//   response {choices: [{message: {content}}]}
// The bearer token is read from the environment variable named in the config.
// Transport errors and unparseable replies are retried with exponential
// backoff; after the last attempt the typed error is raised, never a guess.

#include <atomic>
#include <cstdlib>
#include <future>
#include <semaphore>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "diagbed/prompts.hpp"
#include "diagbed/reply_parsing.hpp"
#include "diagbed/surrogate.hpp"

namespace diagbed {

struct Endpoint {
    std::string base;  // scheme://host[:port]
    std::string path;

    static Endpoint parse(const std::string& url) {
        const auto scheme_end = url.find("://");
        if (scheme_end == std::string::npos) throw Error(ErrorKind::InvalidArgument, "endpoint lacks a scheme: " + url);
        const auto path_start = url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) return {url, "/"};
        return {url.substr(0, path_start), url.substr(path_start)};
    }
};

/// One chat-completion exchange per call; no retry at this level.
class ChatClient {
public:
    explicit ChatClient(SurrogateConfig config) : config_(std::move(config)), endpoint_(Endpoint::parse(config_.endpoint_url)) {
        if (const char* key = std::getenv(config_.api_key_env.c_str())) api_key_ = key;
    }

    std::string complete(const std::string& system, const std::string& user) const {
        nlohmann::json body{
            {"model", config_.model_name},
            {"temperature", config_.temperature},
            {"messages", nlohmann::json::array({{{"role", "system"}, {"content", system}},
                                                {{"role", "user"}, {"content", user}}})},
        };
        httplib::Client client(endpoint_.base);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        auto res = client.Post(endpoint_.path, headers, body.dump(), "application/json");
        if (!res) throw Error(ErrorKind::Upstream, "transport failure: " + httplib::to_string(res.error()));
        if (res->status != 200) {
            throw Error(ErrorKind::Upstream, "endpoint returned HTTP " + std::to_string(res->status), {}, res->body);
        }
        try {
            const auto reply = nlohmann::json::parse(res->body);
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw Error(ErrorKind::Upstream, "malformed chat-completion response", {}, res->body);
        }
    }

private:
    SurrogateConfig config_;
    Endpoint endpoint_;
    std::string api_key_;
};

class RemoteSurrogate final : public Surrogate {
public:
    explicit RemoteSurrogate(SurrogateConfig config)
        : config_(std::move(config)), client_(config_), slots_(config_.max_in_flight) {
        config_.validate();
    }

    /// HTTP requests issued, retries included.
    std::uint64_t attempts() const { return attempts_.load(); }

    std::vector<OutcomeSample> sample_outcomes(const SurrogateContext& ctx, const std::string& feature, std::size_t m,
                                               std::uint64_t /*seed*/) override {
        detail::require_unobserved(ctx, feature);
        const auto& spec = ctx.schema->at(feature);
        const auto prompt = sampling_prompt(ctx, spec);
        counter_.add_sample(m);
        auto one = [&] {
            return ask(ctx.schema->prompts.system, prompt, "unparseable sample", [&](const std::string& raw) {
                FeatureValue value;
                if (spec.kind == FeatureKind::Numeric) {
                    value = parse_strict_float(raw);
                } else {
                    const std::string text(detail::strip_decoration(raw));
                    if (!spec.has_category(text)) throw Error(ErrorKind::Parse, "category not recognised", {}, raw);
                    value = text;
                }
                return OutcomeSample{feature, value, raw, 1.0};
            });
        };
        std::vector<std::future<OutcomeSample>> pending;
        for (std::size_t j = 0; j < m; ++j) pending.push_back(std::async(std::launch::async, one));
        std::vector<OutcomeSample> out;
        std::exception_ptr failure;
        for (auto& f : pending) {
            try {
                out.push_back(f.get());
            } catch (...) {
                if (!failure) failure = std::current_exception();
            }
        }
        // Partial batches are usable; only a batch with no valid draw fails.
        if (out.empty() && failure) std::rethrow_exception(failure);
        return out;
    }

    double estimate_risk(const SurrogateContext& ctx, std::uint64_t /*seed*/, std::size_t /*index*/) override {
        counter_.add_risk();
        return ask(ctx.schema->prompts.system, risk_prompt(ctx), "unparseable risk",
                   [](const std::string& raw) { return std::clamp(parse_strict_float(raw), 0.0, 1.0); });
    }

    std::string implicit_select(const SurrogateContext& ctx, const std::vector<std::string>& unknown,
                                std::uint64_t /*seed*/) override {
        if (unknown.empty()) throw Error(ErrorKind::InvalidArgument, "no candidate features");
        counter_.add_selection();
        return ask(ctx.schema->prompts.system, implicit_prompt(ctx, unknown), "invalid selection",
                   [&](const std::string& raw) { return match_feature(raw, unknown); });
    }

    std::vector<std::string> global_select(const DatasetSchema& schema, const std::vector<std::string>& all,
                                           std::size_t n) override {
        if (n > all.size()) throw Error(ErrorKind::InvalidArgument, "n exceeds the number of features");
        counter_.add_selection();
        return ask(schema.prompts.system, global_prompt(schema, all, n), "malformed feature list",
                   [&](const std::string& raw) { return parse_feature_list(raw, all, n); });
    }

private:
    template <typename Parse>
    auto ask(const std::string& system, const std::string& user, const std::string& failure, Parse parse)
        -> std::invoke_result_t<Parse&, const std::string&> {
        std::string last_raw;
        std::string last_error;
        bool transport_only = true;
        auto backoff = config_.initial_backoff;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(backoff);
                backoff *= 2;
            }
            ++attempts_;
            std::string raw;
            try {
                slots_.acquire();
                try {
                    raw = client_.complete(system, user);
                } catch (...) {
                    slots_.release();
                    throw;
                }
                slots_.release();
            } catch (const Error& e) {
                last_error = e.what();
                if (!e.raw().empty()) last_raw = e.raw();
                continue;
            }
            try {
                return parse(raw);
            } catch (const Error& e) {
                transport_only = false;
                last_raw = raw;
                last_error = e.what();
            }
        }
        if (transport_only) throw Error(ErrorKind::Upstream, "surrogate unavailable: " + last_error, {}, last_raw);
        throw Error(ErrorKind::Parse, failure, {}, last_raw);
    }

    SurrogateConfig config_;
    ChatClient client_;
    std::counting_semaphore<1024> slots_;
    std::atomic<std::uint64_t> attempts_{0};
};

}  // namespace diagbed
