#pragma once

// A surrogate stands in for the unknown joint distribution over test results
// and diagnosis: it simulates outcomes of unobserved tests and estimates the
// disease probability for a given evidence set. Implementations live in
// scripted_surrogate.hpp, synthetic_world.hpp and remote_surrogate.hpp.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "diagbed/dataset.hpp"

namespace diagbed {

/// What a surrogate is told about the patient at query time. Remote models
/// read the rendered vignette; scripted tables key on the patient id and the
/// evidence; synthetic worlds condition on the evidence directly.
struct SurrogateContext {
    const DatasetSchema* schema = nullptr;
    std::string patient_id;
    std::string disease;
    Evidence known;
    std::string vignette;

    static SurrogateContext make(const DatasetSchema& schema, std::string patient_id, Evidence known,
                                 std::string disease = {}) {
        SurrogateContext ctx;
        ctx.schema = &schema;
        ctx.patient_id = std::move(patient_id);
        ctx.disease = disease.empty() ? schema.disease_name : std::move(disease);
        ctx.known = std::move(known);
        ctx.vignette = render_vignette(ctx.known, schema);
        return ctx;
    }

    /// The same context with one more (possibly hypothetical) observation.
    SurrogateContext extended(const std::string& feature, const FeatureValue& value) const {
        Evidence next = known;
        next.insert_or_assign(feature, value);
        return make(*schema, patient_id, std::move(next), disease);
    }
};

struct OutcomeSample {
    std::string feature;
    FeatureValue value;
    std::string raw_response;
    // Probability mass of this outcome when the surrogate enumerates the
    // outcome space exactly; 1 for ordinary Monte Carlo draws.
    double weight = 1.0;
};

enum class SurrogateKind { Scripted, Synthetic, Remote };

struct SurrogateConfig {
    SurrogateKind kind = SurrogateKind::Scripted;
    std::string endpoint_url;
    std::string model_name;
    double temperature = 1.0;
    int max_retries = 3;
    std::chrono::milliseconds timeout{60'000};
    std::chrono::milliseconds initial_backoff{500};
    int max_in_flight = 8;
    std::size_t samples_per_query = 10;
    std::string api_key_env = "SURROGATE_API_KEY";
    // Scripted: path to the table file. Synthetic: path to the world JSON.
    std::string table_path;
    // Synthetic only: enumerate outcomes with exact weights instead of sampling.
    bool exact = false;

    void validate() const {
        if (temperature < 0.0) throw Error(ErrorKind::InvalidArgument, "temperature must be >= 0", "temperature");
        if (samples_per_query < 1) throw Error(ErrorKind::InvalidArgument, "M must be >= 1", "samples_per_query");
        if (max_retries < 0) throw Error(ErrorKind::InvalidArgument, "max_retries must be >= 0", "max_retries");
        if (max_in_flight < 1) throw Error(ErrorKind::InvalidArgument, "max_in_flight must be >= 1", "max_in_flight");
        if (kind == SurrogateKind::Remote && endpoint_url.empty()) {
            throw Error(ErrorKind::InvalidArgument, "remote surrogate needs an endpoint", "endpoint_url");
        }
    }
};

inline SurrogateConfig parse_surrogate_config(const nlohmann::json& j) {
    SurrogateConfig c;
    const auto kind = j.value("kind", std::string{"scripted"});
    if (kind == "scripted") {
        c.kind = SurrogateKind::Scripted;
    } else if (kind == "synthetic") {
        c.kind = SurrogateKind::Synthetic;
    } else if (kind == "remote") {
        c.kind = SurrogateKind::Remote;
    } else {
        throw Error(ErrorKind::InvalidArgument, "unknown surrogate kind " + kind, "kind");
    }
    c.endpoint_url = j.value("endpoint_url", std::string{});
    c.model_name = j.value("model_name", std::string{});
    c.temperature = j.value("temperature", 1.0);
    c.max_retries = j.value("max_retries", 3);
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", 60'000));
    c.initial_backoff = std::chrono::milliseconds(j.value("initial_backoff_ms", 500));
    c.max_in_flight = j.value("max_in_flight", 8);
    c.samples_per_query = j.value("samples_per_query", std::size_t{10});
    c.api_key_env = j.value("api_key_env", std::string{"SURROGATE_API_KEY"});
    c.table_path = j.value("table", std::string{});
    c.exact = j.value("exact", false);
    c.validate();
    return c;
}

/// Per-kind query tallies. Monotone, exact, safe under concurrent use.
class QueryCounter {
public:
    QueryCounter() = default;
    QueryCounter(const QueryCounter& other) : risk_(other.risk()), sample_(other.sample()), selection_(other.selection()) {}
    QueryCounter& operator=(const QueryCounter& other) {
        risk_ = other.risk();
        sample_ = other.sample();
        selection_ = other.selection();
        return *this;
    }

    void add_risk(std::uint64_t n = 1) { risk_ += n; }
    void add_sample(std::uint64_t n = 1) { sample_ += n; }
    void add_selection(std::uint64_t n = 1) { selection_ += n; }

    std::uint64_t risk() const { return risk_.load(); }
    std::uint64_t sample() const { return sample_.load(); }
    std::uint64_t selection() const { return selection_.load(); }
    std::uint64_t total() const { return risk() + sample() + selection(); }

private:
    std::atomic<std::uint64_t> risk_{0};
    std::atomic<std::uint64_t> sample_{0};
    std::atomic<std::uint64_t> selection_{0};
};

class Surrogate {
public:
    virtual ~Surrogate() = default;

    /// m simulated outcomes of `feature` given the context. Deterministic in `seed`
    /// for the scripted and synthetic implementations.
    virtual std::vector<OutcomeSample> sample_outcomes(const SurrogateContext& ctx, const std::string& feature,
                                                       std::size_t m, std::uint64_t seed) = 0;

    /// One disease-probability estimate. `index` distinguishes repeated draws
    /// for the same context within a step.
    virtual double estimate_risk(const SurrogateContext& ctx, std::uint64_t seed, std::size_t index) = 0;

    /// Direct choice of the next test (implicit baseline).
    virtual std::string implicit_select(const SurrogateContext& ctx, const std::vector<std::string>& unknown,
                                        std::uint64_t seed) = 0;

    /// Experiment-level fixed test subset, chosen before any patient is seen.
    virtual std::vector<std::string> global_select(const DatasetSchema& schema,
                                                   const std::vector<std::string>& all_features,
                                                   std::size_t n) = 0;

    const QueryCounter& counter() const { return counter_; }

protected:
    QueryCounter counter_;
};

namespace detail {

inline void require_unobserved(const SurrogateContext& ctx, const std::string& feature) {
    if (ctx.known.count(feature)) {
        throw Error(ErrorKind::InvalidArgument, "feature " + feature + " is already observed", feature);
    }
}

}  // namespace detail

}  // namespace diagbed
