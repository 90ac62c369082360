#pragma once

// JSON form of sessions and trajectories: the audit artifact shared by the
// harness and the service. Serialisation is deterministic (ordered keys,
// shortest round-trip doubles), so equal episodes give byte-identical text.

#include <string>
#include <vector>

#include <json.hpp>

#include "diagbed/engine.hpp"

namespace diagbed {

inline nlohmann::json value_to_json(const FeatureValue& v) {
    if (const auto* d = std::get_if<double>(&v)) return *d;
    return std::get<std::string>(v);
}

inline FeatureValue value_from_json(const nlohmann::json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    throw Error(ErrorKind::Validation, "feature value must be a number or a string");
}

inline nlohmann::json evidence_to_json(const Evidence& ev) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : ev) j[k] = value_to_json(v);
    return j;
}

inline Evidence evidence_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error(ErrorKind::Validation, "known features must be an object", "known");
    Evidence ev;
    for (const auto& [k, v] : j.items()) {
        try {
            ev.emplace(k, value_from_json(v));
        } catch (const Error&) {
            throw Error(ErrorKind::Validation, "feature " + k + " must be a number or a string", k);
        }
    }
    return ev;
}

template <typename T>
nlohmann::json optional_to_json(const std::optional<T>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json(const CandidateEvaluation& e) {
    nlohmann::json samples = nlohmann::json::array();
    nlohmann::json raws = nlohmann::json::array();
    nlohmann::json weights = nlohmann::json::array();
    for (const auto& s : e.outcome_samples) {
        samples.push_back(value_to_json(s.value));
        raws.push_back(s.raw_response);
        weights.push_back(s.weight);
    }
    nlohmann::json j{
        {"feature", e.feature},
        {"outcome_samples", samples},
        {"raw_responses", raws},
        {"posterior_draws", e.posterior_draws},
        {"expected_kl", e.expected_kl},
        {"entropy_eig", e.entropy_eig},
        {"utility", e.utility},
        {"failed", e.failed},
    };
    if (e.weighted()) j["weights"] = weights;
    if (!e.error.empty()) j["error"] = e.error;
    return j;
}

inline CandidateEvaluation evaluation_from_json(const nlohmann::json& j) {
    CandidateEvaluation e;
    e.feature = j.at("feature").get<std::string>();
    const auto& samples = j.at("outcome_samples");
    const auto raws = j.value("raw_responses", nlohmann::json::array());
    const auto weights = j.value("weights", nlohmann::json::array());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        OutcomeSample s;
        s.feature = e.feature;
        s.value = value_from_json(samples[i]);
        s.raw_response = i < raws.size() ? raws[i].get<std::string>() : std::string{};
        s.weight = i < weights.size() ? weights[i].get<double>() : 1.0;
        e.outcome_samples.push_back(std::move(s));
    }
    e.posterior_draws = j.at("posterior_draws").get<std::vector<double>>();
    e.expected_kl = j.at("expected_kl").get<double>();
    e.entropy_eig = j.at("entropy_eig").get<double>();
    e.utility = j.at("utility").get<double>();
    e.failed = j.value("failed", false);
    e.error = j.value("error", std::string{});
    return e;
}

inline nlohmann::json to_json(const TrajectoryStep& s) {
    nlohmann::json evals = nlohmann::json::array();
    for (const auto& e : s.evaluations) evals.push_back(to_json(e));
    return {
        {"step_index", s.step_index},
        {"evaluations", evals},
        {"chosen", optional_to_json(s.chosen)},
        {"chosen_by", s.chosen ? nlohmann::json(to_string(s.chosen_by)) : nlohmann::json(nullptr)},
        {"observed_value", s.observed_value ? value_to_json(*s.observed_value) : nlohmann::json(nullptr)},
        {"prior_before", optional_to_json(s.prior_before)},
        {"prior_after", optional_to_json(s.prior_after)},
        {"prior_draws", s.prior_draws},
        {"stop_threshold", s.stop_threshold},
        {"recommended", optional_to_json(s.recommended)},
    };
}

inline TrajectoryStep step_from_json(const nlohmann::json& j) {
    TrajectoryStep s;
    s.step_index = j.at("step_index").get<std::size_t>();
    for (const auto& e : j.at("evaluations")) s.evaluations.push_back(evaluation_from_json(e));
    if (!j.at("chosen").is_null()) s.chosen = j.at("chosen").get<std::string>();
    s.chosen_by = j.value("chosen_by", nlohmann::json(nullptr)) == "override" ? ChosenBy::Override : ChosenBy::Criterion;
    if (!j.at("observed_value").is_null()) s.observed_value = value_from_json(j.at("observed_value"));
    if (!j.at("prior_before").is_null()) s.prior_before = j.at("prior_before").get<double>();
    if (!j.at("prior_after").is_null()) s.prior_after = j.at("prior_after").get<double>();
    s.prior_draws = j.value("prior_draws", std::vector<double>{});
    s.stop_threshold = j.value("stop_threshold", 0.0);
    if (j.contains("recommended") && !j.at("recommended").is_null()) {
        s.recommended = j.at("recommended").get<std::string>();
    }
    return s;
}

inline nlohmann::json to_json(const SessionState& s) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& step : s.trajectory) steps.push_back(to_json(step));
    return {
        {"dataset", s.schema ? s.schema->name : std::string{}},
        {"patient_id", s.patient_id},
        {"disease", s.disease},
        {"known", s.known},
        {"values", evidence_to_json(s.values)},
        {"unknown", s.unknown},
        {"initial_known", s.initial_known},
        {"prior", s.prior ? nlohmann::json(s.prior->p()) : nlohmann::json(nullptr)},
        {"prior_draws", s.prior_draws},
        {"status", to_string(s.status)},
        {"queries_used", s.queries_used},
        {"seed", s.seed},
        {"trajectory", steps},
    };
}

inline SessionState session_from_json(const nlohmann::json& j, const DatasetSchema& schema) {
    SessionState s;
    s.schema = &schema;
    s.patient_id = j.at("patient_id").get<std::string>();
    s.disease = j.at("disease").get<std::string>();
    s.known = j.at("known").get<std::vector<std::string>>();
    s.values = evidence_from_json(j.at("values"));
    s.unknown = j.at("unknown").get<std::vector<std::string>>();
    s.initial_known = j.at("initial_known").get<std::size_t>();
    if (!j.at("prior").is_null()) s.prior = Belief(j.at("prior").get<double>());
    s.prior_draws = j.value("prior_draws", std::vector<double>{});
    s.status = parse_status(j.at("status").get<std::string>());
    s.queries_used = j.at("queries_used").get<std::uint64_t>();
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& step : j.at("trajectory")) s.trajectory.push_back(step_from_json(step));
    return s;
}

inline nlohmann::json to_json(const EpisodeResult& r) {
    auto j = to_json(r.session);
    j["method"] = r.method;
    j["label"] = r.label;
    j["final_risk"] = r.final_risk;
    j["predicted"] = r.predicted;
    j["failed"] = r.failed;
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

inline std::string serialize_episode(const EpisodeResult& r) { return to_json(r).dump(2) + "\n"; }

struct ReplayMismatch {
    std::size_t step = 0;
    std::string what;
};

struct ReplayReport {
    std::size_t steps_checked = 0;
    std::vector<ReplayMismatch> mismatches;
    bool ok() const { return mismatches.empty(); }
};

/// Recomputes every recorded step from its stored Monte Carlo draws: the
/// prior as the mean of the prior draws, each candidate's scores, the
/// stopping threshold, the stop decision and the recommended test. Values
/// must agree exactly; nothing is re-sampled.
inline ReplayReport replay_trajectory(const std::vector<TrajectoryStep>& steps, Criterion criterion,
                                      const StoppingPolicy& policy, const CostModel& costs = {}) {
    ReplayReport report;
    auto mismatch = [&](std::size_t step, std::string what) { report.mismatches.push_back({step, std::move(what)}); };
    for (const auto& step : steps) {
        if (step.evaluations.empty() || step.prior_draws.empty()) continue;
        ++report.steps_checked;
        double sum = 0.0;
        for (double d : step.prior_draws) sum += d;
        const Belief prior(sum / static_cast<double>(step.prior_draws.size()));
        if (!step.prior_before || *step.prior_before != prior.p()) mismatch(step.step_index, "prior");

        std::vector<CandidateEvaluation> evals = step.evaluations;
        for (auto& e : evals) {
            if (e.failed) continue;
            const auto recorded = e;
            score(e, prior, costs);
            if (e.expected_kl != recorded.expected_kl || e.entropy_eig != recorded.entropy_eig ||
                e.utility != recorded.utility) {
                mismatch(step.step_index, "scores of " + e.feature);
            }
        }
        if (stopping_threshold(prior, policy) != step.stop_threshold) mismatch(step.step_index, "threshold");
        const bool stop = check_stop(evals, prior, policy);
        if (!step.chosen && !stop) mismatch(step.step_index, "recorded stop not reproduced");
        const auto best = select_next(evals, criterion);
        if (step.recommended && *step.recommended != best) mismatch(step.step_index, "recommendation");
        if (step.chosen && step.chosen_by == ChosenBy::Criterion && *step.chosen != best) {
            mismatch(step.step_index, "choice");
        }
    }
    return report;
}

}  // namespace diagbed
