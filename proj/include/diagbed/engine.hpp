#pragma once

// The sequential test-selection loop. One step: estimate the prior from the
// current evidence, simulate outcomes of every unobserved test, score each
// by expected KL (or entropy EIG) per unit cost, decide whether any test can
// still move the belief far enough, and pick the best one. Steps within an
// episode are sequential; candidates within a step are independent.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <future>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "diagbed/belief.hpp"
#include "diagbed/surrogate.hpp"

namespace diagbed {

enum class Criterion { Kl, Entropy };

enum class Method { Actmed, ActmedEntropy, Random, Global, Implicit, AllFeatures };

enum class SessionStatus { Active, StoppedByCriterion, BudgetExhausted, Diagnosed, Abandoned, Failed };

enum class ChosenBy { Criterion, Override };

inline const char* to_string(Criterion c) { return c == Criterion::Kl ? "kl" : "entropy"; }

inline const char* to_string(Method m) {
    switch (m) {
        case Method::Actmed: return "actmed";
        case Method::ActmedEntropy: return "actmed-entropy";
        case Method::Random: return "random";
        case Method::Global: return "global";
        case Method::Implicit: return "implicit";
        case Method::AllFeatures: return "all-features";
    }
    return "?";
}

inline Method parse_method(const std::string& text) {
    for (auto m : {Method::Actmed, Method::ActmedEntropy, Method::Random, Method::Global, Method::Implicit,
                   Method::AllFeatures}) {
        if (text == to_string(m)) return m;
    }
    throw Error(ErrorKind::InvalidArgument, "unknown method " + text, "method");
}

inline Criterion parse_criterion(const std::string& text) {
    if (text == "kl") return Criterion::Kl;
    if (text == "entropy") return Criterion::Entropy;
    throw Error(ErrorKind::InvalidArgument, "unknown criterion " + text, "criterion");
}

inline const char* to_string(SessionStatus s) {
    switch (s) {
        case SessionStatus::Active: return "active";
        case SessionStatus::StoppedByCriterion: return "stopped-by-criterion";
        case SessionStatus::BudgetExhausted: return "budget-exhausted";
        case SessionStatus::Diagnosed: return "diagnosed";
        case SessionStatus::Abandoned: return "abandoned";
        case SessionStatus::Failed: return "failed";
    }
    return "?";
}

inline SessionStatus parse_status(const std::string& text) {
    for (auto s : {SessionStatus::Active, SessionStatus::StoppedByCriterion, SessionStatus::BudgetExhausted,
                   SessionStatus::Diagnosed, SessionStatus::Abandoned, SessionStatus::Failed}) {
        if (text == to_string(s)) return s;
    }
    throw Error(ErrorKind::InvalidArgument, "unknown status " + text);
}

inline const char* to_string(ChosenBy c) { return c == ChosenBy::Criterion ? "criterion" : "override"; }

struct CandidateEvaluation {
    std::string feature;
    std::vector<OutcomeSample> outcome_samples;
    std::vector<double> posterior_draws;
    double expected_kl = 0.0;
    double entropy_eig = 0.0;
    double utility = 0.0;
    bool failed = false;
    std::string error;

    bool weighted() const {
        return std::any_of(outcome_samples.begin(), outcome_samples.end(),
                           [](const OutcomeSample& s) { return s.weight != 1.0; });
    }

    std::vector<double> weights() const {
        std::vector<double> w;
        for (const auto& s : outcome_samples) w.push_back(s.weight);
        return w;
    }
};

/// Scores a candidate from its draws. Used both live and when replaying a trajectory.
inline void score(CandidateEvaluation& eval, const Belief& prior, const CostModel& costs) {
    if (eval.weighted()) {
        const auto w = eval.weights();
        eval.expected_kl = expected_kl(eval.posterior_draws, w, prior);
        eval.entropy_eig = entropy_eig(prior, eval.posterior_draws, w);
    } else {
        eval.expected_kl = expected_kl(eval.posterior_draws, prior);
        eval.entropy_eig = entropy_eig(prior, eval.posterior_draws);
    }
    eval.utility = utility(eval.expected_kl, eval.feature, costs);
}

struct TrajectoryStep {
    std::size_t step_index = 0;
    std::vector<CandidateEvaluation> evaluations;
    std::optional<std::string> chosen;
    ChosenBy chosen_by = ChosenBy::Criterion;
    std::optional<FeatureValue> observed_value;
    std::optional<double> prior_before;
    std::optional<double> prior_after;
    std::vector<double> prior_draws;
    double stop_threshold = 0.0;
    std::optional<std::string> recommended;
};

struct SessionState {
    const DatasetSchema* schema = nullptr;
    std::string patient_id;
    std::string disease;
    std::vector<std::string> known;    // initial features in schema order, then acquisition order
    Evidence values;                   // observed value of every known feature
    std::vector<std::string> unknown;  // schema order
    std::size_t initial_known = 0;
    std::optional<Belief> prior;
    std::vector<double> prior_draws;
    std::vector<TrajectoryStep> trajectory;
    SessionStatus status = SessionStatus::Active;
    std::uint64_t queries_used = 0;
    std::uint64_t seed = 0;

    std::size_t acquisitions() const { return known.size() - initial_known; }

    SurrogateContext context() const { return SurrogateContext::make(*schema, patient_id, values, disease); }

    /// Fresh session: the given evidence is known, every other schema feature is unknown.
    static SessionState start(const DatasetSchema& schema, std::string patient_id, const Evidence& known,
                              std::string disease = {}, std::uint64_t seed = 0) {
        SessionState s;
        s.schema = &schema;
        s.patient_id = std::move(patient_id);
        s.disease = disease.empty() ? schema.disease_name : std::move(disease);
        s.seed = seed;
        for (const auto& f : schema.features) {
            const auto it = known.find(f.name);
            if (it == known.end()) {
                s.unknown.push_back(f.name);
            } else {
                s.known.push_back(f.name);
                s.values.emplace(f.name, validate_value(f, it->second));
            }
        }
        for (const auto& [name, value] : known) {
            if (!schema.find(name)) throw Error(ErrorKind::Validation, "unknown feature " + name, name);
        }
        s.initial_known = s.known.size();
        return s;
    }

    /// Session over a dataset record with the schema's start-known features revealed.
    static SessionState start(const DatasetSchema& schema, const PatientRecord& record, std::uint64_t seed = 0) {
        Evidence known;
        for (const auto& f : schema.features) {
            if (f.known_at_start) known.emplace(f.name, record.value(f.name));
        }
        return start(schema, record.id, known, record.disease, seed);
    }
};

/// Everything computed for one step before a test is chosen.
struct Recommendation {
    std::size_t step_index = 0;
    Belief prior;
    std::vector<double> prior_draws;
    std::vector<CandidateEvaluation> evaluations;
    double stop_threshold = 0.0;
    bool would_stop = false;
    std::optional<std::string> recommended;
};

namespace detail {

inline std::uint64_t step_seed(const SessionState& s) { return mix_seed(s.seed, s.trajectory.size()); }

}  // namespace detail

/// Mean of m risk estimates for the current evidence. The result is held fixed
/// for every candidate of the step. Backfills prior_after of the previous step.
inline Belief estimate_prior(SessionState& session, Surrogate& surrogate, std::size_t m, std::uint64_t seed) {
    if (m < 1) throw Error(ErrorKind::InvalidArgument, "m must be positive");
    const auto ctx = session.context();
    std::vector<double> draws;
    draws.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
        ++session.queries_used;
        draws.push_back(std::clamp(surrogate.estimate_risk(ctx, seed, j), 0.0, 1.0));
    }
    double sum = 0.0;
    for (double d : draws) sum += d;
    const Belief prior(sum / static_cast<double>(m));
    session.prior = prior;
    session.prior_draws = std::move(draws);
    if (!session.trajectory.empty() && session.trajectory.back().chosen) {
        session.trajectory.back().prior_after = prior.p();
    }
    return prior;
}

inline Belief estimate_prior(SessionState& session, Surrogate& surrogate, std::size_t m) {
    return estimate_prior(session, surrogate, m, mix_seed(detail::step_seed(session), "prior"));
}

/// Simulates m outcomes per unobserved test and scores each test. Results come
/// back in schema order. A candidate whose queries all fail is marked failed
/// and never scored.
inline std::vector<CandidateEvaluation> evaluate_candidates(SessionState& session, Surrogate& surrogate, std::size_t m,
                                                            const CostModel& costs = {}, bool parallel = true) {
    if (session.unknown.empty()) throw Error(ErrorKind::InvalidArgument, "no unknown features to evaluate");
    if (!session.prior) throw Error(ErrorKind::InvalidArgument, "prior not estimated for this step");
    const Belief prior = *session.prior;
    const auto ctx = session.context();
    const auto base_seed = detail::step_seed(session);
    std::atomic<std::uint64_t> issued{0};

    auto evaluate = [&](const std::string& feature) {
        CandidateEvaluation eval;
        eval.feature = feature;
        const auto seed = mix_seed(base_seed, feature);
        try {
            issued += m;
            auto samples = surrogate.sample_outcomes(ctx, feature, m, seed);
            issued += samples.size();
            issued -= m;
            for (std::size_t j = 0; j < samples.size(); ++j) {
                try {
                    ++issued;
                    const auto next = ctx.extended(feature, samples[j].value);
                    const double post = surrogate.estimate_risk(next, mix_seed(seed, j), j);
                    eval.posterior_draws.push_back(std::clamp(post, 0.0, 1.0));
                    eval.outcome_samples.push_back(std::move(samples[j]));
                } catch (const Error& e) {
                    eval.error = e.what();
                }
            }
            if (eval.posterior_draws.empty()) {
                eval.failed = true;
                if (eval.error.empty()) eval.error = "no samples";
            } else {
                score(eval, prior, costs);
            }
        } catch (const Error& e) {
            eval.failed = true;
            eval.error = e.what();
            eval.outcome_samples.clear();
            eval.posterior_draws.clear();
        }
        return eval;
    };

    std::vector<CandidateEvaluation> out;
    out.reserve(session.unknown.size());
    if (parallel && session.unknown.size() > 1) {
        std::vector<std::future<CandidateEvaluation>> pending;
        for (const auto& f : session.unknown) pending.push_back(std::async(std::launch::async, evaluate, f));
        for (auto& p : pending) out.push_back(p.get());
    } else {
        for (const auto& f : session.unknown) out.push_back(evaluate(f));
    }
    session.queries_used += issued.load();
    return out;
}

/// Argmax of utility (KL criterion) or entropy EIG; the first candidate wins ties.
inline std::string select_next(const std::vector<CandidateEvaluation>& evaluations, Criterion criterion) {
    const CandidateEvaluation* best = nullptr;
    for (const auto& e : evaluations) {
        if (e.failed) continue;
        if (!best) {
            best = &e;
            continue;
        }
        const double a = criterion == Criterion::Kl ? e.utility : e.entropy_eig;
        const double b = criterion == Criterion::Kl ? best->utility : best->entropy_eig;
        if (a > b) best = &e;
    }
    if (!best) throw Error(ErrorKind::InvalidArgument, "no evaluable candidates");
    return best->feature;
}

/// True when no successful candidate reaches the stopping threshold.
inline bool check_stop(const std::vector<CandidateEvaluation>& evaluations, const Belief& prior,
                       const StoppingPolicy& policy) {
    const double threshold = stopping_threshold(prior, policy);
    bool any = false;
    double best = 0.0;
    for (const auto& e : evaluations) {
        if (e.failed) continue;
        best = any ? std::max(best, e.expected_kl) : e.expected_kl;
        any = true;
    }
    return !any || best < threshold;
}

/// One full step short of acquiring: prior, candidate scores, stop check, choice.
inline Recommendation recommend(SessionState& session, Surrogate& surrogate, std::size_t m, Criterion criterion,
                                const StoppingPolicy& policy, const CostModel& costs = {}, bool parallel = true) {
    Recommendation rec;
    rec.step_index = session.trajectory.size();
    rec.prior = estimate_prior(session, surrogate, m);
    rec.prior_draws = session.prior_draws;
    rec.evaluations = evaluate_candidates(session, surrogate, m, costs, parallel);
    rec.stop_threshold = stopping_threshold(rec.prior, policy);
    rec.would_stop = check_stop(rec.evaluations, rec.prior, policy);
    const bool evaluable = std::any_of(rec.evaluations.begin(), rec.evaluations.end(),
                                       [](const CandidateEvaluation& e) { return !e.failed; });
    if (evaluable) rec.recommended = select_next(rec.evaluations, criterion);
    return rec;
}

/// Moves a feature to the known set with the observed value and appends the
/// step to the trajectory. The value may differ from any dataset record and
/// the feature may differ from the recommendation (recorded as an override).
inline void apply_result(SessionState& session, const std::string& feature, const FeatureValue& observed,
                         ChosenBy chosen_by, const Recommendation* rec = nullptr) {
    const auto& spec = session.schema->at(feature);
    if (session.values.count(feature)) {
        throw Error(ErrorKind::Conflict, "feature " + feature + " is already known", feature);
    }
    const auto it = std::find(session.unknown.begin(), session.unknown.end(), feature);
    if (it == session.unknown.end()) {
        throw Error(ErrorKind::Conflict, "feature " + feature + " is not available", feature);
    }
    const auto value = validate_value(spec, observed);

    TrajectoryStep step;
    step.step_index = session.trajectory.size();
    step.chosen = feature;
    step.chosen_by = chosen_by;
    step.observed_value = value;
    if (rec) {
        step.evaluations = rec->evaluations;
        step.prior_before = rec->prior.p();
        step.prior_draws = rec->prior_draws;
        step.stop_threshold = rec->stop_threshold;
        step.recommended = rec->recommended;
    } else if (session.prior) {
        step.prior_before = session.prior->p();
        step.prior_draws = session.prior_draws;
    }
    session.unknown.erase(it);
    session.known.push_back(feature);
    session.values.emplace(feature, value);
    session.prior.reset();
    session.trajectory.push_back(std::move(step));
}

/// Records a step at which the stopping rule ended acquisition.
inline void record_stop(SessionState& session, const Recommendation& rec) {
    TrajectoryStep step;
    step.step_index = session.trajectory.size();
    step.evaluations = rec.evaluations;
    step.prior_before = rec.prior.p();
    step.prior_draws = rec.prior_draws;
    step.stop_threshold = rec.stop_threshold;
    step.recommended = rec.recommended;
    session.trajectory.push_back(std::move(step));
    session.status = SessionStatus::StoppedByCriterion;
}

struct EpisodeOptions {
    Method method = Method::Actmed;
    std::size_t budget = 3;
    std::size_t m = 10;
    StoppingPolicy policy;
    bool early_stop = true;
    CostModel costs;
    // Experiment-level choice for the global baseline; queried from the
    // surrogate when empty.
    std::vector<std::string> global_features;
    bool parallel = true;
};

struct EpisodeResult {
    SessionState session;
    std::string method;
    int label = 0;
    double final_risk = 0.0;
    int predicted = 0;
    bool failed = false;
    std::string error;
};

/// Runs one patient through a selection method, revealing true values from the record.
inline EpisodeResult run_episode(const DatasetSchema& schema, const PatientRecord& patient, const EpisodeOptions& opts,
                                 Surrogate& surrogate, std::uint64_t seed) {
    opts.policy.validate();
    EpisodeResult result;
    result.method = to_string(opts.method);
    result.label = patient.label;
    result.session = SessionState::start(schema, patient, mix_seed(seed, patient.id));
    auto& s = result.session;

    const bool selects = opts.method != Method::AllFeatures;
    if (selects && opts.budget > s.unknown.size()) {
        throw Error(ErrorKind::InvalidArgument, "budget exceeds the number of selectable features", "budget");
    }
    auto reveal = [&](const std::string& feature, ChosenBy by, const Recommendation* rec) {
        apply_result(s, feature, patient.value(feature), by, rec);
    };

    try {
        switch (opts.method) {
            case Method::Actmed:
            case Method::ActmedEntropy: {
                const auto criterion = opts.method == Method::Actmed ? Criterion::Kl : Criterion::Entropy;
                while (true) {
                    if (s.unknown.empty()) {
                        s.status = SessionStatus::Diagnosed;
                        break;
                    }
                    if (s.acquisitions() >= opts.budget) {
                        s.status = SessionStatus::BudgetExhausted;
                        break;
                    }
                    const auto rec = recommend(s, surrogate, opts.m, criterion, opts.policy, opts.costs, opts.parallel);
                    if (!rec.recommended) throw Error(ErrorKind::Upstream, "no evaluable candidates");
                    if (opts.early_stop && rec.would_stop) {
                        record_stop(s, rec);
                        break;
                    }
                    reveal(*rec.recommended, ChosenBy::Criterion, &rec);
                }
                break;
            }
            case Method::Random: {
                std::mt19937_64 rng(mix_seed(seed, "random:" + patient.id));
                auto order = s.unknown;
                std::shuffle(order.begin(), order.end(), rng);
                order.resize(opts.budget);
                for (const auto& f : order) reveal(f, ChosenBy::Criterion, nullptr);
                s.status = SessionStatus::BudgetExhausted;
                break;
            }
            case Method::Global: {
                auto chosen = opts.global_features;
                if (chosen.empty()) {
                    ++s.queries_used;
                    chosen = surrogate.global_select(schema, s.unknown, opts.budget);
                }
                for (const auto& f : chosen) {
                    if (s.acquisitions() >= opts.budget) break;
                    if (std::find(s.unknown.begin(), s.unknown.end(), f) != s.unknown.end()) {
                        reveal(f, ChosenBy::Criterion, nullptr);
                    }
                }
                s.status = SessionStatus::BudgetExhausted;
                break;
            }
            case Method::Implicit: {
                while (s.acquisitions() < opts.budget && !s.unknown.empty()) {
                    const auto ctx = s.context();
                    ++s.queries_used;
                    const auto f = surrogate.implicit_select(ctx, s.unknown, mix_seed(detail::step_seed(s), "implicit"));
                    reveal(f, ChosenBy::Criterion, nullptr);
                }
                s.status = SessionStatus::BudgetExhausted;
                break;
            }
            case Method::AllFeatures: {
                for (const auto& f : std::vector<std::string>(s.unknown)) {
                    s.unknown.erase(std::find(s.unknown.begin(), s.unknown.end(), f));
                    s.known.push_back(f);
                    s.values.emplace(f, patient.value(f));
                }
                s.initial_known = s.known.size();
                s.status = SessionStatus::Diagnosed;
                break;
            }
        }
        const auto final_prior = estimate_prior(s, surrogate, opts.m, mix_seed(s.seed, "final"));
        result.final_risk = final_prior.p();
        result.predicted = result.final_risk >= opts.policy.theta ? 1 : 0;
    } catch (const Error& e) {
        result.failed = true;
        result.error = e.what();
        s.status = SessionStatus::Failed;
    }
    return result;
}

}  // namespace diagbed
