#pragma once

// Live diagnosis sessions for human operators. The service computes
// recommendations and records what the operator reports; it never acquires
// a result on its own.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>

#include <httplib.h>

#include "diagbed/session_store.hpp"
#include "diagbed/trajectory.hpp"

namespace diagbed {

struct DatasetEntry {
    DatasetSchema schema;
    std::vector<PatientRecord> records;

    const PatientRecord* patient(const std::string& id) const {
        for (const auto& r : records) {
            if (r.id == id) return &r;
        }
        return nullptr;
    }
};

/// Loads every *.json manifest in a directory. Datasets whose CSV is missing
/// are served without patient records (inline sessions only).
inline std::map<std::string, DatasetEntry> load_dataset_directory(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::NotFound, "no dataset directory " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::map<std::string, DatasetEntry> out;
    for (const auto& file : files) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(file));
        } catch (const nlohmann::json::parse_error&) {
            continue;
        }
        if (!j.is_object() || !j.contains("features") || !j.contains("disease_name")) continue;
        DatasetEntry entry;
        entry.schema = parse_manifest(j, file.parent_path());
        if (!entry.schema.csv_path.empty() && std::filesystem::exists(entry.schema.csv_path)) {
            entry.records = load_dataset(entry.schema).records;
        }
        const auto name = entry.schema.name;
        out.emplace(name, std::move(entry));
    }
    return out;
}

struct ServiceOptions {
    std::size_t m = 10;
    std::size_t budget = 3;
    StoppingPolicy policy;
    Criterion criterion = Criterion::Kl;
    std::string store_path = ":memory:";
    std::string bearer_token;  // empty: no authentication
    int retry_after_seconds = 5;
};

inline nlohmann::json recommendation_to_json(const Recommendation& r) {
    nlohmann::json evals = nlohmann::json::array();
    for (const auto& e : r.evaluations) evals.push_back(to_json(e));
    return {
        {"step_index", r.step_index},
        {"prior", r.prior.p()},
        {"prior_draws", r.prior_draws},
        {"evaluations", evals},
        {"stop_threshold", r.stop_threshold},
        {"would_stop", r.would_stop},
        {"recommended", optional_to_json(r.recommended)},
    };
}

inline Recommendation recommendation_from_json(const nlohmann::json& j) {
    Recommendation r;
    r.step_index = j.at("step_index").get<std::size_t>();
    r.prior = Belief(j.at("prior").get<double>());
    r.prior_draws = j.at("prior_draws").get<std::vector<double>>();
    for (const auto& e : j.at("evaluations")) r.evaluations.push_back(evaluation_from_json(e));
    r.stop_threshold = j.at("stop_threshold").get<double>();
    r.would_stop = j.at("would_stop").get<bool>();
    if (!j.at("recommended").is_null()) r.recommended = j.at("recommended").get<std::string>();
    return r;
}

namespace detail {

inline std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string random_id() {
    std::random_device rd;
    std::uniform_int_distribution<std::uint32_t> dist;
    char buf[33];
    std::snprintf(buf, sizeof buf, "%08x%08x%08x%08x", dist(rd), dist(rd), dist(rd), dist(rd));
    return buf;
}

}  // namespace detail

class SessionService {
public:
    SessionService(std::map<std::string, DatasetEntry> datasets, Surrogate& surrogate, ServiceOptions options = {})
        : datasets_(std::move(datasets)), surrogate_(surrogate), options_(std::move(options)), store_(options_.store_path) {
        options_.policy.validate();
        restore();
    }

    nlohmann::json list_datasets() const {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& [name, entry] : datasets_) {
            nlohmann::json features = nlohmann::json::array();
            for (const auto& f : entry.schema.features) {
                nlohmann::json jf{{"name", f.name},
                                  {"kind", f.kind == FeatureKind::Numeric ? "numeric" : "categorical"},
                                  {"unit", f.unit},
                                  {"known_at_start", f.known_at_start},
                                  {"cost", f.raw_cost}};
                if (f.kind == FeatureKind::Categorical) jf["categories"] = f.categories;
                features.push_back(std::move(jf));
            }
            nlohmann::json patients = nlohmann::json::array();
            for (const auto& r : entry.records) patients.push_back(r.id);
            out.push_back({{"name", name},
                           {"disease", entry.schema.disease_name},
                           {"features", features},
                           {"patients", patients}});
        }
        return {{"datasets", out}};
    }

    nlohmann::json create_session(const nlohmann::json& req) {
        if (!req.is_object()) throw Error(ErrorKind::Validation, "request body must be an object");
        const auto disease = optional_string(req, "disease");
        const DatasetEntry& data = resolve_dataset(optional_string(req, "dataset"), disease);

        auto entry = std::make_shared<Entry>();
        entry->dataset = data.schema.name;
        entry->policy = options_.policy;
        entry->criterion = options_.criterion;
        entry->budget = options_.budget;
        entry->m = options_.m;
        if (req.contains("policy")) {
            const auto& p = req.at("policy");
            if (!p.is_object()) throw Error(ErrorKind::Validation, "policy must be an object", "policy");
            entry->policy.theta = number(p, "theta", entry->policy.theta, "policy.theta");
            entry->policy.gamma = number(p, "gamma", entry->policy.gamma, "policy.gamma");
        }
        try {
            entry->policy.validate();
        } catch (const Error& e) {
            throw Error(ErrorKind::Validation, e.what(), "policy");
        }
        if (const auto c = optional_string(req, "criterion")) {
            try {
                entry->criterion = parse_criterion(*c);
            } catch (const Error& e) {
                throw Error(ErrorKind::Validation, e.what(), "criterion");
            }
        }
        if (req.contains("budget")) {
            if (!req.at("budget").is_number_unsigned() || req.at("budget").get<std::size_t>() < 1) {
                throw Error(ErrorKind::Validation, "budget must be a positive integer", "budget");
            }
            entry->budget = req.at("budget").get<std::size_t>();
        }
        if (req.contains("prior_override") && !req.at("prior_override").is_null()) {
            const double p = number(req, "prior_override", 0.0, "prior_override");
            if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorKind::Validation, "prior_override outside [0,1]", "prior_override");
            entry->prior_override = p;
        }

        const auto id = fresh_id();
        std::uint64_t seed = fnv1a64(id);
        if (req.contains("seed")) {
            if (!req.at("seed").is_number_unsigned()) throw Error(ErrorKind::Validation, "seed must be a non-negative integer", "seed");
            seed = req.at("seed").get<std::uint64_t>();
        }

        const auto patient_id = optional_string(req, "patient_id");
        if (req.contains("known")) {
            Evidence known;
            try {
                known = evidence_from_json(req.at("known"));
            } catch (const Error& e) {
                throw Error(ErrorKind::Validation, e.what(), e.field().empty() ? "known" : e.field());
            }
            for (const auto& [name, value] : known) {
                if (!data.schema.find(name)) throw Error(ErrorKind::Validation, "unknown feature " + name, name);
            }
            entry->state = SessionState::start(data.schema, patient_id.value_or("inline"), known,
                                               disease.value_or(std::string{}), seed);
        } else if (patient_id) {
            const auto* record = data.patient(*patient_id);
            if (!record) throw Error(ErrorKind::NotFound, "unknown patient " + *patient_id, "patient_id");
            entry->state = SessionState::start(data.schema, *record, seed);
            if (disease) entry->state.disease = *disease;
        } else {
            throw Error(ErrorKind::Validation, "either patient_id or known is required", "known");
        }
        if (entry->state.unknown.empty()) {
            throw Error(ErrorKind::Validation, "every feature is already known", "known");
        }
        entry->id = id;
        entry->created_at = entry->updated_at = detail::utc_now();

        std::lock_guard lock(entry->mutex);
        persist_header(*entry);
        publish(*entry);
        {
            std::unique_lock registry(registry_mutex_);
            sessions_.emplace(id, entry);
        }
        return resource(*entry);
    }

    nlohmann::json get_session(const std::string& id) {
        auto entry = find(id);
        std::lock_guard lock(entry->mutex);
        return resource(*entry);
    }

    /// Idempotent per step: repeated calls before a result is submitted return the cached evaluation.
    nlohmann::json get_recommendation(const std::string& id) {
        auto entry = find(id);
        std::lock_guard lock(entry->mutex);
        auto& s = entry->state;
        if (entry->cached && (s.status == SessionStatus::Active || s.status == SessionStatus::StoppedByCriterion)) {
            return view(*entry);
        }
        if (s.status != SessionStatus::Active) {
            throw Error(ErrorKind::Conflict, std::string("session is ") + to_string(s.status));
        }
        if (s.unknown.empty() || s.acquisitions() >= entry->budget) {
            s.status = s.unknown.empty() ? SessionStatus::Diagnosed : SessionStatus::BudgetExhausted;
            touch(*entry);
            throw Error(ErrorKind::Conflict, std::string("session is ") + to_string(s.status));
        }

        // Work on a copy so that a surrogate failure leaves the session untouched.
        SessionState work = s;
        Recommendation rec;
        try {
            rec = compute(*entry, work);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Upstream) throw;
            throw Error(ErrorKind::Upstream, std::string("surrogate failure: ") + e.what(), {}, e.raw());
        }
        const bool backfilled = !s.trajectory.empty() && !s.trajectory.back().prior_after &&
                                work.trajectory.back().prior_after;
        s = std::move(work);
        entry->cached = std::move(rec);
        if (backfilled) store_.record_belief(entry->id, s.trajectory.size() - 1, *s.trajectory.back().prior_after);
        if (entry->cached->would_stop) {
            record_stop(s, *entry->cached);
            const auto& step = s.trajectory.back();
            store_.append_step(entry->id, step.step_index, to_json(step));
        }
        touch(*entry);
        return view(*entry);
    }

    /// Records an observed result. Without `override` the feature must be the
    /// cached recommendation. `continue` reopens a session the stopping rule ended.
    nlohmann::json submit_result(const std::string& id, const nlohmann::json& body) {
        if (!body.is_object()) throw Error(ErrorKind::Validation, "request body must be an object");
        const auto feature = optional_string(body, "feature");
        if (!feature) throw Error(ErrorKind::Validation, "feature is required", "feature");
        if (!body.contains("value")) throw Error(ErrorKind::Validation, "value is required", "value");
        const bool override_flag = flag(body, "override");
        const bool resume = flag(body, "continue");

        auto entry = find(id);
        std::lock_guard lock(entry->mutex);
        auto& s = entry->state;
        const auto& schema = *s.schema;
        const bool reopen = resume && s.status == SessionStatus::StoppedByCriterion;
        if (s.status != SessionStatus::Active && !reopen) {
            throw Error(ErrorKind::Conflict, std::string("session is ") + to_string(s.status));
        }
        const auto* spec = schema.find(*feature);
        if (!spec) throw Error(ErrorKind::Validation, "unknown feature " + *feature, "feature");
        if (s.values.count(*feature)) throw Error(ErrorKind::Conflict, "feature " + *feature + " is already known", "feature");
        if (s.acquisitions() >= entry->budget) {
            throw Error(ErrorKind::Conflict, "acquisition budget exhausted", "feature");
        }
        FeatureValue value;
        try {
            value = validate_value(*spec, value_from_json(body.at("value")));
        } catch (const Error& e) {
            throw Error(ErrorKind::Validation, e.what(), "value");
        }

        const Recommendation* rec = entry->cached ? &*entry->cached : nullptr;
        std::optional<std::string> best;
        if (rec) best = rec->recommended ? rec->recommended : best_candidate(*rec, entry->criterion);
        if (!override_flag) {
            if (!best) throw Error(ErrorKind::Validation, "no recommendation for this step; set override", "feature");
            if (*best != *feature) {
                throw Error(ErrorKind::Validation, "feature differs from the recommendation " + *best + "; set override",
                            "feature");
            }
        }
        const auto chosen_by = best && *best == *feature ? ChosenBy::Criterion : ChosenBy::Override;
        if (reopen) s.status = SessionStatus::Active;
        apply_result(s, *feature, value, chosen_by, rec);
        entry->cached.reset();
        const auto& step = s.trajectory.back();
        store_.append_step(entry->id, step.step_index, to_json(step));
        touch(*entry);
        return resource(*entry);
    }

    nlohmann::json get_trajectory(const std::string& id) {
        auto entry = find(id);
        std::shared_ptr<const nlohmann::json> snap;
        {
            std::lock_guard lock(entry->snapshot_mutex);
            snap = entry->snapshot;
        }
        return *snap;
    }

    nlohmann::json abandon(const std::string& id) {
        auto entry = find(id);
        std::lock_guard lock(entry->mutex);
        const auto status = entry->state.status;
        if (status != SessionStatus::Active && status != SessionStatus::StoppedByCriterion) {
            throw Error(ErrorKind::Conflict, std::string("session is ") + to_string(status));
        }
        entry->state.status = SessionStatus::Abandoned;
        entry->cached.reset();
        touch(*entry);
        return resource(*entry);
    }

    const ServiceOptions& options() const { return options_; }

private:
    struct Entry {
        std::mutex mutex;
        std::string id;
        std::string dataset;
        SessionState state;
        StoppingPolicy policy;
        Criterion criterion = Criterion::Kl;
        std::size_t budget = 3;
        std::size_t m = 10;
        std::optional<double> prior_override;
        std::optional<Recommendation> cached;
        std::string created_at;
        std::string updated_at;
        std::mutex snapshot_mutex;
        std::shared_ptr<const nlohmann::json> snapshot;
    };

    static std::optional<std::string> optional_string(const nlohmann::json& j, const char* key) {
        if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
        if (!j.at(key).is_string()) throw Error(ErrorKind::Validation, std::string(key) + " must be a string", key);
        return j.at(key).get<std::string>();
    }

    static double number(const nlohmann::json& j, const char* key, double fallback, const char* field) {
        if (!j.contains(key)) return fallback;
        if (!j.at(key).is_number()) throw Error(ErrorKind::Validation, std::string(field) + " must be a number", field);
        return j.at(key).get<double>();
    }

    static bool flag(const nlohmann::json& j, const char* key) {
        if (!j.contains(key)) return false;
        if (!j.at(key).is_boolean()) throw Error(ErrorKind::Validation, std::string(key) + " must be a boolean", key);
        return j.at(key).get<bool>();
    }

    static std::optional<std::string> best_candidate(const Recommendation& rec, Criterion criterion) {
        const bool any = std::any_of(rec.evaluations.begin(), rec.evaluations.end(),
                                     [](const CandidateEvaluation& e) { return !e.failed; });
        if (!any) return std::nullopt;
        return select_next(rec.evaluations, criterion);
    }

    const DatasetEntry& resolve_dataset(const std::optional<std::string>& dataset,
                                        const std::optional<std::string>& disease) const {
        if (dataset) {
            const auto it = datasets_.find(*dataset);
            if (it == datasets_.end()) throw Error(ErrorKind::NotFound, "unknown dataset " + *dataset, "dataset");
            const auto& schema = it->second.schema;
            if (disease && schema.disease_column.empty() && *disease != schema.disease_name) {
                throw Error(ErrorKind::NotFound, "dataset " + *dataset + " does not cover " + *disease, "disease");
            }
            return it->second;
        }
        if (disease) {
            for (const auto& [name, entry] : datasets_) {
                if (entry.schema.disease_name == *disease) return entry;
            }
            throw Error(ErrorKind::NotFound, "unknown disease " + *disease, "disease");
        }
        throw Error(ErrorKind::Validation, "dataset or disease is required", "dataset");
    }

    std::string fresh_id() {
        std::shared_lock registry(registry_mutex_);
        for (;;) {
            auto id = detail::random_id();
            if (!sessions_.count(id)) return id;
        }
    }

    std::shared_ptr<Entry> find(const std::string& id) {
        std::shared_lock registry(registry_mutex_);
        const auto it = sessions_.find(id);
        if (it == sessions_.end()) throw Error(ErrorKind::NotFound, "unknown session " + id, "session_id");
        return it->second;
    }

    Recommendation compute(const Entry& entry, SessionState& s) {
        const auto& schema = *s.schema;
        const auto costs = schema.cost_model();
        Recommendation rec;
        rec.step_index = s.trajectory.size();
        if (entry.prior_override && s.acquisitions() == 0) {
            // The operator's prior replaces the model estimate for the first step.
            rec.prior = Belief(*entry.prior_override);
            s.prior = rec.prior;
            s.prior_draws = {rec.prior.p()};
        } else {
            rec.prior = estimate_prior(s, surrogate_, entry.m);
        }
        rec.prior_draws = s.prior_draws;
        rec.evaluations = evaluate_candidates(s, surrogate_, entry.m, costs, true);
        rec.stop_threshold = stopping_threshold(rec.prior, entry.policy);
        const auto best = best_candidate(rec, entry.criterion);
        if (!best) {
            std::string why = "no candidate could be evaluated";
            for (const auto& e : rec.evaluations) {
                if (!e.error.empty()) {
                    why += ": " + e.error;
                    break;
                }
            }
            throw Error(ErrorKind::Upstream, why);
        }
        rec.would_stop = check_stop(rec.evaluations, rec.prior, entry.policy);
        if (!rec.would_stop) rec.recommended = best;
        return rec;
    }

    nlohmann::json view(const Entry& entry) const {
        const auto& rec = *entry.cached;
        const auto& schema = *entry.state.schema;
        nlohmann::json rows = nlohmann::json::array();
        double best_kl = 0.0;
        for (const auto& e : rec.evaluations) {
            auto row = to_json(e);
            row["cost"] = schema.at(e.feature).raw_cost;
            rows.push_back(std::move(row));
            if (!e.failed) best_kl = std::max(best_kl, e.expected_kl);
        }
        return {
            {"session_id", entry.id},
            {"step_index", rec.step_index},
            {"prior", rec.prior.p()},
            {"prior_draws", rec.prior_draws},
            {"candidates", rows},
            {"recommended", optional_to_json(rec.recommended)},
            {"best_candidate", optional_to_json(best_candidate(rec, entry.criterion))},
            {"best_expected_kl", best_kl},
            {"stop_threshold", rec.stop_threshold},
            {"would_stop", rec.would_stop},
            {"criterion", to_string(entry.criterion)},
            {"status", to_string(entry.state.status)},
        };
    }

    nlohmann::json resource(const Entry& entry) const {
        const auto& s = entry.state;
        return {
            {"session_id", entry.id},
            {"dataset", entry.dataset},
            {"disease", s.disease},
            {"patient_id", s.patient_id},
            {"status", to_string(s.status)},
            {"policy", {{"theta", entry.policy.theta}, {"gamma", entry.policy.gamma}}},
            {"criterion", to_string(entry.criterion)},
            {"budget", entry.budget},
            {"m", entry.m},
            {"known", evidence_to_json(s.values)},
            {"known_order", s.known},
            {"unknown", s.unknown},
            {"prior", s.prior ? nlohmann::json(s.prior->p()) : nlohmann::json(nullptr)},
            {"prior_override", optional_to_json(entry.prior_override)},
            {"acquisitions", s.acquisitions()},
            {"steps", s.trajectory.size()},
            {"queries_used", s.queries_used},
            {"created_at", entry.created_at},
            {"updated_at", entry.updated_at},
        };
    }

    nlohmann::json header(const Entry& entry) const {
        auto state = to_json(entry.state);
        state.erase("trajectory");
        return {
            {"dataset", entry.dataset},
            {"policy", {{"theta", entry.policy.theta}, {"gamma", entry.policy.gamma}}},
            {"criterion", to_string(entry.criterion)},
            {"budget", entry.budget},
            {"m", entry.m},
            {"prior_override", optional_to_json(entry.prior_override)},
            {"cached", entry.cached ? recommendation_to_json(*entry.cached) : nlohmann::json(nullptr)},
            {"created_at", entry.created_at},
            {"updated_at", entry.updated_at},
            {"state", state},
        };
    }

    void persist_header(const Entry& entry) { store_.put_header(entry.id, header(entry)); }

    void publish(Entry& entry) {
        auto doc = to_json(entry.state);
        doc["session_id"] = entry.id;
        doc["policy"] = {{"theta", entry.policy.theta}, {"gamma", entry.policy.gamma}};
        doc["criterion"] = to_string(entry.criterion);
        doc["budget"] = entry.budget;
        doc["prior_override"] = optional_to_json(entry.prior_override);
        nlohmann::json beliefs = nlohmann::json::array();
        for (const auto& step : entry.state.trajectory) {
            if (step.prior_before) beliefs.push_back(*step.prior_before);
        }
        doc["beliefs"] = beliefs;
        auto snap = std::make_shared<const nlohmann::json>(std::move(doc));
        std::lock_guard lock(entry.snapshot_mutex);
        entry.snapshot = std::move(snap);
    }

    void touch(Entry& entry) {
        entry.updated_at = detail::utc_now();
        persist_header(entry);
        publish(entry);
    }

    void restore() {
        for (auto& stored : store_.load_all()) {
            const auto& h = stored.header;
            const auto ds = datasets_.find(h.at("dataset").get<std::string>());
            if (ds == datasets_.end()) continue;
            auto entry = std::make_shared<Entry>();
            entry->id = stored.id;
            entry->dataset = ds->first;
            entry->policy = {h.at("policy").at("theta").get<double>(), h.at("policy").at("gamma").get<double>()};
            entry->criterion = parse_criterion(h.at("criterion").get<std::string>());
            entry->budget = h.at("budget").get<std::size_t>();
            entry->m = h.at("m").get<std::size_t>();
            if (!h.at("prior_override").is_null()) entry->prior_override = h.at("prior_override").get<double>();
            if (!h.at("cached").is_null()) entry->cached = recommendation_from_json(h.at("cached"));
            entry->created_at = h.at("created_at").get<std::string>();
            entry->updated_at = h.at("updated_at").get<std::string>();
            auto state = h.at("state");
            state["trajectory"] = stored.steps;
            entry->state = session_from_json(state, ds->second.schema);
            for (const auto& [index, prior_after] : stored.beliefs) {
                if (index < entry->state.trajectory.size()) entry->state.trajectory[index].prior_after = prior_after;
            }
            publish(*entry);
            sessions_.emplace(entry->id, std::move(entry));
        }
    }

    std::map<std::string, DatasetEntry> datasets_;
    Surrogate& surrogate_;
    ServiceOptions options_;
    SessionStore store_;
    std::shared_mutex registry_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

inline int http_status(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NotFound: return 404;
        case ErrorKind::Conflict: return 409;
        case ErrorKind::Validation: return 422;
        case ErrorKind::Upstream: return 503;
        case ErrorKind::InvalidArgument:
        case ErrorKind::Schema:
        case ErrorKind::Parse: return 400;
    }
    return 500;
}

inline nlohmann::json error_envelope(const std::string& code, const std::string& message, const std::string& field = {}) {
    nlohmann::json j{{"code", code}, {"message", message}};
    if (!field.empty()) j["field"] = field;
    return j;
}

/// HTTP+JSON front end for a SessionService.
class ServiceServer {
public:
    explicit ServiceServer(SessionService& service) : service_(service) { routes(); }

    httplib::Server& http() { return server_; }

    bool listen(const std::string& host, int port) { return server_.listen(host, port); }
    int bind_to_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
    bool listen_after_bind() { return server_.listen_after_bind(); }
    void stop() { server_.stop(); }
    void wait_until_ready() { server_.wait_until_ready(); }

private:
    template <typename Fn>
    httplib::Server::Handler guarded(int ok_status, Fn fn) {
        return [this, ok_status, fn](const httplib::Request& req, httplib::Response& res) {
            const auto& token = service_.options().bearer_token;
            if (!token.empty() && req.get_header_value("Authorization") != "Bearer " + token) {
                send(res, 401, error_envelope("unauthorized", "missing or invalid bearer token"));
                return;
            }
            try {
                send(res, ok_status, fn(req));
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::Upstream) {
                    res.set_header("Retry-After", std::to_string(service_.options().retry_after_seconds));
                }
                send(res, http_status(e.kind()), error_envelope(to_string(e.kind()), e.what(), e.field()));
            } catch (const std::exception& e) {
                send(res, 500, error_envelope("internal", e.what()));
            }
        };
    }

    static nlohmann::json body_json(const httplib::Request& req) {
        if (req.body.empty()) return nlohmann::json::object();
        try {
            return nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorKind::Parse, std::string("malformed JSON body: ") + e.what());
        }
    }

    static void send(httplib::Response& res, int status, const nlohmann::json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    }

    void routes() {
        server_.Get("/v1/datasets", guarded(200, [this](const httplib::Request&) { return service_.list_datasets(); }));
        server_.Post("/v1/sessions", guarded(201, [this](const httplib::Request& req) {
            return service_.create_session(body_json(req));
        }));
        server_.Get(R"(/v1/sessions/([0-9A-Za-z]+))", guarded(200, [this](const httplib::Request& req) {
            return service_.get_session(req.matches[1]);
        }));
        server_.Delete(R"(/v1/sessions/([0-9A-Za-z]+))", guarded(200, [this](const httplib::Request& req) {
            return service_.abandon(req.matches[1]);
        }));
        server_.Post(R"(/v1/sessions/([0-9A-Za-z]+)/recommendation)", guarded(200, [this](const httplib::Request& req) {
            return service_.get_recommendation(req.matches[1]);
        }));
        server_.Post(R"(/v1/sessions/([0-9A-Za-z]+)/result)", guarded(200, [this](const httplib::Request& req) {
            return service_.submit_result(req.matches[1], body_json(req));
        }));
        server_.Get(R"(/v1/sessions/([0-9A-Za-z]+)/trajectory)", guarded(200, [this](const httplib::Request& req) {
            return service_.get_trajectory(req.matches[1]);
        }));
        server_.set_error_handler([](const httplib::Request&, httplib::Response& res) {
            if (res.body.empty()) {
                const auto code = res.status == 404 ? "not_found" : "http_error";
                send(res, res.status, error_envelope(code, "no such route"));
            }
        });
    }

    SessionService& service_;
    httplib::Server server_;
};

}  // namespace diagbed
