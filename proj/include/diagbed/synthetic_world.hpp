#pragma once

// Analytic world with a binary disease and finitely supported test results
// that are conditionally independent given disease status. Posteriors and
// outcome marginals are exact by enumeration over the two disease states,
// which makes the world an oracle for checking test selection.

#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "diagbed/belief.hpp"
#include "diagbed/surrogate.hpp"

namespace diagbed {

struct DiscreteFeature {
    std::string name;
    std::vector<FeatureValue> support;
    std::vector<double> p_sick;
    std::vector<double> p_healthy;

    std::size_t index_of(const FeatureValue& value) const {
        for (std::size_t k = 0; k < support.size(); ++k) {
            if (support[k] == value) return k;
        }
        throw Error(ErrorKind::InvalidArgument, "value " + to_text(value) + " outside the support of " + name, name);
    }
};

class SyntheticWorld {
public:
    SyntheticWorld() = default;
    SyntheticWorld(double prior_rate, std::vector<DiscreteFeature> features)
        : prior_rate_(prior_rate), features_(std::move(features)) {
        validate();
    }

    double prior_rate() const { return prior_rate_; }
    const std::vector<DiscreteFeature>& features() const { return features_; }

    const DiscreteFeature& feature(const std::string& name) const {
        for (const auto& f : features_) {
            if (f.name == name) return f;
        }
        throw Error(ErrorKind::NotFound, "unknown feature " + name, name);
    }

    bool models(const std::string& name) const {
        for (const auto& f : features_) {
            if (f.name == name) return true;
        }
        return false;
    }

    /// P(sick | evidence). Evidence entries for features the world does not model are ignored.
    double posterior(const Evidence& evidence) const {
        double sick = prior_rate_;
        double healthy = 1.0 - prior_rate_;
        for (const auto& [name, value] : evidence) {
            if (!models(name)) continue;
            const auto& f = feature(name);
            const auto k = f.index_of(value);
            sick *= f.p_sick[k];
            healthy *= f.p_healthy[k];
        }
        const double total = sick + healthy;
        if (!(total > 0.0)) throw Error(ErrorKind::InvalidArgument, "evidence has zero probability");
        return sick / total;
    }

    /// P(feature = support[k] | evidence) for every k.
    std::vector<double> outcome_distribution(const Evidence& evidence, const std::string& name) const {
        const auto& f = feature(name);
        const double p = posterior(evidence);
        std::vector<double> probs(f.support.size());
        for (std::size_t k = 0; k < probs.size(); ++k) probs[k] = p * f.p_sick[k] + (1.0 - p) * f.p_healthy[k];
        return probs;
    }

    PatientRecord sample_patient(std::mt19937_64& rng, std::string id) const {
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        PatientRecord rec;
        rec.id = std::move(id);
        rec.label = unit(rng) < prior_rate_ ? 1 : 0;
        for (const auto& f : features_) {
            const auto& probs = rec.label ? f.p_sick : f.p_healthy;
            rec.values.emplace(f.name, f.support[draw(probs, unit(rng))]);
        }
        return rec;
    }

    /// A schema over the world's features. The named features start known.
    DatasetSchema schema(const std::vector<std::string>& known_at_start = {}) const {
        DatasetSchema s;
        s.name = "synthetic";
        s.disease_name = "the condition";
        s.context_preamble = "Synthetic diagnostic world.";
        s.label_column = "label";
        s.prompts = default_prompts();
        for (const auto& f : features_) {
            FeatureSpec spec;
            spec.name = f.name;
            spec.vignette_template = "The " + f.name + " result is {value}.";
            spec.known_at_start =
                std::find(known_at_start.begin(), known_at_start.end(), f.name) != known_at_start.end();
            if (std::holds_alternative<std::string>(f.support.front())) {
                spec.kind = FeatureKind::Categorical;
                for (const auto& v : f.support) spec.categories.push_back(std::get<std::string>(v));
            }
            s.features.push_back(std::move(spec));
        }
        s.validate();
        return s;
    }

    /// Random world with binary categorical features ("pos"/"neg").
    static SyntheticWorld random(std::mt19937_64& rng, std::size_t n_features) {
        std::uniform_real_distribution<double> prior(0.2, 0.8);
        std::uniform_real_distribution<double> rate(0.05, 0.95);
        std::vector<DiscreteFeature> features;
        for (std::size_t i = 0; i < n_features; ++i) {
            const double sick = rate(rng);
            const double healthy = rate(rng);
            features.push_back({"T" + std::to_string(i + 1),
                                {FeatureValue{std::string("pos")}, FeatureValue{std::string("neg")}},
                                {sick, 1.0 - sick},
                                {healthy, 1.0 - healthy}});
        }
        return SyntheticWorld(prior(rng), std::move(features));
    }

    static SyntheticWorld from_json(const nlohmann::json& j) {
        std::vector<DiscreteFeature> features;
        try {
            for (const auto& jf : j.at("features")) {
                DiscreteFeature f;
                f.name = jf.at("name").get<std::string>();
                for (const auto& v : jf.at("values")) {
                    if (v.is_number()) {
                        f.support.emplace_back(v.get<double>());
                    } else {
                        f.support.emplace_back(v.get<std::string>());
                    }
                }
                f.p_sick = jf.at("p_sick").get<std::vector<double>>();
                f.p_healthy = jf.at("p_healthy").get<std::vector<double>>();
                features.push_back(std::move(f));
            }
            return SyntheticWorld(j.at("prior").get<double>(), std::move(features));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Schema, std::string("malformed synthetic world: ") + e.what());
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["prior"] = prior_rate_;
        j["features"] = nlohmann::json::array();
        for (const auto& f : features_) {
            nlohmann::json values = nlohmann::json::array();
            for (const auto& v : f.support) {
                if (is_numeric(v)) {
                    values.push_back(std::get<double>(v));
                } else {
                    values.push_back(std::get<std::string>(v));
                }
            }
            j["features"].push_back({{"name", f.name}, {"values", values}, {"p_sick", f.p_sick}, {"p_healthy", f.p_healthy}});
        }
        return j;
    }

    static std::size_t draw(const std::vector<double>& probs, double u) {
        double acc = 0.0;
        for (std::size_t k = 0; k < probs.size(); ++k) {
            acc += probs[k];
            if (u < acc) return k;
        }
        return probs.size() - 1;
    }

private:
    void validate() const {
        if (!(prior_rate_ >= 0.0 && prior_rate_ <= 1.0)) {
            throw Error(ErrorKind::InvalidArgument, "prior disease rate outside [0,1]");
        }
        for (const auto& f : features_) {
            if (f.support.empty() || f.p_sick.size() != f.support.size() || f.p_healthy.size() != f.support.size()) {
                throw Error(ErrorKind::InvalidArgument, "feature " + f.name + " has inconsistent tables", f.name);
            }
            for (const auto* probs : {&f.p_sick, &f.p_healthy}) {
                double sum = 0.0;
                for (double p : *probs) {
                    if (p < 0.0) throw Error(ErrorKind::InvalidArgument, "negative probability in " + f.name, f.name);
                    sum += p;
                }
                if (std::abs(sum - 1.0) > 1e-9) {
                    throw Error(ErrorKind::InvalidArgument, "distribution of " + f.name + " does not sum to 1", f.name);
                }
            }
        }
    }

    double prior_rate_ = 0.5;
    std::vector<DiscreteFeature> features_;
};

/// Surrogate backed by a SyntheticWorld. In exact mode sample_outcomes
/// returns the whole support weighted by its conditional probability.
class SyntheticSurrogate final : public Surrogate {
public:
    explicit SyntheticSurrogate(SyntheticWorld world, bool exact = false)
        : world_(std::move(world)), exact_(exact) {}

    const SyntheticWorld& world() const { return world_; }
    bool exact() const { return exact_; }

    std::vector<OutcomeSample> sample_outcomes(const SurrogateContext& ctx, const std::string& feature, std::size_t m,
                                               std::uint64_t seed) override {
        detail::require_unobserved(ctx, feature);
        const auto& f = world_.feature(feature);
        const auto probs = world_.outcome_distribution(ctx.known, feature);
        std::vector<OutcomeSample> out;
        if (exact_) {
            counter_.add_sample(f.support.size());
            for (std::size_t k = 0; k < f.support.size(); ++k) {
                if (probs[k] > 0.0) out.push_back({feature, f.support[k], to_text(f.support[k]), probs[k]});
            }
            return out;
        }
        counter_.add_sample(m);
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        out.reserve(m);
        for (std::size_t j = 0; j < m; ++j) {
            const auto k = SyntheticWorld::draw(probs, unit(rng));
            out.push_back({feature, f.support[k], to_text(f.support[k]), 1.0});
        }
        return out;
    }

    double estimate_risk(const SurrogateContext& ctx, std::uint64_t /*seed*/, std::size_t /*index*/) override {
        counter_.add_risk();
        return world_.posterior(ctx.known);
    }

    /// Exact expected KL of observing `feature` given the evidence.
    double exact_expected_kl(const Evidence& evidence, const std::string& feature) const {
        const auto& f = world_.feature(feature);
        const auto probs = world_.outcome_distribution(evidence, feature);
        const Belief prior(world_.posterior(evidence));
        double total = 0.0;
        for (std::size_t k = 0; k < f.support.size(); ++k) {
            if (probs[k] <= 0.0) continue;
            Evidence next = evidence;
            next.insert_or_assign(feature, f.support[k]);
            total += probs[k] * kl_bernoulli(world_.posterior(next), prior.p());
        }
        return total;
    }

    std::string implicit_select(const SurrogateContext& ctx, const std::vector<std::string>& unknown,
                                std::uint64_t /*seed*/) override {
        if (unknown.empty()) throw Error(ErrorKind::InvalidArgument, "no candidate features");
        counter_.add_selection();
        return best_of(ctx.known, unknown).front();
    }

    std::vector<std::string> global_select(const DatasetSchema& /*schema*/, const std::vector<std::string>& all,
                                           std::size_t n) override {
        if (n > all.size()) throw Error(ErrorKind::InvalidArgument, "n exceeds the number of features");
        counter_.add_selection();
        auto ranked = best_of({}, all);
        ranked.resize(n);
        return ranked;
    }

private:
    // Candidates ordered by exact expected KL, descending; stable on ties.
    std::vector<std::string> best_of(const Evidence& evidence, const std::vector<std::string>& candidates) const {
        std::vector<std::pair<double, std::string>> scored;
        for (const auto& c : candidates) {
            scored.emplace_back(world_.models(c) ? exact_expected_kl(evidence, c) : -1.0, c);
        }
        std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        std::vector<std::string> out;
        for (auto& [score, name] : scored) out.push_back(std::move(name));
        return out;
    }

    SyntheticWorld world_;
    bool exact_;
};

}  // namespace diagbed
