#pragma once

// Closed-form Bernoulli information theory: KL divergence, entropy, the two
// expected-information-gain estimators, cost-normalised utility and the
// confidence-gap stopping threshold. Everything here is a pure function over
// value types. All quantities are in nats.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>

#include "diagbed/error.hpp"

namespace diagbed {

/// Probabilities are pushed into [kProbEpsilon, 1 - kProbEpsilon] before any log.
inline constexpr double kProbEpsilon = 1e-6;
/// Slack allowed when validating a probability that came out of arithmetic.
inline constexpr double kProbTolerance = 1e-9;

inline double clamp_probability(double p) {
    return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
}

/// Bernoulli belief over the diagnosis label.
class Belief {
public:
    Belief() = default;
    explicit Belief(double p) {
        if (!std::isfinite(p) || p < -kProbTolerance || p > 1.0 + kProbTolerance) {
            throw Error(ErrorKind::InvalidArgument, "belief outside [0,1]: " + std::to_string(p));
        }
        p_ = std::clamp(p, 0.0, 1.0);
    }

    double p() const noexcept { return p_; }
    double clamped() const noexcept { return clamp_probability(p_); }

    friend bool operator==(const Belief&, const Belief&) = default;

private:
    double p_ = 0.5;
};

struct StoppingPolicy {
    double theta = 0.5;
    double gamma = 0.5;

    void validate() const {
        if (!(theta > 0.0 && theta < 1.0)) {
            throw Error(ErrorKind::InvalidArgument, "theta must lie in (0,1)", "theta");
        }
        if (!(gamma >= 0.0 && gamma <= 1.0)) {
            throw Error(ErrorKind::InvalidArgument, "gamma must lie in [0,1]", "gamma");
        }
    }
};

enum class CostMode { Uniform, PerFeature };

/// Test costs. Per-feature raw costs c* enter the utility as log(c*), so each
/// must exceed 1. `lambda` is the nominal accuracy/cost trade-off weight; it is
/// carried for reporting only and never enters the utility.
struct CostModel {
    CostMode mode = CostMode::Uniform;
    std::map<std::string, double> raw_costs;
    double lambda = 0.0;

    static CostModel uniform() { return {}; }

    static CostModel per_feature(std::map<std::string, double> costs, double lambda = 0.0) {
        CostModel model{CostMode::PerFeature, std::move(costs), lambda};
        model.validate();
        return model;
    }

    void validate() const {
        if (lambda < 0.0) throw Error(ErrorKind::InvalidArgument, "lambda must be nonnegative", "lambda");
        if (mode == CostMode::Uniform) return;
        for (const auto& [name, cost] : raw_costs) {
            if (!(cost > 1.0) || !std::isfinite(cost)) {
                throw Error(ErrorKind::InvalidArgument, "raw cost must exceed 1 for feature " + name, name);
            }
        }
    }
};

inline double kl_bernoulli(double q, double p) {
    q = clamp_probability(q);
    p = clamp_probability(p);
    const double kl = q * std::log(q / p) + (1.0 - q) * std::log((1.0 - q) / (1.0 - p));
    // Rounding can leave a tiny negative residue when q == p.
    return std::max(kl, 0.0);
}

inline double entropy_bernoulli(double p) {
    p = clamp_probability(p);
    return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
}

/// Mean of KL(posterior_j || prior) over the draws; the prior is fixed for the step.
inline double expected_kl(std::span<const double> posterior_draws, const Belief& prior) {
    if (posterior_draws.empty()) throw Error(ErrorKind::InvalidArgument, "no posterior samples");
    double sum = 0.0;
    for (double q : posterior_draws) sum += kl_bernoulli(q, prior.p());
    return sum / static_cast<double>(posterior_draws.size());
}

/// Weighted variant used when a surrogate enumerates outcomes with their
/// probabilities instead of sampling. Weights are normalised internally.
inline double expected_kl(std::span<const double> posterior_draws, std::span<const double> weights,
                          const Belief& prior) {
    if (posterior_draws.empty()) throw Error(ErrorKind::InvalidArgument, "no posterior samples");
    if (weights.size() != posterior_draws.size()) {
        throw Error(ErrorKind::InvalidArgument, "weights and draws differ in length");
    }
    double sum = 0.0;
    double total = 0.0;
    for (std::size_t j = 0; j < posterior_draws.size(); ++j) {
        sum += weights[j] * kl_bernoulli(posterior_draws[j], prior.p());
        total += weights[j];
    }
    if (!(total > 0.0)) throw Error(ErrorKind::InvalidArgument, "weights sum to zero");
    return sum / total;
}

/// H(prior) minus the mean posterior entropy. Can be negative: a test that
/// pushes a confident belief toward 0.5 is penalised even though it is the
/// informative one.
inline double entropy_eig(const Belief& prior, std::span<const double> posterior_draws) {
    if (posterior_draws.empty()) throw Error(ErrorKind::InvalidArgument, "no posterior samples");
    double sum = 0.0;
    for (double q : posterior_draws) sum += entropy_bernoulli(q);
    return entropy_bernoulli(prior.p()) - sum / static_cast<double>(posterior_draws.size());
}

inline double entropy_eig(const Belief& prior, std::span<const double> posterior_draws,
                          std::span<const double> weights) {
    if (posterior_draws.empty()) throw Error(ErrorKind::InvalidArgument, "no posterior samples");
    if (weights.size() != posterior_draws.size()) {
        throw Error(ErrorKind::InvalidArgument, "weights and draws differ in length");
    }
    double sum = 0.0;
    double total = 0.0;
    for (std::size_t j = 0; j < posterior_draws.size(); ++j) {
        sum += weights[j] * entropy_bernoulli(posterior_draws[j]);
        total += weights[j];
    }
    if (!(total > 0.0)) throw Error(ErrorKind::InvalidArgument, "weights sum to zero");
    return entropy_bernoulli(prior.p()) - sum / total;
}

/// Information gain per unit of log-scaled cost. Uniform costs leave the gain unchanged.
inline double utility(double info_gain, const std::string& feature, const CostModel& costs) {
    if (costs.mode == CostMode::Uniform) return info_gain;
    const auto it = costs.raw_costs.find(feature);
    if (it == costs.raw_costs.end()) {
        throw Error(ErrorKind::InvalidArgument, "no cost for feature " + feature, feature);
    }
    return info_gain / std::log(it->second);
}

/// Target posterior for the stopping rule: gamma times the confidence gap,
/// placed on the far side of theta from the prior.
inline double stopping_target(const Belief& prior, const StoppingPolicy& policy) {
    const double gap = std::abs(prior.p() - policy.theta);
    return prior.p() < policy.theta ? policy.theta + policy.gamma * gap
                                    : policy.theta - policy.gamma * gap;
}

/// A test is worth acquiring iff its expected KL reaches this value.
inline double stopping_threshold(const Belief& prior, const StoppingPolicy& policy) {
    return kl_bernoulli(stopping_target(prior, policy), prior.p());
}

}  // namespace diagbed
