#pragma once

// Evaluation metrics: thresholded classification scores, rank AUC,
// one-dimensional distribution distances, best-of-k error and the
// Bayesian bootstrap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "diagbed/error.hpp"

namespace diagbed {

struct ClassificationMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::optional<double> auc;  // empty when only one class is present
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Mann-Whitney AUC with ties given half credit. Empty for single-class labels.
inline std::optional<double> roc_auc(std::span<const int> labels, std::span<const double> scores) {
    if (labels.size() != scores.size()) throw Error(ErrorKind::InvalidArgument, "labels and risks differ in length");
    const std::size_t n = labels.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double pos_rank_sum = 0.0;
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] == 1) {
            ++pos;
            pos_rank_sum += rank[i];
        }
    }
    const std::size_t neg = n - pos;
    if (pos == 0 || neg == 0) return std::nullopt;
    const double u = pos_rank_sum - static_cast<double>(pos) * static_cast<double>(pos + 1) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

inline ClassificationMetrics compute_classification_metrics(std::span<const int> labels, std::span<const double> risks,
                                                            double threshold = 0.5) {
    if (labels.size() != risks.size()) throw Error(ErrorKind::InvalidArgument, "labels and risks differ in length");
    if (labels.empty()) throw Error(ErrorKind::InvalidArgument, "no episodes to score");
    ClassificationMetrics m;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw Error(ErrorKind::InvalidArgument, "labels must be 0 or 1");
        const bool predicted = risks[i] >= threshold;
        if (predicted && labels[i] == 1) ++m.tp;
        if (predicted && labels[i] == 0) ++m.fp;
        if (!predicted && labels[i] == 0) ++m.tn;
        if (!predicted && labels[i] == 1) ++m.fn;
    }
    const auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
    m.accuracy = ratio(m.tp + m.tn, labels.size());
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.recall = ratio(m.tp, m.tp + m.fn);
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    m.auc = roc_auc(labels, risks);
    return m;
}

/// 1-Wasserstein distance between two empirical distributions: the integral
/// of |F_a - F_b| over the merged support.
inline double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw Error(ErrorKind::InvalidArgument, "empty sample");
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    std::vector<double> all(x);
    all.insert(all.end(), y.begin(), y.end());
    std::sort(all.begin(), all.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < all.size(); ++i) {
        const double width = all[i + 1] - all[i];
        if (width == 0.0) continue;
        const auto fa = static_cast<double>(std::upper_bound(x.begin(), x.end(), all[i]) - x.begin()) / x.size();
        const auto fb = static_cast<double>(std::upper_bound(y.begin(), y.end(), all[i]) - y.begin()) / y.size();
        total += std::abs(fa - fb) * width;
    }
    return total;
}

namespace detail {

inline double mean_abs_diff(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (double x : a) {
        for (double y : b) sum += std::abs(x - y);
    }
    return sum / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

}  // namespace detail

/// Energy distance sqrt(2E|A-B| - E|A-A'| - E|B-B'|) over all sample pairs.
inline double energy_distance_1d(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw Error(ErrorKind::InvalidArgument, "empty sample");
    const double d = 2.0 * detail::mean_abs_diff(a, b) - detail::mean_abs_diff(a, a) - detail::mean_abs_diff(b, b);
    return std::sqrt(std::max(d, 0.0));
}

/// Min-max scaling by the true data's range; values outside it clamp to [0,1].
inline std::vector<double> normalize_feature(std::span<const double> values, double lo, double hi) {
    if (!(hi > lo)) throw Error(ErrorKind::InvalidArgument, "constant feature");
    std::vector<double> out;
    out.reserve(values.size());
    for (double v : values) out.push_back(std::clamp((v - lo) / (hi - lo), 0.0, 1.0));
    return out;
}

/// Smallest absolute error among the first k samples.
inline double best_of_k_mae(std::span<const double> samples, double truth, std::size_t k) {
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be positive");
    if (k > samples.size()) throw Error(ErrorKind::InvalidArgument, "k exceeds the number of samples");
    double best = std::abs(samples[0] - truth);
    for (std::size_t i = 1; i < k; ++i) best = std::min(best, std::abs(samples[i] - truth));
    return best;
}

struct MeanStd {
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
};

inline MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) return {};
    double sum = 0.0;
    for (double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - mean) * (v - mean);
    return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

/// Linear-interpolation percentile of sorted data, q in [0,1].
inline double percentile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw Error(ErrorKind::InvalidArgument, "empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct BootstrapSummary {
    double mean = 0.0;
    double std = 0.0;
    double lower = 0.0;
    double upper = 0.0;
};

/// Flat-Dirichlet reweighting of the values; summarises the distribution of weighted means.
inline BootstrapSummary bayesian_bootstrap(std::span<const double> values, std::size_t draws, std::uint64_t seed) {
    if (values.empty()) throw Error(ErrorKind::InvalidArgument, "empty sample");
    if (draws < 1) throw Error(ErrorKind::InvalidArgument, "draws must be positive");
    std::mt19937_64 rng(seed);
    std::exponential_distribution<double> unit_exp(1.0);
    std::vector<double> means;
    means.reserve(draws);
    std::vector<double> w(values.size());
    for (std::size_t d = 0; d < draws; ++d) {
        double total = 0.0;
        for (auto& x : w) total += (x = unit_exp(rng));
        double m = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) m += w[i] * values[i];
        means.push_back(m / total);
    }
    const auto ms = mean_std(means);
    std::sort(means.begin(), means.end());
    BootstrapSummary s;
    s.mean = ms.mean;
    s.std = ms.std;
    s.lower = std::min(percentile_sorted(means, 0.025), s.mean);
    s.upper = std::max(percentile_sorted(means, 0.975), s.mean);
    return s;
}

}  // namespace diagbed
