#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fambench/family.hpp"
#include "fambench/rng.hpp"

namespace fambench {

enum class MetricDirection { lower_better, higher_better };

inline std::string to_string(MetricDirection d) {
    return d == MetricDirection::lower_better ? "lower_better" : "higher_better";
}

inline MetricDirection direction_from_string(const std::string& s) {
    if (s == "lower_better") return MetricDirection::lower_better;
    if (s == "higher_better") return MetricDirection::higher_better;
    throw std::invalid_argument("unknown metric direction '" + s + "'");
}

enum class DistributionScheme { uniform, explicit_mass, failure_low, failure_high, random };

inline std::string to_string(DistributionScheme s) {
    switch (s) {
        case DistributionScheme::uniform: return "uniform";
        case DistributionScheme::explicit_mass: return "explicit";
        case DistributionScheme::failure_low: return "failure_low";
        case DistributionScheme::failure_high: return "failure_high";
        case DistributionScheme::random: return "random";
    }
    throw std::logic_error("unreachable");
}

// Importance mass p_i over the family members: the empirical point-MDP
// distribution. Always sums to one.
struct ImportanceDistribution {
    std::size_t family_size = 0;
    std::vector<double> mass;
    DistributionScheme scheme = DistributionScheme::uniform;
    // Set when a builder had to fall back to uniform (e.g. a failure split
    // where every point or no point is a failure).
    bool degraded_to_uniform = false;

    double operator[](std::size_t i) const { return mass[i]; }
};

inline constexpr double kMassTolerance = 1e-12;

inline void validate(const ImportanceDistribution& dist) {
    if (dist.mass.size() != dist.family_size)
        throw std::invalid_argument("importance mass length differs from family size");
    if (dist.mass.empty()) throw std::invalid_argument("importance distribution is empty");
    double total = 0.0;
    for (double p : dist.mass) {
        if (!(p >= 0.0) || !std::isfinite(p))
            throw std::invalid_argument("importance mass must be finite and non-negative");
        total += p;
    }
    if (std::abs(total - 1.0) > kMassTolerance)
        throw std::invalid_argument("importance mass must sum to 1 within 1e-12, got " +
                                    std::to_string(total));
}

namespace detail {
inline std::vector<double> normalized(std::vector<double> w) {
    double total = 0.0;
    for (double v : w) total += v;
    if (!(total > 0.0)) throw std::invalid_argument("mass vector must have positive total");
    for (double& v : w) v /= total;
    // Pin the sum exactly onto 1 by absorbing rounding into the largest entry.
    double sum = 0.0;
    std::size_t largest = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        sum += w[i];
        if (w[i] > w[largest]) largest = i;
    }
    w[largest] += 1.0 - sum;
    return w;
}
}  // namespace detail

inline ImportanceDistribution build_uniform(const MdpFamily& family) {
    ImportanceDistribution d;
    d.family_size = family.size();
    d.mass.assign(family.size(), 1.0 / static_cast<double>(family.size()));
    d.scheme = DistributionScheme::uniform;
    d.mass = detail::normalized(std::move(d.mass));
    return d;
}

inline ImportanceDistribution build_explicit(const MdpFamily& family, std::vector<double> mass) {
    if (mass.size() != family.size())
        throw std::invalid_argument("explicit mass length differs from family size");
    for (double v : mass)
        if (!(v >= 0.0) || !std::isfinite(v))
            throw std::invalid_argument("explicit mass must be finite and non-negative");
    ImportanceDistribution d;
    d.family_size = family.size();
    d.mass = detail::normalized(std::move(mass));
    d.scheme = DistributionScheme::explicit_mass;
    return d;
}

enum class FailureWeightMode { low, high };

// Splits the family into failure / non-failure groups against a reference
// score vector (typically the baseline controller's raw scores) and skews
// per-item mass by `low_high_ratio` toward or away from the failures.
// A score is a failure when it is worse than `threshold` under `direction`.
inline ImportanceDistribution build_failure_weighted(const MdpFamily& family,
                                                     const std::vector<double>& reference_scores,
                                                     double threshold, FailureWeightMode mode,
                                                     MetricDirection direction,
                                                     double low_high_ratio = 4.0,
                                                     std::uint64_t /*rng_seed*/ = 0) {
    if (reference_scores.size() != family.size())
        throw std::invalid_argument("reference score length differs from family size");
    if (!std::isfinite(threshold)) throw std::invalid_argument("threshold must be finite");
    if (!(low_high_ratio > 0.0)) throw std::invalid_argument("low_high_ratio must be positive");

    std::vector<bool> failure(family.size());
    std::size_t failures = 0;
    for (std::size_t i = 0; i < family.size(); ++i) {
        const double s = reference_scores[i];
        failure[i] = direction == MetricDirection::lower_better ? s > threshold : s < threshold;
        failures += failure[i] ? 1 : 0;
    }

    ImportanceDistribution d;
    d.family_size = family.size();
    d.scheme =
        mode == FailureWeightMode::low ? DistributionScheme::failure_low : DistributionScheme::failure_high;
    if (failures == 0 || failures == family.size()) {
        d.mass.assign(family.size(), 1.0 / static_cast<double>(family.size()));
        d.degraded_to_uniform = true;
        d.mass = detail::normalized(std::move(d.mass));
        return d;
    }
    const double failure_weight = mode == FailureWeightMode::high ? low_high_ratio : 1.0 / low_high_ratio;
    d.mass.resize(family.size());
    for (std::size_t i = 0; i < family.size(); ++i) d.mass[i] = failure[i] ? failure_weight : 1.0;
    d.mass = detail::normalized(std::move(d.mass));
    return d;
}

// Uniformly random prevalence: independent uniform(0,1] weights, normalized.
inline ImportanceDistribution build_random(const MdpFamily& family, std::uint64_t rng_seed) {
    Rng rng(mix_seed(rng_seed, 0x5e1ec7edULL));
    ImportanceDistribution d;
    d.family_size = family.size();
    d.mass.resize(family.size());
    for (double& p : d.mass) p = rng.uniform_pos();
    d.mass = detail::normalized(std::move(d.mass));
    d.scheme = DistributionScheme::random;
    return d;
}

}  // namespace fambench
