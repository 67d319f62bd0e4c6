#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hack/certainty.hpp"
#include "hack/knowledge.hpp"

namespace hack {

using IdSet = std::set<std::string>;

struct ThresholdResult {
    CertaintyMethod method = CertaintyMethod::Probability;
    double t_star = 0.0;
    std::int64_t objective = 0;
    std::int64_t n_H_used = 0;
    std::int64_t n_F_used = 0;
    std::uint64_t seed = 0;
    bool balanced = true;

    bool operator==(const ThresholdResult&) const = default;
};

struct BalancedSample {
    std::vector<double> hallucinated;
    std::vector<double> factual;
};

/// Draws min(|H|, |F|) scores from each side without replacement. Selected
/// elements keep their input order. Throws data_error on empty input.
BalancedSample balanced_sample(std::span<const double> hallucinated, std::span<const double> factual,
                               std::uint64_t seed);

/// Misclassifications at threshold t: #{h > t} + #{f < t}.
std::int64_t threshold_objective(std::span<const double> hallucinated, std::span<const double> factual, double t);

/// Candidate thresholds: midpoints between consecutive distinct pooled
/// scores plus one sentinel 1.0 below the minimum and one 1.0 above the maximum.
std::vector<double> threshold_candidates(std::span<const double> hallucinated, std::span<const double> factual);

/// Exhaustive minimisation of the objective over threshold_candidates; the
/// largest minimiser wins ties (the stricter threshold). O(n log n) sweep.
ThresholdResult optimize_threshold(std::span<const double> hallucinated, std::span<const double> factual);

struct CMVerdict {
    std::string item_id;
    std::string setting_id;
    std::map<CertaintyMethod, bool> per_method;
    bool in_intersection = false;
    bool in_union = false;

    bool operator==(const CMVerdict&) const = default;
};

/// Flags HKplus examples whose oriented score exceeds each method's t_star.
/// Non-HKplus labels produce no verdict. Throws data_error when an HKplus
/// example lacks a score for a requested method.
std::vector<CMVerdict> detect_cm(std::span<const CertaintyScore> scores, std::span<const HallucinationLabel> labels,
                                 const std::map<CertaintyMethod, ThresholdResult>& thresholds);

/// Throws data_error when both sets are empty.
double jaccard(const IdSet& a, const IdSet& b);

struct OverlapReport {
    std::string set_a_id;
    std::string set_b_id;
    double jaccard = 0.0;
    double permutation_p = 1.0;
    std::int64_t n_resamples = 0;
    std::uint64_t seed = 0;
    std::int64_t n_ge_observed = 0;

    bool operator==(const OverlapReport&) const = default;
};

/// Resamples |A| ids from pool_a and |B| ids from pool_b without replacement;
/// p = (1 + #{resampled jaccard >= observed}) / (1 + n_resamples). Resample i
/// uses seed mix_seed(seed, i), so results do not depend on thread count.
OverlapReport permutation_test(const IdSet& observed_a, const IdSet& observed_b, const IdSet& pool_a,
                               const IdSet& pool_b, std::int64_t n_resamples = 10000, std::uint64_t seed = 0,
                               std::string set_a_id = "A", std::string set_b_id = "B");

void to_json(nlohmann::json& j, const ThresholdResult& v);
void from_json(const nlohmann::json& j, ThresholdResult& v);
void to_json(nlohmann::json& j, const CMVerdict& v);
void from_json(const nlohmann::json& j, CMVerdict& v);
void to_json(nlohmann::json& j, const OverlapReport& v);
void from_json(const nlohmann::json& j, OverlapReport& v);

}  // namespace hack
