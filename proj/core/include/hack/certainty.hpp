#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hack/types.hpp"

namespace hack {

enum class CertaintyMethod { Probability, ProbDiff, SemanticEntropy, PredictiveEntropy, SamplingAgreement };

inline constexpr CertaintyMethod kAllCertaintyMethods[] = {
    CertaintyMethod::Probability, CertaintyMethod::ProbDiff, CertaintyMethod::SemanticEntropy,
    CertaintyMethod::PredictiveEntropy, CertaintyMethod::SamplingAgreement};

/// Oriented so that higher always means more certain: entropies are negated.
struct CertaintyScore {
    std::string item_id;
    std::string setting_id;
    CertaintyMethod method = CertaintyMethod::Probability;
    double raw = 0.0;
    double oriented = 0.0;
    bool degenerate = false;  // first-answer-token search skipped every token

    bool operator==(const CertaintyScore&) const = default;
};

struct FirstAnswerToken {
    std::size_t index = 0;
    bool degenerate = false;
};

/// Index of the first token not in skip_list; all-skipped streams fall back
/// to 0 with degenerate = true. Throws data_error on an empty token list.
FirstAnswerToken first_answer_token_index(const GenerationRecord& record, std::span<const std::string> skip_list);

CertaintyScore score_probability(const GenerationRecord& record, std::span<const std::string> skip_list);
CertaintyScore score_prob_diff(const GenerationRecord& record, std::span<const std::string> skip_list);

enum class ClusterEstimator { count, likelihood };

struct Cluster {
    std::vector<std::size_t> members;
    double prob = 0.0;
};

struct ClusterSet {
    std::vector<Cluster> clusters;
    ClusterEstimator estimator = ClusterEstimator::likelihood;
};

/// Symmetric meaning-equivalence predicate over generated texts.
using SameMeaning = std::function<bool(std::string_view, std::string_view)>;

/// Default oracle: equality of normalize_answer.
bool same_normalized_answer(std::string_view a, std::string_view b);

/// Greedy clustering: each sample joins the first cluster whose
/// representative (first member) it matches in both directions.
ClusterSet cluster_generations(std::span<const GenerationRecord> samples, const SameMeaning& oracle,
                               ClusterEstimator estimator);
ClusterSet cluster_generations(std::span<const GenerationRecord> samples,
                               ClusterEstimator estimator = ClusterEstimator::likelihood);

/// SE = -(1/C) sum_i log p(c_i). Returns the raw value.
double semantic_entropy(const ClusterSet& clusters);
/// PE = -(1/L) sum_i log p(l_i), log p(l_i) = sum of token logprobs.
double predictive_entropy(std::span<const GenerationRecord> samples);
/// 1 - |unique normalized texts| / |samples|.
double sampling_agreement(std::span<const GenerationRecord> samples);

CertaintyScore make_score(std::string item_id, std::string setting_id, CertaintyMethod method, double raw);

std::string to_string(CertaintyMethod m);
CertaintyMethod certainty_method_from_string(const std::string& s);
std::vector<CertaintyMethod> parse_method_list(const std::string& comma_separated);
std::string to_string(ClusterEstimator e);
ClusterEstimator cluster_estimator_from_string(const std::string& s);

void to_json(nlohmann::json& j, const CertaintyScore& v);
void from_json(const nlohmann::json& j, CertaintyScore& v);

}  // namespace hack
