#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hack/cm_analysis.hpp"
#include "hack/knowledge.hpp"

namespace hack {

enum class MitigationAction { abstained, answered };

struct MitigationOutcome {
    std::string item_id;
    std::string setting_id;
    std::string method_id;
    MitigationAction action = MitigationAction::answered;
    // Hallucination avoided: abstained on a would-be hallucination, or the
    // answer contains the gold answer. For Factual examples: still correct.
    bool mitigated = false;

    bool operator==(const MitigationOutcome&) const = default;
};

/// A ratio that is null (value unset) when its denominator is empty.
struct Metric {
    std::optional<double> value;
    std::int64_t numerator = 0;
    std::int64_t denominator = 0;
    std::string null_reason;

    bool operator==(const Metric&) const = default;
};

Metric ratio_metric(std::int64_t numerator, std::int64_t denominator, const std::string& null_reason);

/// |M ∩ C_d| / |C_d|.
Metric cm_d(const IdSet& mitigated, const IdSet& flagged);

struct CMScore {
    Metric cm;    // over the intersection of method sets
    Metric cm_f;  // over the union
};

/// Throws usage_error when no method set is given.
CMScore cm_score(const IdSet& mitigated, std::span<const IdSet> method_sets);

enum class AccuracyWeighting { per_example, per_class };

struct AccuracyMetrics {
    Metric acc;
    Metric h_acc;
    Metric nh_acc;
};

/// H-ACC: share of hallucination-labeled examples (HKplus, HKminus) that were
/// mitigated. NH-ACC: share of Factual examples answered and still correct.
/// ACC blends both, weighted per example (default) or as the mean of the two.
/// Throws data_error when a labeled example has no outcome.
AccuracyMetrics accuracy_metrics(std::span<const MitigationOutcome> outcomes,
                                 std::span<const HallucinationLabel> labels,
                                 AccuracyWeighting weighting = AccuracyWeighting::per_example);

struct EvalReport {
    std::string method_id;
    std::map<CertaintyMethod, Metric> cm_d;
    Metric cm;
    Metric cm_f;
    Metric acc;
    Metric h_acc;
    Metric nh_acc;

    bool operator==(const EvalReport&) const = default;
};

/// CM-d per detection method plus CM / CM-F and the accuracy triple for one
/// mitigation method. `outcomes` must all carry method_id.
EvalReport evaluate_mitigation(const std::string& method_id, std::span<const MitigationOutcome> outcomes,
                               std::span<const CMVerdict> verdicts, std::span<const HallucinationLabel> labels,
                               AccuracyWeighting weighting = AccuracyWeighting::per_example);

struct RenderedReport {
    nlohmann::json json;
    std::string markdown;
};

/// Rows sorted by method_id; null metrics render as an em dash with a footnote.
RenderedReport render_report(std::vector<EvalReport> reports);

/// Abstain whenever the oriented score does not exceed t_star.
std::vector<MitigationOutcome> abstention_outcomes(std::span<const CertaintyScore> scores,
                                                   const ThresholdResult& threshold,
                                                   std::span<const HallucinationLabel> labels,
                                                   const std::string& method_id);

/// Generative mitigation (e.g. steering): mitigated iff the new answer
/// contains a gold answer.
std::vector<MitigationOutcome> generation_outcomes(std::span<const GenerationRecord> records,
                                                   std::span<const HallucinationLabel> labels,
                                                   std::span<const QAItem> items, const std::string& method_id);

std::string to_string(MitigationAction a);

void to_json(nlohmann::json& j, const MitigationOutcome& v);
void from_json(const nlohmann::json& j, MitigationOutcome& v);
void to_json(nlohmann::json& j, const Metric& v);
void from_json(const nlohmann::json& j, Metric& v);
void to_json(nlohmann::json& j, const EvalReport& v);
void from_json(const nlohmann::json& j, EvalReport& v);

}  // namespace hack
