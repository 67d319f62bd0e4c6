#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hack/knowledge.hpp"
#include "hack/linalg.hpp"
#include "hack/types.hpp"

namespace hack {

/// mean(factual) - mean(hallucinated).
Vector compute_direction(const Matrix& factual, const Matrix& hallucinated);

/// Reference semantics of the intervention: E' = E + alpha * direction.
Vector apply_steering_reference(std::span<const double> activation, std::span<const double> direction,
                                double alpha);

struct SteeringEntry {
    std::uint16_t layer = 0;
    std::uint16_t head = 0;
    std::vector<float> direction;
    double selection_score = 0.0;

    bool operator==(const SteeringEntry&) const = default;
};

/// Entries sorted by selection_score, descending. Directions travel as
/// base64 little-endian float32 in JSON.
struct SteeringSpec {
    double alpha = 5.0;
    std::vector<SteeringEntry> entries;

    std::size_t n_heads() const { return entries.size(); }
    bool operator==(const SteeringSpec&) const = default;
};

/// Throws schema_error if entries are unsorted or directions are empty.
void validate(const SteeringSpec& spec);

struct SteeringOutcome {
    HallucinationClass label = HallucinationClass::HKplus;
    std::int64_t n = 0;
    std::int64_t n_correct_after = 0;
    double rate = 0.0;

    bool operator==(const SteeringOutcome&) const = default;
};

/// Containment-match success rate of post-steering generations, one outcome
/// per class in {HKplus, HKminus, Factual} that has labeled examples.
/// Throws data_error when a labeled example has no post-steer record.
std::vector<SteeringOutcome> evaluate_steering(std::span<const GenerationRecord> post_steer,
                                               std::span<const HallucinationLabel> labels,
                                               std::span<const QAItem> items);

void to_json(nlohmann::json& j, const SteeringSpec& v);
void from_json(const nlohmann::json& j, SteeringSpec& v);
void to_json(nlohmann::json& j, const SteeringOutcome& v);
void from_json(const nlohmann::json& j, SteeringOutcome& v);

}  // namespace hack
