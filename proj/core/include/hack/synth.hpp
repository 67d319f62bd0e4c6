#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hack/knowledge.hpp"
#include "hack/linalg.hpp"
#include "hack/steering.hpp"
#include "hack/types.hpp"

namespace hack {

/// Knobs of the synthetic trace generator. Certainty is planted through a
/// latent c in [0, 1]: first-token probability (1 + 2c) / 3 and top-2 gap c.
struct SynthConfig {
    std::int64_t n_items = 1000;
    double rate_no_correct = 0.30;
    double rate_middle = 0.05;
    double rate_consistent = 0.65;
    double rate_hkplus_given_known = 0.10;
    double rate_cm_given_hkplus = 0.25;
    double certainty_gap = 0.4;  // distance between certain and uncertain means of c
    double certainty_sd = 0.1;
    int n_settings = 2;          // realistic_1 .. realistic_n
    // Residual-stream probe features.
    int activation_dim = 16;
    double activation_margin = 6.0;  // in units of the unit-variance noise
    std::uint16_t residual_layer = 15;
    // Attention-head features for steering.
    int head_layers = 4;
    int heads_per_layer = 4;
    int head_dim = 8;
    int n_signal_heads = 3;
    double head_margin = 3.0;
    // Share of HK+ examples whose knowledge a steering shift can recover.
    double rate_recoverable = 0.5;
    // Emit 10 temperature-1 samples plus one temperature-0.1 sample per example.
    bool sampling_scenario = false;
    std::uint64_t seed = 42;

    bool operator==(const SynthConfig&) const = default;
};

/// Throws usage_error on rates outside [0, 1] or not summing to 1.
void validate(const SynthConfig& config);

struct PlantedSetting {
    std::string setting_id;
    HallucinationClass label = HallucinationClass::Factual;  // Excluded = middle range
    bool is_cm = false;
    bool recoverable = false;
    bool correct_text = false;  // activation class: + side of the planted direction

    bool operator==(const PlantedSetting&) const = default;
};

struct ManifestEntry {
    std::string item_id;
    KnowledgeLabel knowledge = KnowledgeLabel::NoCorrect;
    int n_correct = 0;
    std::vector<PlantedSetting> settings;

    bool operator==(const ManifestEntry&) const = default;
};

struct SynthCorpus {
    std::vector<QAItem> items;
    std::vector<GenerationRecord> generations;
    std::vector<ActivationRecord> activations;
    std::vector<ManifestEntry> manifest;
};

std::vector<std::string> synth_setting_ids(const SynthConfig& config);

/// Largest-remainder allocation of `total` across `weights` (normalised);
/// ties go to the lower index.
std::vector<std::int64_t> largest_remainder(std::int64_t total, std::span<const double> weights);

SynthCorpus synth_generate(const SynthConfig& config);

/// Unit direction planted at a head (or the residual hook).
Vector planted_direction(const SynthConfig& config, const Hook& hook);
bool is_signal_head(const SynthConfig& config, const Hook& hook);

/// Synthetic stand-in for in-model steering: shifts each example's head
/// activations by alpha * direction and answers with the gold text iff the
/// example carries recoverable knowledge and the summed projection onto the
/// planted directions is positive. Returns one greedy record per key.
std::vector<GenerationRecord> synth_steer(const SynthConfig& config, const SynthCorpus& corpus,
                                          const SteeringSpec& spec, std::span<const std::string> example_keys);

void to_json(nlohmann::json& j, const SynthConfig& v);
void from_json(const nlohmann::json& j, SynthConfig& v);
void to_json(nlohmann::json& j, const ManifestEntry& v);
void from_json(const nlohmann::json& j, ManifestEntry& v);

}  // namespace hack
