#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hack/certainty.hpp"
#include "hack/evaluation.hpp"
#include "hack/probe.hpp"
#include "hack/synth.hpp"
#include "hack/types.hpp"

namespace hack {

/// Everything a pipeline run depends on. Its canonical JSON hash is stamped
/// into every output so stages from different runs cannot be mixed.
struct RunConfig {
    std::uint64_t seed = 42;
    std::vector<CertaintyMethod> methods{CertaintyMethod::Probability, CertaintyMethod::ProbDiff};

    bool balanced_thresholds = true;

    ClusterEstimator estimator = ClusterEstimator::likelihood;
    bool include_low_temperature = true;
    std::string catalog_path;  // empty: built-in catalog

    bool require_double_asterisk = false;
    std::string lexicon_path;  // empty: synonym rule skipped

    Hook probe_hook = Hook::residual(15);
    ProbeAlgorithm probe_algorithm = ProbeAlgorithm::logreg;
    double cm_fraction = 0.65;
    std::vector<std::uint64_t> split_seeds{100, 200, 300};

    double alpha = 5.0;
    int n_heads = 48;

    std::int64_t n_resamples = 10000;

    AccuracyWeighting weighting = AccuracyWeighting::per_example;

    SynthConfig synth;  // its seed is replaced by `seed`
};

void to_json(nlohmann::json& j, const RunConfig& v);
void from_json(const nlohmann::json& j, RunConfig& v);

/// Reads a run config; unknown keys are schema errors, missing keys keep defaults.
RunConfig load_run_config(const std::filesystem::path& path);

/// Checks ranges and that referenced files exist; throws usage_error.
void validate(const RunConfig& config);

/// sha256 of the canonical (sorted-key) JSON form.
std::string config_hash(const RunConfig& config);

/// Stage names in pipeline order.
const std::vector<std::string>& stage_names();

/// Runs one stage reading from and writing to out_dir. Missing inputs raise
/// data_error naming the stage that produces them.
void run_stage(const std::string& stage, const RunConfig& config, const std::filesystem::path& out_dir);

/// Every stage in order.
void run_all(const RunConfig& config, const std::filesystem::path& out_dir);

/// Example keys of the evaluation split for one split seed: a 70/10/20 cut over
/// the non-excluded labels in file order.
struct ExampleSplit {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
};
ExampleSplit split_examples(std::span<const HallucinationLabel> labels, std::uint64_t split_seed);

}  // namespace hack
