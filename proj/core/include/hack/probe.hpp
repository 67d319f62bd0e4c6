#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hack/linalg.hpp"
#include "hack/types.hpp"

namespace hack {

/// Per-dimension standardisation; scale is the n-1 sample standard deviation,
/// replaced by 1 for constant columns.
struct FeatureNorm {
    std::vector<float> mean;
    std::vector<float> scale;

    Vector apply(std::span<const double> x) const;
    bool operator==(const FeatureNorm&) const = default;
};

FeatureNorm fit_feature_norm(const Matrix& x);
Vector apply_feature_norm(const FeatureNorm& norm, std::span<const double> x);

enum class ProbeAlgorithm { logreg, linear_svm };

struct TrainMeta {
    std::uint64_t seed = 0;
    double cm_fraction = 0.0;
    double l2 = 0.0;
    std::int64_t iters = 0;      // iteration cap
    double tol = 0.0;
    std::int64_t iters_run = 0;  // iterations actually performed

    bool operator==(const TrainMeta&) const = default;
};

/// Linear classifier over standardised features; positive decision = class 1.
/// Parameters are stored as float32 so the JSON form round-trips exactly.
struct ProbeModel {
    Hook hook;
    ProbeAlgorithm algorithm = ProbeAlgorithm::logreg;
    std::vector<float> weights;
    float bias = 0.0F;
    FeatureNorm feature_norm;
    TrainMeta train_meta;

    double decision(std::span<const double> x) const;
    int predict(std::span<const double> x) const { return decision(x) > 0.0 ? 1 : 0; }
    double accuracy(const Matrix& x, std::span<const int> y) const;

    bool operator==(const ProbeModel&) const = default;
};

struct LogregOptions {
    std::uint64_t seed = 0;
    double l2 = 1e-3;
    std::int64_t iters = 2000;
    double tol = 1e-6;  // gradient infinity-norm
};

/// Full-batch gradient descent on the L2-regularised mean logistic loss,
/// starting from zero weights. Step size is 1/L with L the loss's gradient
/// Lipschitz bound from a power iteration. Throws data_error on single-class y.
ProbeModel train_logreg(const Matrix& x, std::span<const int> y, const LogregOptions& options = {});

struct SvmOptions {
    double tol = 1e-5;
    std::int64_t max_iter = 1000000;
    double c = 1.0;
    std::uint64_t seed = 0;
};

/// Hinge-loss (L1-loss) linear SVM with a regularised bias feature, solved by
/// dual coordinate descent; stops when the projected-gradient spread of a
/// full pass drops below tol or after max_iter passes.
ProbeModel train_linear_svm(const Matrix& x, std::span<const int> y, const SvmOptions& options = {});

/// Indices of the resampled training set: every original index once, then
/// extra copies of CM examples (round-robin over a seeded order) until the
/// CM share reaches target_fraction. Non-CM examples are never duplicated.
std::vector<std::size_t> oversample_cm(const std::vector<bool>& is_cm, double target_fraction = 0.65,
                                       std::uint64_t seed = 0);

struct DataSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

/// Seeded shuffle then contiguous cut; sizes are floor(n * fraction) for
/// train and validation, remainder to test.
DataSplit split_indices(std::size_t n, double train_fraction, double validation_fraction, std::uint64_t seed);

struct HeadActivations {
    Hook hook;
    Matrix x;  // rows aligned with the shared label vector
};

struct HeadScore {
    Hook hook;
    double score = 0.0;  // validation accuracy in [0, 1]
};

/// Trains one probe per head on a 70/30 split and sorts heads by
/// validation accuracy, descending; ties by (layer, head) ascending.
std::vector<HeadScore> rank_heads(std::span<const HeadActivations> heads, std::span<const int> y,
                                  std::uint64_t split_seed, ProbeAlgorithm algorithm = ProbeAlgorithm::logreg);

Matrix select_rows(const Matrix& x, std::span<const std::size_t> rows);
std::vector<int> select_labels(std::span<const int> y, std::span<const std::size_t> rows);

std::string to_string(ProbeAlgorithm a);
ProbeAlgorithm probe_algorithm_from_string(const std::string& s);

void to_json(nlohmann::json& j, const ProbeModel& v);
void from_json(const nlohmann::json& j, ProbeModel& v);

}  // namespace hack
