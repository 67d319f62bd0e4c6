#include "hack/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hack/error.hpp"
#include "hack/rng.hpp"
#include "hack/util.hpp"
#include "json_enum.hpp"

namespace hack {
namespace {

constexpr std::array<std::pair<ProbeAlgorithm, std::string_view>, 2> kAlgorithms{{
    {ProbeAlgorithm::logreg, "logreg"},
    {ProbeAlgorithm::linear_svm, "linear_svm"},
}};

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void check_binary(const Matrix& x, std::span<const int> y, const char* who) {
    if (x.empty()) throw data_error(std::string(who) + ": no training examples");
    if (x.size() != y.size()) throw data_error(std::string(who) + ": feature rows and labels differ in count");
    column_count(x);
    bool has0 = false;
    bool has1 = false;
    for (int v : y) {
        if (v == 0) has0 = true;
        else if (v == 1) has1 = true;
        else throw data_error(std::string(who) + ": labels must be 0 or 1");
    }
    if (!has0 || !has1) throw data_error(std::string(who) + ": both classes must be present");
}

Matrix standardize(const FeatureNorm& norm, const Matrix& x) {
    Matrix z;
    z.reserve(x.size());
    for (const auto& row : x) z.push_back(norm.apply(row));
    return z;
}

// Largest eigenvalue of [Z 1]^T [Z 1] / n by power iteration.
double gram_spectral_bound(const Matrix& z) {
    const std::size_t n = z.size();
    const std::size_t d = z.front().size() + 1;
    Vector v(d, 1.0 / std::sqrt(static_cast<double>(d)));
    double lambda = 0.0;
    for (int it = 0; it < 100; ++it) {
        Vector next(d, 0.0);
        for (const auto& row : z) {
            double s = v[d - 1];
            for (std::size_t k = 0; k + 1 < d; ++k) s += row[k] * v[k];
            for (std::size_t k = 0; k + 1 < d; ++k) next[k] += s * row[k];
            next[d - 1] += s;
        }
        for (auto& e : next) e /= static_cast<double>(n);
        const double nn = norm2(next);
        if (nn == 0.0) return 0.0;
        const double prev = lambda;
        lambda = nn;
        for (std::size_t k = 0; k < d; ++k) v[k] = next[k] / nn;
        if (std::abs(lambda - prev) <= 1e-9 * lambda) break;
    }
    // Power iteration approaches from below; pad to stay a valid bound.
    return lambda * 1.05;
}

}  // namespace

Vector FeatureNorm::apply(std::span<const double> x) const {
    if (x.size() != mean.size()) {
        throw data_error("feature norm: dimension " + std::to_string(x.size()) + " != " + std::to_string(mean.size()));
    }
    Vector out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i]) / scale[i];
    return out;
}

FeatureNorm fit_feature_norm(const Matrix& x) {
    if (x.empty()) throw data_error("fit_feature_norm: no rows");
    const std::size_t d = column_count(x);
    const double n = static_cast<double>(x.size());
    Vector mean(d, 0.0);
    for (const auto& row : x) {
        for (std::size_t k = 0; k < d; ++k) mean[k] += row[k];
    }
    for (auto& m : mean) m /= n;
    Vector var(d, 0.0);
    for (const auto& row : x) {
        for (std::size_t k = 0; k < d; ++k) var[k] += (row[k] - mean[k]) * (row[k] - mean[k]);
    }
    FeatureNorm norm;
    norm.mean = to_float(mean);
    norm.scale.resize(d);
    for (std::size_t k = 0; k < d; ++k) {
        const double sd = x.size() > 1 ? std::sqrt(var[k] / (n - 1.0)) : 0.0;
        const auto s = static_cast<float>(sd);
        norm.scale[k] = s > 0.0F ? s : 1.0F;
    }
    return norm;
}

Vector apply_feature_norm(const FeatureNorm& norm, std::span<const double> x) { return norm.apply(x); }

double ProbeModel::decision(std::span<const double> x) const {
    const Vector z = feature_norm.apply(x);
    double s = bias;
    for (std::size_t k = 0; k < z.size(); ++k) s += weights[k] * z[k];
    return s;
}

double ProbeModel::accuracy(const Matrix& x, std::span<const int> y) const {
    if (x.empty()) return 0.0;
    std::size_t ok = 0;
    for (std::size_t i = 0; i < x.size(); ++i) ok += predict(x[i]) == y[i] ? 1 : 0;
    return static_cast<double>(ok) / static_cast<double>(x.size());
}

ProbeModel train_logreg(const Matrix& x, std::span<const int> y, const LogregOptions& options) {
    check_binary(x, y, "train_logreg");
    ProbeModel model;
    model.algorithm = ProbeAlgorithm::logreg;
    model.feature_norm = fit_feature_norm(x);
    const Matrix z = standardize(model.feature_norm, x);
    const std::size_t n = z.size();
    const std::size_t d = z.front().size();

    const double step = 1.0 / (0.25 * gram_spectral_bound(z) + options.l2 + 1e-12);
    Vector w(d, 0.0);
    double b = 0.0;
    Vector grad(d);
    std::int64_t it = 0;
    for (; it < options.iters; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double grad_b = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double s = b;
            for (std::size_t k = 0; k < d; ++k) s += w[k] * z[i][k];
            const double r = sigmoid(s) - static_cast<double>(y[i]);
            for (std::size_t k = 0; k < d; ++k) grad[k] += r * z[i][k];
            grad_b += r;
        }
        double gmax = std::abs(grad_b / static_cast<double>(n));
        for (std::size_t k = 0; k < d; ++k) {
            grad[k] = grad[k] / static_cast<double>(n) + options.l2 * w[k];
            gmax = std::max(gmax, std::abs(grad[k]));
        }
        if (gmax < options.tol) break;
        for (std::size_t k = 0; k < d; ++k) w[k] -= step * grad[k];
        b -= step * grad_b / static_cast<double>(n);
    }
    model.weights = to_float(w);
    model.bias = static_cast<float>(b);
    model.train_meta = TrainMeta{options.seed, 0.0, options.l2, options.iters, options.tol, it};
    return model;
}

ProbeModel train_linear_svm(const Matrix& x, std::span<const int> y, const SvmOptions& options) {
    check_binary(x, y, "train_linear_svm");
    ProbeModel model;
    model.algorithm = ProbeAlgorithm::linear_svm;
    model.feature_norm = fit_feature_norm(x);
    const Matrix z = standardize(model.feature_norm, x);
    const std::size_t n = z.size();
    const std::size_t d = z.front().size();

    // Dual coordinate descent for min 1/2 |w|^2 + C sum hinge(y_i w.[z_i, 1]).
    Vector w(d + 1, 0.0);
    Vector alpha(n, 0.0);
    Vector qii(n);
    std::vector<double> sign(n);
    for (std::size_t i = 0; i < n; ++i) {
        qii[i] = dot(z[i], z[i]) + 1.0;
        sign[i] = y[i] == 1 ? 1.0 : -1.0;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(options.seed);

    std::int64_t it = 0;
    while (it < options.max_iter) {
        ++it;
        rng.shuffle(order);
        double pg_max = -std::numeric_limits<double>::infinity();
        double pg_min = std::numeric_limits<double>::infinity();
        for (const std::size_t i : order) {
            double s = w[d];
            for (std::size_t k = 0; k < d; ++k) s += w[k] * z[i][k];
            const double g = sign[i] * s - 1.0;
            double pg = g;
            if (alpha[i] == 0.0) pg = std::min(g, 0.0);
            else if (alpha[i] == options.c) pg = std::max(g, 0.0);
            pg_max = std::max(pg_max, pg);
            pg_min = std::min(pg_min, pg);
            if (std::abs(pg) > 1e-12) {
                const double old = alpha[i];
                alpha[i] = std::clamp(old - g / qii[i], 0.0, options.c);
                const double delta = (alpha[i] - old) * sign[i];
                for (std::size_t k = 0; k < d; ++k) w[k] += delta * z[i][k];
                w[d] += delta;
            }
        }
        if (pg_max - pg_min <= options.tol) break;
    }
    model.weights = to_float(std::span<const double>(w.data(), d));
    model.bias = static_cast<float>(w[d]);
    model.train_meta = TrainMeta{options.seed, 0.0, 1.0 / options.c, options.max_iter, options.tol, it};
    return model;
}

std::vector<std::size_t> oversample_cm(const std::vector<bool>& is_cm, double target_fraction, std::uint64_t seed) {
    if (!(target_fraction >= 0.0 && target_fraction < 1.0)) {
        throw usage_error("oversample_cm: target fraction must lie in [0, 1)");
    }
    std::vector<std::size_t> cm;
    for (std::size_t i = 0; i < is_cm.size(); ++i) {
        if (is_cm[i]) cm.push_back(i);
    }
    const std::size_t n_cm = cm.size();
    const std::size_t n_other = is_cm.size() - n_cm;
    if (n_cm == 0 || n_other == 0) throw data_error("oversample_cm: need at least one CM and one non-CM example");

    std::vector<std::size_t> out(is_cm.size());
    std::iota(out.begin(), out.end(), 0);

    // Smallest k with k / (k + m) >= f, i.e. k >= f m / (1 - f).
    const double m = static_cast<double>(n_other);
    auto k = static_cast<std::size_t>(std::ceil(target_fraction * m / (1.0 - target_fraction) - 1e-9));
    while (static_cast<double>(k) / (static_cast<double>(k) + m) < target_fraction - 1e-12) ++k;
    if (k <= n_cm) return out;

    Rng rng(seed);
    rng.shuffle(cm);
    for (std::size_t j = 0; j < k - n_cm; ++j) out.push_back(cm[j % n_cm]);
    return out;
}

DataSplit split_indices(std::size_t n, double train_fraction, double validation_fraction, std::uint64_t seed) {
    if (train_fraction < 0.0 || validation_fraction < 0.0 || train_fraction + validation_fraction > 1.0 + 1e-12) {
        throw usage_error("split_indices: fractions must be non-negative and sum to at most 1");
    }
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(seed);
    rng.shuffle(perm);
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction + 1e-9));
    const auto n_val = std::min(n - n_train,
                                static_cast<std::size_t>(std::floor(static_cast<double>(n) * validation_fraction + 1e-9)));
    DataSplit s;
    s.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.validation.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train),
                        perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    s.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), perm.end());
    return s;
}

Matrix select_rows(const Matrix& x, std::span<const std::size_t> rows) {
    Matrix out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(x.at(r));
    return out;
}

std::vector<int> select_labels(std::span<const int> y, std::span<const std::size_t> rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(y[r]);
    return out;
}

std::vector<HeadScore> rank_heads(std::span<const HeadActivations> heads, std::span<const int> y,
                                  std::uint64_t split_seed, ProbeAlgorithm algorithm) {
    for (const auto& h : heads) {
        if (h.x.size() != y.size()) {
            throw data_error("rank_heads: head " + h.hook.to_string() + " covers " + std::to_string(h.x.size()) +
                             " examples, labels cover " + std::to_string(y.size()));
        }
    }
    const DataSplit split = split_indices(y.size(), 0.7, 0.3, split_seed);
    const auto y_train = select_labels(y, split.train);
    const auto y_val = select_labels(y, split.validation);

    std::vector<HeadScore> scores(heads.size());
    parallel_for(heads.size(), [&](std::size_t i) {
        const Matrix x_train = select_rows(heads[i].x, split.train);
        ProbeModel model = algorithm == ProbeAlgorithm::logreg
                               ? train_logreg(x_train, y_train, LogregOptions{split_seed, 1e-3, 500, 1e-6})
                               : train_linear_svm(x_train, y_train, SvmOptions{1e-3, 10000, 1.0, split_seed});
        scores[i] = HeadScore{heads[i].hook, model.accuracy(select_rows(heads[i].x, split.validation), y_val)};
    });
    std::stable_sort(scores.begin(), scores.end(), [](const HeadScore& a, const HeadScore& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.hook < b.hook;
    });
    return scores;
}

std::string to_string(ProbeAlgorithm a) { return detail::enum_name(kAlgorithms, a); }
ProbeAlgorithm probe_algorithm_from_string(const std::string& s) {
    return detail::enum_value(kAlgorithms, s, "probe algorithm");
}

void to_json(nlohmann::json& j, const ProbeModel& v) {
    j = nlohmann::json{
        {"hook", v.hook},
        {"algorithm", to_string(v.algorithm)},
        {"dim", v.weights.size()},
        {"weights", encode_f32_vector(v.weights)},
        {"bias", static_cast<double>(v.bias)},
        {"feature_norm",
         {{"mean", encode_f32_vector(v.feature_norm.mean)}, {"scale", encode_f32_vector(v.feature_norm.scale)}}},
        {"train_meta",
         {{"seed", v.train_meta.seed},
          {"cm_fraction", v.train_meta.cm_fraction},
          {"l2", v.train_meta.l2},
          {"iters", v.train_meta.iters},
          {"tol", v.train_meta.tol},
          {"iters_run", v.train_meta.iters_run}}}};
}

void from_json(const nlohmann::json& j, ProbeModel& v) {
    j.at("hook").get_to(v.hook);
    v.algorithm = probe_algorithm_from_string(j.at("algorithm").get<std::string>());
    v.weights = decode_f32_vector(j.at("weights").get<std::string>());
    v.bias = static_cast<float>(j.at("bias").get<double>());
    const auto& norm = j.at("feature_norm");
    v.feature_norm.mean = decode_f32_vector(norm.at("mean").get<std::string>());
    v.feature_norm.scale = decode_f32_vector(norm.at("scale").get<std::string>());
    const auto& meta = j.at("train_meta");
    v.train_meta.seed = meta.value("seed", std::uint64_t{0});
    v.train_meta.cm_fraction = meta.value("cm_fraction", 0.0);
    v.train_meta.l2 = meta.value("l2", 0.0);
    v.train_meta.iters = meta.value("iters", std::int64_t{0});
    v.train_meta.tol = meta.value("tol", 0.0);
    v.train_meta.iters_run = meta.value("iters_run", std::int64_t{0});
    if (v.weights.size() != v.feature_norm.mean.size() || v.weights.size() != v.feature_norm.scale.size()) {
        throw schema_error("probe model: weights and feature norm differ in dimension");
    }
    for (float s : v.feature_norm.scale) {
        if (!(s > 0.0F)) throw schema_error("probe model: feature scale entries must be positive");
    }
}

}  // namespace hack
