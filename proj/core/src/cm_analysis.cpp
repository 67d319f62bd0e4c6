#include "hack/cm_analysis.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <unordered_map>

#include "hack/error.hpp"
#include "hack/rng.hpp"
#include "hack/util.hpp"

namespace hack {

BalancedSample balanced_sample(std::span<const double> hallucinated, std::span<const double> factual,
                               std::uint64_t seed) {
    if (hallucinated.empty() || factual.empty()) throw data_error("balanced_sample: empty H or F");
    const std::size_t n = std::min(hallucinated.size(), factual.size());
    Rng rng(seed);
    const auto pick = [&](std::span<const double> values) {
        auto idx = rng.sample_indices(values.size(), n);
        std::sort(idx.begin(), idx.end());
        std::vector<double> out;
        out.reserve(n);
        for (auto i : idx) out.push_back(values[i]);
        return out;
    };
    BalancedSample s;
    s.hallucinated = pick(hallucinated);
    s.factual = pick(factual);
    return s;
}

std::int64_t threshold_objective(std::span<const double> hallucinated, std::span<const double> factual, double t) {
    std::int64_t n = 0;
    for (double h : hallucinated) n += h > t ? 1 : 0;
    for (double f : factual) n += f < t ? 1 : 0;
    return n;
}

std::vector<double> threshold_candidates(std::span<const double> hallucinated, std::span<const double> factual) {
    std::vector<double> pooled(hallucinated.begin(), hallucinated.end());
    pooled.insert(pooled.end(), factual.begin(), factual.end());
    if (pooled.empty()) return {};
    std::sort(pooled.begin(), pooled.end());
    pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());
    std::vector<double> out;
    out.reserve(pooled.size() + 1);
    out.push_back(pooled.front() - 1.0);
    for (std::size_t i = 0; i + 1 < pooled.size(); ++i) out.push_back(pooled[i] + (pooled[i + 1] - pooled[i]) / 2.0);
    out.push_back(pooled.back() + 1.0);
    return out;
}

ThresholdResult optimize_threshold(std::span<const double> hallucinated, std::span<const double> factual) {
    if (hallucinated.empty() || factual.empty()) throw data_error("optimize_threshold: empty H or F");
    std::vector<double> h(hallucinated.begin(), hallucinated.end());
    std::vector<double> f(factual.begin(), factual.end());
    std::sort(h.begin(), h.end());
    std::sort(f.begin(), f.end());

    ThresholdResult best;
    best.n_H_used = static_cast<std::int64_t>(h.size());
    best.n_F_used = static_cast<std::int64_t>(f.size());
    best.objective = std::numeric_limits<std::int64_t>::max();
    for (double t : threshold_candidates(h, f)) {
        const auto above = static_cast<std::int64_t>(h.end() - std::upper_bound(h.begin(), h.end(), t));
        const auto below = static_cast<std::int64_t>(std::lower_bound(f.begin(), f.end(), t) - f.begin());
        const std::int64_t objective = above + below;
        // Candidates ascend, so "<=" keeps the largest minimiser.
        if (objective <= best.objective) {
            best.objective = objective;
            best.t_star = t;
        }
    }
    return best;
}

std::vector<CMVerdict> detect_cm(std::span<const CertaintyScore> scores, std::span<const HallucinationLabel> labels,
                                 const std::map<CertaintyMethod, ThresholdResult>& thresholds) {
    if (thresholds.empty()) throw usage_error("detect_cm: no thresholds given");
    std::unordered_map<std::string, double> by_key;
    by_key.reserve(scores.size());
    for (const auto& s : scores) by_key[example_key(s.item_id, s.setting_id) + '\t' + to_string(s.method)] = s.oriented;

    std::vector<CMVerdict> out;
    for (const auto& label : labels) {
        if (label.label != HallucinationClass::HKplus) continue;
        CMVerdict v{label.item_id, label.setting_id, {}, true, false};
        for (const auto& [method, threshold] : thresholds) {
            const auto it = by_key.find(example_key(label.item_id, label.setting_id) + '\t' + to_string(method));
            if (it == by_key.end()) {
                throw data_error("detect_cm: no " + to_string(method) + " score for HKplus example " + label.item_id +
                                 " / " + label.setting_id);
            }
            const bool flagged = it->second > threshold.t_star;
            v.per_method[method] = flagged;
            v.in_intersection = v.in_intersection && flagged;
            v.in_union = v.in_union || flagged;
        }
        out.push_back(std::move(v));
    }
    return out;
}

double jaccard(const IdSet& a, const IdSet& b) {
    if (a.empty() && b.empty()) throw data_error("jaccard: both sets are empty");
    std::size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    const std::size_t uni = a.size() + b.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

OverlapReport permutation_test(const IdSet& observed_a, const IdSet& observed_b, const IdSet& pool_a,
                               const IdSet& pool_b, std::int64_t n_resamples, std::uint64_t seed,
                               std::string set_a_id, std::string set_b_id) {
    if (n_resamples < 0) throw usage_error("permutation_test: negative resample count");
    if (observed_a.size() > pool_a.size() || observed_b.size() > pool_b.size()) {
        throw data_error("permutation_test: observed set larger than its pool");
    }
    for (const auto& x : observed_a) {
        if (!pool_a.count(x)) throw data_error("permutation_test: observed id '" + x + "' missing from pool A");
    }
    for (const auto& x : observed_b) {
        if (!pool_b.count(x)) throw data_error("permutation_test: observed id '" + x + "' missing from pool B");
    }

    // Integer ids over the union of both pools.
    std::unordered_map<std::string, std::uint32_t> ids;
    std::vector<std::uint32_t> pa;
    std::vector<std::uint32_t> pb;
    for (const auto& x : pool_a) pa.push_back(ids.emplace(x, static_cast<std::uint32_t>(ids.size())).first->second);
    for (const auto& x : pool_b) pb.push_back(ids.emplace(x, static_cast<std::uint32_t>(ids.size())).first->second);

    const std::size_t na = observed_a.size();
    const std::size_t nb = observed_b.size();
    std::size_t obs_inter = 0;
    for (const auto& x : observed_a) obs_inter += observed_b.count(x);
    const std::size_t obs_union = na + nb - obs_inter;

    OverlapReport report;
    report.set_a_id = std::move(set_a_id);
    report.set_b_id = std::move(set_b_id);
    report.jaccard = jaccard(observed_a, observed_b);
    report.n_resamples = n_resamples;
    report.seed = seed;

    const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(worker_count(), n_resamples));
    std::vector<std::int64_t> counts(chunks, 0);
    parallel_for(chunks, [&](std::size_t c) {
        std::vector<std::uint32_t> stamp(ids.size(), 0);
        std::uint32_t epoch = 0;
        for (auto i = static_cast<std::int64_t>(c); i < n_resamples; i += static_cast<std::int64_t>(chunks)) {
            Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
            const auto ia = rng.sample_indices(pa.size(), na);
            const auto ib = rng.sample_indices(pb.size(), nb);
            ++epoch;
            for (auto k : ia) stamp[pa[k]] = epoch;
            std::size_t inter = 0;
            for (auto k : ib) inter += stamp[pb[k]] == epoch ? 1 : 0;
            const std::size_t uni = na + nb - inter;
            // inter / uni >= obs_inter / obs_union, compared exactly.
            if (inter * obs_union >= obs_inter * uni) ++counts[c];
        }
    });
    for (auto n : counts) report.n_ge_observed += n;
    report.permutation_p =
        static_cast<double>(1 + report.n_ge_observed) / static_cast<double>(1 + report.n_resamples);
    return report;
}

void to_json(nlohmann::json& j, const ThresholdResult& v) {
    j = nlohmann::json{{"method", to_string(v.method)}, {"t_star", v.t_star},     {"objective", v.objective},
                       {"n_H_used", v.n_H_used},        {"n_F_used", v.n_F_used}, {"seed", v.seed},
                       {"balanced", v.balanced}};
}

void from_json(const nlohmann::json& j, ThresholdResult& v) {
    v.method = certainty_method_from_string(j.at("method").get<std::string>());
    j.at("t_star").get_to(v.t_star);
    j.at("objective").get_to(v.objective);
    j.at("n_H_used").get_to(v.n_H_used);
    j.at("n_F_used").get_to(v.n_F_used);
    v.seed = j.value("seed", std::uint64_t{0});
    v.balanced = j.value("balanced", true);
}

void to_json(nlohmann::json& j, const CMVerdict& v) {
    nlohmann::json per = nlohmann::json::object();
    for (const auto& [m, flag] : v.per_method) per[to_string(m)] = flag;
    j = nlohmann::json{{"item_id", v.item_id},
                       {"setting_id", v.setting_id},
                       {"per_method", std::move(per)},
                       {"in_intersection", v.in_intersection},
                       {"in_union", v.in_union}};
}

void from_json(const nlohmann::json& j, CMVerdict& v) {
    j.at("item_id").get_to(v.item_id);
    j.at("setting_id").get_to(v.setting_id);
    v.per_method.clear();
    for (const auto& [name, flag] : j.at("per_method").items()) {
        v.per_method[certainty_method_from_string(name)] = flag.get<bool>();
    }
    j.at("in_intersection").get_to(v.in_intersection);
    j.at("in_union").get_to(v.in_union);
    if (v.in_intersection && !v.in_union) throw schema_error("CMVerdict " + v.item_id + ": intersection without union");
}

void to_json(nlohmann::json& j, const OverlapReport& v) {
    j = nlohmann::json{{"set_a_id", v.set_a_id},          {"set_b_id", v.set_b_id},
                       {"jaccard", v.jaccard},            {"permutation_p", v.permutation_p},
                       {"n_resamples", v.n_resamples},    {"seed", v.seed},
                       {"n_ge_observed", v.n_ge_observed}};
}

void from_json(const nlohmann::json& j, OverlapReport& v) {
    j.at("set_a_id").get_to(v.set_a_id);
    j.at("set_b_id").get_to(v.set_b_id);
    j.at("jaccard").get_to(v.jaccard);
    j.at("permutation_p").get_to(v.permutation_p);
    j.at("n_resamples").get_to(v.n_resamples);
    v.seed = j.value("seed", std::uint64_t{0});
    v.n_ge_observed = j.value("n_ge_observed", std::int64_t{0});
}

}  // namespace hack
