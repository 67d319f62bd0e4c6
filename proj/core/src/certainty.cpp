#include "hack/certainty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "hack/error.hpp"
#include "hack/text.hpp"
#include "json_enum.hpp"

namespace hack {
namespace {

constexpr std::array<std::pair<CertaintyMethod, std::string_view>, 5> kMethods{{
    {CertaintyMethod::Probability, "probability"},
    {CertaintyMethod::ProbDiff, "prob_diff"},
    {CertaintyMethod::SemanticEntropy, "semantic_entropy"},
    {CertaintyMethod::PredictiveEntropy, "predictive_entropy"},
    {CertaintyMethod::SamplingAgreement, "sampling_agreement"},
}};

constexpr std::array<std::pair<ClusterEstimator, std::string_view>, 2> kEstimators{{
    {ClusterEstimator::count, "count"},
    {ClusterEstimator::likelihood, "likelihood"},
}};

bool is_entropy(CertaintyMethod m) {
    return m == CertaintyMethod::SemanticEntropy || m == CertaintyMethod::PredictiveEntropy;
}

}  // namespace

FirstAnswerToken first_answer_token_index(const GenerationRecord& record, std::span<const std::string> skip_list) {
    if (record.tokens.empty()) {
        throw data_error("first_answer_token_index: record for " + record.item_id + " has no tokens");
    }
    for (std::size_t i = 0; i < record.tokens.size(); ++i) {
        const auto& tok = record.tokens[i].token;
        if (std::find(skip_list.begin(), skip_list.end(), tok) == skip_list.end()) return {i, false};
    }
    return {0, true};
}

CertaintyScore make_score(std::string item_id, std::string setting_id, CertaintyMethod method, double raw) {
    return CertaintyScore{std::move(item_id), std::move(setting_id), method, raw, is_entropy(method) ? -raw : raw,
                          false};
}

CertaintyScore score_probability(const GenerationRecord& record, std::span<const std::string> skip_list) {
    if (record.tokens.empty()) {
        if (record.first_token_topk.empty()) {
            throw data_error("score_probability: record for " + record.item_id +
                             " has neither token logprobs nor a first-token distribution");
        }
        return make_score(record.item_id, record.setting_id, CertaintyMethod::Probability,
                          record.first_token_topk.front().prob);
    }
    const auto first = first_answer_token_index(record, skip_list);
    auto score = make_score(record.item_id, record.setting_id, CertaintyMethod::Probability,
                            std::exp(record.tokens[first.index].logprob));
    score.degenerate = first.degenerate;
    return score;
}

CertaintyScore score_prob_diff(const GenerationRecord& record, std::span<const std::string> skip_list) {
    if (record.first_token_topk.size() < 2) {
        throw data_error("score_prob_diff: record for " + record.item_id + " has fewer than 2 top-k entries");
    }
    const bool degenerate = !record.tokens.empty() && first_answer_token_index(record, skip_list).degenerate;
    const double gap = record.first_token_topk[0].prob - record.first_token_topk[1].prob;
    auto score = make_score(record.item_id, record.setting_id, CertaintyMethod::ProbDiff, std::clamp(gap, 0.0, 1.0));
    score.degenerate = degenerate;
    return score;
}

bool same_normalized_answer(std::string_view a, std::string_view b) {
    return normalize_answer(a) == normalize_answer(b);
}

ClusterSet cluster_generations(std::span<const GenerationRecord> samples, const SameMeaning& oracle,
                               ClusterEstimator estimator) {
    if (samples.empty()) throw data_error("cluster_generations: no samples");
    ClusterSet out;
    out.estimator = estimator;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        bool placed = false;
        for (auto& c : out.clusters) {
            const auto& rep = samples[c.members.front()].text;
            if (oracle(samples[i].text, rep) && oracle(rep, samples[i].text)) {
                c.members.push_back(i);
                placed = true;
                break;
            }
        }
        if (!placed) out.clusters.push_back(Cluster{{i}, 0.0});
    }

    if (estimator == ClusterEstimator::count) {
        const double n = static_cast<double>(samples.size());
        for (auto& c : out.clusters) c.prob = static_cast<double>(c.members.size()) / n;
        return out;
    }

    // Likelihood weighting in log space: p(c) = sum_{i in c} exp(l_i) / sum_i exp(l_i).
    double max_ll = -std::numeric_limits<double>::infinity();
    for (const auto& s : samples) max_ll = std::max(max_ll, s.total_logprob());
    std::vector<double> weight(samples.size());
    double total = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        weight[i] = std::exp(samples[i].total_logprob() - max_ll);
        total += weight[i];
    }
    for (auto& c : out.clusters) {
        double w = 0.0;
        for (auto m : c.members) w += weight[m];
        c.prob = w / total;
    }
    return out;
}

ClusterSet cluster_generations(std::span<const GenerationRecord> samples, ClusterEstimator estimator) {
    return cluster_generations(samples, same_normalized_answer, estimator);
}

double semantic_entropy(const ClusterSet& clusters) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& c : clusters.clusters) {
        if (c.prob <= 0.0) continue;
        sum += std::log(c.prob);
        ++n;
    }
    if (n == 0) throw data_error("semantic_entropy: empty cluster set");
    return -sum / static_cast<double>(n);
}

double predictive_entropy(std::span<const GenerationRecord> samples) {
    if (samples.empty()) throw data_error("predictive_entropy: no samples");
    double sum = 0.0;
    for (const auto& s : samples) sum += s.total_logprob();
    return -sum / static_cast<double>(samples.size());
}

double sampling_agreement(std::span<const GenerationRecord> samples) {
    if (samples.empty()) throw data_error("sampling_agreement: no samples");
    std::set<std::string> unique;
    for (const auto& s : samples) unique.insert(normalize_answer(s.text));
    return 1.0 - static_cast<double>(unique.size()) / static_cast<double>(samples.size());
}

std::string to_string(CertaintyMethod m) { return detail::enum_name(kMethods, m); }
CertaintyMethod certainty_method_from_string(const std::string& s) {
    return detail::enum_value(kMethods, s, "certainty method");
}

std::vector<CertaintyMethod> parse_method_list(const std::string& comma_separated) {
    std::vector<CertaintyMethod> out;
    std::stringstream ss(comma_separated);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (part.empty()) continue;
        CertaintyMethod m{};
        try {
            m = certainty_method_from_string(part);
        } catch (const Error&) {
            throw usage_error("unknown certainty method '" + part + "'");
        }
        if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
    }
    if (out.empty()) throw usage_error("empty certainty method list");
    return out;
}

std::string to_string(ClusterEstimator e) { return detail::enum_name(kEstimators, e); }
ClusterEstimator cluster_estimator_from_string(const std::string& s) {
    return detail::enum_value(kEstimators, s, "cluster estimator");
}

void to_json(nlohmann::json& j, const CertaintyScore& v) {
    j = nlohmann::json{{"item_id", v.item_id},
                       {"setting_id", v.setting_id},
                       {"method", to_string(v.method)},
                       {"raw", v.raw},
                       {"oriented", v.oriented}};
    if (v.degenerate) j["degenerate"] = true;
}

void from_json(const nlohmann::json& j, CertaintyScore& v) {
    j.at("item_id").get_to(v.item_id);
    j.at("setting_id").get_to(v.setting_id);
    v.method = certainty_method_from_string(j.at("method").get<std::string>());
    j.at("raw").get_to(v.raw);
    j.at("oriented").get_to(v.oriented);
    v.degenerate = j.value("degenerate", false);
    const double expected = is_entropy(v.method) ? -v.raw : v.raw;
    if (v.oriented != expected) throw schema_error("certainty score orientation mismatch for " + v.item_id);
}

}  // namespace hack
