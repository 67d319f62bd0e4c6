#include "hack/steering.hpp"

#include <map>
#include <unordered_map>

#include "hack/error.hpp"
#include "hack/text.hpp"
#include "hack/util.hpp"

namespace hack {

Vector compute_direction(const Matrix& factual, const Matrix& hallucinated) {
    if (factual.empty() || hallucinated.empty()) throw data_error("compute_direction: empty activation set");
    const std::size_t d = column_count(factual);
    if (column_count(hallucinated) != d) {
        throw data_error("compute_direction: factual and hallucinated activations differ in dimension");
    }
    Vector mf(d, 0.0);
    Vector mh(d, 0.0);
    for (const auto& row : factual) {
        for (std::size_t k = 0; k < d; ++k) mf[k] += row[k];
    }
    for (const auto& row : hallucinated) {
        for (std::size_t k = 0; k < d; ++k) mh[k] += row[k];
    }
    Vector out(d);
    const auto nf = static_cast<double>(factual.size());
    const auto nh = static_cast<double>(hallucinated.size());
    for (std::size_t k = 0; k < d; ++k) out[k] = mf[k] / nf - mh[k] / nh;
    return out;
}

Vector apply_steering_reference(std::span<const double> activation, std::span<const double> direction,
                                double alpha) {
    if (activation.size() != direction.size()) {
        throw data_error("apply_steering: activation has dimension " + std::to_string(activation.size()) +
                         ", direction " + std::to_string(direction.size()));
    }
    Vector out(activation.begin(), activation.end());
    if (alpha == 0.0) return out;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += alpha * direction[k];
    return out;
}

void validate(const SteeringSpec& spec) {
    for (std::size_t i = 0; i < spec.entries.size(); ++i) {
        const auto& e = spec.entries[i];
        if (e.direction.empty()) throw schema_error("steering spec: empty direction at entry " + std::to_string(i));
        if (e.selection_score < 0.0 || e.selection_score > 1.0) {
            throw schema_error("steering spec: selection_score outside [0, 1] at entry " + std::to_string(i));
        }
        if (i > 0 && spec.entries[i - 1].selection_score < e.selection_score) {
            throw schema_error("steering spec: entries must be sorted by selection_score, descending");
        }
    }
}

std::vector<SteeringOutcome> evaluate_steering(std::span<const GenerationRecord> post_steer,
                                               std::span<const HallucinationLabel> labels,
                                               std::span<const QAItem> items) {
    std::unordered_map<std::string, const QAItem*> item_by_id;
    for (const auto& it : items) item_by_id.emplace(it.id, &it);
    std::unordered_map<std::string, const GenerationRecord*> record_by_key;
    for (const auto& r : post_steer) record_by_key.emplace(example_key(r.item_id, r.setting_id), &r);

    std::map<HallucinationClass, SteeringOutcome> acc;
    for (const auto& l : labels) {
        if (l.label == HallucinationClass::Excluded) continue;
        const auto rec = record_by_key.find(example_key(l.item_id, l.setting_id));
        if (rec == record_by_key.end()) {
            throw data_error("evaluate_steering: no post-steer record for " + l.item_id + " / " + l.setting_id);
        }
        const auto item = item_by_id.find(l.item_id);
        if (item == item_by_id.end()) throw data_error("evaluate_steering: unknown item " + l.item_id);
        auto& o = acc[l.label];
        o.label = l.label;
        ++o.n;
        if (containment_match(rec->second->text, item->second->gold_answers)) ++o.n_correct_after;
    }
    std::vector<SteeringOutcome> out;
    for (auto cls : {HallucinationClass::HKplus, HallucinationClass::HKminus, HallucinationClass::Factual}) {
        const auto found = acc.find(cls);
        if (found == acc.end()) continue;
        auto o = found->second;
        o.rate = static_cast<double>(o.n_correct_after) / static_cast<double>(o.n);
        out.push_back(o);
    }
    return out;
}

void to_json(nlohmann::json& j, const SteeringSpec& v) {
    auto entries = nlohmann::json::array();
    for (const auto& e : v.entries) {
        entries.push_back({{"layer", e.layer},
                           {"head", e.head},
                           {"dim", e.direction.size()},
                           {"direction", encode_f32_vector(e.direction)},
                           {"selection_score", e.selection_score}});
    }
    j = nlohmann::json{{"alpha", v.alpha}, {"n_heads", v.n_heads()}, {"entries", std::move(entries)}};
}

void from_json(const nlohmann::json& j, SteeringSpec& v) {
    v.alpha = j.at("alpha").get<double>();
    v.entries.clear();
    for (const auto& e : j.at("entries")) {
        SteeringEntry entry;
        entry.layer = e.at("layer").get<std::uint16_t>();
        entry.head = e.at("head").get<std::uint16_t>();
        entry.direction = decode_f32_vector(e.at("direction").get<std::string>());
        entry.selection_score = e.at("selection_score").get<double>();
        if (e.contains("dim") && e.at("dim").get<std::size_t>() != entry.direction.size()) {
            throw schema_error("steering spec: dim does not match decoded direction length");
        }
        v.entries.push_back(std::move(entry));
    }
    if (j.contains("n_heads") && j.at("n_heads").get<std::size_t>() != v.entries.size()) {
        throw schema_error("steering spec: n_heads does not match the number of entries");
    }
    validate(v);
}

void to_json(nlohmann::json& j, const SteeringOutcome& v) {
    j = nlohmann::json{
        {"class", to_string(v.label)}, {"n", v.n}, {"n_correct_after", v.n_correct_after}, {"rate", v.rate}};
}

void from_json(const nlohmann::json& j, SteeringOutcome& v) {
    v.label = hallucination_class_from_string(j.at("class").get<std::string>());
    j.at("n").get_to(v.n);
    j.at("n_correct_after").get_to(v.n_correct_after);
    j.at("rate").get_to(v.rate);
}

}  // namespace hack
