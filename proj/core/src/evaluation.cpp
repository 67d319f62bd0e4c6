#include "hack/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <unordered_map>

#include "hack/error.hpp"
#include "hack/text.hpp"
#include "json_enum.hpp"

namespace hack {
namespace {

constexpr std::array<std::pair<MitigationAction, std::string_view>, 2> kActions{{
    {MitigationAction::abstained, "abstained"},
    {MitigationAction::answered, "answered"},
}};

bool evaluated(const HallucinationLabel& l) { return l.label != HallucinationClass::Excluded; }

std::unordered_map<std::string, const MitigationOutcome*> index_outcomes(std::span<const MitigationOutcome> outcomes) {
    std::unordered_map<std::string, const MitigationOutcome*> out;
    for (const auto& o : outcomes) {
        if (!out.emplace(example_key(o.item_id, o.setting_id), &o).second) {
            throw data_error("duplicate mitigation outcome for " + o.item_id + " / " + o.setting_id);
        }
    }
    return out;
}

const MitigationOutcome& outcome_for(const std::unordered_map<std::string, const MitigationOutcome*>& index,
                                     const HallucinationLabel& l) {
    const auto it = index.find(example_key(l.item_id, l.setting_id));
    if (it == index.end()) throw data_error("no mitigation outcome for " + l.item_id + " / " + l.setting_id);
    return *it->second;
}

std::string fmt_metric(const Metric& m, std::vector<std::string>& notes) {
    if (!m.value) {
        auto pos = std::find(notes.begin(), notes.end(), m.null_reason);
        if (pos == notes.end()) {
            notes.push_back(m.null_reason);
            pos = notes.end() - 1;
        }
        return "—[" + std::to_string(pos - notes.begin() + 1) + "]";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *m.value);
    return buf;
}

}  // namespace

Metric ratio_metric(std::int64_t numerator, std::int64_t denominator, const std::string& null_reason) {
    Metric m;
    m.numerator = numerator;
    m.denominator = denominator;
    if (denominator > 0) {
        m.value = static_cast<double>(numerator) / static_cast<double>(denominator);
    } else {
        m.null_reason = null_reason;
    }
    return m;
}

Metric cm_d(const IdSet& mitigated, const IdSet& flagged) {
    std::int64_t hit = 0;
    for (const auto& id : flagged) hit += mitigated.count(id) ? 1 : 0;
    return ratio_metric(hit, static_cast<std::int64_t>(flagged.size()), "no examples flagged");
}

CMScore cm_score(const IdSet& mitigated, std::span<const IdSet> method_sets) {
    if (method_sets.empty()) throw usage_error("cm_score: at least one detection method set is required");
    IdSet inter = method_sets.front();
    IdSet uni;
    for (const auto& s : method_sets) {
        IdSet next;
        std::set_intersection(inter.begin(), inter.end(), s.begin(), s.end(), std::inserter(next, next.end()));
        inter = std::move(next);
        uni.insert(s.begin(), s.end());
    }
    CMScore out{cm_d(mitigated, inter), cm_d(mitigated, uni)};
    if (!out.cm.value) out.cm.null_reason = "no example flagged by every method";
    if (!out.cm_f.value) out.cm_f.null_reason = "no example flagged by any method";
    return out;
}

AccuracyMetrics accuracy_metrics(std::span<const MitigationOutcome> outcomes,
                                 std::span<const HallucinationLabel> labels, AccuracyWeighting weighting) {
    const auto index = index_outcomes(outcomes);
    std::int64_t h_num = 0;
    std::int64_t h_den = 0;
    std::int64_t f_num = 0;
    std::int64_t f_den = 0;
    for (const auto& l : labels) {
        if (!evaluated(l)) continue;
        const auto& o = outcome_for(index, l);
        if (l.is_hallucination()) {
            ++h_den;
            h_num += o.mitigated ? 1 : 0;
        } else {
            ++f_den;
            f_num += o.action == MitigationAction::answered && o.mitigated ? 1 : 0;
        }
    }
    AccuracyMetrics m;
    m.h_acc = ratio_metric(h_num, h_den, "no hallucination-labeled examples");
    m.nh_acc = ratio_metric(f_num, f_den, "no factual examples");
    if (weighting == AccuracyWeighting::per_example) {
        m.acc = ratio_metric(h_num + f_num, h_den + f_den, "no evaluated examples");
    } else if (m.h_acc.value && m.nh_acc.value) {
        m.acc = m.h_acc;
        m.acc.numerator = h_num + f_num;
        m.acc.denominator = h_den + f_den;
        m.acc.value = 0.5 * (*m.h_acc.value + *m.nh_acc.value);
    } else {
        m.acc = ratio_metric(h_num + f_num, 0, "per-class mean needs both populations");
        m.acc.denominator = h_den + f_den;
    }
    return m;
}

EvalReport evaluate_mitigation(const std::string& method_id, std::span<const MitigationOutcome> outcomes,
                               std::span<const CMVerdict> verdicts, std::span<const HallucinationLabel> labels,
                               AccuracyWeighting weighting) {
    for (const auto& o : outcomes) {
        if (o.method_id != method_id) {
            throw usage_error("evaluate: outcome for method '" + o.method_id + "' passed as '" + method_id + "'");
        }
    }
    const auto index = index_outcomes(outcomes);

    IdSet mitigated;
    for (const auto& l : labels) {
        if (!l.is_hallucination()) continue;
        if (outcome_for(index, l).mitigated) mitigated.insert(example_key(l.item_id, l.setting_id));
    }

    std::map<CertaintyMethod, IdSet> flagged;
    for (const auto& v : verdicts) {
        for (const auto& [method, flag] : v.per_method) {
            auto& set = flagged[method];
            if (flag) set.insert(example_key(v.item_id, v.setting_id));
        }
    }

    EvalReport r;
    r.method_id = method_id;
    std::vector<IdSet> sets;
    for (const auto& [method, set] : flagged) {
        r.cm_d.emplace(method, cm_d(mitigated, set));
        sets.push_back(set);
    }
    if (sets.empty()) {
        r.cm = ratio_metric(0, 0, "no detection methods");
        r.cm_f = r.cm;
    } else {
        auto s = cm_score(mitigated, sets);
        r.cm = s.cm;
        r.cm_f = s.cm_f;
    }
    const auto a = accuracy_metrics(outcomes, labels, weighting);
    r.acc = a.acc;
    r.h_acc = a.h_acc;
    r.nh_acc = a.nh_acc;
    return r;
}

RenderedReport render_report(std::vector<EvalReport> reports) {
    std::stable_sort(reports.begin(), reports.end(),
                     [](const EvalReport& a, const EvalReport& b) { return a.method_id < b.method_id; });
    std::set<CertaintyMethod> methods;
    for (const auto& r : reports) {
        for (const auto& [m, metric] : r.cm_d) methods.insert(m);
    }

    RenderedReport out;
    out.json = nlohmann::json{
        {"reports", reports},
        {"definitions",
         {{"cm_d", "share of examples flagged by detection method d that the mitigation fixed"},
          {"cm", "CM-d over examples flagged by every detection method"},
          {"cm_f", "CM-d over examples flagged by at least one detection method"},
          {"h_acc", "share of hallucination-labeled examples (HK+ and HK-) that were mitigated"},
          {"nh_acc", "share of factual examples that were answered and still correct"},
          {"acc", "blend of H-ACC and NH-ACC populations"}}}};

    std::string md = "| method | CM | CM-F |";
    for (auto m : methods) md += " CM-d " + to_string(m) + " |";
    md += " ACC | H-ACC | NH-ACC |\n|---|---|---|";
    for (std::size_t i = 0; i < methods.size(); ++i) md += "---|";
    md += "---|---|---|\n";
    std::vector<std::string> notes;
    for (const auto& r : reports) {
        md += "| " + r.method_id + " | " + fmt_metric(r.cm, notes) + " | " + fmt_metric(r.cm_f, notes) + " |";
        for (auto m : methods) {
            const auto it = r.cm_d.find(m);
            md += " " + (it == r.cm_d.end() ? fmt_metric(ratio_metric(0, 0, "method not evaluated"), notes)
                                            : fmt_metric(it->second, notes)) +
                  " |";
        }
        md += " " + fmt_metric(r.acc, notes) + " | " + fmt_metric(r.h_acc, notes) + " | " +
              fmt_metric(r.nh_acc, notes) + " |\n";
    }
    md += "\nH-ACC: share of hallucination-labeled examples (HK+ and HK-) that were mitigated.\n"
          "NH-ACC: share of factual examples answered and still correct.\n"
          "ACC: H-ACC and NH-ACC populations combined.\n"
          "CM / CM-F: CM-d over examples flagged by all / any detection methods.\n";
    if (!notes.empty()) {
        md += "\n";
        for (std::size_t i = 0; i < notes.size(); ++i) {
            md += "[" + std::to_string(i + 1) + "] undefined: " + notes[i] + "\n";
        }
    }
    out.markdown = std::move(md);
    return out;
}

std::vector<MitigationOutcome> abstention_outcomes(std::span<const CertaintyScore> scores,
                                                   const ThresholdResult& threshold,
                                                   std::span<const HallucinationLabel> labels,
                                                   const std::string& method_id) {
    std::unordered_map<std::string, const CertaintyScore*> by_key;
    for (const auto& s : scores) {
        if (s.method == threshold.method) by_key.emplace(example_key(s.item_id, s.setting_id), &s);
    }
    std::vector<MitigationOutcome> out;
    for (const auto& l : labels) {
        if (!evaluated(l)) continue;
        const auto it = by_key.find(example_key(l.item_id, l.setting_id));
        if (it == by_key.end()) {
            throw data_error("no " + to_string(threshold.method) + " score for " + l.item_id + " / " + l.setting_id);
        }
        const bool abstain = it->second->oriented <= threshold.t_star;
        MitigationOutcome o{l.item_id, l.setting_id, method_id,
                            abstain ? MitigationAction::abstained : MitigationAction::answered,
                            l.is_hallucination() ? abstain : !abstain};
        out.push_back(std::move(o));
    }
    return out;
}

std::vector<MitigationOutcome> generation_outcomes(std::span<const GenerationRecord> records,
                                                   std::span<const HallucinationLabel> labels,
                                                   std::span<const QAItem> items, const std::string& method_id) {
    std::unordered_map<std::string, const QAItem*> item_by_id;
    for (const auto& it : items) item_by_id.emplace(it.id, &it);
    std::unordered_map<std::string, const GenerationRecord*> by_key;
    for (const auto& r : records) by_key.emplace(example_key(r.item_id, r.setting_id), &r);

    std::vector<MitigationOutcome> out;
    for (const auto& l : labels) {
        if (!evaluated(l)) continue;
        const auto rec = by_key.find(example_key(l.item_id, l.setting_id));
        if (rec == by_key.end()) throw data_error("no generation for " + l.item_id + " / " + l.setting_id);
        const auto item = item_by_id.find(l.item_id);
        if (item == item_by_id.end()) throw data_error("unknown item " + l.item_id);
        out.push_back(MitigationOutcome{l.item_id, l.setting_id, method_id, MitigationAction::answered,
                                        containment_match(rec->second->text, item->second->gold_answers)});
    }
    return out;
}

std::string to_string(MitigationAction a) { return detail::enum_name(kActions, a); }

void to_json(nlohmann::json& j, const MitigationOutcome& v) {
    j = nlohmann::json{{"item_id", v.item_id},     {"setting_id", v.setting_id},
                       {"method_id", v.method_id}, {"action", to_string(v.action)},
                       {"mitigated", v.mitigated}};
}

void from_json(const nlohmann::json& j, MitigationOutcome& v) {
    j.at("item_id").get_to(v.item_id);
    j.at("setting_id").get_to(v.setting_id);
    j.at("method_id").get_to(v.method_id);
    v.action = detail::enum_value(kActions, j.at("action").get<std::string>(), "mitigation action");
    j.at("mitigated").get_to(v.mitigated);
}

void to_json(nlohmann::json& j, const Metric& v) {
    j = nlohmann::json{{"value", nullptr}, {"numerator", v.numerator}, {"denominator", v.denominator}};
    if (v.value) j["value"] = *v.value;
    else j["null_reason"] = v.null_reason;
}

void from_json(const nlohmann::json& j, Metric& v) {
    const auto& value = j.at("value");
    v.value = value.is_null() ? std::nullopt : std::optional<double>(value.get<double>());
    j.at("numerator").get_to(v.numerator);
    j.at("denominator").get_to(v.denominator);
    v.null_reason = j.value("null_reason", std::string{});
    if (v.value && (*v.value < 0.0 || *v.value > 1.0)) throw schema_error("metric value outside [0, 1]");
}

void to_json(nlohmann::json& j, const EvalReport& v) {
    nlohmann::json cmd = nlohmann::json::object();
    for (const auto& [m, metric] : v.cm_d) cmd[to_string(m)] = metric;
    j = nlohmann::json{{"method_id", v.method_id}, {"cm_d", cmd},          {"cm", v.cm},
                       {"cm_f", v.cm_f},           {"acc", v.acc},         {"h_acc", v.h_acc},
                       {"nh_acc", v.nh_acc}};
}

void from_json(const nlohmann::json& j, EvalReport& v) {
    j.at("method_id").get_to(v.method_id);
    v.cm_d.clear();
    for (const auto& [name, metric] : j.at("cm_d").items()) {
        v.cm_d.emplace(certainty_method_from_string(name), metric.get<Metric>());
    }
    j.at("cm").get_to(v.cm);
    j.at("cm_f").get_to(v.cm_f);
    j.at("acc").get_to(v.acc);
    j.at("h_acc").get_to(v.h_acc);
    j.at("nh_acc").get_to(v.nh_acc);
}

}  // namespace hack
