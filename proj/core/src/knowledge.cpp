#include "hack/knowledge.hpp"

#include <algorithm>
#include <set>

#include "hack/error.hpp"
#include "hack/porter_stemmer.hpp"
#include "hack/text.hpp"
#include "hack/util.hpp"
#include "json_enum.hpp"

namespace hack {
namespace {

constexpr std::array<std::pair<KnowledgeLabel, std::string_view>, 3> kKnowledgeLabels{{
    {KnowledgeLabel::NoCorrect, "NoCorrect"},
    {KnowledgeLabel::Middle, "Middle"},
    {KnowledgeLabel::ConsistentlyCorrect, "ConsistentlyCorrect"},
}};

constexpr std::array<std::pair<HallucinationClass, std::string_view>, 4> kClasses{{
    {HallucinationClass::Factual, "Factual"},
    {HallucinationClass::HKplus, "HKplus"},
    {HallucinationClass::HKminus, "HKminus"},
    {HallucinationClass::Excluded, "Excluded"},
}};

constexpr std::array<std::pair<ExclusionReason, std::string_view>, 7> kReasons{{
    {ExclusionReason::negation, "negation"},
    {ExclusionReason::synonym, "synonym"},
    {ExclusionReason::stem_overlap, "stem_overlap"},
    {ExclusionReason::edit_distance, "edit_distance"},
    {ExclusionReason::first_word, "first_word"},
    {ExclusionReason::formatting, "formatting"},
    {ExclusionReason::middle_range, "middle_range"},
}};

std::vector<std::string> stems_of(std::string_view text) {
    auto words = split_words(text);
    for (auto& w : words) w = porter_stem(w);
    return words;
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (const auto& w : words) {
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

bool is_numeric_answer(std::string_view text) {
    const std::string t = trim(text);
    if (t.empty()) return false;
    bool digit = false;
    for (char c : t) {
        if (c >= '0' && c <= '9') {
            digit = true;
        } else if (c != '.' && c != ',' && c != '-' && c != ' ') {
            return false;
        }
    }
    return digit;
}

bool shares_more_than_half(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const std::set<std::string> sa(a.begin(), a.end());
    const std::set<std::string> sb(b.begin(), b.end());
    if (sa.empty() || sb.empty()) return false;
    std::size_t shared = 0;
    for (const auto& w : sa) shared += sb.count(w);
    // "More than half of their words": measured against the larger word set.
    return 2 * shared > std::max(sa.size(), sb.size());
}

std::string first_word(std::string_view text) {
    const std::string n = ascii_lower(normalize_answer(text));
    return n.substr(0, n.find(' '));
}

}  // namespace

KnowledgeLabel knowledge_label_for(int n_correct, int n_attempts) {
    if (n_correct == 0) return KnowledgeLabel::NoCorrect;
    if (n_correct == n_attempts) return KnowledgeLabel::ConsistentlyCorrect;
    return KnowledgeLabel::Middle;
}

KnowledgeVerdict classify_knowledge(std::span<const GenerationRecord> records, const QAItem& item,
                                    const KnowledgeProtocol& protocol) {
    int greedy = 0;
    int sampled = 0;
    int correct = 0;
    for (const auto& r : records) {
        if (r.item_id != item.id) {
            throw data_error("classify_knowledge: record for item '" + r.item_id + "' mixed into item '" + item.id + "'");
        }
        if (r.setting_id != kBaselineSetting) {
            throw data_error("classify_knowledge: item " + item.id + " has a non-baseline record (" + r.setting_id + ")");
        }
        if (r.decode.mode == DecodeMode::greedy) ++greedy;
        else ++sampled;
        if (exact_match(r.text, item.gold_answers)) ++correct;
    }
    if (greedy != protocol.n_greedy || sampled != protocol.n_sampled) {
        throw data_error("classify_knowledge: item " + item.id + " has " + std::to_string(greedy) + " greedy and " +
                         std::to_string(sampled) + " sampled baseline records, expected " +
                         std::to_string(protocol.n_greedy) + " and " + std::to_string(protocol.n_sampled));
    }
    const int attempts = greedy + sampled;
    return KnowledgeVerdict{item.id, attempts, correct, knowledge_label_for(correct, attempts)};
}

SynonymLexicon::SynonymLexicon(std::unordered_map<std::string, std::vector<std::string>> entries)
    : entries_(std::move(entries)) {
    for (auto& [word, syns] : entries_) {
        for (auto& s : syns) s = ascii_lower(s);
    }
}

SynonymLexicon SynonymLexicon::load(const std::filesystem::path& path) {
    try {
        const auto j = nlohmann::json::parse(read_file(path));
        std::unordered_map<std::string, std::vector<std::string>> entries;
        for (const auto& [word, syns] : j.items()) entries[ascii_lower(word)] = syns.get<std::vector<std::string>>();
        return SynonymLexicon(std::move(entries));
    } catch (const nlohmann::json::exception& e) {
        throw schema_error(path.string() + ": " + e.what());
    }
}

bool SynonymLexicon::are_synonyms(const std::string& word, const std::string& other) const {
    const auto contains = [this](const std::string& key, const std::string& value) {
        const auto it = entries_.find(key);
        return it != entries_.end() && std::find(it->second.begin(), it->second.end(), value) != it->second.end();
    };
    return contains(word, other) || contains(other, word);
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> prev(b.size() + 1);
    std::vector<std::size_t> cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

CurationResult curate_hkplus(std::string_view candidate_text, const QAItem& item, const CurationOptions& options) {
    CurationResult result;
    const std::string text = trim(candidate_text);
    const auto gen_words = split_words(text);
    const auto gen_stems = stems_of(text);

    if (starts_with_ci(text, "The answer is not")) {
        result.excluded = ExclusionReason::negation;
        return result;
    }

    if (options.lexicon == nullptr) {
        result.synonym_check_skipped = true;
    } else {
        for (const auto& gold : item.gold_answers) {
            for (const auto& g : split_words(gold)) {
                for (const auto& w : gen_words) {
                    if (options.lexicon->are_synonyms(w, g)) {
                        result.excluded = ExclusionReason::synonym;
                        return result;
                    }
                }
            }
        }
    }

    for (const auto& gold : item.gold_answers) {
        if (shares_more_than_half(gen_stems, stems_of(gold))) {
            result.excluded = ExclusionReason::stem_overlap;
            return result;
        }
    }

    for (const auto& w : gen_words) {
        if (w == "great" || w == "none" || w == "n/a") {
            result.excluded = ExclusionReason::edit_distance;
            return result;
        }
    }
    const std::string gen_joined = join(gen_stems);
    for (const auto& gold : item.gold_answers) {
        if (is_numeric_answer(gold)) continue;
        if (edit_distance(gen_joined, join(stems_of(gold))) <= 2) {
            result.excluded = ExclusionReason::edit_distance;
            return result;
        }
    }

    const std::string gen_norm = ascii_lower(normalize_answer(text));
    for (const auto& gold : item.gold_answers) {
        if (!gen_norm.empty() && gen_norm == first_word(gold)) {
            result.excluded = ExclusionReason::first_word;
            return result;
        }
    }

    if (options.require_double_asterisk && text.find("**") == std::string::npos) {
        result.excluded = ExclusionReason::formatting;
    }
    return result;
}

HallucinationLabel label_example(const KnowledgeVerdict& verdict, const GenerationRecord& setting_record,
                                 const QAItem& item, const CurationOptions& options) {
    if (verdict.item_id != item.id || setting_record.item_id != item.id) {
        throw data_error("label_example: id mismatch (verdict '" + verdict.item_id + "', record '" +
                         setting_record.item_id + "', item '" + item.id + "')");
    }
    if (setting_record.setting_id == kBaselineSetting) {
        throw data_error("label_example: baseline records are not elicitation settings (item " + item.id + ")");
    }
    HallucinationLabel out{item.id, setting_record.setting_id, HallucinationClass::Factual, std::nullopt, false};
    switch (verdict.label) {
        case KnowledgeLabel::NoCorrect:
            out.label = HallucinationClass::HKminus;
            return out;
        case KnowledgeLabel::Middle:
            out.label = HallucinationClass::Excluded;
            out.reason = ExclusionReason::middle_range;
            return out;
        case KnowledgeLabel::ConsistentlyCorrect:
            break;
    }
    if (exact_match(setting_record.text, item.gold_answers)) return out;
    const auto curation = curate_hkplus(setting_record.text, item, options);
    out.synonym_check_skipped = curation.synonym_check_skipped;
    if (curation.keep()) {
        out.label = HallucinationClass::HKplus;
    } else {
        out.label = HallucinationClass::Excluded;
        out.reason = curation.excluded;
    }
    return out;
}

std::string to_string(KnowledgeLabel v) { return detail::enum_name(kKnowledgeLabels, v); }
std::string to_string(HallucinationClass v) { return detail::enum_name(kClasses, v); }
std::string to_string(ExclusionReason v) { return detail::enum_name(kReasons, v); }
KnowledgeLabel knowledge_label_from_string(const std::string& s) {
    return detail::enum_value(kKnowledgeLabels, s, "knowledge label");
}
HallucinationClass hallucination_class_from_string(const std::string& s) {
    return detail::enum_value(kClasses, s, "hallucination label");
}
ExclusionReason exclusion_reason_from_string(const std::string& s) {
    return detail::enum_value(kReasons, s, "exclusion reason");
}

void to_json(nlohmann::json& j, const KnowledgeVerdict& v) {
    j = nlohmann::json{{"item_id", v.item_id},
                       {"n_attempts", v.n_attempts},
                       {"n_correct", v.n_correct},
                       {"label", to_string(v.label)}};
}

void from_json(const nlohmann::json& j, KnowledgeVerdict& v) {
    j.at("item_id").get_to(v.item_id);
    v.n_attempts = j.value("n_attempts", 6);
    j.at("n_correct").get_to(v.n_correct);
    v.label = knowledge_label_from_string(j.at("label").get<std::string>());
    if (v.n_correct < 0 || v.n_correct > v.n_attempts) throw schema_error("n_correct outside [0, n_attempts]");
    if (v.label != knowledge_label_for(v.n_correct, v.n_attempts)) {
        throw schema_error("knowledge label inconsistent with n_correct for item " + v.item_id);
    }
}

void to_json(nlohmann::json& j, const HallucinationLabel& v) {
    j = nlohmann::json{{"item_id", v.item_id}, {"setting_id", v.setting_id}, {"label", to_string(v.label)}};
    if (v.reason) j["reason"] = to_string(*v.reason);
    if (v.synonym_check_skipped) j["synonym_check_skipped"] = true;
}

void from_json(const nlohmann::json& j, HallucinationLabel& v) {
    j.at("item_id").get_to(v.item_id);
    j.at("setting_id").get_to(v.setting_id);
    v.label = hallucination_class_from_string(j.at("label").get<std::string>());
    v.reason.reset();
    if (j.contains("reason")) v.reason = exclusion_reason_from_string(j.at("reason").get<std::string>());
    v.synonym_check_skipped = j.value("synonym_check_skipped", false);
    if ((v.label == HallucinationClass::Excluded) != v.reason.has_value()) {
        throw schema_error("label " + v.item_id + ": reason must be present exactly for Excluded");
    }
}

}  // namespace hack
