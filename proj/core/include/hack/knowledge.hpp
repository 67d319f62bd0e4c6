#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "hack/types.hpp"

namespace hack {

enum class KnowledgeLabel { NoCorrect, Middle, ConsistentlyCorrect };

struct KnowledgeVerdict {
    std::string item_id;
    int n_attempts = 6;
    int n_correct = 0;
    KnowledgeLabel label = KnowledgeLabel::NoCorrect;

    bool operator==(const KnowledgeVerdict&) const = default;
};

KnowledgeLabel knowledge_label_for(int n_correct, int n_attempts);

struct KnowledgeProtocol {
    int n_greedy = 1;
    int n_sampled = 5;
};

/// Counts exact matches over the baseline generations of one item
/// (one greedy, five sampled by default).
KnowledgeVerdict classify_knowledge(std::span<const GenerationRecord> records, const QAItem& item,
                                    const KnowledgeProtocol& protocol = {});

enum class HallucinationClass { Factual, HKplus, HKminus, Excluded };

enum class ExclusionReason { negation, synonym, stem_overlap, edit_distance, first_word, formatting, middle_range };

struct HallucinationLabel {
    std::string item_id;
    std::string setting_id;
    HallucinationClass label = HallucinationClass::Factual;
    std::optional<ExclusionReason> reason;  // set iff label == Excluded
    bool synonym_check_skipped = false;     // no lexicon was available

    bool is_hallucination() const {
        return label == HallucinationClass::HKplus || label == HallucinationClass::HKminus;
    }
    bool operator==(const HallucinationLabel&) const = default;
};

/// word -> synonyms, loaded from a JSON object of string arrays.
class SynonymLexicon {
public:
    SynonymLexicon() = default;
    explicit SynonymLexicon(std::unordered_map<std::string, std::vector<std::string>> entries);

    static SynonymLexicon load(const std::filesystem::path& path);

    bool are_synonyms(const std::string& word, const std::string& other) const;
    std::size_t size() const { return entries_.size(); }

private:
    std::unordered_map<std::string, std::vector<std::string>> entries_;
};

struct CurationOptions {
    const SynonymLexicon* lexicon = nullptr;  // nullptr disables the synonym rule
    bool require_double_asterisk = false;
};

struct CurationResult {
    std::optional<ExclusionReason> excluded;
    bool synonym_check_skipped = false;

    bool keep() const { return !excluded.has_value(); }
};

/// Filters an HK+ candidate (a generation that already failed exact match).
/// Rules run in a fixed order and the first one that fires is reported:
/// negation, synonym, stem overlap, edit distance, first word, formatting.
CurationResult curate_hkplus(std::string_view candidate_text, const QAItem& item, const CurationOptions& options);

/// Labels one elicitation-setting generation given the item's baseline verdict.
HallucinationLabel label_example(const KnowledgeVerdict& verdict, const GenerationRecord& setting_record,
                                 const QAItem& item, const CurationOptions& options = {});

/// Levenshtein distance over bytes.
std::size_t edit_distance(std::string_view a, std::string_view b);

std::string to_string(KnowledgeLabel v);
std::string to_string(HallucinationClass v);
std::string to_string(ExclusionReason v);
KnowledgeLabel knowledge_label_from_string(const std::string& s);
HallucinationClass hallucination_class_from_string(const std::string& s);
ExclusionReason exclusion_reason_from_string(const std::string& s);

void to_json(nlohmann::json& j, const KnowledgeVerdict& v);
void from_json(const nlohmann::json& j, KnowledgeVerdict& v);
void to_json(nlohmann::json& j, const HallucinationLabel& v);
void from_json(const nlohmann::json& j, HallucinationLabel& v);

}  // namespace hack
