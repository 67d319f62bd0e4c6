#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace hack {

enum class SettingFamily { truthful, persona, alice_bob, realistic, baseline };

struct ShotExample {
    std::string question;
    std::string answer;
    bool operator==(const ShotExample&) const = default;
};

struct PromptSetting {
    std::string setting_id;
    SettingFamily family = SettingFamily::baseline;
    std::string prefix_text;
    int n_shots = 1;
    std::vector<ShotExample> shot_examples;
    // When non-empty the adapter draws one paraphrase per item instead of prefix_text.
    std::vector<std::string> paraphrases;

    bool operator==(const PromptSetting&) const = default;
};

/// Prompt prefixes plus the token lists the certainty scorers and the
/// generation adapter share.
struct SettingCatalog {
    std::vector<PromptSetting> settings;
    std::vector<std::string> skip_tokens;     // first-answer-token skip list
    std::vector<std::string> stop_sequences;  // stop list for sampled generations

    const PromptSetting* find(const std::string& setting_id) const;
    std::vector<const PromptSetting*> family(SettingFamily f) const;
    bool operator==(const SettingCatalog&) const = default;
};

/// Baseline (3-shot) plus 10 truthful, 10 persona, 1 Alice-Bob and
/// 7 realistic settings.
SettingCatalog default_catalog();
const std::vector<std::string>& default_skip_tokens();
const std::vector<std::string>& default_stop_sequences();

SettingCatalog load_catalog(const std::filesystem::path& path);

std::string to_string(SettingFamily f);
SettingFamily setting_family_from_string(const std::string& s);

void to_json(nlohmann::json& j, const PromptSetting& v);
void from_json(const nlohmann::json& j, PromptSetting& v);
void to_json(nlohmann::json& j, const SettingCatalog& v);
void from_json(const nlohmann::json& j, SettingCatalog& v);

}  // namespace hack
