#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace hack {

inline constexpr const char* kBaselineSetting = "baseline";

struct QAItem {
    std::string id;
    std::string question;
    std::vector<std::string> gold_answers;  // primary first, accepted variants after
    std::string source;
    int answer_token_budget = 5;

    const std::string& primary_answer() const { return gold_answers.front(); }
    bool operator==(const QAItem&) const = default;
};

enum class DecodeMode { greedy, sampled };

struct DecodeParams {
    DecodeMode mode = DecodeMode::greedy;
    double temperature = 0.0;
    int max_new_tokens = 5;
    std::uint64_t seed = 0;

    static DecodeParams greedy(int max_new_tokens, std::uint64_t seed = 0) {
        return {DecodeMode::greedy, 0.0, max_new_tokens, seed};
    }
    static DecodeParams sampled(double temperature, int max_new_tokens, std::uint64_t seed) {
        return {DecodeMode::sampled, temperature, max_new_tokens, seed};
    }
    bool operator==(const DecodeParams&) const = default;
};

enum class StopReason { max_tokens, stop_sequence, eos };

struct TokenLogprob {
    std::string token;
    double logprob = 0.0;
    bool operator==(const TokenLogprob&) const = default;
};

struct TokenProb {
    std::string token;
    double prob = 0.0;
    bool operator==(const TokenProb&) const = default;
};

struct GenerationRecord {
    std::string item_id;
    std::string setting_id = kBaselineSetting;
    DecodeParams decode;
    std::string text;
    std::vector<TokenLogprob> tokens;
    std::vector<TokenProb> first_token_topk;  // descending by prob
    StopReason stop_reason = StopReason::max_tokens;

    double total_logprob() const;
    bool operator==(const GenerationRecord&) const = default;
};

// Head index 0xFFFF in the binary store encodes the residual stream.
inline constexpr std::uint16_t kResidualHead = 0xFFFF;

struct Hook {
    std::uint16_t layer = 0;
    std::optional<std::uint16_t> head;  // nullopt = residual_out

    static Hook residual(std::uint16_t layer) { return {layer, std::nullopt}; }
    static Hook attention_head(std::uint16_t layer, std::uint16_t head) { return {layer, head}; }

    bool is_residual() const { return !head.has_value(); }
    std::uint16_t encoded_head() const { return head.value_or(kResidualHead); }
    std::string to_string() const;

    auto operator<=>(const Hook&) const = default;
};

struct ActivationRecord {
    std::string item_id;
    std::string setting_id = kBaselineSetting;
    Hook hook;
    std::vector<float> vector;  // taken at the last answer token

    bool operator==(const ActivationRecord&) const = default;
};

/// Key joining item and setting ids, used for every (item, setting) lookup.
inline std::string example_key(const std::string& item_id, const std::string& setting_id) {
    return item_id + '\t' + setting_id;
}

// Validation throws schema_error naming the broken invariant.
void validate(const QAItem& item);
void validate(const DecodeParams& decode);
void validate(const GenerationRecord& record);
void validate(const ActivationRecord& record);

std::string to_string(DecodeMode mode);
std::string to_string(StopReason reason);

void to_json(nlohmann::json& j, const QAItem& v);
void from_json(const nlohmann::json& j, QAItem& v);
void to_json(nlohmann::json& j, const DecodeParams& v);
void from_json(const nlohmann::json& j, DecodeParams& v);
void to_json(nlohmann::json& j, const GenerationRecord& v);
void from_json(const nlohmann::json& j, GenerationRecord& v);
void to_json(nlohmann::json& j, const Hook& v);
void from_json(const nlohmann::json& j, Hook& v);

}  // namespace hack
