#include "hack/types.hpp"

#include <cmath>

#include "hack/error.hpp"
#include "json_enum.hpp"

namespace hack {
namespace {

constexpr std::array<std::pair<DecodeMode, std::string_view>, 2> kDecodeModes{{
    {DecodeMode::greedy, "greedy"},
    {DecodeMode::sampled, "sampled"},
}};

constexpr std::array<std::pair<StopReason, std::string_view>, 3> kStopReasons{{
    {StopReason::max_tokens, "max_tokens"},
    {StopReason::stop_sequence, "stop_sequence"},
    {StopReason::eos, "eos"},
}};

}  // namespace

double GenerationRecord::total_logprob() const {
    double s = 0.0;
    for (const auto& t : tokens) s += t.logprob;
    return s;
}

std::string Hook::to_string() const {
    std::string s = "L" + std::to_string(layer);
    if (head) s += "H" + std::to_string(*head);
    else s += "res";
    return s;
}

std::string to_string(DecodeMode mode) { return detail::enum_name(kDecodeModes, mode); }
std::string to_string(StopReason reason) { return detail::enum_name(kStopReasons, reason); }

void validate(const QAItem& item) {
    if (item.id.empty()) throw schema_error("QAItem.id is empty");
    if (item.gold_answers.empty()) throw schema_error("QAItem " + item.id + ": gold_answers is empty");
    if (item.answer_token_budget < 1) throw schema_error("QAItem " + item.id + ": answer_token_budget < 1");
}

void validate(const DecodeParams& decode) {
    if (decode.max_new_tokens < 1) throw schema_error("DecodeParams.max_new_tokens < 1");
    if (!(decode.temperature >= 0.0) || !std::isfinite(decode.temperature)) {
        throw schema_error("DecodeParams.temperature must be a non-negative real");
    }
    if (decode.mode == DecodeMode::greedy && decode.temperature != 0.0) {
        throw schema_error("greedy decoding requires temperature 0");
    }
}

void validate(const GenerationRecord& record) {
    if (record.item_id.empty()) throw schema_error("GenerationRecord.item_id is empty");
    if (record.setting_id.empty()) throw schema_error("GenerationRecord.setting_id is empty");
    validate(record.decode);
    for (const auto& t : record.tokens) {
        if (!std::isfinite(t.logprob) || t.logprob > 0.0) {
            throw schema_error("GenerationRecord " + record.item_id + ": token logprob must be finite and <= 0");
        }
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < record.first_token_topk.size(); ++i) {
        const double p = record.first_token_topk[i].prob;
        if (!(p >= 0.0 && p <= 1.0)) throw schema_error("GenerationRecord " + record.item_id + ": topk prob outside [0,1]");
        if (i > 0 && p > record.first_token_topk[i - 1].prob) {
            throw schema_error("GenerationRecord " + record.item_id + ": first_token_topk not sorted descending");
        }
        sum += p;
    }
    if (sum > 1.0 + 1e-6) throw schema_error("GenerationRecord " + record.item_id + ": topk probabilities sum above 1");
}

void validate(const ActivationRecord& record) {
    if (record.item_id.empty()) throw schema_error("ActivationRecord.item_id is empty");
    for (float v : record.vector) {
        if (!std::isfinite(v)) throw schema_error("ActivationRecord " + record.item_id + ": non-finite value");
    }
}

void to_json(nlohmann::json& j, const QAItem& v) {
    j = nlohmann::json{{"id", v.id},
                       {"question", v.question},
                       {"gold_answers", v.gold_answers},
                       {"source", v.source},
                       {"answer_token_budget", v.answer_token_budget}};
}

void from_json(const nlohmann::json& j, QAItem& v) {
    j.at("id").get_to(v.id);
    j.at("question").get_to(v.question);
    j.at("gold_answers").get_to(v.gold_answers);
    v.source = j.value("source", std::string{});
    v.answer_token_budget = j.value("answer_token_budget", 5);
    validate(v);
}

void to_json(nlohmann::json& j, const DecodeParams& v) {
    j = nlohmann::json{{"mode", to_string(v.mode)},
                       {"temperature", v.temperature},
                       {"max_new_tokens", v.max_new_tokens},
                       {"seed", v.seed}};
}

void from_json(const nlohmann::json& j, DecodeParams& v) {
    v.mode = detail::enum_value(kDecodeModes, j.at("mode").get<std::string>(), "decode mode");
    j.at("temperature").get_to(v.temperature);
    j.at("max_new_tokens").get_to(v.max_new_tokens);
    v.seed = j.value("seed", std::uint64_t{0});
    validate(v);
}

void to_json(nlohmann::json& j, const GenerationRecord& v) {
    auto tokens = nlohmann::json::array();
    for (const auto& t : v.tokens) tokens.push_back(nlohmann::json::array({t.token, t.logprob}));
    auto topk = nlohmann::json::array();
    for (const auto& t : v.first_token_topk) topk.push_back(nlohmann::json::array({t.token, t.prob}));
    j = nlohmann::json{{"item_id", v.item_id},
                       {"setting_id", v.setting_id},
                       {"decode", v.decode},
                       {"text", v.text},
                       {"tokens", std::move(tokens)},
                       {"first_token_topk", std::move(topk)},
                       {"stop_reason", to_string(v.stop_reason)}};
}

void from_json(const nlohmann::json& j, GenerationRecord& v) {
    j.at("item_id").get_to(v.item_id);
    j.at("setting_id").get_to(v.setting_id);
    j.at("decode").get_to(v.decode);
    j.at("text").get_to(v.text);
    v.tokens.clear();
    for (const auto& t : j.at("tokens")) v.tokens.push_back({t.at(0).get<std::string>(), t.at(1).get<double>()});
    v.first_token_topk.clear();
    for (const auto& t : j.value("first_token_topk", nlohmann::json::array())) {
        v.first_token_topk.push_back({t.at(0).get<std::string>(), t.at(1).get<double>()});
    }
    v.stop_reason = detail::enum_value(kStopReasons, j.value("stop_reason", std::string("max_tokens")), "stop reason");
    validate(v);
}

void to_json(nlohmann::json& j, const Hook& v) {
    j = nlohmann::json{{"layer", v.layer}};
    if (v.head) {
        j["site"] = "head";
        j["head"] = *v.head;
    } else {
        j["site"] = "residual_out";
    }
}

void from_json(const nlohmann::json& j, Hook& v) {
    j.at("layer").get_to(v.layer);
    const auto site = j.value("site", std::string("residual_out"));
    if (site == "residual_out") {
        v.head.reset();
    } else if (site == "head") {
        v.head = j.at("head").get<std::uint16_t>();
        if (*v.head == kResidualHead) throw schema_error("head index 0xFFFF is reserved for residual_out");
    } else {
        throw schema_error("unknown hook site '" + site + "'");
    }
}

}  // namespace hack
