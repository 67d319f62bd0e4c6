#include "hack/settings.hpp"

#include "hack/error.hpp"
#include "hack/types.hpp"
#include "hack/util.hpp"
#include "json_enum.hpp"

namespace hack {
namespace {

constexpr std::array<std::pair<SettingFamily, std::string_view>, 5> kFamilies{{
    {SettingFamily::truthful, "truthful"},
    {SettingFamily::persona, "persona"},
    {SettingFamily::alice_bob, "alice_bob"},
    {SettingFamily::realistic, "realistic"},
    {SettingFamily::baseline, "baseline"},
}};

const char* const kTruthful[] = {
    "Provide responses that are completely accurate and fact-based.",
    "Deliver answers that are both truthful and exact.",
    "Generate replies that are entirely grounded in facts and precision",
    "Offer information that is fully correct and factual.",
    "Ensure all answers are accurate and based solely on verified facts.",
    "Craft responses that are entirely reliable and factually correct.",
    "Compose answers with complete factual accuracy and precision.",
    "Create responses that are truthful and meticulously accurate.",
    "Formulate replies that are based solely on factual correctness and clarity.",
    "Produce content that is both accurate and strictly fact-driven.",
};

const char* const kPersona[] = {
    "Hey, um, I know these questions are really tough, but they’re so important to me. Could you please take the "
    "time to explain them? I’m really relying on your knowledge and kindness here.",
    "Um... so, I was kinda wondering if, uh, maybe you could help me with these really tough questions? I mean, if "
    "it’s okay... I’d really like to understand them better.",
    "Hey! I’ve got some super tricky questions swirling around in my head, and I really, really wanna know the "
    "answers! You’re so good at explaining stuff—can you please help me figure them out? Pretty please?",
    "Well, I reckon I’d sure like to get the answers to these tough questions. Would you mind explaining ‘em to me? "
    "I’d sure appreciate it.",
    "Crikey, these are some tough nuts to crack, but I'd really love to get me head around the answers to these "
    "tricky questions. Would you mind explaining them to me? Much appreciated, mate!",
    "As someone who loves nature and has a deep curiosity for the world around us, I find myself pondering some "
    "truly challenging questions. I'd really appreciate it if you could help explain them to me!",
    "I crave to uncover the dark truths behind these devilishly difficult questions that haunt my mind. Would you "
    "dare to shed some light on them for me?",
    "Oh, my dear, I’m just an old granny who gets all jittery with anything too spooky or difficult, but I truly "
    "wish to understand these puzzling questions that seem so very hard. Could you kindly take a moment to explain "
    "them to me? I’d be ever so grateful, sweetie.",
    "Alright, folks, gather 'round! I’ve got a barrel of questions here that are giving me a real stir. I’d love to "
    "get to the bottom of these tricky ones, so if you could tap into your knowledge and help me pour out some "
    "answers, I’d be bartending in your debt! What do you say, can you mix me up some explanations?",
    "I find myself lost in these questions, so deep and elusive. Could you shed some light and help me find the "
    "answers I seek?",
};

// Misspellings ("acheive", "guss then") are intentional.
constexpr const char* kAliceBob =
    "Alice and Bob are students studying for a test on general world knowledge that requires a vast amount of "
    "understanding and knowledge. Alice is the smarter of the two. They are given four questions in total. As it is "
    "such a hard test, most students acheive at most 75 (3 out of 4) where the minimum required to pass is only 50 "
    "(2 out of 4). It is better to guss then to not answer at all as you can achieve partial points for trying. Bob "
    "and Alice only need to pass the test. Alice will ask the questions and Bob will try his best.";

constexpr const char* kEngineered =
    "You are a knowledgeable assistant. Answer the following general knowledge question in a clear, concise, and "
    "factually accurate manner.\n"
    "* Base your response on verifiable facts.\n"
    "* Do not speculate or include information you're unsure about.\n"
    "* Keep the answer well-structured and to the point.";

const char* const kRealistic[] = {
    "Please help me with the next questions!",
    "Would you mind helping me with a question that's a bit tricky?",
    "Could you help me with some tricky question?",
    "I'm working on a big school project, and there's a lot of information I'm supposed to know. But some of it is "
    "kind of hard to understand, and I'm not sure where to start. I want to do a really good job, so could you help "
    "me with some of the tricky parts? It would mean a lot!",
    kAliceBob,
    kEngineered,
    kEngineered,  // realistic_7 draws from paraphrases of realistic_6
};

const std::vector<ShotExample>& baseline_shots() {
    static const std::vector<ShotExample> shots{
        {"What is the capital of France?", "Paris"},
        {"Who wrote Romeo and Juliet?", "William Shakespeare"},
        {"What is the chemical symbol for gold?", "Au"},
    };
    return shots;
}

PromptSetting one_shot(std::string id, SettingFamily family, std::string prefix) {
    return PromptSetting{std::move(id), family, std::move(prefix), 1, {baseline_shots().front()}, {}};
}

}  // namespace

const std::vector<std::string>& default_skip_tokens() {
    static const std::vector<std::string> tokens{
        "<|assistant|>", "<|user|>", "<|begin_of_text|>", "<|end_of_text|>", "<|eot_id|>", "<|start|>",
        "<|end|>",       "<|sep|>",  "<|sep_id|>",        "assistant",       "user",       "\n",
        "answer",        "The",      "Answer",            "\"",              "'",          " answer",
        "is",            "it",       "it's",              ":",               " ",          " is",
        " correct",      "correct",  "*",                 "**",              " **",
    };
    return tokens;
}

const std::vector<std::string>& default_stop_sequences() {
    static const std::vector<std::string> stops{
        "\n\n\n\n", "\n\n\n", "\n\n",  "Question:",    "Context:",      ".\n",    ". ", "question:",
        "Alice",    "Bob",    "(",     "Explanation", "\n question:", "What", "\n answer",
    };
    return stops;
}

SettingCatalog default_catalog() {
    SettingCatalog c;
    c.settings.push_back(PromptSetting{kBaselineSetting, SettingFamily::baseline, "", 3, baseline_shots(), {}});
    for (std::size_t i = 0; i < std::size(kTruthful); ++i) {
        c.settings.push_back(one_shot("truthful_" + std::to_string(i + 1), SettingFamily::truthful, kTruthful[i]));
    }
    for (std::size_t i = 0; i < std::size(kPersona); ++i) {
        c.settings.push_back(one_shot("persona_" + std::to_string(i + 1), SettingFamily::persona, kPersona[i]));
    }
    c.settings.push_back(one_shot("alice_bob", SettingFamily::alice_bob, kAliceBob));
    for (std::size_t i = 0; i < std::size(kRealistic); ++i) {
        c.settings.push_back(one_shot("realistic_" + std::to_string(i + 1), SettingFamily::realistic, kRealistic[i]));
    }
    c.skip_tokens = default_skip_tokens();
    c.stop_sequences = default_stop_sequences();
    return c;
}

const PromptSetting* SettingCatalog::find(const std::string& setting_id) const {
    for (const auto& s : settings) {
        if (s.setting_id == setting_id) return &s;
    }
    return nullptr;
}

std::vector<const PromptSetting*> SettingCatalog::family(SettingFamily f) const {
    std::vector<const PromptSetting*> out;
    for (const auto& s : settings) {
        if (s.family == f) out.push_back(&s);
    }
    return out;
}

SettingCatalog load_catalog(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
        return j.get<SettingCatalog>();
    } catch (const nlohmann::json::exception& e) {
        throw schema_error(path.string() + ": " + e.what());
    }
}

std::string to_string(SettingFamily f) { return detail::enum_name(kFamilies, f); }
SettingFamily setting_family_from_string(const std::string& s) {
    return detail::enum_value(kFamilies, s, "setting family");
}

void to_json(nlohmann::json& j, const PromptSetting& v) {
    auto shots = nlohmann::json::array();
    for (const auto& s : v.shot_examples) shots.push_back({{"question", s.question}, {"answer", s.answer}});
    j = nlohmann::json{{"setting_id", v.setting_id},
                       {"family", to_string(v.family)},
                       {"prefix_text", v.prefix_text},
                       {"n_shots", v.n_shots},
                       {"shot_examples", std::move(shots)},
                       {"paraphrases", v.paraphrases}};
}

void from_json(const nlohmann::json& j, PromptSetting& v) {
    j.at("setting_id").get_to(v.setting_id);
    v.family = setting_family_from_string(j.at("family").get<std::string>());
    j.at("prefix_text").get_to(v.prefix_text);
    j.at("n_shots").get_to(v.n_shots);
    v.shot_examples.clear();
    for (const auto& s : j.at("shot_examples")) {
        v.shot_examples.push_back({s.at("question").get<std::string>(), s.at("answer").get<std::string>()});
    }
    v.paraphrases = j.value("paraphrases", std::vector<std::string>{});
    if (static_cast<std::size_t>(v.n_shots) != v.shot_examples.size()) {
        throw schema_error("setting " + v.setting_id + ": n_shots does not match shot_examples");
    }
}

void to_json(nlohmann::json& j, const SettingCatalog& v) {
    auto settings = nlohmann::json::array();
    for (const auto& s : v.settings) settings.push_back(s);
    j = nlohmann::json{{"settings", std::move(settings)},
                       {"skip_tokens", v.skip_tokens},
                       {"stop_sequences", v.stop_sequences}};
}

void from_json(const nlohmann::json& j, SettingCatalog& v) {
    v.settings.clear();
    for (const auto& s : j.at("settings")) v.settings.push_back(s.get<PromptSetting>());
    v.skip_tokens = j.value("skip_tokens", default_skip_tokens());
    v.stop_sequences = j.value("stop_sequences", default_stop_sequences());
}

}  // namespace hack
