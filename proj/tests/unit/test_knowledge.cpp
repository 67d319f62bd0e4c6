#include <doctest.h>

#include "hack/error.hpp"
#include "hack/knowledge.hpp"

using namespace hack;

namespace {

QAItem item(std::vector<std::string> gold, std::string id = "q1") { return QAItem{id, "question?", gold, "test", 5}; }

std::vector<GenerationRecord> baseline(const std::string& id, const std::vector<std::string>& texts) {
    std::vector<GenerationRecord> out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        GenerationRecord r;
        r.item_id = id;
        r.decode = i == 0 ? DecodeParams::greedy(5) : DecodeParams::sampled(0.5, 5, i);
        r.text = texts[i];
        out.push_back(r);
    }
    return out;
}

GenerationRecord setting(const std::string& id, const std::string& text, const std::string& sid = "persona_1") {
    GenerationRecord r;
    r.item_id = id;
    r.setting_id = sid;
    r.text = text;
    return r;
}

CurationResult curate(const std::string& text, const std::vector<std::string>& gold, CurationOptions o = {}) {
    return curate_hkplus(text, item(gold), o);
}

}  // namespace

TEST_CASE("knowledge labels at the boundaries") {
    const auto q = item({"Paris"});
    CHECK(classify_knowledge(baseline("q1", {"Paris", "Paris", "Paris", "Paris", "Paris", "Paris"}), q).label ==
          KnowledgeLabel::ConsistentlyCorrect);
    CHECK(classify_knowledge(baseline("q1", {"Rome", "Rome", "Rome", "Rome", "Rome", "Rome"}), q).label ==
          KnowledgeLabel::NoCorrect);
    const auto mid = classify_knowledge(baseline("q1", {"Paris", "Rome", "Paris", "Rome", "Paris", "Rome"}), q);
    CHECK(mid.label == KnowledgeLabel::Middle);
    CHECK(mid.n_correct == 3);
    CHECK(mid.n_attempts == 6);
}

TEST_CASE("label invariant table") {
    for (int c = 0; c <= 6; ++c) {
        const auto l = knowledge_label_for(c, 6);
        CHECK((l == KnowledgeLabel::NoCorrect) == (c == 0));
        CHECK((l == KnowledgeLabel::ConsistentlyCorrect) == (c == 6));
    }
}

TEST_CASE("classify_knowledge rejects malformed record sets") {
    const auto q = item({"Paris"});
    CHECK_THROWS_AS(classify_knowledge(baseline("q1", {"Paris", "Paris"}), q), Error);
    auto mixed = baseline("q1", {"a", "b", "c", "d", "e", "f"});
    mixed[2].item_id = "q2";
    CHECK_THROWS_AS(classify_knowledge(mixed, q), Error);
    auto wrong_setting = baseline("q1", {"a", "b", "c", "d", "e", "f"});
    wrong_setting[1].setting_id = "persona_1";
    CHECK_THROWS_AS(classify_knowledge(wrong_setting, q), Error);
    auto two_greedy = baseline("q1", {"a", "b", "c", "d", "e", "f"});
    two_greedy[3].decode = DecodeParams::greedy(5);
    CHECK_THROWS_AS(classify_knowledge(two_greedy, q), Error);
}

TEST_CASE("label_example maps knowledge to classes") {
    const auto q = item({"Polar bear"});
    const KnowledgeVerdict none{"q1", 6, 0, KnowledgeLabel::NoCorrect};
    const KnowledgeVerdict some{"q1", 6, 2, KnowledgeLabel::Middle};
    const KnowledgeVerdict all{"q1", 6, 6, KnowledgeLabel::ConsistentlyCorrect};

    CHECK(label_example(none, setting("q1", "anything"), q).label == HallucinationClass::HKminus);
    const auto mid = label_example(some, setting("q1", "Polar bear"), q);
    CHECK(mid.label == HallucinationClass::Excluded);
    CHECK(mid.reason == ExclusionReason::middle_range);
    CHECK(label_example(all, setting("q1", "Polar bear"), q).label == HallucinationClass::Factual);
    const auto hk = label_example(all, setting("q1", "Arctic fox"), q);
    CHECK(hk.label == HallucinationClass::HKplus);
    CHECK(hk.is_hallucination());
    CHECK(hk.synonym_check_skipped);
    CHECK_THROWS_AS(label_example(all, setting("q2", "x"), q), Error);
    CHECK_THROWS_AS(label_example(all, setting("q1", "x", "baseline"), q), Error);
}

TEST_CASE("HKminus never depends on the setting text") {
    const auto q = item({"Paris"});
    const KnowledgeVerdict none{"q1", 6, 0, KnowledgeLabel::NoCorrect};
    for (const char* text : {"Paris", "The answer is not Paris", "", "Rome", "**Paris**"}) {
        const auto l = label_example(none, setting("q1", text), q);
        CHECK(l.label == HallucinationClass::HKminus);
        CHECK_FALSE(l.reason.has_value());
    }
}

TEST_CASE("curation rule 1: negation") {
    CHECK(curate("The answer is not Paris", {"Paris"}).excluded == ExclusionReason::negation);
    CHECK(curate("the ANSWER is not London", {"Paris"}).excluded == ExclusionReason::negation);
}

TEST_CASE("curation rule 2: synonyms from a lexicon") {
    const SynonymLexicon lex(std::unordered_map<std::string, std::vector<std::string>>{{"automobile", {"car"}}});
    CurationOptions o;
    o.lexicon = &lex;
    CHECK(curate("automobile", {"car"}, o).excluded == ExclusionReason::synonym);
    CHECK(curate("car", {"automobile"}, o).excluded == ExclusionReason::synonym);
    CHECK(curate("bicycle", {"car"}, o).keep());
    CHECK_FALSE(curate("bicycle", {"car"}, o).synonym_check_skipped);
    CHECK(curate("bicycle", {"car"}).synonym_check_skipped);
}

TEST_CASE("curation rule 3: stem overlap") {
    CHECK(curate("the running bears", {"bear running"}).excluded == ExclusionReason::stem_overlap);
    CHECK(curate("Arctic fox", {"Polar bear"}).keep());
}

TEST_CASE("curation rule 4: edit distance and literals") {
    CHECK(curate("Washingtn", {"Washington"}).excluded == ExclusionReason::edit_distance);
    CHECK(curate("great", {"Paris"}).excluded == ExclusionReason::edit_distance);
    CHECK(curate("None", {"Paris"}).excluded == ExclusionReason::edit_distance);
    CHECK(curate("n/a", {"Paris"}).excluded == ExclusionReason::edit_distance);
    // Numeric gold answers skip the distance check.
    CHECK(curate("1777", {"1776"}).keep());
    CHECK(edit_distance("kitten", "sitting") == 3);
    CHECK(edit_distance("", "abc") == 3);
}

TEST_CASE("curation rule 5: first word of the gold answer") {
    CHECK(curate("Polar", {"Polar bear"}).excluded == ExclusionReason::first_word);
}

TEST_CASE("curation rule 6: formatting") {
    CurationOptions o;
    o.require_double_asterisk = true;
    CHECK(curate("Arctic fox", {"Polar bear"}, o).excluded == ExclusionReason::formatting);
    CHECK(curate("**Arctic fox**", {"Polar bear"}, o).keep());
}

TEST_CASE("the first firing rule is reported") {
    CurationOptions o;
    o.require_double_asterisk = true;
    CHECK(curate("The answer is not Polar", {"Polar bear"}, o).excluded == ExclusionReason::negation);
}

TEST_CASE("labels serialize") {
    HallucinationLabel l{"q1", "persona_2", HallucinationClass::Excluded, ExclusionReason::first_word, true};
    const nlohmann::json j = l;
    CHECK(j.get<HallucinationLabel>() == l);
    KnowledgeVerdict v{"q1", 6, 6, KnowledgeLabel::ConsistentlyCorrect};
    CHECK(nlohmann::json(v).get<KnowledgeVerdict>() == v);
    nlohmann::json bad = v;
    bad["n_correct"] = 2;
    CHECK_THROWS(bad.get<KnowledgeVerdict>());
}
