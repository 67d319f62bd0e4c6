#include <doctest.h>

#include "hack/error.hpp"
#include "hack/evaluation.hpp"
#include "hack/rng.hpp"
#include "oracles.hpp"

using namespace hack;

namespace {

HallucinationLabel label(const std::string& item, HallucinationClass c) { return {item, "s", c, {}, false}; }

MitigationOutcome outcome(const std::string& item, bool abstained, bool mitigated, const std::string& method = "m") {
    return {item, "s", method, abstained ? MitigationAction::abstained : MitigationAction::answered, mitigated};
}

IdSet random_subset(Rng& rng, const std::vector<std::string>& universe, double p) {
    IdSet s;
    for (const auto& x : universe) {
        if (rng.uniform() < p) s.insert(x);
    }
    return s;
}

}  // namespace

TEST_CASE("cm_d by hand") {
    const IdSet c{"a", "b", "c", "d", "e", "f", "g", "h"};
    CHECK(cm_d({"a", "b", "z"}, c).value == 0.25);
    CHECK(cm_d(c, {"a", "b"}).value == 1.0);
    CHECK(cm_d({"z"}, {"a", "b"}).value == 0.0);
    const auto empty = cm_d({"a"}, {});
    CHECK_FALSE(empty.value.has_value());
    CHECK_FALSE(empty.null_reason.empty());
}

TEST_CASE("cm and cm_f") {
    const std::vector<IdSet> sets{{"a", "b"}, {"b", "c"}};
    const auto s = cm_score({"b"}, sets);
    CHECK(s.cm.value == 1.0);
    CHECK(*s.cm_f.value == doctest::Approx(1.0 / 3.0));
    const auto none = cm_score({}, sets);
    CHECK(none.cm.value == 0.0);
    CHECK(none.cm_f.value == 0.0);
    const std::vector<IdSet> one{{"a", "b", "c"}};
    const auto single = cm_score({"a"}, one);
    CHECK(single.cm == single.cm_f);
    CHECK_THROWS_AS(cm_score({"a"}, std::vector<IdSet>{}), Error);
}

TEST_CASE("CM-Score family matches brute force on random triples") {
    Rng rng(1);
    std::vector<std::string> universe;
    for (int i = 0; i < 30; ++i) universe.push_back("e" + std::to_string(i));
    for (int trial = 0; trial < 1000; ++trial) {
        const auto m = random_subset(rng, universe, 0.5);
        const auto c1 = random_subset(rng, universe, 0.4);
        const auto c2 = random_subset(rng, universe, 0.4);
        IdSet inter;
        IdSet uni = c1;
        for (const auto& x : c1) {
            if (c2.count(x)) inter.insert(x);
        }
        uni.insert(c2.begin(), c2.end());
        const std::vector<IdSet> sets{c1, c2};
        const auto s = cm_score(m, sets);
        if (inter.empty()) {
            CHECK_FALSE(s.cm.value.has_value());
        } else {
            CHECK(*s.cm.value == oracle::ratio(m, inter));
        }
        if (uni.empty()) {
            CHECK_FALSE(s.cm_f.value.has_value());
        } else {
            CHECK(*s.cm_f.value == oracle::ratio(m, uni));
        }
        if (!c1.empty()) CHECK(*cm_d(m, c1).value == oracle::ratio(m, c1));
        const std::vector<IdSet> single{c1};
        const auto one = cm_score(m, single);
        CHECK(one.cm == one.cm_f);

        // A superset of the union becomes the new union; the intersection can only shrink.
        IdSet bigger = uni;
        bigger.insert("extra");
        const std::vector<IdSet> three{c1, c2, bigger};
        const auto s3 = cm_score(m, three);
        CHECK(s3.cm_f.denominator == static_cast<std::int64_t>(bigger.size()));
        CHECK(s3.cm.denominator <= s.cm.denominator);
    }
}

TEST_CASE("accuracy metrics") {
    const std::vector<HallucinationLabel> labels{label("h1", HallucinationClass::HKplus),
                                                 label("h2", HallucinationClass::HKminus),
                                                 label("f1", HallucinationClass::Factual),
                                                 label("f2", HallucinationClass::Factual),
                                                 label("f3", HallucinationClass::Factual),
                                                 label("x", HallucinationClass::Excluded)};

    const std::vector<MitigationOutcome> perfect{outcome("h1", true, true), outcome("h2", true, true),
                                                 outcome("f1", false, true), outcome("f2", false, true),
                                                 outcome("f3", false, true)};
    const auto p = accuracy_metrics(perfect, labels);
    CHECK(p.acc.value == 1.0);
    CHECK(p.h_acc.value == 1.0);
    CHECK(p.nh_acc.value == 1.0);

    // Abstaining on everything: the factual side is never answered.
    const std::vector<MitigationOutcome> all{outcome("h1", true, true), outcome("h2", true, true),
                                             outcome("f1", true, true), outcome("f2", true, true),
                                             outcome("f3", true, true)};
    const auto a = accuracy_metrics(all, labels);
    CHECK(a.h_acc.value == 1.0);
    CHECK(a.nh_acc.value == 0.0);
    CHECK(*a.acc.value == doctest::Approx(2.0 / 5.0));
    CHECK(*accuracy_metrics(all, labels, AccuracyWeighting::per_class).acc.value == doctest::Approx(0.5));

    const std::vector<MitigationOutcome> never{outcome("h1", false, false), outcome("h2", false, false),
                                               outcome("f1", false, true), outcome("f2", false, true),
                                               outcome("f3", false, true)};
    const auto n = accuracy_metrics(never, labels);
    CHECK(n.h_acc.value == 0.0);
    CHECK(n.nh_acc.value == 1.0);

    const std::vector<MitigationOutcome> missing{perfect.begin(), perfect.begin() + 4};
    CHECK_THROWS_AS(accuracy_metrics(missing, labels), Error);

    const std::vector<HallucinationLabel> only_factual{labels[2]};
    const auto nf = accuracy_metrics(perfect, only_factual);
    CHECK_FALSE(nf.h_acc.value.has_value());
    CHECK(nf.nh_acc.value == 1.0);
}

TEST_CASE("evaluate_mitigation wires verdicts to metrics") {
    const std::vector<HallucinationLabel> labels{label("a", HallucinationClass::HKplus),
                                                 label("b", HallucinationClass::HKplus),
                                                 label("c", HallucinationClass::HKplus),
                                                 label("f", HallucinationClass::Factual)};
    const std::vector<CMVerdict> verdicts{
        {"a", "s", {{CertaintyMethod::Probability, true}, {CertaintyMethod::ProbDiff, true}}, true, true},
        {"b", "s", {{CertaintyMethod::Probability, true}, {CertaintyMethod::ProbDiff, false}}, false, true},
        {"c", "s", {{CertaintyMethod::Probability, false}, {CertaintyMethod::ProbDiff, false}}, false, false}};
    const std::vector<MitigationOutcome> outcomes{outcome("a", true, true), outcome("b", false, false),
                                                  outcome("c", true, true), outcome("f", false, true)};
    const auto r = evaluate_mitigation("m", outcomes, verdicts, labels);
    CHECK(r.cm.value == 1.0);
    CHECK(r.cm_f.value == 0.5);
    CHECK(r.cm_d.at(CertaintyMethod::Probability).value == 0.5);
    CHECK(r.cm_d.at(CertaintyMethod::ProbDiff).value == 1.0);
    CHECK(*r.h_acc.value == doctest::Approx(2.0 / 3.0));
    CHECK(r.nh_acc.value == 1.0);
    CHECK(nlohmann::json(r).get<EvalReport>() == r);

    const std::vector<MitigationOutcome> wrong{outcome("a", true, true, "other")};
    CHECK_THROWS_AS(evaluate_mitigation("m", wrong, verdicts, labels), Error);
}

TEST_CASE("abstention and generation outcomes") {
    const std::vector<HallucinationLabel> labels{label("h", HallucinationClass::HKplus),
                                                 label("f", HallucinationClass::Factual),
                                                 label("x", HallucinationClass::Excluded)};
    const std::vector<CertaintyScore> scores{make_score("h", "s", CertaintyMethod::Probability, 0.3),
                                             make_score("f", "s", CertaintyMethod::Probability, 0.9)};
    ThresholdResult t;
    t.t_star = 0.5;
    const auto o = abstention_outcomes(scores, t, labels, "abstain");
    REQUIRE(o.size() == 2);
    CHECK(o[0].action == MitigationAction::abstained);
    CHECK(o[0].mitigated);
    CHECK(o[1].action == MitigationAction::answered);
    CHECK(o[1].mitigated);
    t.t_star = 0.3;
    CHECK(abstention_outcomes(scores, t, labels, "abstain")[0].action == MitigationAction::abstained);

    const std::vector<QAItem> items{{"h", "?", {"Paris"}, "t", 5}, {"f", "?", {"Rome"}, "t", 5}};
    std::vector<GenerationRecord> recs(2);
    recs[0].item_id = "h";
    recs[0].setting_id = "s";
    recs[0].text = "Paris";
    recs[1].item_id = "f";
    recs[1].setting_id = "s";
    recs[1].text = "Milan";
    const auto g = generation_outcomes(recs, labels, items, "steer");
    REQUIRE(g.size() == 2);
    CHECK(g[0].mitigated);
    CHECK_FALSE(g[1].mitigated);
    CHECK(nlohmann::json(g[0]).get<MitigationOutcome>() == g[0]);
}

TEST_CASE("rendered report") {
    EvalReport a;
    a.method_id = "zeta";
    a.cm = ratio_metric(1, 2, "");
    a.cm_f = ratio_metric(0, 0, "no examples flagged by any method");
    a.acc = ratio_metric(3, 4, "");
    a.h_acc = ratio_metric(1, 1, "");
    a.nh_acc = ratio_metric(2, 3, "");
    EvalReport b = a;
    b.method_id = "alpha";
    const auto one = render_report({a});
    const auto two = render_report({a, b});
    CHECK(render_report({a, b}).markdown == two.markdown);
    CHECK(render_report({b, a}).markdown == two.markdown);
    CHECK(two.markdown.find("alpha") < two.markdown.find("zeta"));
    CHECK(two.markdown.find("—") != std::string::npos);
    CHECK(two.markdown.find("no examples flagged by any method") != std::string::npos);
    std::size_t rows = 0;
    for (std::size_t pos = one.markdown.find("| zeta"); pos != std::string::npos;
         pos = one.markdown.find("| zeta", pos + 1)) {
        ++rows;
    }
    CHECK(rows == 1);
    CHECK(two.json.dump() == render_report({b, a}).json.dump());
}
