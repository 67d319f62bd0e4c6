#include <doctest.h>

#include <chrono>
#include <cstdlib>
#include <numeric>

#include "hack/cm_analysis.hpp"
#include "hack/error.hpp"
#include "hack/rng.hpp"
#include "oracles.hpp"

using namespace hack;

namespace {

std::vector<double> uniform_scores(Rng& rng, std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform();
    return v;
}

IdSet ids(const std::string& prefix, int from, int to) {
    IdSet s;
    for (int i = from; i < to; ++i) s.insert(prefix + std::to_string(i));
    return s;
}

HallucinationLabel label(const std::string& item, HallucinationClass c) { return {item, "persona_1", c, {}, false}; }

CertaintyScore score(const std::string& item, CertaintyMethod m, double v) {
    return make_score(item, "persona_1", m, v);
}

ThresholdResult threshold(CertaintyMethod m, double t) {
    ThresholdResult r;
    r.method = m;
    r.t_star = t;
    return r;
}

}  // namespace

TEST_CASE("worked threshold example") {
    const std::vector<double> h{0.2, 0.9};
    const std::vector<double> f{0.6, 0.8};
    const auto r = optimize_threshold(h, f);
    CHECK(r.t_star == doctest::Approx(0.4));
    CHECK(r.objective == 1);
    CHECK(threshold_objective(h, f, 0.7) == 2);
    CHECK(threshold_objective(h, f, 0.85) == 3);
}

TEST_CASE("threshold edge cases") {
    const auto sep = optimize_threshold(std::vector<double>{0.1}, std::vector<double>{0.9});
    CHECK(sep.objective == 0);
    CHECK(sep.t_star == doctest::Approx(0.5));
    CHECK(optimize_threshold(std::vector<double>{0.9}, std::vector<double>{0.1}).objective == 1);
    CHECK_THROWS_AS(optimize_threshold(std::vector<double>{}, std::vector<double>{0.1}), Error);
    // Identical pools leave only the sentinels; the upper one misses just the factual score.
    const auto flat = optimize_threshold(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5});
    CHECK(flat.objective == 1);
    CHECK(flat.t_star == doctest::Approx(1.5));
}

TEST_CASE("threshold search agrees with brute force") {
    Rng rng(123);
    for (int trial = 0; trial < 500; ++trial) {
        auto h = uniform_scores(rng, 1 + rng.below(50));
        auto f = uniform_scores(rng, 1 + rng.below(50));
        if (trial % 3 == 0) {
            // Coarse grid forces ties between pooled scores.
            for (auto& x : h) x = std::round(x * 10) / 10;
            for (auto& x : f) x = std::round(x * 10) / 10;
        }
        const auto want = oracle::best_threshold(h, f);
        const auto got = optimize_threshold(h, f);
        CAPTURE(trial);
        CHECK(got.objective == want.objective);
        CHECK(got.t_star == want.t);
        CHECK(got.objective == oracle::misclassified(h, f, got.t_star));
    }
}

TEST_CASE("objective is flat between neighbouring scores") {
    Rng rng(9);
    for (int trial = 0; trial < 100; ++trial) {
        const auto h = uniform_scores(rng, 20);
        const auto f = uniform_scores(rng, 20);
        const auto r = optimize_threshold(h, f);
        std::vector<double> pooled = h;
        pooled.insert(pooled.end(), f.begin(), f.end());
        double gap = 1.0;
        for (double x : pooled) gap = std::min(gap, std::abs(x - r.t_star));
        CHECK(threshold_objective(h, f, r.t_star + gap / 2) == r.objective);
        CHECK(threshold_objective(h, f, r.t_star - gap / 2) == r.objective);
    }
}

TEST_CASE("balanced sampling") {
    const std::vector<double> five{1, 2, 3, 4, 5};
    const auto whole = balanced_sample(five, five, 17);
    CHECK(whole.hallucinated == five);
    CHECK(whole.factual == five);

    std::vector<double> many(100);
    std::iota(many.begin(), many.end(), 0.0);
    const auto b = balanced_sample(std::vector<double>{7, 8, 9}, many, 4);
    CHECK(b.hallucinated.size() == 3);
    CHECK(b.factual.size() == 3);
    CHECK(std::is_sorted(b.factual.begin(), b.factual.end()));
    const auto again = balanced_sample(std::vector<double>{7, 8, 9}, many, 4);
    CHECK(again.factual == b.factual);
    CHECK_THROWS_AS(balanced_sample(std::vector<double>{}, many, 1), Error);
}

TEST_CASE("detect_cm flags HKplus only") {
    const std::map<CertaintyMethod, ThresholdResult> t{
        {CertaintyMethod::Probability, threshold(CertaintyMethod::Probability, 0.5)},
        {CertaintyMethod::ProbDiff, threshold(CertaintyMethod::ProbDiff, 0.3)}};
    const std::vector<HallucinationLabel> labels{label("both", HallucinationClass::HKplus),
                                                 label("one", HallucinationClass::HKplus),
                                                 label("none", HallucinationClass::HKplus),
                                                 label("fact", HallucinationClass::Factual)};
    const std::vector<CertaintyScore> scores{
        score("both", CertaintyMethod::Probability, 0.9), score("both", CertaintyMethod::ProbDiff, 0.9),
        score("one", CertaintyMethod::Probability, 0.9),  score("one", CertaintyMethod::ProbDiff, 0.1),
        score("none", CertaintyMethod::Probability, 0.5), score("none", CertaintyMethod::ProbDiff, 0.3),
        score("fact", CertaintyMethod::Probability, 0.99), score("fact", CertaintyMethod::ProbDiff, 0.99)};
    const auto v = detect_cm(scores, labels, t);
    REQUIRE(v.size() == 3);
    std::map<std::string, CMVerdict> by;
    for (const auto& x : v) by[x.item_id] = x;
    CHECK(by.count("fact") == 0);
    CHECK(by["both"].in_intersection);
    CHECK(by["both"].in_union);
    CHECK_FALSE(by["one"].in_intersection);
    CHECK(by["one"].in_union);
    CHECK(by["one"].per_method.at(CertaintyMethod::Probability));
    // Strictly greater than the threshold.
    CHECK_FALSE(by["none"].in_union);

    const std::vector<CertaintyScore> missing{score("both", CertaintyMethod::Probability, 0.9)};
    CHECK_THROWS_AS(detect_cm(missing, std::vector<HallucinationLabel>{labels[0]}, t), Error);
}

TEST_CASE("property: intersection within union, higher thresholds flag fewer") {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<HallucinationLabel> labels;
        std::vector<CertaintyScore> scores;
        for (int i = 0; i < 40; ++i) {
            const std::string id = "q" + std::to_string(i);
            labels.push_back(label(id, rng.uniform() < 0.7 ? HallucinationClass::HKplus : HallucinationClass::HKminus));
            scores.push_back(score(id, CertaintyMethod::Probability, rng.uniform()));
            scores.push_back(score(id, CertaintyMethod::SemanticEntropy, 2 * rng.uniform()));
        }
        const double tp = rng.uniform();
        const double ts = -2 * rng.uniform();
        const auto lo = detect_cm(scores, labels,
                                  {{CertaintyMethod::Probability, threshold(CertaintyMethod::Probability, tp)},
                                   {CertaintyMethod::SemanticEntropy, threshold(CertaintyMethod::SemanticEntropy, ts)}});
        const auto hi = detect_cm(
            scores, labels,
            {{CertaintyMethod::Probability, threshold(CertaintyMethod::Probability, tp + 0.1)},
             {CertaintyMethod::SemanticEntropy, threshold(CertaintyMethod::SemanticEntropy, ts)}});
        REQUIRE(lo.size() == hi.size());
        for (std::size_t i = 0; i < lo.size(); ++i) {
            CHECK((!lo[i].in_intersection || lo[i].in_union));
            CHECK((!hi[i].per_method.at(CertaintyMethod::Probability) ||
                   lo[i].per_method.at(CertaintyMethod::Probability)));
        }
        const auto single = detect_cm(scores, labels,
                                      {{CertaintyMethod::Probability, threshold(CertaintyMethod::Probability, tp)}});
        for (const auto& v : single) CHECK(v.in_intersection == v.in_union);
    }
}

TEST_CASE("jaccard") {
    CHECK(jaccard({"a", "b"}, {"a", "b"}) == 1.0);
    CHECK(jaccard({"a"}, {"b"}) == 0.0);
    CHECK(jaccard({"a", "b", "c"}, {"b", "c", "d"}) == 0.5);
    CHECK(jaccard({}, {"x"}) == 0.0);
    CHECK_THROWS_AS(jaccard({}, {}), Error);
}

TEST_CASE("permutation test edge cases") {
    // Observed equals pool: every resample reproduces jaccard 1 and ties count.
    const auto all = ids("x", 0, 20);
    const auto r = permutation_test(all, all, all, all, 1000, 1);
    CHECK(r.jaccard == 1.0);
    CHECK(r.n_ge_observed == 1000);
    CHECK(r.permutation_p == 1.0);

    const auto zero = permutation_test(ids("a", 0, 5), ids("a", 5, 10), ids("a", 0, 10), ids("a", 0, 10), 500, 3);
    CHECK(zero.jaccard == 0.0);
    CHECK(zero.permutation_p == 1.0);

    CHECK_THROWS_AS(permutation_test(ids("a", 0, 5), ids("a", 0, 5), ids("a", 0, 3), ids("a", 0, 5)), Error);
    CHECK_THROWS_AS(permutation_test(ids("z", 0, 2), ids("a", 0, 2), ids("a", 0, 5), ids("a", 0, 5)), Error);
}

TEST_CASE("planted overlap is significant, random overlap is not") {
    const auto pool = ids("p", 0, 500);
    // 33 shared of 67 total: jaccard just under one half.
    const auto a = ids("p", 0, 50);
    const auto b = ids("p", 17, 67);
    const auto planted = permutation_test(a, b, pool, pool, 10000, 42);
    CHECK(planted.jaccard == doctest::Approx(33.0 / 67.0));
    CHECK(planted.permutation_p < 0.01);
    CHECK(planted.permutation_p >= 1.0 / 10001.0);

    int not_significant = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(seed);
        const std::vector<std::string> all(pool.begin(), pool.end());
        IdSet ra;
        IdSet rb;
        for (auto i : rng.sample_indices(500, 50)) ra.insert(all[i]);
        for (auto i : rng.sample_indices(500, 50)) rb.insert(all[i]);
        if (permutation_test(ra, rb, pool, pool, 1000, seed + 1000).permutation_p > 0.05) ++not_significant;
    }
    CHECK(not_significant >= 90);
}

TEST_CASE("permutation test is deterministic and thread-count independent") {
    const auto pool = ids("p", 0, 200);
    const auto a = ids("p", 0, 30);
    const auto b = ids("p", 20, 60);
    const auto first = permutation_test(a, b, pool, pool, 2000, 7);
    CHECK(permutation_test(a, b, pool, pool, 2000, 7) == first);
    ::setenv("HACK_AXES_THREADS", "1", 1);
    const auto serial = permutation_test(a, b, pool, pool, 2000, 7);
    ::unsetenv("HACK_AXES_THREADS");
    CHECK(serial == first);
}

TEST_CASE("10000 resamples run quickly") {
    const auto pool = ids("p", 0, 500);
    const auto start = std::chrono::steady_clock::now();
    permutation_test(ids("p", 0, 50), ids("p", 25, 75), pool, pool, 10000, 42);
    CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(10));
}

TEST_CASE("analysis records serialize") {
    ThresholdResult t{CertaintyMethod::ProbDiff, 0.25, 3, 10, 10, 99, true};
    CHECK(nlohmann::json(t).get<ThresholdResult>() == t);
    CMVerdict v{"q", "s", {{CertaintyMethod::Probability, true}, {CertaintyMethod::ProbDiff, false}}, false, true};
    CHECK(nlohmann::json(v).get<CMVerdict>() == v);
    OverlapReport o{"A", "B", 0.5, 0.01, 100, 3, 0};
    CHECK(nlohmann::json(o).get<OverlapReport>() == o);
}
