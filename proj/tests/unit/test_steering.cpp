#include <doctest.h>

#include "hack/error.hpp"
#include "hack/rng.hpp"
#include "hack/steering.hpp"

using namespace hack;

namespace {

HallucinationLabel label(const std::string& item, HallucinationClass c) { return {item, "persona_1", c, {}, false}; }

GenerationRecord post(const std::string& item, const std::string& text) {
    GenerationRecord r;
    r.item_id = item;
    r.setting_id = "persona_1";
    r.text = text;
    return r;
}

QAItem qa(const std::string& id, const std::string& gold) { return {id, "?", {gold}, "test", 5}; }

}  // namespace

TEST_CASE("direction is the difference of means") {
    const Matrix f(4, Vector{1, 0});
    const Matrix h(3, Vector{0, 1});
    CHECK(compute_direction(f, h) == Vector{1, -1});
    CHECK(compute_direction(f, f) == Vector{0, 0});
    CHECK_THROWS_AS(compute_direction(Matrix{}, h), Error);
    CHECK_THROWS_AS(compute_direction(f, Matrix{{1, 2, 3}}), Error);
}

TEST_CASE("direction is antisymmetric") {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix a(1 + rng.below(20), Vector(6));
        Matrix b(1 + rng.below(20), Vector(6));
        for (auto& r : a) {
            for (auto& v : r) v = rng.normal();
        }
        for (auto& r : b) {
            for (auto& v : r) v = rng.normal();
        }
        const auto d = compute_direction(a, b);
        const auto e = compute_direction(b, a);
        for (std::size_t i = 0; i < d.size(); ++i) CHECK(d[i] == -e[i]);
    }
}

TEST_CASE("planted direction is recovered") {
    Rng rng(10);
    Vector mu(32);
    for (auto& v : mu) v = rng.normal();
    Matrix f;
    Matrix h;
    for (int i = 0; i < 1000; ++i) {
        Vector a(32);
        Vector b(32);
        for (std::size_t d = 0; d < 32; ++d) {
            a[d] = mu[d] + rng.normal(0.0, 0.1);
            b[d] = -mu[d] + rng.normal(0.0, 0.1);
        }
        f.push_back(a);
        h.push_back(b);
    }
    Vector two_mu(mu);
    for (auto& v : two_mu) v *= 2;
    CHECK(cosine_similarity(compute_direction(f, h), two_mu) >= 0.99);
}

TEST_CASE("reference steering") {
    CHECK(apply_steering_reference(Vector{1, 1}, Vector{0.5, -0.5}, 5.0) == Vector{3.5, -1.5});
    CHECK(apply_steering_reference(Vector{1, 2}, Vector{0, 0}, 5.0) == Vector{1, 2});
    CHECK_THROWS_AS(apply_steering_reference(Vector{1, 2}, Vector{1}, 1.0), Error);
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        Vector e(16);
        Vector d(16);
        for (auto& v : e) v = rng.normal() * 1e6;
        for (auto& v : d) v = rng.normal();
        CHECK(apply_steering_reference(e, d, 0.0) == e);
    }
}

TEST_CASE("steering outcomes per class") {
    const std::vector<QAItem> items{qa("a", "Paris"), qa("b", "Rome"), qa("c", "Oslo"), qa("d", "Lima")};
    const std::vector<HallucinationLabel> labels{label("a", HallucinationClass::HKplus),
                                                 label("b", HallucinationClass::HKplus),
                                                 label("c", HallucinationClass::HKminus),
                                                 label("d", HallucinationClass::Factual)};
    const std::vector<GenerationRecord> recs{post("a", "It is Paris."), post("b", "Milan"), post("c", "Bergen"),
                                             post("d", "lima")};
    const auto out = evaluate_steering(recs, labels, items);
    REQUIRE(out.size() == 3);
    CHECK(out[0].label == HallucinationClass::HKplus);
    CHECK(out[0].n == 2);
    CHECK(out[0].n_correct_after == 1);
    CHECK(out[0].rate == 0.5);
    CHECK(out[1].label == HallucinationClass::HKminus);
    CHECK(out[1].rate == 0.0);
    CHECK(out[2].label == HallucinationClass::Factual);
    CHECK(out[2].rate == 1.0);

    const std::vector<GenerationRecord> partial{recs[0], recs[1], recs[2]};
    CHECK_THROWS_AS(evaluate_steering(partial, labels, items), Error);
}

TEST_CASE("22 of 100 HKplus fixed") {
    std::vector<QAItem> items;
    std::vector<HallucinationLabel> labels;
    std::vector<GenerationRecord> recs;
    for (int i = 0; i < 100; ++i) {
        const std::string id = "q" + std::to_string(i);
        items.push_back(qa(id, "Gold"));
        labels.push_back(label(id, HallucinationClass::HKplus));
        recs.push_back(post(id, i < 22 ? "Gold" : "Wrong"));
    }
    const auto out = evaluate_steering(recs, labels, items);
    REQUIRE(out.size() == 1);
    CHECK(out[0].rate == doctest::Approx(0.22));
}

TEST_CASE("steering spec validation and JSON") {
    SteeringSpec spec;
    spec.entries = {{3, 1, {0.5F, -0.25F}, 0.9}, {1, 7, {1.0F, 2.0F}, 0.8}};
    CHECK_NOTHROW(validate(spec));
    const nlohmann::json j = spec;
    CHECK(j.at("n_heads") == 2);
    CHECK(j.at("alpha") == 5.0);
    CHECK(j.at("entries").at(0).at("direction").is_string());
    CHECK(j.get<SteeringSpec>() == spec);

    auto unsorted = spec;
    std::swap(unsorted.entries[0], unsorted.entries[1]);
    CHECK_THROWS_AS(validate(unsorted), Error);
    auto empty = spec;
    empty.entries[0].direction.clear();
    CHECK_THROWS_AS(validate(empty), Error);
    auto out_of_range = spec;
    out_of_range.entries[0].selection_score = 1.5;
    CHECK_THROWS_AS(validate(out_of_range), Error);

    SteeringOutcome o{HallucinationClass::HKminus, 10, 3, 0.3};
    CHECK(nlohmann::json(o).get<SteeringOutcome>() == o);
}
