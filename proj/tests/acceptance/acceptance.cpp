// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "hack/activation_store.hpp"
#include "hack/certainty.hpp"
#include "hack/cm_analysis.hpp"
#include "hack/error.hpp"
#include "hack/evaluation.hpp"
#include "hack/jsonl.hpp"
#include "hack/pipeline.hpp"
#include "hack/probe.hpp"
#include "hack/rng.hpp"
#include "hack/steering.hpp"
#include "hack/util.hpp"
#include "oracles.hpp"

using namespace hack;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool ok = false;
    std::string detail;
};

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

Verdict threshold_oracle() {
    Rng rng(20240601);
    int agree = 0;
    const auto start = Clock::now();
    for (int i = 0; i < 200; ++i) {
        std::vector<double> h(1 + rng.below(50));
        std::vector<double> f(1 + rng.below(50));
        for (auto& x : h) x = rng.uniform();
        for (auto& x : f) x = rng.uniform();
        if (optimize_threshold(h, f).objective == oracle::best_threshold(h, f).objective) ++agree;
    }
    const double t = seconds_since(start);
    return {agree == 200 && t < 1.0, fmt("%.0f/200 agree, %.3f s", agree, t)};
}

Verdict worked_threshold() {
    const auto r = optimize_threshold(std::vector<double>{0.2, 0.9}, std::vector<double>{0.6, 0.8});
    return {std::abs(r.t_star - 0.4) < 1e-12 && r.objective == 1,
            fmt("t_star %.6f objective %.0f", r.t_star, static_cast<double>(r.objective))};
}

Verdict semantic_entropy_analytics() {
    bool ok = true;
    double worst = 0.0;
    for (int k : {1, 2, 4, 8}) {
        std::vector<GenerationRecord> samples;
        for (int c = 0; c < k; ++c) {
            for (int rep = 0; rep < 5; ++rep) {
                GenerationRecord r;
                r.item_id = "q";
                r.text = "answer" + std::to_string(c);
                r.tokens.push_back({r.text, -1.0});
                samples.push_back(r);
            }
        }
        const double se = semantic_entropy(cluster_generations(samples, ClusterEstimator::count));
        worst = std::max(worst, std::abs(se - std::log(static_cast<double>(k))));
    }
    ok = worst < 1e-9;
    const double skew = semantic_entropy(ClusterSet{{{{0}, 0.75}, {{1}, 0.25}}, ClusterEstimator::count});
    ok = ok && std::abs(skew - 0.8370) <= 1e-4;
    return {ok, fmt("max |SE - ln K| %.2e, skewed %.4f", worst, skew)};
}

Verdict cm_score_algebra() {
    Rng rng(99);
    std::vector<std::string> universe;
    for (int i = 0; i < 40; ++i) universe.push_back("x" + std::to_string(i));
    const auto subset = [&](double p) {
        IdSet s;
        for (const auto& u : universe) {
            if (rng.uniform() < p) s.insert(u);
        }
        return s;
    };
    int good = 0;
    for (int t = 0; t < 1000; ++t) {
        const auto m = subset(0.5);
        const auto c1 = subset(0.3);
        const auto c2 = subset(0.3);
        IdSet inter;
        for (const auto& x : c1) {
            if (c2.count(x)) inter.insert(x);
        }
        IdSet uni = c1;
        uni.insert(c2.begin(), c2.end());
        const std::vector<IdSet> both{c1, c2};
        const std::vector<IdSet> one{c1};
        const auto s = cm_score(m, both);
        const auto single = cm_score(m, one);
        const auto d = cm_d(m, c1);
        bool ok = inter.empty() ? !s.cm.value.has_value() : *s.cm.value == oracle::ratio(m, inter);
        ok = ok && (uni.empty() ? !s.cm_f.value.has_value() : *s.cm_f.value == oracle::ratio(m, uni));
        ok = ok && (c1.empty() ? !d.value.has_value() : *d.value == oracle::ratio(m, c1));
        ok = ok && single.cm == single.cm_f && single.cm == d;
        good += ok ? 1 : 0;
    }
    return {good == 1000, fmt("%.0f/1000 triples exact", good)};
}

Verdict permutation() {
    IdSet pool;
    std::vector<std::string> all;
    for (int i = 0; i < 500; ++i) {
        all.push_back("p" + std::to_string(i));
        pool.insert(all.back());
    }
    IdSet a;
    IdSet b;
    for (int i = 0; i < 50; ++i) a.insert(all[i]);
    for (int i = 17; i < 67; ++i) b.insert(all[i]);
    const auto start = Clock::now();
    const auto planted = permutation_test(a, b, pool, pool, 10000, 42);
    const double t = seconds_since(start);
    int null_ok = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(mix_seed(seed, 1));
        IdSet ra;
        IdSet rb;
        for (auto i : rng.sample_indices(500, 50)) ra.insert(all[i]);
        for (auto i : rng.sample_indices(500, 50)) rb.insert(all[i]);
        if (permutation_test(ra, rb, pool, pool, 1000, seed).permutation_p > 0.05) ++null_ok;
    }
    return {planted.permutation_p < 0.01 && null_ok >= 90 && t < 10.0,
            fmt("planted p %.5f, null p>0.05 in %.0f/100, 10k resamples %.3f s", planted.permutation_p, null_ok, t)};
}

// Class means at +-margin along u: each mean is margin sd from the ideal hyperplane.
Matrix gaussian_rows(Rng& rng, const std::vector<int>& y, const Vector& u, double margin) {
    Matrix x;
    for (int label : y) {
        Vector row(u.size());
        for (std::size_t d = 0; d < u.size(); ++d) row[d] = rng.normal() + (label ? 1.0 : -1.0) * margin * u[d];
        x.push_back(std::move(row));
    }
    return x;
}

Vector random_unit(Rng& rng, std::size_t dim) {
    Vector u(dim);
    for (auto& v : u) v = rng.normal();
    const double n = norm2(u);
    for (auto& v : u) v /= n;
    return u;
}

Verdict probes() {
    Rng rng(5);
    std::vector<int> y(1000);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 2);
    rng.shuffle(y);
    const auto x = gaussian_rows(rng, y, random_unit(rng, 64), 5.0);
    const Matrix xtr(x.begin(), x.begin() + 700);
    const Matrix xte(x.begin() + 700, x.end());
    const std::vector<int> ytr(y.begin(), y.begin() + 700);
    const std::vector<int> yte(y.begin() + 700, y.end());
    const double lr = train_logreg(xtr, ytr).accuracy(xte, yte);
    const double svm = train_linear_svm(xtr, ytr).accuracy(xte, yte);

    std::vector<bool> is_cm(100, false);
    for (int i = 0; i < 35; ++i) is_cm[i] = true;
    std::size_t copies = 0;
    for (auto i : oversample_cm(is_cm, 0.65, 1)) copies += is_cm[i] ? 1 : 0;

    int planted_first = 0;
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        Rng r(100 + trial);
        std::vector<int> labels(300);
        for (auto& v : labels) v = static_cast<int>(r.below(2));
        const auto planted = static_cast<std::uint16_t>(r.below(8));
        std::vector<HeadActivations> heads;
        for (std::uint16_t h = 0; h < 8; ++h) {
            heads.push_back({Hook::attention_head(1, h), gaussian_rows(r, labels, random_unit(r, 16), h == planted ? 2.0 : 0.0)});
        }
        if (rank_heads(heads, labels, trial).front().hook == Hook::attention_head(1, planted)) ++planted_first;
    }
    return {lr >= 0.99 && svm >= 0.99 && copies == 121 && planted_first == 20,
            fmt("logreg %.4f, svm %.4f, ", lr, svm) +
                fmt("CM copies %.0f, planted head first %.0f/20", static_cast<double>(copies), planted_first)};
}

Verdict steering_math() {
    Rng rng(12);
    bool identity = true;
    bool antisym = true;
    for (int t = 0; t < 100; ++t) {
        Vector e(32);
        Vector d(32);
        for (auto& v : e) v = rng.normal() * 100;
        for (auto& v : d) v = rng.normal();
        identity = identity && apply_steering_reference(e, d, 0.0) == e;
        Matrix a(5, Vector(32));
        Matrix b(7, Vector(32));
        for (auto& r : a) {
            for (auto& v : r) v = rng.normal();
        }
        for (auto& r : b) {
            for (auto& v : r) v = rng.normal();
        }
        const auto ab = compute_direction(a, b);
        const auto ba = compute_direction(b, a);
        for (std::size_t i = 0; i < ab.size(); ++i) antisym = antisym && ab[i] == -ba[i];
    }
    const auto mu = random_unit(rng, 32);
    Matrix f;
    Matrix h;
    for (int i = 0; i < 1000; ++i) {
        Vector p(32);
        Vector q(32);
        for (std::size_t d = 0; d < 32; ++d) {
            p[d] = mu[d] + rng.normal(0.0, 0.1);
            q[d] = -mu[d] + rng.normal(0.0, 0.1);
        }
        f.push_back(p);
        h.push_back(q);
    }
    const double cos = cosine_similarity(compute_direction(f, h), mu);
    return {identity && antisym && cos >= 0.99,
            std::string(identity ? "identity exact" : "identity broken") + (antisym ? ", antisymmetric" : ", asymmetric") +
                fmt(", cosine %.5f", cos)};
}

RunConfig end_to_end_config() {
    RunConfig c;
    c.seed = 42;
    c.synth.n_items = 5000;
    c.synth.rate_no_correct = 0.30;
    c.synth.rate_middle = 0.05;
    c.synth.rate_consistent = 0.65;
    c.synth.rate_hkplus_given_known = 0.10;
    c.synth.rate_cm_given_hkplus = 0.25;
    c.synth.certainty_sd = 0.1;
    c.synth.certainty_gap = 4 * c.synth.certainty_sd;
    return c;
}

std::map<std::string, std::string> digests(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = sha256_file(e.path());
    return out;
}

struct EndToEnd {
    Verdict recovery{false, "end-to-end run failed"};
    Verdict differential{false, "end-to-end run failed"};
};

EndToEnd end_to_end() {
    const auto config = end_to_end_config();
    const auto a = oracle::temp_dir("accept_a");
    const auto b = oracle::temp_dir("accept_b");
    const auto start = Clock::now();
    run_all(config, a);
    const double t = seconds_since(start);
    run_all(config, b);
    const bool identical = digests(a) == digests(b);

    const auto manifest = read_jsonl<ManifestEntry>(a / "manifest.jsonl");
    const auto knowledge = read_jsonl<KnowledgeVerdict>(a / "knowledge.jsonl");
    const auto labels = read_jsonl<HallucinationLabel>(a / "labels.jsonl");
    const auto verdicts = read_jsonl<CMVerdict>(a / "cm.jsonl");

    std::map<std::string, KnowledgeLabel> planted_knowledge;
    std::map<std::string, PlantedSetting> planted;
    for (const auto& m : manifest) {
        planted_knowledge[m.item_id] = m.knowledge;
        for (const auto& s : m.settings) planted[example_key(m.item_id, s.setting_id)] = s;
    }
    std::size_t k_match = 0;
    for (const auto& k : knowledge) k_match += planted_knowledge.at(k.item_id) == k.label ? 1 : 0;
    std::size_t hk_total = 0;
    std::size_t hk_match = 0;
    for (const auto& l : labels) {
        const auto& p = planted.at(example_key(l.item_id, l.setting_id));
        const bool want = p.label == HallucinationClass::HKplus;
        const bool got = l.label == HallucinationClass::HKplus;
        hk_total += 1;
        hk_match += want == got ? 1 : 0;
    }
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::map<std::string, bool> flagged;
    for (const auto& v : verdicts) flagged[example_key(v.item_id, v.setting_id)] = v.in_intersection;
    for (const auto& [key, p] : planted) {
        const auto it = flagged.find(key);
        const bool got = it != flagged.end() && it->second;
        if (got && p.is_cm) ++tp;
        else if (got) ++fp;
        else if (p.is_cm) ++fn;
    }
    const double f1 = tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
    const bool labels_ok = k_match == knowledge.size() && knowledge.size() == manifest.size() && hk_match == hk_total;

    EndToEnd out;
    out.recovery = {labels_ok && f1 >= 0.95 && t < 60.0 && identical,
                    fmt("knowledge %.0f/%.0f, ", k_match, knowledge.size()) +
                        fmt("HK+ labels %.0f/%.0f, CM F1 %.4f, ", hk_match, hk_total, f1) +
                        fmt("pipeline %.2f s, ", t) + (identical ? "rerun byte-identical" : "rerun DIFFERS")};

    const auto steer = nlohmann::json::parse(read_file(a / "steering_eval.json"));
    const double plus = steer.at("hkplus_rate").get<double>();
    const double minus = steer.at("hkminus_rate").get<double>();
    out.differential = {plus > minus + 0.05, fmt("HK+ rate %.4f vs HK- rate %.4f", plus, minus)};
    return out;
}

Verdict formats() {
    Rng rng(77);
    std::vector<GenerationRecord> recs;
    std::vector<ActivationRecord> acts;
    for (int i = 0; i < 10000; ++i) {
        GenerationRecord r;
        r.item_id = "item" + std::to_string(i);
        r.setting_id = i % 3 == 0 ? kBaselineSetting : "persona_" + std::to_string(1 + i % 10);
        r.decode = i % 2 ? DecodeParams::sampled(1.0, 5, rng.next_u64()) : DecodeParams::greedy(5);
        r.text = "Answer \"" + std::to_string(rng.uniform()) + "\" é\n";
        r.tokens = {{"Answer", std::log(rng.uniform() + 1e-9)}, {" x", -rng.uniform()}};
        r.first_token_topk = {{"Answer", 0.6}, {"The", 0.3}};
        r.stop_reason = StopReason::eos;
        recs.push_back(r);
        ActivationRecord a;
        a.item_id = r.item_id;
        a.setting_id = r.setting_id;
        a.hook = i % 2 ? Hook::residual(15) : Hook::attention_head(3, 5);
        a.vector.resize(16);
        for (auto& v : a.vector) v = static_cast<float>(rng.normal());
        acts.push_back(a);
    }
    const auto text = to_jsonl(std::span<const GenerationRecord>(recs));
    const auto back = parse_jsonl<GenerationRecord>(text);
    const bool jsonl_ok = back == recs && to_jsonl(std::span<const GenerationRecord>(back)) == text;
    const auto bytes = encode_activation_store(acts);
    const auto decoded = decode_activation_store(bytes);
    const bool store_ok = decoded == acts && encode_activation_store(decoded) == bytes;
    auto corrupt = bytes;
    corrupt[0] = 'X';
    bool rejected = false;
    try {
        decode_activation_store(corrupt);
    } catch (const Error& e) {
        rejected = e.kind() == ErrorKind::schema;
    }
    return {jsonl_ok && store_ok && rejected, std::string("jsonl ") + (jsonl_ok ? "identical" : "DIFFERS") +
                                                  ", store " + (store_ok ? "identical" : "DIFFERS") +
                                                  ", bad magic " + (rejected ? "rejected" : "ACCEPTED")};
}

}  // namespace

int main() {
    int failures = 0;
    const auto report = [&](const char* name, const std::function<Verdict()>& check) {
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s  %-34s %s\n", v.ok ? "PASS" : "FAIL", name, v.detail.c_str());
        std::fflush(stdout);
        failures += v.ok ? 0 : 1;
    };

    report("threshold-oracle", threshold_oracle);
    report("worked-threshold-example", worked_threshold);
    report("semantic-entropy-analytics", semantic_entropy_analytics);
    report("cm-score-algebra", cm_score_algebra);
    report("permutation-test", permutation);
    report("probe-suites", probes);
    report("steering-math", steering_math);

    EndToEnd e2e;
    bool e2e_ran = false;
    const auto run_e2e = [&] {
        if (!e2e_ran) {
            e2e_ran = true;
            e2e = end_to_end();
        }
    };
    report("end-to-end-synthetic-recovery", [&] {
        run_e2e();
        return e2e.recovery;
    });
    report("synthetic-steering-differential", [&] {
        run_e2e();
        return e2e.differential;
    });
    report("format-conformance", formats);

    std::printf("%d failed\n", failures);
    return failures == 0 ? 0 : 1;
}
