#include "hack/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "hack/activation_store.hpp"
#include "hack/cm_analysis.hpp"
#include "hack/error.hpp"
#include "hack/jsonl.hpp"
#include "hack/knowledge.hpp"
#include "hack/rng.hpp"
#include "hack/settings.hpp"
#include "hack/steering.hpp"
#include "hack/util.hpp"
#include "json_enum.hpp"

namespace fs = std::filesystem;

namespace hack {
namespace {

constexpr std::array<std::pair<AccuracyWeighting, std::string_view>, 2> kWeightings{{
    {AccuracyWeighting::per_example, "per_example"},
    {AccuracyWeighting::per_class, "per_class"},
}};

// Stage-private seed streams derived from the run seed.
constexpr std::uint64_t kThresholdStream = 11;
constexpr std::uint64_t kOverlapStream = 12;
constexpr std::uint64_t kOversampleStream = 13;

const std::map<std::string, std::string>& producers() {
    static const std::map<std::string, std::string> m{
        {"items.jsonl", "synth"},
        {"generations.jsonl", "synth"},
        {"activations.bin", "synth"},
        {"manifest.jsonl", "synth"},
        {"synth_config.json", "synth"},
        {"knowledge.jsonl", "label-knowledge"},
        {"labels.jsonl", "label-hallucination"},
        {"scores.jsonl", "score-certainty"},
        {"thresholds.jsonl", "threshold"},
        {"cm.jsonl", "detect-cm"},
        {"overlap.jsonl", "analyze-overlap"},
        {"probe.json", "train-probe"},
        {"probe_cm.json", "train-probe"},
        {"probe_eval.json", "train-probe"},
        {"steering_hkplus.json", "compute-steering"},
        {"steering_hkminus.json", "compute-steering"},
        {"steered_hkplus.jsonl", "synth-steer"},
        {"steered_hkminus.jsonl", "synth-steer"},
        {"outcomes.jsonl", "mitigate"},
        {"steering_eval.json", "mitigate"},
        {"eval.json", "evaluate"},
        {"eval.md", "evaluate"},
    };
    return m;
}

// Tracks one stage's inputs and outputs for its run manifest.
class StageRun {
public:
    StageRun(std::string stage, const RunConfig& config, fs::path dir)
        : stage_(std::move(stage)), config_(config), dir_(std::move(dir)), hash_(config_hash(config)) {}

    fs::path input(const std::string& name) {
        const fs::path p = dir_ / name;
        if (!fs::exists(p)) {
            const auto it = producers().find(name);
            const std::string by = it == producers().end() ? "an earlier stage" : "`" + it->second + "`";
            throw data_error(stage_ + ": missing input " + p.string() + "; run " + by + " first");
        }
        inputs_[name] = sha256_file(p);
        return p;
    }

    bool has(const std::string& name) const { return fs::exists(dir_ / name); }

    fs::path output(const std::string& name) {
        outputs_.push_back(name);
        return dir_ / name;
    }

    nlohmann::json provenance() const {
        return nlohmann::json{{"stage", stage_}, {"config_hash", hash_}, {"seed", config_.seed}};
    }

    template <typename T>
    void write_records(const std::string& name, const std::vector<T>& records) {
        const auto prov = provenance();
        write_jsonl(output(name), records, &prov);
    }

    void write_json(const std::string& name, nlohmann::json j) {
        j["_provenance"] = provenance();
        write_text_atomic(output(name), j.dump(2) + "\n");
    }

    void write_markdown(const std::string& name, const std::string& body) {
        write_text_atomic(output(name), "<!-- config_hash: " + hash_ + " seed: " + std::to_string(config_.seed) +
                                            " -->\n" + body);
    }

    void finish() {
        nlohmann::json outs = nlohmann::json::object();
        for (const auto& name : outputs_) outs[name] = sha256_file(dir_ / name);
        const nlohmann::json manifest{{"stage", stage_},
                                      {"config_hash", hash_},
                                      {"seed", config_.seed},
                                      {"inputs", inputs_},
                                      {"outputs", outs}};
        write_text_atomic(dir_ / (stage_ + ".run.json"), manifest.dump(2) + "\n");
    }

private:
    std::string stage_;
    const RunConfig& config_;
    fs::path dir_;
    std::string hash_;
    std::map<std::string, std::string> inputs_;
    std::vector<std::string> outputs_;
};

nlohmann::json read_json(const fs::path& p) {
    try {
        return nlohmann::json::parse(read_file(p));
    } catch (const nlohmann::json::exception& e) {
        throw schema_error(p.string() + ": " + e.what());
    }
}

template <typename T>
T read_json_as(const fs::path& p) {
    try {
        return read_json(p).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw schema_error(p.string() + ": " + e.what());
    }
}

SynthConfig effective_synth(const RunConfig& c) {
    SynthConfig s = c.synth;
    s.seed = c.seed;
    return s;
}

SettingCatalog catalog_for(const RunConfig& c) {
    return c.catalog_path.empty() ? default_catalog() : load_catalog(c.catalog_path);
}

bool in_population(const HallucinationLabel& l) { return l.label != HallucinationClass::Excluded; }

std::string key_of(const HallucinationLabel& l) { return example_key(l.item_id, l.setting_id); }

// hook -> example key -> activation vector
using ActivationIndex = std::map<Hook, std::unordered_map<std::string, const std::vector<float>*>>;

ActivationIndex index_activations(const std::vector<ActivationRecord>& records) {
    ActivationIndex out;
    for (const auto& r : records) out[r.hook][example_key(r.item_id, r.setting_id)] = &r.vector;
    return out;
}

Matrix gather(const ActivationIndex& index, const Hook& hook, std::span<const std::string> keys) {
    const auto h = index.find(hook);
    if (h == index.end()) throw data_error("no activations recorded at hook " + hook.to_string());
    Matrix x;
    x.reserve(keys.size());
    for (const auto& k : keys) {
        const auto it = h->second.find(k);
        if (it == h->second.end()) {
            throw data_error("no activation at " + hook.to_string() + " for example '" + k + "'");
        }
        x.push_back(to_double(*it->second));
    }
    return x;
}

std::unordered_map<std::string, HallucinationClass> class_by_key(std::span<const HallucinationLabel> labels) {
    std::unordered_map<std::string, HallucinationClass> out;
    for (const auto& l : labels) out.emplace(key_of(l), l.label);
    return out;
}

std::vector<std::string> keys_of_class(std::span<const std::string> keys,
                                       const std::unordered_map<std::string, HallucinationClass>& cls,
                                       std::initializer_list<HallucinationClass> wanted) {
    std::vector<std::string> out;
    for (const auto& k : keys) {
        const auto c = cls.at(k);
        if (std::find(wanted.begin(), wanted.end(), c) != wanted.end()) out.push_back(k);
    }
    return out;
}

// ---------------------------------------------------------------- stages

void stage_synth(const RunConfig& config, StageRun& run) {
    const SynthConfig sc = effective_synth(config);
    const SynthCorpus corpus = synth_generate(sc);
    run.write_records("items.jsonl", corpus.items);
    run.write_records("generations.jsonl", corpus.generations);
    write_activation_store(run.output("activations.bin"), corpus.activations);
    run.write_records("manifest.jsonl", corpus.manifest);
    run.write_json("synth_config.json", nlohmann::json(sc));
}

void stage_label_knowledge(const RunConfig&, StageRun& run) {
    const auto items = read_jsonl<QAItem>(run.input("items.jsonl"));
    const auto gens = read_jsonl<GenerationRecord>(run.input("generations.jsonl"));
    std::unordered_map<std::string, std::vector<GenerationRecord>> baseline;
    for (const auto& g : gens) {
        if (g.setting_id == kBaselineSetting) baseline[g.item_id].push_back(g);
    }
    std::vector<KnowledgeVerdict> out;
    out.reserve(items.size());
    for (const auto& item : items) out.push_back(classify_knowledge(baseline[item.id], item));
    run.write_records("knowledge.jsonl", out);
}

void stage_label_hallucination(const RunConfig& config, StageRun& run) {
    const auto items = read_jsonl<QAItem>(run.input("items.jsonl"));
    const auto gens = read_jsonl<GenerationRecord>(run.input("generations.jsonl"));
    const auto verdicts = read_jsonl<KnowledgeVerdict>(run.input("knowledge.jsonl"));
    std::unordered_map<std::string, const QAItem*> item_by_id;
    for (const auto& it : items) item_by_id.emplace(it.id, &it);
    std::unordered_map<std::string, const KnowledgeVerdict*> verdict_by_id;
    for (const auto& v : verdicts) verdict_by_id.emplace(v.item_id, &v);

    SynonymLexicon lexicon;
    CurationOptions options;
    options.require_double_asterisk = config.require_double_asterisk;
    if (!config.lexicon_path.empty()) {
        lexicon = SynonymLexicon::load(config.lexicon_path);
        options.lexicon = &lexicon;
    }

    std::vector<HallucinationLabel> out;
    std::unordered_set<std::string> seen;
    for (const auto& g : gens) {
        if (g.setting_id == kBaselineSetting || g.decode.mode != DecodeMode::greedy) continue;
        if (!seen.insert(example_key(g.item_id, g.setting_id)).second) {
            throw data_error("duplicate greedy record for " + g.item_id + " / " + g.setting_id);
        }
        const auto item = item_by_id.find(g.item_id);
        const auto verdict = verdict_by_id.find(g.item_id);
        if (item == item_by_id.end() || verdict == verdict_by_id.end()) {
            throw data_error("generation for unknown item '" + g.item_id + "'");
        }
        out.push_back(label_example(*verdict->second, g, *item->second, options));
    }
    run.write_records("labels.jsonl", out);
}

void stage_score_certainty(const RunConfig& config, StageRun& run) {
    const auto gens = read_jsonl<GenerationRecord>(run.input("generations.jsonl"));
    const SettingCatalog catalog = catalog_for(config);

    std::vector<std::string> order;
    std::unordered_map<std::string, const GenerationRecord*> greedy;
    std::unordered_map<std::string, std::vector<GenerationRecord>> samples;
    for (const auto& g : gens) {
        if (g.setting_id == kBaselineSetting) continue;
        const auto key = example_key(g.item_id, g.setting_id);
        if (g.decode.mode == DecodeMode::greedy) {
            if (greedy.emplace(key, &g).second) order.push_back(key);
        } else if (config.include_low_temperature || g.decode.temperature >= 1.0) {
            samples[key].push_back(g);
        }
    }

    const auto& methods = config.methods;
    std::vector<std::vector<CertaintyScore>> slots(order.size());
    parallel_for(order.size(), [&](std::size_t i) {
        const auto& key = order[i];
        const GenerationRecord& g = *greedy.at(key);
        const auto s = samples.find(key);
        for (auto m : methods) {
            if (m == CertaintyMethod::Probability) {
                slots[i].push_back(score_probability(g, catalog.skip_tokens));
                continue;
            }
            if (m == CertaintyMethod::ProbDiff) {
                slots[i].push_back(score_prob_diff(g, catalog.skip_tokens));
                continue;
            }
            if (s == samples.end()) {
                throw data_error(to_string(m) + " needs sampled generations; none recorded for " + g.item_id +
                                 " / " + g.setting_id);
            }
            double raw = 0.0;
            if (m == CertaintyMethod::SemanticEntropy) {
                raw = semantic_entropy(cluster_generations(s->second, config.estimator));
            } else if (m == CertaintyMethod::PredictiveEntropy) {
                raw = predictive_entropy(s->second);
            } else {
                raw = sampling_agreement(s->second);
            }
            slots[i].push_back(make_score(g.item_id, g.setting_id, m, raw));
        }
    });
    std::vector<CertaintyScore> out;
    for (auto& s : slots) out.insert(out.end(), s.begin(), s.end());
    run.write_records("scores.jsonl", out);
}

void stage_threshold(const RunConfig& config, StageRun& run) {
    const auto scores = read_jsonl<CertaintyScore>(run.input("scores.jsonl"));
    const auto labels = read_jsonl<HallucinationLabel>(run.input("labels.jsonl"));
    const auto cls = class_by_key(labels);

    std::vector<ThresholdResult> out;
    for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
        const auto m = config.methods[mi];
        std::vector<double> h;
        std::vector<double> f;
        for (const auto& s : scores) {
            if (s.method != m) continue;
            const auto c = cls.find(example_key(s.item_id, s.setting_id));
            if (c == cls.end()) continue;
            if (c->second == HallucinationClass::HKplus) h.push_back(s.oriented);
            else if (c->second == HallucinationClass::Factual) f.push_back(s.oriented);
        }
        if (h.empty() || f.empty()) {
            throw data_error("threshold: " + to_string(m) + " needs both HKplus and Factual scores (have " +
                             std::to_string(h.size()) + " and " + std::to_string(f.size()) + ")");
        }
        const std::uint64_t seed = mix_seed(mix_seed(config.seed, kThresholdStream), mi);
        ThresholdResult r;
        if (config.balanced_thresholds) {
            const auto sample = balanced_sample(h, f, seed);
            r = optimize_threshold(sample.hallucinated, sample.factual);
        } else {
            r = optimize_threshold(h, f);
        }
        r.method = m;
        r.seed = seed;
        r.balanced = config.balanced_thresholds;
        out.push_back(r);
    }
    run.write_records("thresholds.jsonl", out);
}

std::map<CertaintyMethod, ThresholdResult> load_thresholds(StageRun& run) {
    std::map<CertaintyMethod, ThresholdResult> out;
    for (const auto& t : read_jsonl<ThresholdResult>(run.input("thresholds.jsonl"))) out[t.method] = t;
    return out;
}

void stage_detect_cm(const RunConfig&, StageRun& run) {
    const auto scores = read_jsonl<CertaintyScore>(run.input("scores.jsonl"));
    const auto labels = read_jsonl<HallucinationLabel>(run.input("labels.jsonl"));
    const auto thresholds = load_thresholds(run);
    run.write_records("cm.jsonl", detect_cm(scores, labels, thresholds));
}

void stage_analyze_overlap(const RunConfig& config, StageRun& run) {
    const auto verdicts = read_jsonl<CMVerdict>(run.input("cm.jsonl"));
    const auto labels = read_jsonl<HallucinationLabel>(run.input("labels.jsonl"));
    const std::uint64_t seed = mix_seed(config.seed, kOverlapStream);

    std::vector<OverlapReport> out;

    // Across detection methods: ids are examples, the pool is every HKplus example.
    IdSet pool;
    for (const auto& l : labels) {
        if (l.label == HallucinationClass::HKplus) pool.insert(key_of(l));
    }
    std::map<CertaintyMethod, IdSet> by_method;
    for (const auto& v : verdicts) {
        for (const auto& [m, flag] : v.per_method) {
            auto& set = by_method[m];
            if (flag) set.insert(example_key(v.item_id, v.setting_id));
        }
    }
    for (auto a = by_method.begin(); a != by_method.end(); ++a) {
        for (auto b = std::next(a); b != by_method.end(); ++b) {
            if (a->second.empty() && b->second.empty()) continue;
            out.push_back(permutation_test(a->second, b->second, pool, pool, config.n_resamples, seed,
                                           "method:" + to_string(a->first), "method:" + to_string(b->first)));
        }
    }

    // Across settings: ids are items, pools are the items that are HKplus in each setting.
    std::map<std::string, IdSet> setting_pool;
    std::map<std::string, IdSet> setting_cm;
    for (const auto& l : labels) {
        if (l.label == HallucinationClass::HKplus) setting_pool[l.setting_id].insert(l.item_id);
    }
    for (const auto& v : verdicts) {
        if (v.in_intersection) setting_cm[v.setting_id].insert(v.item_id);
    }
    for (auto a = setting_pool.begin(); a != setting_pool.end(); ++a) {
        for (auto b = std::next(a); b != setting_pool.end(); ++b) {
            const auto& ca = setting_cm[a->first];
            const auto& cb = setting_cm[b->first];
            if (ca.empty() && cb.empty()) continue;
            out.push_back(permutation_test(ca, cb, a->second, b->second, config.n_resamples, seed,
                                           "setting:" + a->first, "setting:" + b->first));
        }
    }
    run.write_records("overlap.jsonl", out);
}

struct ProbeEval {
    double test_accuracy = 0.0;
    double cm_recall = 0.0;
    std::size_t n_test = 0;
    std::size_t n_cm_test = 0;
};

ProbeModel fit_probe(const RunConfig& config, const Matrix& x, std::span<const int> y, std::uint64_t seed) {
    if (config.probe_algorithm == ProbeAlgorithm::logreg) return train_logreg(x, y, LogregOptions{seed});
    SvmOptions o;
    o.seed = seed;
    return train_linear_svm(x, y, o);
}

nlohmann::json summarize(const std::vector<double>& values) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    const double sd = values.size() > 1 ? std::sqrt(var / static_cast<double>(values.size() - 1)) : 0.0;
    return nlohmann::json{{"mean", mean}, {"sd", sd}};
}

void stage_train_probe(const RunConfig& config, StageRun& run) {
    const auto labels = read_jsonl<HallucinationLabel>(run.input("labels.jsonl"));
    const auto verdicts = read_jsonl<CMVerdict>(run.input("cm.jsonl"));
    const auto activations = read_activation_store(run.input("activations.bin"));
    const auto index = index_activations(activations);
    const auto cls = class_by_key(labels);
    std::unordered_set<std::string> cm_keys;
    for (const auto& v : verdicts) {
        if (v.in_intersection) cm_keys.insert(example_key(v.item_id, v.setting_id));
    }
    const auto label_y = [&](const std::string& k) { return cls.at(k) == HallucinationClass::HKplus ? 1 : 0; };

    auto evaluate = [&](const ProbeModel& model, const std::vector<std::string>& test_keys) {
        ProbeEval e;
        const Matrix x = gather(index, config.probe_hook, test_keys);
        std::size_t ok = 0;
        std::size_t cm_hit = 0;
        for (std::size_t i = 0; i < test_keys.size(); ++i) {
            const int pred = model.predict(x[i]);
            ok += pred == label_y(test_keys[i]) ? 1 : 0;
            if (cm_keys.count(test_keys[i])) {
                ++e.n_cm_test;
                cm_hit += pred == 1 ? 1 : 0;
            }
        }
        e.n_test = test_keys.size();
        e.test_accuracy = e.n_test ? static_cast<double>(ok) / static_cast<double>(e.n_test) : 0.0;
        e.cm_recall = e.n_cm_test ? static_cast<double>(cm_hit) / static_cast<double>(e.n_cm_test) : 0.0;
        return e;
    };
    auto eval_json = [](const ProbeEval& e) {
        return nlohmann::json{{"test_accuracy", e.test_accuracy},
                              {"cm_recall", e.cm_recall},
                              {"n_test", e.n_test},
                              {"n_cm_test", e.n_cm_test}};
    };

    nlohmann::json seeds = nlohmann::json::array();
    std::vector<double> plain_acc;
    std::vector<double> tuned_acc;
    std::vector<double> plain_recall;
    std::vector<double> tuned_recall;
    std::optional<ProbeModel> first_plain;
    std::optional<ProbeModel> first_tuned;
    std::string tuned_skip_reason;
    for (const auto split_seed : config.split_seeds) {
        const auto split = split_examples(labels, split_seed);
        const auto train = keys_of_class(split.train, cls, {HallucinationClass::HKplus, HallucinationClass::Factual});
        const auto test = keys_of_class(split.test, cls, {HallucinationClass::HKplus, HallucinationClass::Factual});
        const Matrix x = gather(index, config.probe_hook, train);
        std::vector<int> y;
        std::vector<bool> is_cm;
        for (const auto& k : train) {
            y.push_back(label_y(k));
            is_cm.push_back(cm_keys.count(k) > 0);
        }

        ProbeModel plain = fit_probe(config, x, y, split_seed);
        plain.hook = config.probe_hook;
        const ProbeEval pe = evaluate(plain, test);
        plain_acc.push_back(pe.test_accuracy);
        plain_recall.push_back(pe.cm_recall);
        nlohmann::json row{{"split_seed", split_seed}, {"plain", eval_json(pe)}, {"cm_tuned", nullptr}};

        const auto n_cm = static_cast<std::size_t>(std::count(is_cm.begin(), is_cm.end(), true));
        if (n_cm > 0 && n_cm < is_cm.size()) {
            const auto rows = oversample_cm(is_cm, config.cm_fraction,
                                            mix_seed(mix_seed(config.seed, kOversampleStream), split_seed));
            ProbeModel tuned = fit_probe(config, select_rows(x, rows), select_labels(y, rows), split_seed);
            tuned.hook = config.probe_hook;
            tuned.train_meta.cm_fraction = config.cm_fraction;
            const ProbeEval te = evaluate(tuned, test);
            tuned_acc.push_back(te.test_accuracy);
            tuned_recall.push_back(te.cm_recall);
            row["cm_tuned"] = eval_json(te);
            if (!first_tuned) first_tuned = tuned;
        } else {
            tuned_skip_reason = "training split lacks CM or non-CM examples";
        }
        if (!first_plain) first_plain = plain;
        seeds.push_back(std::move(row));
    }

    nlohmann::json summary{{"plain", {{"test_accuracy", summarize(plain_acc)}, {"cm_recall", summarize(plain_recall)}}}};
    if (!tuned_acc.empty()) {
        summary["cm_tuned"] = {{"test_accuracy", summarize(tuned_acc)}, {"cm_recall", summarize(tuned_recall)}};
    } else {
        summary["cm_tuned"] = nullptr;
        summary["cm_tuned_skipped"] = tuned_skip_reason;
    }
    run.write_json("probe.json", nlohmann::json(*first_plain));
    if (first_tuned) run.write_json("probe_cm.json", nlohmann::json(*first_tuned));
    run.write_json("probe_eval.json", nlohmann::json{{"hook", config.probe_hook},
                                                     {"algorithm", to_string(config.probe_algorithm)},
                                                     {"cm_fraction", config.cm_fraction},
                                                     {"seeds", std::move(seeds)},
                                                     {"summary", std::move(summary)}});
}

SteeringSpec build_steering(const RunConfig& config, const ActivationIndex& index,
                            const std::vector<std::string>& factual, const std::vector<std::string>& target) {
    if (factual.empty() || target.empty()) {
        throw data_error("compute-steering: the training split needs both Factual and target examples");
    }
    std::vector<std::string> keys = factual;
    keys.insert(keys.end(), target.begin(), target.end());
    std::vector<int> y(factual.size(), 0);
    y.resize(keys.size(), 1);

    std::vector<HeadActivations> heads;
    for (const auto& [hook, by_key] : index) {
        if (hook.is_residual()) continue;
        heads.push_back(HeadActivations{hook, gather(index, hook, keys)});
    }
    if (heads.empty()) throw data_error("compute-steering: no attention-head activations recorded");
    const auto ranked = rank_heads(heads, y, config.split_seeds.front(), ProbeAlgorithm::logreg);

    std::map<Hook, const HeadActivations*> by_hook;
    for (const auto& h : heads) by_hook.emplace(h.hook, &h);
    SteeringSpec spec;
    spec.alpha = config.alpha;
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(config.n_heads), ranked.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto& h = *by_hook.at(ranked[i].hook);
        const Matrix f(h.x.begin(), h.x.begin() + static_cast<std::ptrdiff_t>(factual.size()));
        const Matrix t(h.x.begin() + static_cast<std::ptrdiff_t>(factual.size()), h.x.end());
        spec.entries.push_back(SteeringEntry{h.hook.layer, *h.hook.head, to_float(compute_direction(f, t)),
                                             ranked[i].score});
    }
    validate(spec);
    return spec;
}

void stage_compute_steering(const RunConfig& config, StageRun& run) {
    const auto labels = read_jsonl<HallucinationLabel>(run.input("labels.jsonl"));
    const auto activations = read_activation_store(run.input("activations.bin"));
    const auto index = index_activations(activations);
    const auto cls = class_by_key(labels);
    const auto split = split_examples(labels, config.split_seeds.front());
    const auto factual = keys_of_class(split.train, cls, {HallucinationClass::Factual});
    run.write_json("steering_hkplus.json",
                   build_steering(config, index, factual, keys_of_class(split.train, cls, {HallucinationClass::HKplus})));
    run.write_json("steering_hkminus.json",
                   build_steering(config, index, factual, keys_of_class(split.train, cls, {HallucinationClass::HKminus})));
}

SynthCorpus load_corpus(StageRun& run) {
    SynthCorpus c;
    c.items = read_jsonl<QAItem>(run.input("items.jsonl"));
    c.generations = read_jsonl<GenerationRecord>(run.input("generations.jsonl"));
    c.activations = read_activation_store(run.input("activations.bin"));
    c.manifest = read_jsonl<ManifestEntry>(run.input("manifest.jsonl"));
    return c;
}

void stage_synth_steer(const RunConfig& config, StageRun& run) {
    nlohmann::json sj = read_json(run.input("synth_config.json"));
    sj.erase("_provenance");
    const auto sc = sj.get<SynthConfig>();
    const auto labels = read_jsonl<HallucinationLabel>(run.input("labels.jsonl"));
    const auto plus = read_json_as<SteeringSpec>(run.input("steering_hkplus.json"));
    const auto minus = read_json_as<SteeringSpec>(run.input("steering_hkminus.json"));
    const SynthCorpus corpus = load_corpus(run);
    const auto cls = class_by_key(labels);
    const auto split = split_examples(labels, config.split_seeds.front());
    run.write_records("steered_hkplus.jsonl",
                      synth_steer(sc, corpus, plus,
                                  keys_of_class(split.test, cls, {HallucinationClass::HKplus, HallucinationClass::Factual})));
    run.write_records("steered_hkminus.jsonl",
                      synth_steer(sc, corpus, minus,
                                  keys_of_class(split.test, cls, {HallucinationClass::HKminus, HallucinationClass::Factual})));
}

std::vector<HallucinationLabel> labels_in(std::span<const HallucinationLabel> labels,
                                          const std::unordered_set<std::string>& keys) {
    std::vector<HallucinationLabel> out;
    for (const auto& l : labels) {
        if (keys.count(key_of(l))) out.push_back(l);
    }
    return out;
}

void stage_mitigate(const RunConfig& config, StageRun& run) {
    const auto labels = read_jsonl<HallucinationLabel>(run.input("labels.jsonl"));
    const auto scores = read_jsonl<CertaintyScore>(run.input("scores.jsonl"));
    const auto thresholds = load_thresholds(run);
    const auto split = split_examples(labels, config.split_seeds.front());
    const std::unordered_set<std::string> test_keys(split.test.begin(), split.test.end());
    const auto test_labels = labels_in(labels, test_keys);

    std::vector<MitigationOutcome> out;
    auto append = [&out](std::vector<MitigationOutcome> more) { out.insert(out.end(), more.begin(), more.end()); };

    for (const auto& [method, threshold] : thresholds) {
        append(abstention_outcomes(scores, threshold, test_labels, "abstain_" + to_string(method)));
    }

    const auto activations = read_activation_store(run.input("activations.bin"));
    const auto index = index_activations(activations);
    const auto probe_outcomes = [&](const ProbeModel& model, const std::string& id) {
        std::vector<std::string> keys;
        for (const auto& l : test_labels) keys.push_back(key_of(l));
        const Matrix x = gather(index, model.hook, keys);
        std::vector<MitigationOutcome> res;
        for (std::size_t i = 0; i < keys.size(); ++i) {
            const auto& l = test_labels[i];
            const bool abstain = model.predict(x[i]) == 1;
            res.push_back(MitigationOutcome{l.item_id, l.setting_id, id,
                                            abstain ? MitigationAction::abstained : MitigationAction::answered,
                                            l.is_hallucination() ? abstain : !abstain});
        }
        return res;
    };
    append(probe_outcomes(read_json_as<ProbeModel>(run.input("probe.json")), "probe"));
    if (run.has("probe_cm.json")) {
        append(probe_outcomes(read_json_as<ProbeModel>(run.input("probe_cm.json")), "probe_cm"));
    }

    if (run.has("steered_hkplus.jsonl") && run.has("steered_hkminus.jsonl")) {
        const auto items = read_jsonl<QAItem>(run.input("items.jsonl"));
        const auto plus = read_jsonl<GenerationRecord>(run.input("steered_hkplus.jsonl"));
        const auto minus = read_jsonl<GenerationRecord>(run.input("steered_hkminus.jsonl"));
        const auto cls = class_by_key(labels);
        // HKminus examples are answered with the HKminus-derived spec, the rest with the HKplus one.
        std::vector<GenerationRecord> merged;
        for (const auto& r : plus) {
            if (cls.at(example_key(r.item_id, r.setting_id)) != HallucinationClass::HKminus) merged.push_back(r);
        }
        for (const auto& r : minus) {
            if (cls.at(example_key(r.item_id, r.setting_id)) == HallucinationClass::HKminus) merged.push_back(r);
        }
        append(generation_outcomes(merged, test_labels, items, "steering"));

        std::vector<HallucinationLabel> plus_labels;
        std::vector<HallucinationLabel> minus_labels;
        for (const auto& l : test_labels) {
            if (l.label != HallucinationClass::HKminus) plus_labels.push_back(l);
            if (l.label != HallucinationClass::HKplus) minus_labels.push_back(l);
        }
        const auto plus_eval = evaluate_steering(plus, plus_labels, items);
        const auto minus_eval = evaluate_steering(minus, minus_labels, items);
        const auto rate_of = [](const std::vector<SteeringOutcome>& v, HallucinationClass c) -> nlohmann::json {
            for (const auto& o : v) {
                if (o.label == c) return o.rate;
            }
            return nullptr;
        };
        run.write_json("steering_eval.json", nlohmann::json{{"hkplus_spec", plus_eval},
                                                            {"hkminus_spec", minus_eval},
                                                            {"hkplus_rate", rate_of(plus_eval, HallucinationClass::HKplus)},
                                                            {"hkminus_rate", rate_of(minus_eval, HallucinationClass::HKminus)}});
    }
    run.write_records("outcomes.jsonl", out);
}

void stage_evaluate(const RunConfig& config, StageRun& run) {
    const auto labels = read_jsonl<HallucinationLabel>(run.input("labels.jsonl"));
    const auto verdicts = read_jsonl<CMVerdict>(run.input("cm.jsonl"));
    const auto outcomes = read_jsonl<MitigationOutcome>(run.input("outcomes.jsonl"));

    std::map<std::string, std::vector<MitigationOutcome>> by_method;
    for (const auto& o : outcomes) by_method[o.method_id].push_back(o);
    std::vector<EvalReport> reports;
    for (const auto& [method, group] : by_method) {
        std::unordered_set<std::string> keys;
        for (const auto& o : group) keys.insert(example_key(o.item_id, o.setting_id));
        std::vector<CMVerdict> vs;
        for (const auto& v : verdicts) {
            if (keys.count(example_key(v.item_id, v.setting_id))) vs.push_back(v);
        }
        reports.push_back(evaluate_mitigation(method, group, vs, labels_in(labels, keys), config.weighting));
    }
    const auto rendered = render_report(reports);
    run.write_json("eval.json", rendered.json);
    run.write_markdown("eval.md", rendered.markdown);
}

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

void stage_report(const RunConfig& config, StageRun& run) {
    const std::string hash = config_hash(config);
    for (const auto& entry : fs::directory_iterator(run.input("eval.json").parent_path())) {
        const auto name = entry.path().filename().string();
        if (name.size() < 9 || name.substr(name.size() - 9) != ".run.json") continue;
        const auto j = read_json(entry.path());
        if (j.value("config_hash", std::string{}) != hash) {
            throw data_error("report: " + name + " was produced under config " + j.value("config_hash", std::string{}) +
                             ", current config is " + hash + "; rerun the pipeline with one config");
        }
    }
    const auto check = [&](const nlohmann::json& prov, const std::string& name) {
        if (!prov.is_object() || prov.value("config_hash", std::string{}) != hash) {
            throw data_error("report: " + name + " carries a different config hash; rerun the pipeline with one config");
        }
    };

    std::optional<nlohmann::json> prov;
    const auto labels = read_jsonl<HallucinationLabel>(run.input("labels.jsonl"), &prov);
    check(prov.value_or(nullptr), "labels.jsonl");
    const auto knowledge = read_jsonl<KnowledgeVerdict>(run.input("knowledge.jsonl"), &prov);
    check(prov.value_or(nullptr), "knowledge.jsonl");
    const auto thresholds = read_jsonl<ThresholdResult>(run.input("thresholds.jsonl"), &prov);
    check(prov.value_or(nullptr), "thresholds.jsonl");
    const auto verdicts = read_jsonl<CMVerdict>(run.input("cm.jsonl"), &prov);
    check(prov.value_or(nullptr), "cm.jsonl");
    const auto overlaps = read_jsonl<OverlapReport>(run.input("overlap.jsonl"), &prov);
    check(prov.value_or(nullptr), "overlap.jsonl");
    const auto probe_eval = read_json(run.input("probe_eval.json"));
    check(probe_eval.value("_provenance", nlohmann::json()), "probe_eval.json");
    const auto eval_json = read_json(run.input("eval.json"));
    check(eval_json.value("_provenance", nlohmann::json()), "eval.json");
    const std::string eval_md = read_file(run.input("eval.md"));
    const auto md_body = eval_md.substr(eval_md.find('\n') + 1);

    std::map<KnowledgeLabel, int> kcount;
    for (const auto& k : knowledge) ++kcount[k.label];
    std::map<HallucinationClass, int> lcount;
    std::map<ExclusionReason, int> rcount;
    for (const auto& l : labels) {
        ++lcount[l.label];
        if (l.reason) ++rcount[*l.reason];
    }
    std::size_t n_cm_inter = 0;
    std::size_t n_cm_union = 0;
    for (const auto& v : verdicts) {
        n_cm_inter += v.in_intersection ? 1 : 0;
        n_cm_union += v.in_union ? 1 : 0;
    }

    std::string md = "# Hallucination analysis report\n\nconfig hash `" + hash + "`, seed " +
                     std::to_string(config.seed) + "\n\n## Knowledge\n\n| label | items |\n|---|---|\n";
    for (const auto& [k, n] : kcount) md += "| " + to_string(k) + " | " + std::to_string(n) + " |\n";
    md += "\n## Hallucination labels\n\n| class | examples |\n|---|---|\n";
    for (const auto& [c, n] : lcount) md += "| " + to_string(c) + " | " + std::to_string(n) + " |\n";
    if (!rcount.empty()) {
        md += "\nExclusions: ";
        bool first = true;
        for (const auto& [r, n] : rcount) {
            md += (first ? "" : ", ") + to_string(r) + " " + std::to_string(n);
            first = false;
        }
        md += "\n";
    }
    md += "\n## Certainty thresholds\n\n| method | t* | misclassified | H used | F used |\n|---|---|---|---|---|\n";
    for (const auto& t : thresholds) {
        md += "| " + to_string(t.method) + " | " + fixed(t.t_star) + " | " + std::to_string(t.objective) + " | " +
              std::to_string(t.n_H_used) + " | " + std::to_string(t.n_F_used) + " |\n";
    }
    md += "\n## Certainty misalignment\n\nHKplus examples: " + std::to_string(verdicts.size()) +
          "; flagged by every method: " + std::to_string(n_cm_inter) +
          "; flagged by any method: " + std::to_string(n_cm_union) + "\n";
    if (!overlaps.empty()) {
        md += "\n| set A | set B | Jaccard | p |\n|---|---|---|---|\n";
        for (const auto& o : overlaps) {
            md += "| " + o.set_a_id + " | " + o.set_b_id + " | " + fixed(o.jaccard) + " | " + fixed(o.permutation_p) +
                  " |\n";
        }
    }
    md += "\n## Probes\n\n";
    const auto& ps = probe_eval.at("summary");
    md += "plain: test accuracy " + fixed(ps.at("plain").at("test_accuracy").at("mean").get<double>()) + " ± " +
          fixed(ps.at("plain").at("test_accuracy").at("sd").get<double>()) + ", CM recall " +
          fixed(ps.at("plain").at("cm_recall").at("mean").get<double>()) + "\n";
    if (!ps.at("cm_tuned").is_null()) {
        md += "CM-tuned: test accuracy " + fixed(ps.at("cm_tuned").at("test_accuracy").at("mean").get<double>()) +
              " ± " + fixed(ps.at("cm_tuned").at("test_accuracy").at("sd").get<double>()) + ", CM recall " +
              fixed(ps.at("cm_tuned").at("cm_recall").at("mean").get<double>()) + "\n";
    }
    if (run.has("steering_eval.json")) {
        const auto se = read_json(run.input("steering_eval.json"));
        check(se.value("_provenance", nlohmann::json()), "steering_eval.json");
        md += "\n## Steering\n\n| spec | class | n | correct after | rate |\n|---|---|---|---|---|\n";
        for (const char* spec : {"hkplus_spec", "hkminus_spec"}) {
            for (const auto& o : se.at(spec)) {
                md += std::string("| ") + spec + " | " + o.at("class").get<std::string>() + " | " +
                      std::to_string(o.at("n").get<std::int64_t>()) + " | " +
                      std::to_string(o.at("n_correct_after").get<std::int64_t>()) + " | " +
                      fixed(o.at("rate").get<double>()) + " |\n";
            }
        }
    }
    md += "\n## Mitigation\n\n" + md_body;
    run.write_markdown("report.md", md);
}

using StageFn = std::function<void(const RunConfig&, StageRun&)>;

const std::vector<std::pair<std::string, StageFn>>& stages() {
    static const std::vector<std::pair<std::string, StageFn>> s{
        {"synth", stage_synth},
        {"label-knowledge", stage_label_knowledge},
        {"label-hallucination", stage_label_hallucination},
        {"score-certainty", stage_score_certainty},
        {"threshold", stage_threshold},
        {"detect-cm", stage_detect_cm},
        {"analyze-overlap", stage_analyze_overlap},
        {"train-probe", stage_train_probe},
        {"compute-steering", stage_compute_steering},
        {"synth-steer", stage_synth_steer},
        {"mitigate", stage_mitigate},
        {"evaluate", stage_evaluate},
        {"report", stage_report},
    };
    return s;
}

}  // namespace

ExampleSplit split_examples(std::span<const HallucinationLabel> labels, std::uint64_t split_seed) {
    std::vector<std::string> keys;
    for (const auto& l : labels) {
        if (in_population(l)) keys.push_back(key_of(l));
    }
    const auto s = split_indices(keys.size(), 0.7, 0.1, split_seed);
    ExampleSplit out;
    for (auto i : s.train) out.train.push_back(keys[i]);
    for (auto i : s.validation) out.validation.push_back(keys[i]);
    for (auto i : s.test) out.test.push_back(keys[i]);
    return out;
}

void to_json(nlohmann::json& j, const RunConfig& v) {
    std::vector<std::string> methods;
    for (auto m : v.methods) methods.push_back(to_string(m));
    nlohmann::json synth = v.synth;
    synth.erase("seed");
    j = nlohmann::json{
        {"seed", v.seed},
        {"methods", methods},
        {"thresholds", {{"balanced", v.balanced_thresholds}}},
        {"certainty",
         {{"estimator", to_string(v.estimator)},
          {"include_low_temperature", v.include_low_temperature},
          {"catalog", v.catalog_path}}},
        {"curation", {{"require_double_asterisk", v.require_double_asterisk}, {"lexicon", v.lexicon_path}}},
        {"probe",
         {{"hook", v.probe_hook},
          {"algorithm", to_string(v.probe_algorithm)},
          {"cm_fraction", v.cm_fraction},
          {"split_seeds", v.split_seeds}}},
        {"steering", {{"alpha", v.alpha}, {"n_heads", v.n_heads}}},
        {"overlap", {{"n_resamples", v.n_resamples}}},
        {"evaluation", {{"weighting", std::string(detail::enum_name(kWeightings, v.weighting))}}},
        {"synth", synth}};
}

namespace {

void reject_unknown(const nlohmann::json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
    if (!j.is_object()) throw schema_error("run config: " + where + " must be an object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw schema_error("run config: unknown key '" + key + "' in " + where);
        }
    }
}

}  // namespace

void from_json(const nlohmann::json& j, RunConfig& v) {
    reject_unknown(j,
                   {"seed", "methods", "thresholds", "certainty", "curation", "probe", "steering", "overlap",
                    "evaluation", "synth"},
                   "top level");
    const RunConfig d;
    v.seed = j.value("seed", d.seed);
    if (j.contains("methods")) {
        v.methods.clear();
        for (const auto& m : j.at("methods")) v.methods.push_back(certainty_method_from_string(m.get<std::string>()));
    }
    const auto section = [&](const char* name) { return j.contains(name) ? j.at(name) : nlohmann::json::object(); };
    const auto th = section("thresholds");
    reject_unknown(th, {"balanced"}, "thresholds");
    v.balanced_thresholds = th.value("balanced", d.balanced_thresholds);
    const auto ce = section("certainty");
    reject_unknown(ce, {"estimator", "include_low_temperature", "catalog"}, "certainty");
    v.estimator = cluster_estimator_from_string(ce.value("estimator", to_string(d.estimator)));
    v.include_low_temperature = ce.value("include_low_temperature", d.include_low_temperature);
    v.catalog_path = ce.value("catalog", d.catalog_path);
    const auto cu = section("curation");
    reject_unknown(cu, {"require_double_asterisk", "lexicon"}, "curation");
    v.require_double_asterisk = cu.value("require_double_asterisk", d.require_double_asterisk);
    v.lexicon_path = cu.value("lexicon", d.lexicon_path);
    const auto pr = section("probe");
    reject_unknown(pr, {"hook", "algorithm", "cm_fraction", "split_seeds"}, "probe");
    v.probe_hook = pr.contains("hook") ? pr.at("hook").get<Hook>() : d.probe_hook;
    v.probe_algorithm = probe_algorithm_from_string(pr.value("algorithm", to_string(d.probe_algorithm)));
    v.cm_fraction = pr.value("cm_fraction", d.cm_fraction);
    v.split_seeds = pr.value("split_seeds", d.split_seeds);
    const auto st = section("steering");
    reject_unknown(st, {"alpha", "n_heads"}, "steering");
    v.alpha = st.value("alpha", d.alpha);
    v.n_heads = st.value("n_heads", d.n_heads);
    const auto ov = section("overlap");
    reject_unknown(ov, {"n_resamples"}, "overlap");
    v.n_resamples = ov.value("n_resamples", d.n_resamples);
    const auto ev = section("evaluation");
    reject_unknown(ev, {"weighting"}, "evaluation");
    v.weighting = detail::enum_value(kWeightings, ev.value("weighting", std::string("per_example")), "weighting");
    if (j.contains("synth")) {
        if (j.at("synth").contains("seed")) throw schema_error("run config: set the top-level seed, not synth.seed");
        v.synth = j.at("synth").get<SynthConfig>();
    }
}

RunConfig load_run_config(const fs::path& path) {
    if (!fs::exists(path)) throw usage_error("config file not found: " + path.string());
    try {
        return nlohmann::json::parse(read_file(path)).get<RunConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw schema_error(path.string() + ": " + e.what());
    }
}

void validate(const RunConfig& c) {
    if (c.methods.empty()) throw usage_error("at least one certainty method is required");
    std::set<CertaintyMethod> unique(c.methods.begin(), c.methods.end());
    if (unique.size() != c.methods.size()) throw usage_error("certainty methods must not repeat");
    if (!c.catalog_path.empty() && !fs::exists(c.catalog_path)) {
        throw usage_error("setting catalog not found: " + c.catalog_path);
    }
    if (!c.lexicon_path.empty() && !fs::exists(c.lexicon_path)) {
        throw usage_error("synonym lexicon not found: " + c.lexicon_path);
    }
    if (!(c.cm_fraction >= 0.0 && c.cm_fraction < 1.0)) throw usage_error("probe.cm_fraction must lie in [0, 1)");
    if (c.split_seeds.empty()) throw usage_error("probe.split_seeds must not be empty");
    if (c.n_heads < 1) throw usage_error("steering.n_heads must be positive");
    if (c.n_resamples < 1) throw usage_error("overlap.n_resamples must be positive");
    validate(effective_synth(c));
}

std::string config_hash(const RunConfig& config) { return sha256_hex(nlohmann::json(config).dump()); }

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& [name, fn] : stages()) n.push_back(name);
        return n;
    }();
    return names;
}

void run_stage(const std::string& stage, const RunConfig& config, const fs::path& out_dir) {
    const auto& s = stages();
    const auto it = std::find_if(s.begin(), s.end(), [&](const auto& p) { return p.first == stage; });
    if (it == s.end()) throw usage_error("unknown stage '" + stage + "'");
    validate(config);
    fs::create_directories(out_dir);
    StageRun run(stage, config, out_dir);
    it->second(config, run);
    run.finish();
}

void run_all(const RunConfig& config, const fs::path& out_dir) {
    for (const auto& name : stage_names()) run_stage(name, config, out_dir);
}

}  // namespace hack
