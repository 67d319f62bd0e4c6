#include "hack/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <unordered_map>

#include "hack/error.hpp"
#include "hack/rng.hpp"

namespace hack {
namespace {

// Gold answers and wrong answers are built from disjoint letter sets so no
// curation rule can mistake one for the other.
constexpr std::array<std::string_view, 8> kGoldSyllables{"ka", "lo", "mi", "ru", "te", "vo", "sa", "ne"};
constexpr std::array<std::string_view, 8> kWrongSyllables{"byd", "fyg", "hyp", "wyz", "gyb", "dyx", "cyj", "pyq"};

constexpr std::uint64_t kStreamKnowledge = 1;
constexpr std::uint64_t kStreamHkplus = 2;
constexpr std::uint64_t kStreamCm = 3;
constexpr std::uint64_t kStreamRecoverable = 4;

std::string make_name(Rng& rng, std::span<const std::string_view> syllables, int n) {
    std::string out;
    for (int i = 0; i < n; ++i) out += syllables[rng.below(syllables.size())];
    out[0] = static_cast<char>(out[0] - 'a' + 'A');
    return out;
}

std::string wrong_name(Rng& rng, const std::string& avoid) {
    std::string out;
    do {
        out = make_name(rng, kWrongSyllables, 2);
    } while (out == avoid);
    return out;
}

// Truncated normal around mean on one side of 0.5, clipped to [0, 1].
double draw_latent(Rng& rng, bool certain, const SynthConfig& c) {
    const double mean = certain ? 0.5 + c.certainty_gap / 2.0 : 0.5 - c.certainty_gap / 2.0;
    for (int attempt = 0; attempt < 10000; ++attempt) {
        const double x = std::clamp(rng.normal(mean, c.certainty_sd), 0.0, 1.0);
        if (certain ? x > 0.5 : x < 0.5) return x;
    }
    return certain ? 1.0 : 0.0;
}

double prob_from_latent(double c) { return (1.0 + 2.0 * c) / 3.0; }

// Two tokens: the first syllable-sized piece carries probability p.
GenerationRecord make_record(const std::string& item_id, const std::string& setting_id, DecodeParams decode,
                             const std::string& text, double p) {
    GenerationRecord r;
    r.item_id = item_id;
    r.setting_id = setting_id;
    r.decode = decode;
    r.text = text;
    const std::size_t cut = std::min<std::size_t>(3, text.size());
    r.tokens.push_back(TokenLogprob{text.substr(0, cut), std::log(p)});
    if (cut < text.size()) r.tokens.push_back(TokenLogprob{text.substr(cut), std::log(0.9)});
    r.first_token_topk = {TokenProb{text.substr(0, cut), p}, TokenProb{"Alt", (1.0 - p) / 2.0},
                          TokenProb{"Other", (1.0 - p) / 4.0}};
    std::stable_sort(r.first_token_topk.begin(), r.first_token_topk.end(),
                     [](const TokenProb& a, const TokenProb& b) { return a.prob > b.prob; });
    r.stop_reason = StopReason::eos;
    return r;
}

Vector gaussian(Rng& rng, int dim) {
    Vector v(static_cast<std::size_t>(dim));
    for (auto& e : v) e = rng.normal();
    return v;
}

Vector unit(Vector v) {
    const double n = norm2(v);
    for (auto& e : v) e /= n;
    return v;
}

std::vector<Hook> head_hooks(const SynthConfig& c) {
    std::vector<Hook> out;
    for (int l = 0; l < c.head_layers; ++l) {
        for (int h = 0; h < c.heads_per_layer; ++h) {
            out.push_back(Hook::attention_head(static_cast<std::uint16_t>(l), static_cast<std::uint16_t>(h)));
        }
    }
    return out;
}

std::vector<bool> pick(std::size_t n, std::int64_t k, std::uint64_t seed) {
    std::vector<bool> out(n, false);
    Rng rng(seed);
    for (auto i : rng.sample_indices(n, static_cast<std::size_t>(k))) out[i] = true;
    return out;
}

std::int64_t share(std::int64_t total, double rate) {
    const std::array<double, 2> w{rate, 1.0 - rate};
    return largest_remainder(total, w)[0];
}

ActivationRecord activation(const std::string& item_id, const std::string& setting_id, Hook hook, const Vector& v) {
    return ActivationRecord{item_id, setting_id, hook, to_float(v)};
}

}  // namespace

void validate(const SynthConfig& c) {
    const auto in_unit = [](double r) { return r >= 0.0 && r <= 1.0; };
    for (double r : {c.rate_no_correct, c.rate_middle, c.rate_consistent, c.rate_hkplus_given_known,
                     c.rate_cm_given_hkplus, c.rate_recoverable}) {
        if (!in_unit(r)) throw usage_error("synth config: rates must lie in [0, 1]");
    }
    if (std::abs(c.rate_no_correct + c.rate_middle + c.rate_consistent - 1.0) > 1e-9) {
        throw usage_error("synth config: knowledge rates must sum to 1");
    }
    if (c.n_items < 1) throw usage_error("synth config: n_items must be positive");
    if (!(c.certainty_gap > 0.0) || !(c.certainty_sd > 0.0)) {
        throw usage_error("synth config: certainty_gap and certainty_sd must be positive");
    }
    if (c.n_settings < 1 || c.n_settings > 7) throw usage_error("synth config: n_settings must be in 1..7");
    if (c.activation_dim < 1 || c.head_dim < 1 || c.head_layers < 1 || c.heads_per_layer < 1) {
        throw usage_error("synth config: activation dimensions and head counts must be positive");
    }
    if (!(c.activation_margin > 0.0) || !(c.head_margin > 0.0)) {
        throw usage_error("synth config: activation margins must be positive");
    }
    if (c.n_signal_heads < 0 || c.n_signal_heads > c.head_layers * c.heads_per_layer) {
        throw usage_error("synth config: n_signal_heads exceeds the number of heads");
    }
}

std::vector<std::string> synth_setting_ids(const SynthConfig& config) {
    std::vector<std::string> out;
    for (int i = 1; i <= config.n_settings; ++i) out.push_back("realistic_" + std::to_string(i));
    return out;
}

std::vector<std::int64_t> largest_remainder(std::int64_t total, std::span<const double> weights) {
    if (total < 0) throw usage_error("largest_remainder: negative total");
    double sum = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0)) throw usage_error("largest_remainder: negative weight");
        sum += w;
    }
    if (!(sum > 0.0)) {
        if (total == 0) return std::vector<std::int64_t>(weights.size(), 0);
        throw usage_error("largest_remainder: weights sum to zero");
    }
    std::vector<std::int64_t> out(weights.size());
    std::vector<double> frac(weights.size());
    std::int64_t assigned = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        const double quota = static_cast<double>(total) * weights[i] / sum;
        out[i] = static_cast<std::int64_t>(std::floor(quota + 1e-9));
        frac[i] = quota - static_cast<double>(out[i]);
        assigned += out[i];
    }
    std::vector<std::size_t> order(weights.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++out[order[k % order.size()]];
    return out;
}

Vector planted_direction(const SynthConfig& config, const Hook& hook) {
    Rng rng(mix_seed(config.seed, hash_id("direction:" + hook.to_string())));
    return unit(gaussian(rng, hook.is_residual() ? config.activation_dim : config.head_dim));
}

bool is_signal_head(const SynthConfig& config, const Hook& hook) {
    if (hook.is_residual()) return false;
    if (hook.layer >= config.head_layers || *hook.head >= config.heads_per_layer) return false;
    const auto total = static_cast<std::size_t>(config.head_layers * config.heads_per_layer);
    const std::size_t flat = static_cast<std::size_t>(hook.layer) * static_cast<std::size_t>(config.heads_per_layer) +
                             *hook.head;
    return pick(total, config.n_signal_heads, mix_seed(config.seed, hash_id("signal-heads")))[flat];
}

SynthCorpus synth_generate(const SynthConfig& config) {
    validate(config);
    const auto n = static_cast<std::size_t>(config.n_items);
    const auto settings = synth_setting_ids(config);
    const std::size_t n_settings = settings.size();

    // Knowledge labels: exact counts, shuffled over items.
    const std::array<double, 3> kw{config.rate_no_correct, config.rate_middle, config.rate_consistent};
    const auto kcounts = largest_remainder(config.n_items, kw);
    std::vector<KnowledgeLabel> knowledge;
    for (std::int64_t i = 0; i < kcounts[0]; ++i) knowledge.push_back(KnowledgeLabel::NoCorrect);
    for (std::int64_t i = 0; i < kcounts[1]; ++i) knowledge.push_back(KnowledgeLabel::Middle);
    for (std::int64_t i = 0; i < kcounts[2]; ++i) knowledge.push_back(KnowledgeLabel::ConsistentlyCorrect);
    Rng(mix_seed(config.seed, kStreamKnowledge)).shuffle(knowledge);

    // HK+ among known (item, setting) examples, then CM and recoverability among HK+.
    std::size_t n_known = 0;
    for (auto k : knowledge) n_known += k == KnowledgeLabel::ConsistentlyCorrect ? n_settings : 0;
    const auto hk_flags = pick(n_known, share(static_cast<std::int64_t>(n_known), config.rate_hkplus_given_known),
                               mix_seed(config.seed, kStreamHkplus));
    const auto n_hk = static_cast<std::size_t>(std::count(hk_flags.begin(), hk_flags.end(), true));
    const auto cm_flags = pick(n_hk, share(static_cast<std::int64_t>(n_hk), config.rate_cm_given_hkplus),
                               mix_seed(config.seed, kStreamCm));
    const auto rec_flags = pick(n_hk, share(static_cast<std::int64_t>(n_hk), config.rate_recoverable),
                                mix_seed(config.seed, kStreamRecoverable));

    const Hook residual = Hook::residual(config.residual_layer);
    const Vector residual_dir = planted_direction(config, residual);
    const auto heads = head_hooks(config);
    std::vector<Vector> head_dirs;
    std::vector<bool> head_signal;
    for (const auto& h : heads) {
        head_dirs.push_back(planted_direction(config, h));
        head_signal.push_back(is_signal_head(config, h));
    }

    SynthCorpus out;
    out.items.reserve(n);
    out.manifest.reserve(n);
    std::size_t known_cursor = 0;
    std::size_t hk_cursor = 0;
    for (std::size_t i = 0; i < n; ++i) {
        char idbuf[32];
        std::snprintf(idbuf, sizeof idbuf, "syn%06zu", i);
        const std::string item_id = idbuf;
        Rng rng(mix_seed(config.seed, hash_id(item_id)));

        QAItem item;
        item.id = item_id;
        const std::string gold = make_name(rng, kGoldSyllables, 3);
        item.question = "What is the capital of the synthetic region " + std::to_string(i) + "?";
        item.gold_answers = {gold};
        item.source = "synthetic";
        out.items.push_back(item);

        ManifestEntry entry;
        entry.item_id = item_id;
        entry.knowledge = knowledge[i];
        int n_correct = 0;
        if (knowledge[i] == KnowledgeLabel::ConsistentlyCorrect) n_correct = 6;
        else if (knowledge[i] == KnowledgeLabel::Middle) n_correct = 1 + static_cast<int>(rng.below(5));
        entry.n_correct = n_correct;

        // Baseline: one greedy and five sampled attempts; n_correct of them right.
        std::array<bool, 6> right{};
        for (int k = 0; k < n_correct; ++k) right[static_cast<std::size_t>(k)] = true;
        rng.shuffle(std::span<bool>(right));
        for (std::size_t k = 0; k < right.size(); ++k) {
            const auto decode = k == 0 ? DecodeParams::greedy(5, config.seed)
                                       : DecodeParams::sampled(1.0, 5, mix_seed(config.seed, k));
            out.generations.push_back(make_record(item_id, kBaselineSetting, decode,
                                                  right[k] ? gold : wrong_name(rng, ""), 0.6));
        }

        for (const auto& setting : settings) {
            PlantedSetting ps;
            ps.setting_id = setting;
            switch (knowledge[i]) {
                case KnowledgeLabel::NoCorrect: ps.label = HallucinationClass::HKminus; break;
                case KnowledgeLabel::Middle: ps.label = HallucinationClass::Excluded; break;
                case KnowledgeLabel::ConsistentlyCorrect:
                    if (hk_flags[known_cursor++]) {
                        ps.label = HallucinationClass::HKplus;
                        ps.is_cm = cm_flags[hk_cursor];
                        ps.recoverable = rec_flags[hk_cursor];
                        ++hk_cursor;
                    } else {
                        ps.label = HallucinationClass::Factual;
                        ps.recoverable = true;
                    }
                    break;
            }
            ps.correct_text = ps.label == HallucinationClass::Factual;
            const bool certain = ps.label == HallucinationClass::Factual || ps.is_cm;
            const double p = prob_from_latent(draw_latent(rng, certain, config));
            const std::string text = ps.correct_text ? gold : wrong_name(rng, "");
            out.generations.push_back(make_record(item_id, setting, DecodeParams::greedy(5, config.seed), text, p));

            if (config.sampling_scenario) {
                std::array<std::string, 3> alts;
                for (auto& a : alts) a = wrong_name(rng, text);
                for (std::uint64_t s = 0; s < 10; ++s) {
                    const bool same = rng.uniform() < p;
                    const auto& t = same ? text : alts[rng.below(alts.size())];
                    out.generations.push_back(make_record(item_id, setting,
                                                          DecodeParams::sampled(1.0, 5, mix_seed(config.seed, 100 + s)),
                                                          t, same ? p : (1.0 - p) / 3.0));
                }
                out.generations.push_back(make_record(item_id, setting,
                                                      DecodeParams::sampled(0.1, 5, mix_seed(config.seed, 200)),
                                                      text, p));
            }

            const double sign = ps.correct_text ? 1.0 : -1.0;
            Vector x = gaussian(rng, config.activation_dim);
            for (std::size_t k = 0; k < x.size(); ++k) x[k] += sign * config.activation_margin / 2.0 * residual_dir[k];
            out.activations.push_back(activation(item_id, setting, residual, x));
            for (std::size_t h = 0; h < heads.size(); ++h) {
                Vector v = gaussian(rng, config.head_dim);
                if (head_signal[h]) {
                    for (std::size_t k = 0; k < v.size(); ++k) v[k] += sign * config.head_margin / 2.0 * head_dirs[h][k];
                }
                out.activations.push_back(activation(item_id, setting, heads[h], v));
            }
            entry.settings.push_back(ps);
        }
        out.manifest.push_back(std::move(entry));
    }
    return out;
}

std::vector<GenerationRecord> synth_steer(const SynthConfig& config, const SynthCorpus& corpus,
                                          const SteeringSpec& spec, std::span<const std::string> example_keys) {
    std::unordered_map<std::string, const PlantedSetting*> planted;
    for (const auto& m : corpus.manifest) {
        for (const auto& s : m.settings) planted.emplace(example_key(m.item_id, s.setting_id), &s);
    }
    std::unordered_map<std::string, const QAItem*> items;
    for (const auto& it : corpus.items) items.emplace(it.id, &it);
    std::unordered_map<std::string, const GenerationRecord*> greedy;
    for (const auto& g : corpus.generations) {
        if (g.decode.mode == DecodeMode::greedy && g.setting_id != kBaselineSetting) {
            greedy.emplace(example_key(g.item_id, g.setting_id), &g);
        }
    }
    std::unordered_map<std::string, std::vector<const ActivationRecord*>> acts;
    for (const auto& a : corpus.activations) {
        if (!a.hook.is_residual() && is_signal_head(config, a.hook)) {
            acts[example_key(a.item_id, a.setting_id)].push_back(&a);
        }
    }
    std::map<Hook, const SteeringEntry*> entry_at;
    for (const auto& e : spec.entries) entry_at.emplace(Hook::attention_head(e.layer, e.head), &e);

    std::vector<GenerationRecord> out;
    out.reserve(example_keys.size());
    for (const auto& key : example_keys) {
        const auto p = planted.find(key);
        const auto g = greedy.find(key);
        if (p == planted.end() || g == greedy.end()) throw data_error("synth_steer: unknown example " + key);
        const GenerationRecord& before = *g->second;
        const auto& gold = items.at(before.item_id)->primary_answer();

        double projection = 0.0;
        for (const auto* a : acts[key]) {
            const Vector dir = planted_direction(config, a->hook);
            Vector e = to_double(a->vector);
            const auto se = entry_at.find(a->hook);
            if (se != entry_at.end()) {
                e = apply_steering_reference(e, to_double(se->second->direction), spec.alpha);
            }
            projection += dot(e, dir);
        }
        std::string text = before.text;
        if (p->second->recoverable && projection > 0.0) {
            text = gold;
        } else if (p->second->correct_text) {
            Rng rng(mix_seed(config.seed, hash_id(key + "\tsteer")));
            text = wrong_name(rng, gold);
        }
        out.push_back(make_record(before.item_id, before.setting_id, before.decode, text, 0.6));
    }
    return out;
}

void to_json(nlohmann::json& j, const SynthConfig& v) {
    j = nlohmann::json{{"n_items", v.n_items},
                       {"rate_no_correct", v.rate_no_correct},
                       {"rate_middle", v.rate_middle},
                       {"rate_consistent", v.rate_consistent},
                       {"rate_hkplus_given_known", v.rate_hkplus_given_known},
                       {"rate_cm_given_hkplus", v.rate_cm_given_hkplus},
                       {"certainty_gap", v.certainty_gap},
                       {"certainty_sd", v.certainty_sd},
                       {"n_settings", v.n_settings},
                       {"activation_dim", v.activation_dim},
                       {"activation_margin", v.activation_margin},
                       {"residual_layer", v.residual_layer},
                       {"head_layers", v.head_layers},
                       {"heads_per_layer", v.heads_per_layer},
                       {"head_dim", v.head_dim},
                       {"n_signal_heads", v.n_signal_heads},
                       {"head_margin", v.head_margin},
                       {"rate_recoverable", v.rate_recoverable},
                       {"sampling_scenario", v.sampling_scenario},
                       {"seed", v.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& v) {
    if (!j.is_object()) throw schema_error("synth config must be a JSON object");
    const SynthConfig d;
    const nlohmann::json known = d;
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw schema_error("synth config: unknown field '" + key + "'");
    }
    v.n_items = j.value("n_items", d.n_items);
    v.rate_no_correct = j.value("rate_no_correct", d.rate_no_correct);
    v.rate_middle = j.value("rate_middle", d.rate_middle);
    v.rate_consistent = j.value("rate_consistent", d.rate_consistent);
    v.rate_hkplus_given_known = j.value("rate_hkplus_given_known", d.rate_hkplus_given_known);
    v.rate_cm_given_hkplus = j.value("rate_cm_given_hkplus", d.rate_cm_given_hkplus);
    v.certainty_gap = j.value("certainty_gap", d.certainty_gap);
    v.certainty_sd = j.value("certainty_sd", d.certainty_sd);
    v.n_settings = j.value("n_settings", d.n_settings);
    v.activation_dim = j.value("activation_dim", d.activation_dim);
    v.activation_margin = j.value("activation_margin", d.activation_margin);
    v.residual_layer = j.value("residual_layer", d.residual_layer);
    v.head_layers = j.value("head_layers", d.head_layers);
    v.heads_per_layer = j.value("heads_per_layer", d.heads_per_layer);
    v.head_dim = j.value("head_dim", d.head_dim);
    v.n_signal_heads = j.value("n_signal_heads", d.n_signal_heads);
    v.head_margin = j.value("head_margin", d.head_margin);
    v.rate_recoverable = j.value("rate_recoverable", d.rate_recoverable);
    v.sampling_scenario = j.value("sampling_scenario", d.sampling_scenario);
    v.seed = j.value("seed", d.seed);
}

void to_json(nlohmann::json& j, const ManifestEntry& v) {
    auto settings = nlohmann::json::array();
    for (const auto& s : v.settings) {
        settings.push_back({{"setting_id", s.setting_id},
                            {"label", to_string(s.label)},
                            {"is_cm", s.is_cm},
                            {"recoverable", s.recoverable},
                            {"correct_text", s.correct_text}});
    }
    j = nlohmann::json{{"item_id", v.item_id},
                       {"knowledge", to_string(v.knowledge)},
                       {"n_correct", v.n_correct},
                       {"settings", std::move(settings)}};
}

void from_json(const nlohmann::json& j, ManifestEntry& v) {
    j.at("item_id").get_to(v.item_id);
    v.knowledge = knowledge_label_from_string(j.at("knowledge").get<std::string>());
    j.at("n_correct").get_to(v.n_correct);
    v.settings.clear();
    for (const auto& s : j.at("settings")) {
        PlantedSetting ps;
        s.at("setting_id").get_to(ps.setting_id);
        ps.label = hallucination_class_from_string(s.at("label").get<std::string>());
        s.at("is_cm").get_to(ps.is_cm);
        s.at("recoverable").get_to(ps.recoverable);
        s.at("correct_text").get_to(ps.correct_text);
        v.settings.push_back(std::move(ps));
    }
}

}  // namespace hack
