// hack-axes: stage-file pipeline for knowledge/certainty hallucination analysis.
//
//   hack-axes synth --out run/
//   hack-axes all --config run.json --seed 7 --out run/
//   hack-axes threshold --out run/ --methods probability,prob_diff

#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hack/error.hpp"
#include "hack/pipeline.hpp"
#include "hack/settings.hpp"
#include "hack/util.hpp"

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    std::string methods;
};

hack::RunConfig resolve(const Options& o) {
    hack::RunConfig c = o.config.empty() ? hack::RunConfig{} : hack::load_run_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (!o.methods.empty()) c.methods = hack::parse_method_list(o.methods);
    return c;
}

void add_common(CLI::App& sub, Options& o) {
    sub.add_option("--config", o.config, "run config JSON");
    sub.add_option("--seed", o.seed, "global seed (overrides the config)");
    sub.add_option("--out", o.out, "stage directory")->capture_default_str();
    sub.add_option("--methods", o.methods, "comma-separated certainty methods");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Knowledge and certainty axes of hallucination: labeling, scoring, probes, steering, evaluation"};
    app.require_subcommand(1);
    Options opts;

    std::string chosen;
    for (const auto& stage : hack::stage_names()) {
        auto* sub = app.add_subcommand(stage, "run the " + stage + " stage");
        add_common(*sub, opts);
        sub->callback([&chosen, stage] { chosen = stage; });
    }
    auto* all = app.add_subcommand("all", "run every stage in order");
    add_common(*all, opts);
    all->callback([&chosen] { chosen = "all"; });

    auto* catalog = app.add_subcommand("catalog", "write the built-in prompt-setting catalog as JSON");
    add_common(*catalog, opts);
    catalog->callback([&chosen] { chosen = "catalog"; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : hack::exit_code(hack::ErrorKind::usage);
    }

    try {
        if (chosen == "catalog") {
            const nlohmann::json j = hack::default_catalog();
            std::filesystem::create_directories(opts.out);
            hack::write_file(std::filesystem::path(opts.out) / "settings_catalog.json", j.dump(2) + "\n");
            return 0;
        }
        const hack::RunConfig config = resolve(opts);
        if (chosen == "all") {
            hack::run_all(config, opts.out);
        } else {
            hack::run_stage(chosen, config, opts.out);
        }
    } catch (const hack::Error& e) {
        std::cerr << "hack-axes: " << e.what() << "\n";
        return hack::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "hack-axes: " << e.what() << "\n";
        return hack::exit_code(hack::ErrorKind::data);
    }
    return 0;
}
