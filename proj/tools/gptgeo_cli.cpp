// gptgeo: runs the analysis pipeline stage by stage over a config file.
//
//   gptgeo <stage|all> --config run.json [--out DIR] [--stage-force] [--seed N]
//   gptgeo run <stage|all> --config run.json ...

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gptgeo/config.hpp"
#include "gptgeo/pipeline.hpp"

extern char** environ;

namespace {

struct Options {
    std::string config;
    std::optional<std::string> out;
    bool force = false;
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config, "Run configuration (JSON)")->required();
    cmd->add_option("--out", o.out, "Output directory (overrides output_dir)");
    cmd->add_flag("--stage-force", o.force, "Recompute even when outputs are up to date");
    cmd->add_option("--seed", o.seed, "Seed for the classifier validation split");
}

int execute(const std::string& stage, const Options& o) {
    using namespace gptgeo;
    try {
        ConfigOverrides ov;
        ov.env = gptgeo_environment(environ);
        if (o.out) ov.output_dir = std::filesystem::absolute(*o.out).string();
        ov.seed = o.seed;
        pipeline::Runner runner(load_config(o.config, ov), std::cout, o.force);
        if (stage == "all") runner.run_all();
        else runner.run(pipeline::stage_from_string(stage));
        return 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return pipeline::exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deep-learning diffusion pipeline: ingest, link, geocode, label, relate, metrics, regress, report"};
    app.require_subcommand(1);
    Options opts;
    std::string chosen;

    for (const char* name : {"ingest", "link", "geocode", "label", "relate", "metrics", "regress", "report", "all"}) {
        auto* cmd = app.add_subcommand(name, std::string("Run the ") + name + " stage");
        add_common(cmd, opts);
        cmd->callback([&chosen, name] { chosen = name; });
    }
    std::string run_stage;
    auto* run = app.add_subcommand("run", "Run one stage, or all of them");
    run->add_option("stage", run_stage, "Stage name or 'all'")
        ->required()
        ->check(CLI::IsMember({"ingest", "link", "geocode", "label", "relate", "metrics", "regress", "report", "all"}));
    add_common(run, opts);
    run->callback([&] { chosen = run_stage; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 3;
    }
    return execute(chosen, opts);
}
