#pragma once

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "shapeforge/config.hpp"
#include "shapeforge/pipeline.hpp"

namespace shapeforge {

/// Command line entry point. Exit codes: 0 success, 1 usage error, 2 data or
/// validation error. All messages go to the diagnostic stream.
inline int run_command(const std::vector<std::string>& args) {
    CLI::App app{"shapeforge: shape model pipeline"};
    app.require_subcommand(0, 1);

    struct StageOpts {
        std::string config;
        std::string out;
        int workers = 1;
    };
    struct StageDef {
        const char* name;
        const char* help;
        bool needs_config;
    };
    const StageDef defs[] = {
        {"generate", "synthesize the image corpus", true},
        {"pdm", "build the shape space from training correspondences", true},
        {"augment", "draw and warp augmented training volumes", true},
        {"train", "fit the loading regressor on the augmented set", true},
        {"predict", "regress loadings for every split", true},
        {"evaluate", "compute error metrics and statistics", true},
        {"report", "verify checksums and render the summary report", true},
        {"selftest", "run built-in consistency checks", false},
    };

    std::vector<StageOpts> opts(std::size(defs));
    std::vector<CLI::App*> subs;
    for (std::size_t i = 0; i < std::size(defs); ++i) {
        CLI::App* sub = app.add_subcommand(defs[i].name, defs[i].help);
        if (defs[i].needs_config)
            sub->add_option("--config", opts[i].config, "run configuration file")->required();
        sub->add_option("--workers", opts[i].workers, "worker pool size")
            ->check(CLI::PositiveNumber);
        sub->add_option("--out", opts[i].out, "override the output directory");
        subs.push_back(sub);
    }

    // CLI11's argv parser expects a program name in front.
    std::vector<const char*> argv;
    argv.push_back("shapeforge");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(int(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        std::cerr << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        std::cerr << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n' << app.help();
        return 1;
    }

    std::size_t chosen = std::size(defs);
    for (std::size_t i = 0; i < subs.size(); ++i)
        if (subs[i]->parsed()) chosen = i;
    if (chosen == std::size(defs)) {
        std::cerr << "error: no subcommand given\n" << app.help();
        return 1;
    }

    Logger log;
    const StageOpts& o = opts[chosen];
    const std::string name = defs[chosen].name;
    try {
        if (name == "selftest") {
            run_selftest(log);
            return 0;
        }
        RunConfig cfg = load_run_config(o.config);
        if (!o.out.empty()) cfg.out_dir = o.out;
        std::string config_hash = detail::hex16(fnv1a64_file(o.config));
        std::filesystem::create_directories(cfg.out_dir);

        if (name == "generate") stage_generate(cfg, config_hash, o.workers, log);
        else if (name == "pdm") stage_pdm(cfg, config_hash, o.workers, log);
        else if (name == "augment") stage_augment(cfg, config_hash, o.workers, log);
        else if (name == "train") stage_train(cfg, config_hash, o.workers, log);
        else if (name == "predict") stage_predict(cfg, config_hash, o.workers, log);
        else if (name == "evaluate") stage_evaluate(cfg, config_hash, o.workers, log);
        else if (name == "report") stage_report(cfg, config_hash, o.workers, log);
        return 0;
    } catch (const Error& e) {
        log.error(e.what());
        return 2;
    } catch (const std::exception& e) {
        log.error(e.what());
        return 2;
    }
}

} // namespace shapeforge
