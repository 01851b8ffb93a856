#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "sqreg/harness.hpp"

int main(int argc, char** argv) {
    CLI::App app{"sqreg: statistical-query regression simulations"};
    app.require_subcommand(1);

    std::string suite;
    std::string fault;
    std::uint64_t seed = sqreg::VerifyOptions{}.seed;
    auto* verify = app.add_subcommand("verify", "run a module's property checks");
    verify->add_option("suite", suite, "distributions|hermite|instances|oracles|analysis|all")->required();
    verify->add_option("--seed", seed, "master seed for the checks");
    verify->add_option("--inject-fault", fault, "negative control")->group("");

    std::string config_path;
    auto* run = app.add_subcommand("run", "run an experiment from a config file");
    run->add_option("config", config_path, "key = value config file")->required();

    auto* list = app.add_subcommand("list-experiments", "print the experiment registry");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*verify) {
            sqreg::VerifyOptions opt;
            opt.seed = seed;
            if (fault == "corrupt-normalizer")
                opt.fault = sqreg::Fault::CorruptNormalizer;
            else if (!fault.empty())
                throw sqreg::UsageError("unknown fault: " + fault);
            return sqreg::run_verify(suite, opt);
        }
        if (*run) {
            const sqreg::ExperimentConfig cfg = sqreg::load_config(config_path);
            const auto records = sqreg::run_experiment(cfg);
            for (const auto& r : records)
                std::printf("%s %s %s = %.10g (se %.3g)\n", r.experiment.c_str(), r.config_hash.c_str(), r.metric.c_str(), r.value, r.se);
            if (!records.empty()) std::printf("wall time %.2f s, outputs in %s\n", records.front().wall_time, cfg.output_dir.c_str());
            return 0;
        }
        if (*list) {
            for (const auto& n : sqreg::experiment_names()) std::cout << n << '\n';
            return 0;
        }
    } catch (const sqreg::UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
