#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hiertax/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical taxonomy classification experiments"};
    app.require_subcommand(1, 1);

    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::string population;
    bool parallel = false;

    const char* commands[][2] = {
        {"gen", "Generate a synthetic dataset"},
        {"split", "Assign stratified subsets"},
        {"prep", "Preprocess CT volumes into pooled features"},
        {"train", "Train the configured strategies"},
        {"eval", "Evaluate trained models on the test subset"},
        {"compare", "Train and evaluate all strategies, emit comparison tables"},
        {"gradcheck", "Check analytic gradients against finite differences"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config, "Experiment config file")->required();
        sub->add_option("--seed", seed, "Override the root seed");
        sub->add_option("--out", out, "Override the output directory");
        sub->add_option("--auc-population", population, "all | applicable")
            ->check(CLI::IsMember({"all", "applicable"}));
        sub->add_flag("--parallel", parallel, "Train strategies concurrently (compare)");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    hiertax::ConfigOverrides overrides;
    overrides.seed = seed;
    if (out) {
        overrides.out_dir = *out;
    }
    if (!population.empty()) {
        overrides.population = hiertax::parse_population(population);
    }
    const auto* sub = app.get_subcommands().front();
    return hiertax::run_command(sub->get_name(), config, overrides, parallel, std::cout, std::cerr);
}
