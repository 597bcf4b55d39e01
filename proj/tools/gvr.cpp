// SPDX-License-Identifier: Apache-2.0
// Command-line front end. Exit codes: 0 success, 2 validation failure, 3 IO failure.

#include <gvr/pipeline.hpp>

#include <CLI11.hpp>

#include <iostream>

namespace
{

constexpr int exit_ok = 0;
constexpr int exit_validation = 2;
constexpr int exit_io = 3;

struct Common
{
    std::optional<std::uint64_t> seed;
    std::optional<std::string> config;
    std::optional<std::string> mode;
    std::optional<int> workers;
    std::string out;
    bool no_clobber = false;
    std::vector<std::string> settings;
};

// Built-in defaults, then the config file, then command-line flags.
auto resolve(const Common& common) -> gvr::RunConfig
{
    auto config = gvr::RunConfig {};
    if (common.config)
        gvr::apply_config_file(config, *common.config);
    for (const auto& s: common.settings)
    {
        const auto eq = s.find('=');
        if (eq == std::string::npos)
            throw gvr::Error(gvr::ErrorKind::Parse, "--set expects key=value, got '" + s + "'");
        gvr::apply_setting(config, s.substr(0, eq), s.substr(eq + 1));
    }
    if (common.seed)
        config.seed = *common.seed;
    if (common.mode)
        config.mode = gvr::parse_dialog_mode(*common.mode);
    if (common.workers)
        config.workers = *common.workers;
    config.validate();
    return config;
}

void print(const nlohmann::json& j)
{
    std::cout << j.dump(2) << '\n';
}

auto require_out(const Common& common) -> std::string
{
    if (common.out.empty())
        throw gvr::Error(gvr::ErrorKind::Precondition, "--out is required");
    return common.out;
}

} // namespace

auto main(int argc, char** argv) -> int
{
    auto app = CLI::App { "Grounded visual reasoning pipeline: task generation, tree search, distillation, "
                          "policy training and evaluation on synthetic glyph scenes." };
    app.require_subcommand(1);
    app.fallthrough();

    auto common = Common {};
    app.add_option("--seed", common.seed, "Root seed; every random stream derives from it");
    app.add_option("--config", common.config, "Config file (key = value with [sections])");
    app.add_option("--mode", common.mode, "Dialog mode: single or multiturn");
    app.add_option("--out", common.out, "Output file or directory");
    app.add_option("--workers", common.workers, "Worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--no-clobber", common.no_clobber, "Refuse to overwrite existing outputs");
    app.add_option("--set", common.settings, "Override a config key: section.key=value (repeatable)");

    auto tasks_path = std::string {};
    auto trees_dir = std::string {};
    auto dataset = std::string {};
    auto policy = std::string { gvr::pipeline::oracle_policy_name };
    auto first_seed = std::optional<std::uint64_t> {};
    auto count = std::optional<int> {};
    auto kind = std::optional<std::string> {};
    auto lr = std::optional<double> {};
    auto iterations = std::optional<int> {};
    auto stats = false;

    auto* generate = app.add_subcommand("generate", "Write a seeded task file (JSON lines)");
    generate->add_option("--first-seed", first_seed, "First task seed");
    generate->add_option("--count", count, "Number of tasks");
    generate->add_option("--kind", kind, "multiple_choice, point_grounding or action_prediction");

    auto* search = app.add_subcommand("search", "Run tree search per task; write trees and a summary");
    search->add_option("--tasks", tasks_path, "Task file")->required();

    auto* distill = app.add_subcommand("distill", "Linearize search trees into a training dataset");
    distill->add_option("--trees", trees_dir, "Directory of search trees")->required();
    distill->add_option("--tasks", tasks_path, "Task file the trees were searched on")->required();
    distill->add_flag("--stats", stats, "Print direct/corrected counts and mean steps");

    auto* train = app.add_subcommand("train", "Optional warm start, then GRPO; write checkpoint and metrics");
    train->add_option("--dataset", dataset, "Warm-start dataset from distill");
    train->add_option("--tasks", tasks_path, "Task file the dataset refers to");
    train->add_option("--lr", lr, "Learning rate for the active mode");
    train->add_option("--iterations", iterations, "GRPO iterations");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint (or the oracle) with a behavior report");
    eval->add_option("--policy", policy, "Checkpoint path or 'oracle'");
    eval->add_option("--tasks", tasks_path, "Task file")->required();

    auto* show = app.add_subcommand("config", "Print the effective configuration");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const auto code = app.exit(e);
        return code == 0 ? exit_ok : exit_validation;
    }

    try
    {
        auto config = resolve(common);
        if (generate->parsed())
        {
            if (first_seed)
                config.first_seed = *first_seed;
            if (count)
                config.count = *count;
            if (kind)
                config.kind = gvr::scene::parse_task_kind(*kind);
            config.validate();
            const auto n = gvr::pipeline::cmd_generate(config, require_out(common), common.no_clobber);
            print({ { "tasks", n }, { "out", common.out } });
        }
        else if (search->parsed())
        {
            print(gvr::pipeline::to_json(
                gvr::pipeline::cmd_search(config, tasks_path, require_out(common), common.no_clobber)));
        }
        else if (distill->parsed())
        {
            const auto summary =
                gvr::pipeline::cmd_distill(config, trees_dir, tasks_path, require_out(common), common.no_clobber);
            if (stats)
                print(gvr::pipeline::to_json(summary));
            else
                print({ { "records", summary.records }, { "out", common.out } });
        }
        else if (train->parsed())
        {
            if (lr)
            {
                config.grpo.learning_rate = *lr;
                config.multiturn.learning_rate = *lr;
            }
            if (iterations)
                config.iterations = *iterations;
            config.validate();
            const auto data = dataset.empty() ? std::nullopt : std::optional<std::filesystem::path>(dataset);
            const auto tasks = tasks_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(tasks_path);
            print(gvr::pipeline::to_json(
                gvr::pipeline::cmd_train(config, data, tasks, require_out(common), common.no_clobber)));
        }
        else if (eval->parsed())
        {
            const auto summary = gvr::pipeline::cmd_eval(config, policy, tasks_path);
            auto j = gvr::pipeline::to_json(summary);
            if (!common.out.empty())
            {
                if (common.no_clobber && std::filesystem::exists(common.out))
                    throw gvr::Error(gvr::ErrorKind::Precondition, common.out + " already exists (--no-clobber)");
                auto f = std::ofstream(common.out, std::ios::binary | std::ios::trunc);
                if (!(f << j.dump(2) << '\n'))
                    throw gvr::Error(gvr::ErrorKind::Io, "failed writing " + common.out);
            }
            print(j);
        }
        else if (show->parsed())
        {
            std::cout << gvr::to_config_text(config);
        }
        return exit_ok;
    }
    catch (const gvr::Error& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return e.kind() == gvr::ErrorKind::Io ? exit_io : exit_validation;
    }
    catch (const std::filesystem::filesystem_error& e)
    {
        std::cerr << "error: " << e.what() << '\n';
        return exit_io;
    }
}
