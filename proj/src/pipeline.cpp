// SPDX-License-Identifier: Apache-2.0
#include <gvr/grammar.hpp>
#include <gvr/pipeline.hpp>
#include <gvr/rewards.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

namespace gvr::pipeline
{

namespace
{

// Independent random streams derived from the root seed.
constexpr std::uint64_t stream_search = 0x5ea2c4;
constexpr std::uint64_t stream_top1 = 0x7091;
constexpr std::uint64_t stream_sft = 0x5f7;
constexpr std::uint64_t stream_train = 0x7a1a;
constexpr std::uint64_t stream_eval = 0xe7a1;

void ensure_absent(const fs::path& path)
{
    if (fs::exists(path))
        throw Error(ErrorKind::Precondition, path.string() + " already exists (--no-clobber)");
}

void ensure_parent(const fs::path& path)
{
    const auto parent = path.parent_path();
    if (parent.empty())
        return;
    auto ec = std::error_code {};
    fs::create_directories(parent, ec);
    if (ec)
        throw Error(ErrorKind::Io, "cannot create directory " + parent.string() + ": " + ec.message());
}

void ensure_dir(const fs::path& dir)
{
    auto ec = std::error_code {};
    fs::create_directories(dir, ec);
    if (ec)
        throw Error(ErrorKind::Io, "cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text)
{
    auto out = std::ofstream(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    out << text;
    if (!out)
        throw Error(ErrorKind::Io, "failed writing " + path.string());
}

auto read_json(const fs::path& path) -> nlohmann::json
{
    auto in = std::ifstream(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::Io, "cannot open " + path.string());
    try
    {
        return nlohmann::json::parse(in);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
    }
}

auto tree_file_name(std::uint64_t seed) -> std::string
{
    auto digits = std::to_string(seed);
    return "tree_" + std::string(20 - std::min<std::size_t>(20, digits.size()), '0') + digits + ".json";
}

auto task_index(const std::vector<scene::TaskInstance>& tasks) -> std::map<std::uint64_t, const scene::TaskInstance*>
{
    auto out = std::map<std::uint64_t, const scene::TaskInstance*> {};
    for (const auto& t: tasks)
        out.emplace(t.seed, &t);
    return out;
}

auto distill_mode(optim::DialogMode mode) -> distill::Mode
{
    return mode == optim::DialogMode::Single ? distill::Mode::Single : distill::Mode::MultiTurn;
}

} // namespace

auto cmd_generate(const RunConfig& config, const fs::path& out, bool no_clobber) -> std::size_t
{
    config.validate();
    auto existing = std::set<std::uint64_t> {};
    if (no_clobber && fs::exists(out))
        for (const auto& t: scene::read_tasks(out))
            existing.insert(t.seed);

    auto tasks = std::vector<scene::TaskInstance> {};
    tasks.reserve(static_cast<std::size_t>(config.count));
    for (auto i = 0; i < config.count; ++i)
    {
        const auto seed = config.first_seed + static_cast<std::uint64_t>(i);
        if (existing.contains(seed))
            throw Error(ErrorKind::Precondition,
                        "seed " + std::to_string(seed) + " already present in " + out.string() + " (--no-clobber)");
        tasks.push_back(scene::generate_task(seed, config.kind, config.difficulty));
    }

    ensure_parent(out);
    if (existing.empty() && !(no_clobber && fs::exists(out)))
    {
        scene::write_tasks(out, tasks);
        return tasks.size();
    }
    auto stream = std::ofstream(out, std::ios::binary | std::ios::app);
    if (!stream)
        throw Error(ErrorKind::Io, "cannot append to " + out.string());
    for (const auto& t: tasks)
        stream << scene::to_json(t).dump() << '\n';
    if (!stream)
        throw Error(ErrorKind::Io, "failed writing " + out.string());
    return tasks.size();
}

auto to_json(const SearchSummary& s) -> nlohmann::json
{
    return {
        { "tasks", s.tasks },
        { "top1_accuracy", s.top1_accuracy },
        { "mcts_accuracy", s.mcts_accuracy },
        { "config", s.config },
    };
}

auto cmd_search(const RunConfig& config, const fs::path& tasks_path, const fs::path& out_dir, bool no_clobber)
    -> SearchSummary
{
    config.validate();
    const auto tasks = scene::read_tasks(tasks_path);
    ensure_dir(out_dir);
    if (no_clobber)
    {
        ensure_absent(out_dir / "summary.json");
        for (const auto& t: tasks)
            ensure_absent(out_dir / tree_file_name(t.seed));
    }

    const auto verifier = search::oracle_verifier();
    auto top1 = std::vector<int>(tasks.size(), 0);
    auto mcts = std::vector<int>(tasks.size(), 0);
    auto trees = std::vector<std::string>(tasks.size());
    const auto root = derive_seed(config.seed, stream_search);
    optim::parallel_for(tasks.size(), config.workers, [&](std::size_t i) {
        const auto& task = tasks[i];
        const auto task_seed = derive_seed(root, task.seed);
        const auto best = rewards::max_task_reward(task);

        auto teacher = search::ScriptedTeacher(config.teacher);
        auto rng = Rng(derive_seed(task_seed, stream_top1));
        const auto line = search::linear_rollout(task, teacher, verifier, config.search.rollout_depth_limit,
                                                 config.search.temperature, rng);
        top1[i] = line.reward >= best ? 1 : 0;

        auto search_teacher = search::ScriptedTeacher(config.teacher);
        const auto tree = search::run_search(task, search_teacher, verifier, config.search, task_seed);
        try
        {
            mcts[i] = rewards::task_reward(task, search::search_answer(tree)) >= best ? 1 : 0;
        }
        catch (const Error& e)
        {
            if (e.kind() != ErrorKind::NoTerminal)
                throw;
        }
        trees[i] = search::to_json(tree).dump();
    });

    for (std::size_t i = 0; i < tasks.size(); ++i)
        write_text(out_dir / tree_file_name(tasks[i].seed), trees[i] + "\n");

    auto summary = SearchSummary {};
    summary.tasks = tasks.size();
    if (!tasks.empty())
    {
        const auto n = static_cast<double>(tasks.size());
        summary.top1_accuracy = std::accumulate(top1.begin(), top1.end(), 0) / n;
        summary.mcts_accuracy = std::accumulate(mcts.begin(), mcts.end(), 0) / n;
    }
    summary.config = {
        { "sims", config.search.simulations },
        { "depth", config.search.max_depth },
        { "rollouts_per_node", config.search.rollouts_per_node },
        { "k", config.search.children_per_expansion },
        { "c", config.search.c_puct },
        { "rollout_depth_limit", config.search.rollout_depth_limit },
        { "temperature", config.search.temperature },
        { "p_relevant", config.teacher.p_relevant },
    };
    write_text(out_dir / "summary.json", to_json(summary).dump(2) + "\n");
    return summary;
}

auto to_json(const DistillSummary& s) -> nlohmann::json
{
    auto out = distill::to_json(s.stats);
    out["trees"] = s.trees;
    out["records"] = s.records;
    out["rejected"] = s.rejected;
    return out;
}

auto cmd_distill(const RunConfig& config, const fs::path& trees_dir, const fs::path& tasks_path, const fs::path& out,
                 bool no_clobber) -> DistillSummary
{
    config.validate();
    if (no_clobber)
        ensure_absent(out);
    if (!fs::is_directory(trees_dir))
        throw Error(ErrorKind::Io, "trees directory " + trees_dir.string() + " does not exist");

    auto paths = std::vector<fs::path> {};
    for (const auto& entry: fs::directory_iterator(trees_dir))
    {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.starts_with("tree_") && name.ends_with(".json"))
            paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());

    const auto tasks = paths.empty() ? std::vector<scene::TaskInstance> {} : scene::read_tasks(tasks_path);
    const auto by_seed = task_index(tasks);
    const auto mode = distill_mode(config.mode);

    auto summary = DistillSummary {};
    auto records = std::vector<distill::DatasetRecord> {};
    for (const auto& path: paths)
    {
        const auto tree = search::tree_from_json(read_json(path));
        const auto it = by_seed.find(tree.task_seed);
        if (it == by_seed.end())
            throw Error(ErrorKind::Precondition,
                        "tree " + path.filename().string() + " has no task in " + tasks_path.string());
        const auto& task = *it->second;
        ++summary.trees;
        for (const auto& chain: distill::deduplicate(distill::distill_tree(tree, config.distill)))
        {
            auto record = distill::make_record(chain, task, mode, config.crop);
            const auto report = mode == distill::Mode::Single ? grammar::validate_single_turn(record.text, task.raster)
                                                              : grammar::validate_dialog(record.text, task.raster);
            if (!report.valid)
            {
                ++summary.rejected;
                continue;
            }
            records.push_back(std::move(record));
        }
    }

    ensure_parent(out);
    write_text(out, "");
    distill::emit_dataset(out, records);
    summary.records = records.size();
    summary.stats = distill::dataset_stats(records);
    return summary;
}

auto to_json(const TrainSummary& s) -> nlohmann::json
{
    return {
        { "sft_examples", s.sft_examples },
        { "sft_nll", s.sft_nll },
        { "iterations", s.iterations },
        { "final_mean_reward", s.final_mean_reward },
    };
}

auto cmd_train(const RunConfig& config, const std::optional<fs::path>& dataset, const std::optional<fs::path>& tasks_path,
               const fs::path& out_dir, bool no_clobber) -> TrainSummary
{
    config.validate();
    const auto checkpoint_path = out_dir / "checkpoint.json";
    const auto metrics_path = out_dir / "metrics.jsonl";
    if (no_clobber)
    {
        ensure_absent(checkpoint_path);
        ensure_absent(metrics_path);
    }

    auto summary = TrainSummary {};
    auto policy = optim::TabularSoftmaxPolicy {};
    if (dataset)
    {
        if (!tasks_path)
            throw Error(ErrorKind::Precondition, "a warm-start dataset needs its tasks file");
        const auto records = distill::load_dataset(*dataset);
        const auto tasks = scene::read_tasks(*tasks_path);
        const auto by_seed = task_index(tasks);
        auto examples = std::vector<optim::SftExample> {};
        for (const auto& record: records)
        {
            const auto multi = record.observations.has_value();
            if (multi != (config.mode == optim::DialogMode::MultiTurn))
                throw Error(ErrorKind::Precondition,
                            std::string("dataset mode does not match --mode ") + to_string(config.mode));
            const auto it = by_seed.find(record.task_id);
            if (it == by_seed.end())
                throw Error(ErrorKind::Precondition,
                            "dataset task " + std::to_string(record.task_id) + " missing from the tasks file");
            if (auto ex = optim::make_sft_example(record, *it->second))
                examples.push_back(std::move(*ex));
        }
        summary.sft_examples = examples.size();
        auto sft = config.sft;
        sft.seed = derive_seed(config.seed, stream_sft);
        summary.sft_nll = optim::sft_fit(policy, examples, sft);
    }

    ensure_dir(out_dir);
    auto metrics = std::ofstream(metrics_path, std::ios::binary | std::ios::trunc);
    if (!metrics)
        throw Error(ErrorKind::Io, "cannot open " + metrics_path.string() + " for writing");

    auto train = train_config(config);
    train.seed = derive_seed(config.seed, stream_train);
    const auto kind = config.kind;
    const auto difficulty = config.difficulty;
    const auto sampler = [kind, difficulty](std::uint64_t seed) { return scene::generate_task(seed, kind, difficulty); };
    const auto log = optim::train(policy, sampler, train, [&](const optim::IterationMetrics& m) {
        metrics << optim::to_json(m).dump() << '\n';
    });
    metrics.flush();
    if (!metrics)
        throw Error(ErrorKind::Io, "failed writing " + metrics_path.string());

    auto saved = to_json(config);
    saved["train"] = optim::to_json(train);
    optim::save_checkpoint(checkpoint_path, policy, saved);
    summary.iterations = log.size();
    if (!log.empty())
        summary.final_mean_reward = log.back().mean_reward;
    return summary;
}

auto to_json(const EvalSummary& s) -> nlohmann::json
{
    auto out = optim::to_json(s.result);
    out["behavior"] = behavior::to_json(s.behavior);
    return out;
}

auto cmd_eval(const RunConfig& config, const std::string& policy_name, const fs::path& tasks_path) -> EvalSummary
{
    config.validate();
    const auto tasks = scene::read_tasks(tasks_path);
    auto eval = eval_config(config);
    eval.seed = derive_seed(config.seed, stream_eval);

    auto summary = EvalSummary {};
    if (policy_name == oracle_policy_name)
        summary.result = optim::evaluate(optim::oracle_policy(config.mode), tasks, eval);
    else
        summary.result = optim::evaluate(optim::load_checkpoint(policy_name).policy, tasks, eval);

    const auto lexicons = config.lexicon_dir.empty() ? behavior::default_lexicons()
                                                     : behavior::Lexicons::load(config.lexicon_dir);
    const auto judge = behavior::LexiconJudge(lexicons, config.min_separation);
    summary.behavior = behavior::behavior_report(summary.result.traces, judge,
                                                 behavior::ReportOptions { .correct_only = config.correct_only });
    return summary;
}

} // namespace gvr::pipeline
