// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gvr/behavior.hpp>
#include <gvr/config.hpp>

#include <json.hpp>

#include <filesystem>
#include <optional>

namespace gvr::pipeline
{

namespace fs = std::filesystem;

/// Writes tasks first_seed .. first_seed + count - 1 as JSON lines. Without
/// no_clobber the file is replaced; with it, new seeds are appended and any seed
/// already present is a Precondition error. Returns the number of tasks written.
auto cmd_generate(const RunConfig& config, const fs::path& out, bool no_clobber) -> std::size_t;

struct SearchSummary
{
    std::size_t tasks = 0;
    double top1_accuracy = 0.0;
    double mcts_accuracy = 0.0;
    nlohmann::json config;
};

[[nodiscard]] auto to_json(const SearchSummary& s) -> nlohmann::json;

/// One search tree per task in out_dir (tree_<seed>.json) plus summary.json, which
/// compares a single linear teacher rollout against the search answer.
auto cmd_search(const RunConfig& config, const fs::path& tasks_path, const fs::path& out_dir, bool no_clobber)
    -> SearchSummary;

struct DistillSummary
{
    distill::DatasetStats stats;
    std::size_t trees = 0;
    std::size_t records = 0;
    // Chains dropped because their rendering failed grammar validation.
    std::size_t rejected = 0;
};

[[nodiscard]] auto to_json(const DistillSummary& s) -> nlohmann::json;

/// Linearizes every tree in trees_dir into a dataset in config.mode. Every emitted
/// line passes the grammar for its mode.
auto cmd_distill(const RunConfig& config, const fs::path& trees_dir, const fs::path& tasks_path, const fs::path& out,
                 bool no_clobber) -> DistillSummary;

struct TrainSummary
{
    std::size_t sft_examples = 0;
    std::vector<double> sft_nll;
    std::size_t iterations = 0;
    double final_mean_reward = 0.0;
};

[[nodiscard]] auto to_json(const TrainSummary& s) -> nlohmann::json;

/// Optional likelihood warm start on `dataset` (which then needs `tasks_path`), then
/// GRPO. Writes out_dir/checkpoint.json and out_dir/metrics.jsonl.
auto cmd_train(const RunConfig& config, const std::optional<fs::path>& dataset, const std::optional<fs::path>& tasks_path,
               const fs::path& out_dir, bool no_clobber) -> TrainSummary;

struct EvalSummary
{
    optim::EvalResult result;
    behavior::BehaviorReport behavior;
};

[[nodiscard]] auto to_json(const EvalSummary& s) -> nlohmann::json;

/// Name accepted in place of a checkpoint path for the scripted oracle policy.
inline constexpr std::string_view oracle_policy_name = "oracle";

/// One rollout per task at the eval temperature, plus the behavior report of the traces.
auto cmd_eval(const RunConfig& config, const std::string& policy, const fs::path& tasks_path) -> EvalSummary;

} // namespace gvr::pipeline
