// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gvr/distill.hpp>
#include <gvr/optim/trainer.hpp>
#include <gvr/scene.hpp>
#include <gvr/search.hpp>

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gvr
{

/// Every tunable of the pipeline. Each field is addressable as "section.key".
struct RunConfig
{
    // [run]
    std::uint64_t seed = 0;
    int workers = 1;
    optim::DialogMode mode = optim::DialogMode::MultiTurn;

    // [tasks]
    scene::TaskKind kind = scene::TaskKind::MultipleChoice;
    std::uint64_t first_seed = 0;
    int count = 200;
    scene::Difficulty difficulty;

    // [search], [teacher]
    search::SearchConfig search;
    search::TeacherConfig teacher;

    // [distill]
    distill::DistillConfig distill;

    // [sft]
    optim::SftConfig sft;

    // [grpo]: single-turn table plus the loop shape shared by both modes.
    int iterations = 200;
    int tasks_per_iteration = 8;
    int max_tokens = 48;
    optim::GrpoConfig grpo { .group_size = 5, .clip_ratio = 0.28, .kl_coeff = 0.01, .learning_rate = 0.05,
                             .max_turns = 5, .rollout_temperature = 1.0, .top_p = 0.99, .max_grad_norm = 1.0 };

    // [multiturn]
    optim::GrpoConfig multiturn { .group_size = 8, .clip_ratio = 0.28, .kl_coeff = 0.01, .learning_rate = 0.05,
                                  .max_turns = 5, .rollout_temperature = 1.0, .top_p = 0.99, .max_grad_norm = 0.2 };
    int max_tokens_per_turn = 16;
    distill::CropConfig crop;
    bool diversity_bonus = true;

    // [rewards]
    rewards::RewardWeights weights;
    rewards::DiversityRule diversity;

    // [eval]
    double eval_temperature = 0.5;
    double eval_top_p = 0.99;

    // [behavior]
    std::string lexicon_dir;
    bool correct_only = true;
    double min_separation = 10.0;

    /// Throws Precondition on out-of-range values.
    void validate() const;
};

[[nodiscard]] auto parse_dialog_mode(std::string_view name) -> optim::DialogMode;
[[nodiscard]] auto to_string(optim::DialogMode mode) -> const char*;

/// "section.key" = value pairs in file order. Accepts [section] headers, key = value
/// lines, '#' comments, quoted strings, integers, reals and booleans. Throws Parse.
[[nodiscard]] auto parse_config_text(std::string_view text) -> std::vector<std::pair<std::string, std::string>>;

/// Sets one field from its textual value. Throws Parse for unknown keys or bad values.
void apply_setting(RunConfig& config, std::string_view key, std::string_view value);

/// Applies every setting in the file on top of `config`. Throws Io or Parse.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// All addressable keys in declaration order.
[[nodiscard]] auto config_keys() -> std::vector<std::string>;

/// Nested by section, keys as in the config file.
[[nodiscard]] auto to_json(const RunConfig& config) -> nlohmann::json;
/// Config-file text that reproduces `config`.
[[nodiscard]] auto to_config_text(const RunConfig& config) -> std::string;

/// Training settings for config.mode.
[[nodiscard]] auto train_config(const RunConfig& config) -> optim::TrainConfig;
[[nodiscard]] auto eval_config(const RunConfig& config) -> optim::EvalConfig;

} // namespace gvr
