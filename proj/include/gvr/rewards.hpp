// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gvr/core.hpp>
#include <gvr/scene.hpp>

#include <json.hpp>

#include <optional>
#include <string>

namespace gvr::rewards
{

struct RewardBreakdown
{
    double r_fmt = 0.0;
    double r_grammar = 0.0;
    double r_div = 0.0;
    double r_task = 0.0;
    double total = 0.0;
    double lambda_fmt = 1.0;
    double lambda_task = 1.0;
};

[[nodiscard]] auto to_json(const RewardBreakdown& r) -> nlohmann::json;

struct RewardWeights
{
    double lambda_fmt = 1.0;
    double lambda_task = 1.0;
};

struct DiversityRule
{
    double bonus = 0.2;
    double min_distance_px = 10.0;
    int max_awards = 4;
};

/// 1 when the trace validates as a single think block plus answer with in-bounds coordinates.
[[nodiscard]] auto format_reward_single(std::string_view trace_text, const scene::Raster& raster) -> double;

/// 1 when the dialog is accepted by the tag automaton.
[[nodiscard]] auto grammar_reward(std::string_view dialog_text, const scene::Raster& raster) -> double;

/// bonus * k, where k counts tool-call coordinates at least min_distance_px from
/// every earlier tool-call coordinate (the first always counts), capped at max_awards.
[[nodiscard]] auto diversity_bonus(const Dialog& dialog, const DiversityRule& rule = {}) -> double;

/// Task-specific correctness for an extracted answer string. Unparseable answers score 0.
[[nodiscard]] auto task_reward(const scene::TaskInstance& task, std::string_view answer) -> double;

/// Highest value task_reward can return for this task.
[[nodiscard]] auto max_task_reward(const scene::TaskInstance& task) -> double;

/// Single-turn: r_fmt given directly. Multi-turn: pass r_grammar and r_div and
/// r_fmt becomes their sum.
struct RewardInputs
{
    std::optional<double> r_fmt;
    double r_grammar = 0.0;
    double r_div = 0.0;
    double r_task = 0.0;
};

[[nodiscard]] auto total_reward(const RewardInputs& inputs, double lambda_fmt, double lambda_task) -> RewardBreakdown;

/// Parses "(x, y)" allowing surrounding whitespace; nullopt otherwise.
[[nodiscard]] auto parse_point(std::string_view text) -> std::optional<Coordinate>;

} // namespace gvr::rewards
