// SPDX-License-Identifier: Apache-2.0
#include <gvr/grammar.hpp>
#include <gvr/rewards.hpp>

#include <algorithm>
#include <sstream>

namespace gvr::rewards
{

auto to_json(const RewardBreakdown& r) -> nlohmann::json
{
    return {
        { "r_fmt", r.r_fmt },       { "r_grammar", r.r_grammar },   { "r_div", r.r_div },
        { "r_task", r.r_task },     { "total", r.total },           { "lambda_fmt", r.lambda_fmt },
        { "lambda_task", r.lambda_task },
    };
}

auto format_reward_single(std::string_view trace_text, const scene::Raster& raster) -> double
{
    return grammar::validate_single_turn(trace_text, raster).valid ? 1.0 : 0.0;
}

auto grammar_reward(std::string_view dialog_text, const scene::Raster& raster) -> double
{
    return grammar::validate_dialog(dialog_text, raster).valid ? 1.0 : 0.0;
}

auto diversity_bonus(const Dialog& dialog, const DiversityRule& rule) -> double
{
    const auto calls = dialog.tool_call_coordinates();
    auto awards = 0;
    for (std::size_t i = 0; i < calls.size() && awards < rule.max_awards; ++i)
    {
        const auto distinct = std::all_of(calls.begin(), calls.begin() + static_cast<std::ptrdiff_t>(i),
                                          [&](Coordinate prev) { return distance(prev, calls[i]) >= rule.min_distance_px; });
        if (distinct)
            ++awards;
    }
    // 0.2 * 3 rounds to 0.6000000000000001; dividing by 1/bonus (exactly 5) lands on the nearest doubles.
    return static_cast<double>(awards) / (1.0 / rule.bonus);
}

auto parse_point(std::string_view text) -> std::optional<Coordinate>
{
    const auto trimmed = trim(text);
    const auto matches = scan_coordinates(trimmed);
    if (matches.size() != 1 || matches[0].offset != 0 || matches[0].length != trimmed.size())
        return std::nullopt;
    return matches[0].value;
}

auto task_reward(const scene::TaskInstance& task, std::string_view answer) -> double
{
    const auto& key = task.answer_key.value;
    switch (task.kind)
    {
        case scene::TaskKind::MultipleChoice:
        {
            const auto* label = std::get_if<std::string>(&key);
            if (label == nullptr)
                return 0.0;
            return to_lower(trim(answer)) == to_lower(trim(*label)) ? 1.0 : 0.0;
        }
        case scene::TaskKind::PointGrounding:
        {
            const auto* box = std::get_if<scene::Box>(&key);
            const auto point = parse_point(answer);
            return (box != nullptr && point && box->contains(*point)) ? 1.0 : 0.0;
        }
        case scene::TaskKind::ActionPrediction:
        {
            const auto* action = std::get_if<scene::ActionKey>(&key);
            if (action == nullptr)
                return 0.0;
            auto in = std::istringstream(trim(answer));
            auto type = std::string {};
            auto argument = std::string {};
            in >> type;
            std::getline(in, argument);
            argument = trim(argument);
            auto reward = 0.0;
            if (to_lower(type) == to_lower(action->type))
                reward += 0.5;
            if (argument == action->argument)
                reward += 0.5;
            return reward;
        }
    }
    return 0.0;
}

auto max_task_reward(const scene::TaskInstance&) -> double
{
    return 1.0;
}

auto total_reward(const RewardInputs& inputs, double lambda_fmt, double lambda_task) -> RewardBreakdown
{
    if (lambda_fmt < 0.0 || lambda_task < 0.0)
        throw Error(ErrorKind::Precondition, "reward weights must be non-negative");
    auto out = RewardBreakdown {};
    out.r_grammar = inputs.r_grammar;
    out.r_div = inputs.r_div;
    out.r_fmt = inputs.r_fmt ? *inputs.r_fmt : inputs.r_grammar + inputs.r_div;
    out.r_task = inputs.r_task;
    out.lambda_fmt = lambda_fmt;
    out.lambda_task = lambda_task;
    out.total = lambda_fmt * out.r_fmt + lambda_task * out.r_task;
    return out;
}

} // namespace gvr::rewards
