// SPDX-License-Identifier: Apache-2.0
#include <gvr/grammar.hpp>
#include <gvr/optim/grpo.hpp>
#include <gvr/optim/rollout.hpp>

#include <algorithm>

namespace gvr::optim
{

namespace
{

auto answer_reward(std::string_view text, const scene::TaskInstance& task) -> double
{
    try
    {
        return rewards::task_reward(task, grammar::extract_answer(text));
    }
    catch (const Error&)
    {
        return 0.0;
    }
}

auto find_from(std::span<const Token> tokens, std::size_t from, Token t) -> std::size_t
{
    const auto it = std::find(tokens.begin() + static_cast<std::ptrdiff_t>(from), tokens.end(), t);
    return static_cast<std::size_t>(it - tokens.begin());
}

// Appends the segments of one assistant turn; false once the turn stops being well-formed.
auto append_segments(Dialog& dialog, std::span<const Token> turn, const RenderOptions& options) -> bool
{
    std::size_t i = 0;
    while (i < turn.size())
    {
        const auto t = turn[i];
        if (t == tok::eos)
        {
            ++i;
            continue;
        }
        if (t == tok::think_open || t == tok::answer_open)
        {
            const auto close = find_from(turn, i + 1, t == tok::think_open ? tok::think_close : tok::answer_close);
            if (close == turn.size() || close == i + 1)
                return false;
            const auto body = turn.subspan(i + 1, close - i - 1);
            if (t == tok::think_open)
            {
                if (!std::all_of(body.begin(), body.end(), tok::is_text))
                    return false;
                dialog.segments.push_back(Segment::think(detokenize(body, options)));
            }
            else
            {
                auto answer_options = options;
                answer_options.mode = RenderMode::Single;
                dialog.segments.push_back(Segment::answer(detokenize(body, answer_options)));
            }
            i = close + 1;
            continue;
        }
        if (t == tok::tool_open && i + 2 < turn.size() && tok::is_cell(turn[i + 1]) && turn[i + 2] == tok::tool_close)
        {
            dialog.segments.push_back(Segment::tool_call(options.grid.center(tok::cell_of(turn[i + 1]))));
            i += 3;
            continue;
        }
        return false;
    }
    return true;
}

enum class TurnEnd
{
    ToolCall,
    Stop,
};

// Samples tokens until the turn ends; returns how it ended.
auto generate_turn(const Policy& policy, const TaskView& view, std::vector<Token>& tokens,
                   std::vector<std::uint8_t>& environment, const SamplingConfig& sampling, Rng& rng) -> TurnEnd
{
    for (auto n = 0; n < sampling.max_tokens; ++n)
    {
        const auto t = policy.sample(Context { view, tokens }, sampling.temperature, sampling.top_p, rng);
        tokens.push_back(t);
        environment.push_back(0);
        if (t == tok::tool_close)
            return TurnEnd::ToolCall;
        if (t == tok::eos)
            return TurnEnd::Stop;
        if (t == tok::answer_close)
        {
            tokens.push_back(policy.sample(Context { view, tokens }, sampling.temperature, sampling.top_p, rng));
            environment.push_back(0);
            return TurnEnd::Stop;
        }
    }
    return TurnEnd::Stop;
}

} // namespace

auto run_single_turn(const Policy& policy, const scene::TaskInstance& task, const TaskView& view,
                     const SamplingConfig& sampling, const rewards::RewardWeights& weights, Rng& rng)
    -> SingleTurnResult
{
    auto out = SingleTurnResult {};
    auto env = std::vector<std::uint8_t> {};
    generate_turn(policy, view, out.tokens, env, sampling, rng);
    out.mask = build_token_masks(out.tokens, env);
    out.text = detokenize(out.tokens, RenderOptions { RenderMode::Single, view.grid, 384 });
    const auto inputs = rewards::RewardInputs {
        .r_fmt = rewards::format_reward_single(out.text, task.raster),
        .r_grammar = 0.0,
        .r_div = 0.0,
        .r_task = answer_reward(out.text, task),
    };
    out.reward = rewards::total_reward(inputs, weights.lambda_fmt, weights.lambda_task);
    return out;
}

auto run_multi_turn(const Policy& policy, const scene::TaskInstance& task, const TaskView& view,
                    const MultiTurnConfig& cfg, Rng& rng) -> MultiTurnResult
{
    auto out = MultiTurnResult {};
    const auto options = RenderOptions { RenderMode::Dialog, view.grid, cfg.crop.resize };
    auto well_formed = true;
    const auto append_env = [&](std::initializer_list<Token> ts) {
        for (auto t: ts)
        {
            out.tokens.push_back(t);
            out.environment.push_back(1);
        }
    };

    while (true)
    {
        ++out.assistant_turns;
        const auto begin = out.tokens.size();
        const auto end = generate_turn(policy, view, out.tokens, out.environment, cfg.sampling, rng);
        const auto turn = std::span(out.tokens).subspan(begin);
        if (well_formed)
            well_formed = append_segments(out.dialog, turn, options);

        const auto valid_call = end == TurnEnd::ToolCall && turn.size() >= 3 && turn[turn.size() - 3] == tok::tool_open
                                && tok::is_cell(turn[turn.size() - 2]);
        if (!valid_call)
            break;

        const auto at = view.grid.center(tok::cell_of(turn[turn.size() - 2]));
        append_env({ tok::obs_open, tok::image, tok::obs_close });
        if (well_formed)
            out.dialog.segments.push_back(Segment::observation(std::make_shared<const ObservationImage>(
                scene::crop(task.raster, at, cfg.crop.window, cfg.crop.resize))));

        if (out.soft_prompt_after_turn > 0)
            break;
        if (out.assistant_turns == cfg.max_turns)
        {
            append_env({ tok::think_open, tok::soft_prompt, tok::think_close });
            if (well_formed)
            {
                auto prompt = Segment::think(std::string(soft_termination_text));
                prompt.injected = true;
                out.dialog.segments.push_back(std::move(prompt));
            }
            out.soft_prompt_after_turn = out.assistant_turns;
        }
    }

    out.dialog.terminated = !out.dialog.segments.empty() && out.dialog.segments.back().kind == SegmentKind::Answer;
    out.mask = build_token_masks(out.tokens, out.environment);
    out.text = detokenize(out.tokens, options);
    const auto inputs = rewards::RewardInputs {
        .r_fmt = std::nullopt,
        .r_grammar = rewards::grammar_reward(out.text, task.raster),
        .r_div = cfg.diversity_bonus ? rewards::diversity_bonus(out.dialog, cfg.diversity) : 0.0,
        .r_task = answer_reward(out.text, task),
    };
    out.reward = rewards::total_reward(inputs, cfg.weights.lambda_fmt, cfg.weights.lambda_task);
    return out;
}

} // namespace gvr::optim
