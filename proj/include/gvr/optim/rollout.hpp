// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gvr/distill.hpp>
#include <gvr/optim/policy.hpp>
#include <gvr/rewards.hpp>

#include <vector>

namespace gvr::optim
{

struct SamplingConfig
{
    double temperature = 1.0;
    double top_p = 0.99;
    // Token cap for a whole single-turn response, or per assistant turn in a dialog.
    int max_tokens = 48;
};

struct SingleTurnResult
{
    std::vector<Token> tokens;
    std::vector<std::uint8_t> mask;
    std::string text;
    rewards::RewardBreakdown reward;
};

/// Samples one response. Generation stops at EOS, at the token after `</answer>`, or at the cap.
[[nodiscard]] auto run_single_turn(const Policy& policy, const scene::TaskInstance& task, const TaskView& view,
                                   const SamplingConfig& sampling, const rewards::RewardWeights& weights, Rng& rng)
    -> SingleTurnResult;

struct MultiTurnConfig
{
    int max_turns = 5;
    SamplingConfig sampling { .temperature = 1.0, .top_p = 0.99, .max_tokens = 16 };
    distill::CropConfig crop;
    bool diversity_bonus = true;
    rewards::DiversityRule diversity;
    rewards::RewardWeights weights;
};

struct MultiTurnResult
{
    std::vector<Token> tokens;
    // 1 on tokens the environment appended (observations, the termination prompt).
    std::vector<std::uint8_t> environment;
    std::vector<std::uint8_t> mask;
    Dialog dialog;
    std::string text;
    rewards::RewardBreakdown reward;
    int assistant_turns = 0;
    // Assistant turn after which the termination prompt was appended; 0 if never.
    int soft_prompt_after_turn = 0;
};

/// Alternates assistant turns and crop observations. A turn ends at `</tool_call>`,
/// after `</answer>` plus one more token, at EOS, or at the per-turn cap. After
/// max_turns turns without an answer the termination prompt is appended and one
/// last turn is allowed.
[[nodiscard]] auto run_multi_turn(const Policy& policy, const scene::TaskInstance& task, const TaskView& view,
                                  const MultiTurnConfig& cfg, Rng& rng) -> MultiTurnResult;

} // namespace gvr::optim
