// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gvr/optim/policy.hpp>

#include <json.hpp>

#include <memory>
#include <span>
#include <vector>

namespace gvr::optim
{

struct GrpoConfig
{
    int group_size = 5;
    double clip_ratio = 0.2;
    double kl_coeff = 0.01;
    double learning_rate = 0.05;
    int max_turns = 5;
    double rollout_temperature = 1.0;
    double top_p = 0.99;
    double max_grad_norm = 1.0;

    void validate() const;
};

[[nodiscard]] auto to_json(const GrpoConfig& cfg) -> nlohmann::json;

struct Trajectory
{
    std::shared_ptr<const TaskView> view;
    std::vector<Token> tokens;
    // 1 where the token is trained on.
    std::vector<std::uint8_t> mask;
    double reward = 0.0;
    double advantage = 0.0;
};

/// Consecutive runs of group_size trajectories share a prompt.
struct GroupBatch
{
    std::vector<Trajectory> trajectories;
    int group_size = 0;
};

/// r_i - mean(r). Precondition error unless rewards.size() == group_size.
[[nodiscard]] auto compute_advantages(std::span<const double> rewards, int group_size) -> std::vector<double>;

/// Fills every trajectory's advantage from its group's rewards.
void assign_advantages(GroupBatch& batch);

/// 0 on environment-supplied tokens, 1 elsewhere; all zero unless the sequence ends with EOS.
[[nodiscard]] auto build_token_masks(std::span<const Token> tokens, std::span<const std::uint8_t> environment)
    -> std::vector<std::uint8_t>;

/// Same rule for a dialog; `tokens` must be the dialog's tokenization.
[[nodiscard]] auto build_token_masks(const Dialog& dialog, std::span<const Token> tokens, scene::TaskKind kind,
                                     const Grid& grid) -> std::vector<std::uint8_t>;

/// Per trajectory, the log-probability of each emitted token (all positions).
using TokenLogProbs = std::vector<std::vector<double>>;
/// Per trajectory and unmasked position, the full log-distribution; empty at masked positions.
using DistributionLogProbs = std::vector<std::vector<std::vector<double>>>;

[[nodiscard]] auto token_log_probs(const Policy& policy, const GroupBatch& batch) -> TokenLogProbs;
[[nodiscard]] auto distribution_log_probs(const Policy& policy, const GroupBatch& batch) -> DistributionLogProbs;

struct LossResult
{
    double loss = 0.0;
    double surrogate = 0.0;
    // Length-normalized mean KL to the reference, before weighting by the coefficient.
    double kl = 0.0;
    std::vector<double> gradient;
};

/// Clipped token-level surrogate with per-trajectory length normalization, averaged
/// over trajectories, plus kl_coeff times exact categorical KL to the reference.
/// Allocates any missing policy rows first. DegenerateBatch if every mask is zero.
[[nodiscard]] auto grpo_loss(const GroupBatch& batch, TabularSoftmaxPolicy& policy, const TokenLogProbs& old_logprobs,
                             const DistributionLogProbs& ref_logprobs, const GrpoConfig& cfg) -> LossResult;

/// Max relative error between the analytic gradient and central differences over
/// `samples` random parameters of the rows the batch touches.
[[nodiscard]] auto finite_diff_check(TabularSoftmaxPolicy& policy, const GroupBatch& batch,
                                     const TokenLogProbs& old_logprobs, const DistributionLogProbs& ref_logprobs,
                                     const GrpoConfig& cfg, double h, int samples, Rng& rng) -> double;

} // namespace gvr::optim
