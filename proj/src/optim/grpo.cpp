// SPDX-License-Identifier: Apache-2.0
#include <gvr/optim/grpo.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace gvr::optim
{

void GrpoConfig::validate() const
{
    if (group_size < 2)
        throw Error(ErrorKind::Precondition, "group size must be at least 2");
    if (!(clip_ratio > 0.0 && clip_ratio < 1.0))
        throw Error(ErrorKind::Precondition, "clip ratio must lie in (0, 1)");
    if (kl_coeff < 0.0)
        throw Error(ErrorKind::Precondition, "KL coefficient must be non-negative");
    if (learning_rate < 0.0 || max_grad_norm <= 0.0)
        throw Error(ErrorKind::Precondition, "learning rate must be >= 0 and max grad norm > 0");
    if (max_turns < 1 || rollout_temperature <= 0.0 || top_p <= 0.0 || top_p > 1.0)
        throw Error(ErrorKind::Precondition, "invalid rollout settings");
}

auto to_json(const GrpoConfig& cfg) -> nlohmann::json
{
    return {
        { "group_size", cfg.group_size },
        { "clip_ratio", cfg.clip_ratio },
        { "kl_coeff", cfg.kl_coeff },
        { "learning_rate", cfg.learning_rate },
        { "max_turns", cfg.max_turns },
        { "rollout_temperature", cfg.rollout_temperature },
        { "top_p", cfg.top_p },
        { "max_grad_norm", cfg.max_grad_norm },
    };
}

auto compute_advantages(std::span<const double> rewards, int group_size) -> std::vector<double>
{
    if (group_size < 1 || rewards.size() != static_cast<std::size_t>(group_size))
        throw Error(ErrorKind::Precondition, "reward count must equal the group size");
    // Averaging offsets from the first reward makes an all-equal group exactly zero.
    const auto shift = rewards.front();
    auto offset = 0.0;
    for (const auto r: rewards)
        offset += r - shift;
    offset /= static_cast<double>(group_size);
    auto out = std::vector<double>(rewards.size());
    std::transform(rewards.begin(), rewards.end(), out.begin(), [&](double r) { return (r - shift) - offset; });
    return out;
}

void assign_advantages(GroupBatch& batch)
{
    const auto g = static_cast<std::size_t>(batch.group_size);
    if (g == 0 || batch.trajectories.size() % g != 0)
        throw Error(ErrorKind::Precondition, "batch size is not a multiple of the group size");
    for (std::size_t begin = 0; begin < batch.trajectories.size(); begin += g)
    {
        auto rewards = std::vector<double>(g);
        for (std::size_t i = 0; i < g; ++i)
            rewards[i] = batch.trajectories[begin + i].reward;
        const auto adv = compute_advantages(rewards, batch.group_size);
        for (std::size_t i = 0; i < g; ++i)
            batch.trajectories[begin + i].advantage = adv[i];
    }
}

auto build_token_masks(std::span<const Token> tokens, std::span<const std::uint8_t> environment)
    -> std::vector<std::uint8_t>
{
    if (tokens.size() != environment.size())
        throw Error(ErrorKind::Precondition, "environment flags must align with tokens");
    auto mask = std::vector<std::uint8_t>(tokens.size(), 0);
    if (tokens.empty() || tokens.back() != tok::eos)
        return mask;
    for (std::size_t i = 0; i < tokens.size(); ++i)
        mask[i] = environment[i] != 0 ? 0 : 1;
    return mask;
}

auto build_token_masks(const Dialog& dialog, std::span<const Token> tokens, scene::TaskKind kind, const Grid& grid)
    -> std::vector<std::uint8_t>
{
    auto env = std::vector<std::uint8_t> {};
    const auto expected = tokenize_dialog(dialog, kind, grid, &env);
    // A dialog that stopped right after its answer may still carry the trailing non-EOS token.
    const auto prefix_ok = tokens.size() >= expected.size()
                           && std::equal(expected.begin(), expected.end(), tokens.begin());
    if (!prefix_ok || tokens.size() > expected.size() + 1)
        throw Error(ErrorKind::Precondition, "tokens do not correspond to the dialog");
    env.resize(tokens.size(), 0);
    return build_token_masks(tokens, env);
}

auto token_log_probs(const Policy& policy, const GroupBatch& batch) -> TokenLogProbs
{
    auto out = TokenLogProbs {};
    for (const auto& tr: batch.trajectories)
        out.push_back(policy.log_prob(*tr.view, tr.tokens));
    return out;
}

auto distribution_log_probs(const Policy& policy, const GroupBatch& batch) -> DistributionLogProbs
{
    auto out = DistributionLogProbs {};
    for (const auto& tr: batch.trajectories)
    {
        auto& per = out.emplace_back(tr.tokens.size());
        for (std::size_t t = 0; t < tr.tokens.size(); ++t)
        {
            if (tr.mask[t] == 0)
                continue;
            auto probs = policy.next_token_distribution(Context { *tr.view, std::span(tr.tokens).first(t) });
            for (auto& p: probs)
                p = std::log(p);
            per[t] = std::move(probs);
        }
    }
    return out;
}

namespace
{

auto log_softmax(std::span<const double> z) -> std::vector<double>
{
    const auto top = *std::max_element(z.begin(), z.end());
    auto sum = 0.0;
    for (auto v: z)
        sum += std::exp(v - top);
    const auto lse = top + std::log(sum);
    auto out = std::vector<double>(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        out[i] = z[i] - lse;
    return out;
}

auto active_count(const Trajectory& tr) -> std::size_t
{
    return static_cast<std::size_t>(std::count(tr.mask.begin(), tr.mask.end(), std::uint8_t {1}));
}

} // namespace

auto grpo_loss(const GroupBatch& batch, TabularSoftmaxPolicy& policy, const TokenLogProbs& old_logprobs,
               const DistributionLogProbs& ref_logprobs, const GrpoConfig& cfg) -> LossResult
{
    const auto n_traj = batch.trajectories.size();
    if (old_logprobs.size() != n_traj || ref_logprobs.size() != n_traj)
        throw Error(ErrorKind::Precondition, "log-probability tables must align with the batch");
    auto any_active = false;
    for (const auto& tr: batch.trajectories)
    {
        if (tr.mask.size() != tr.tokens.size())
            throw Error(ErrorKind::Precondition, "mask length differs from token length");
        if (active_count(tr) == 0)
            continue;
        any_active = true;
        for (std::size_t t = 0; t < tr.tokens.size(); ++t)
            if (tr.mask[t] != 0)
                policy.ensure_context(Context { *tr.view, std::span(tr.tokens).first(t) });
    }
    if (!any_active)
        throw Error(ErrorKind::DegenerateBatch, "every token in the batch is masked");

    auto out = LossResult {};
    out.gradient.assign(policy.parameters().size(), 0.0);
    // Extended accumulators keep the total's rounding below the per-term rounding,
    // which the finite-difference check relies on for small gradients.
    auto surrogate = 0.0L;
    auto kl_total = 0.0L;
    const auto lo = 1.0 - cfg.clip_ratio;
    const auto hi = 1.0 + cfg.clip_ratio;
    auto dlogits = std::vector<double>(tok::vocab_size);

    for (std::size_t i = 0; i < n_traj; ++i)
    {
        const auto& tr = batch.trajectories[i];
        const auto active = active_count(tr);
        if (active == 0)
            continue;
        const auto weight = 1.0 / (static_cast<double>(active) * static_cast<double>(n_traj));
        const auto a_hat = tr.advantage;

        for (std::size_t t = 0; t < tr.tokens.size(); ++t)
        {
            if (tr.mask[t] == 0)
                continue;
            const auto ctx = Context { *tr.view, std::span(tr.tokens).first(t) };
            const auto logp = log_softmax(policy.logits(ctx));
            const auto a = static_cast<std::size_t>(tr.tokens[t]);

            const auto rho = std::exp(logp[a] - old_logprobs[i].at(t));
            const auto unclipped = rho * a_hat;
            const auto clipped = std::clamp(rho, lo, hi) * a_hat;
            const auto term = std::min(unclipped, clipped);
            surrogate -= static_cast<long double>(weight * term);
            // Only the unclipped branch depends on theta.
            const auto dterm_dlogp = unclipped <= clipped ? unclipped : 0.0;

            const auto& logq = ref_logprobs[i].at(t);
            auto kl = 0.0;
            for (std::size_t k = 0; k < logp.size(); ++k)
                kl += std::exp(logp[k]) * (logp[k] - logq[k]);
            kl_total += static_cast<long double>(weight * kl);

            for (std::size_t k = 0; k < logp.size(); ++k)
            {
                const auto p = std::exp(logp[k]);
                const auto dlogp = (k == a ? 1.0 : 0.0) - p;
                dlogits[k] = weight * (-dterm_dlogp * dlogp + cfg.kl_coeff * p * ((logp[k] - logq[k]) - kl));
            }
            policy.accumulate(ctx, dlogits, out.gradient);
        }
    }
    out.surrogate = static_cast<double>(surrogate);
    out.kl = static_cast<double>(kl_total);
    out.loss = static_cast<double>(surrogate + static_cast<long double>(cfg.kl_coeff) * kl_total);
    return out;
}

auto finite_diff_check(TabularSoftmaxPolicy& policy, const GroupBatch& batch, const TokenLogProbs& old_logprobs,
                       const DistributionLogProbs& ref_logprobs, const GrpoConfig& cfg, double h, int samples,
                       Rng& rng) -> double
{
    if (h < 1e-7 || h > 1e-3)
        throw Error(ErrorKind::Precondition, "finite-difference step must lie in [1e-7, 1e-3]");
    const auto analytic = grpo_loss(batch, policy, old_logprobs, ref_logprobs, cfg).gradient;

    auto rows = std::set<std::size_t> {};
    for (const auto& tr: batch.trajectories)
        for (std::size_t t = 0; t < tr.tokens.size(); ++t)
            if (tr.mask[t] != 0)
                for (auto row: policy.context_rows(Context { *tr.view, std::span(tr.tokens).first(t) }))
                    rows.insert(row);
    const auto row_list = std::vector<std::size_t>(rows.begin(), rows.end());

    auto theta = policy.parameters();
    auto worst = 0.0;
    for (auto s = 0; s < samples; ++s)
    {
        const auto row = row_list[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(row_list.size()) - 1))];
        const auto idx = row + static_cast<std::size_t>(uniform_int(rng, 0, TabularSoftmaxPolicy::row_width - 1));
        const auto saved = theta[idx];
        theta[idx] = saved + h;
        const auto plus = grpo_loss(batch, policy, old_logprobs, ref_logprobs, cfg).loss;
        theta[idx] = saved - h;
        const auto minus = grpo_loss(batch, policy, old_logprobs, ref_logprobs, cfg).loss;
        theta[idx] = saved;
        const auto fd = (plus - minus) / (2.0 * h);
        worst = std::max(worst, std::abs(analytic[idx] - fd) / std::max(1e-12, std::abs(fd)));
    }
    return worst;
}

} // namespace gvr::optim
