// SPDX-License-Identifier: Apache-2.0
// Random GRPO batches on the tabular policy, shared by the unit and acceptance tests.
#pragma once

#include <gvr/optim/grpo.hpp>
#include <gvr/optim/rollout.hpp>

#include <algorithm>
#include <cmath>
#include <memory>

namespace grpo_fixture
{

using namespace gvr;
using namespace gvr::optim;

inline auto make_view(std::uint64_t seed, scene::TaskKind kind = scene::TaskKind::MultipleChoice)
    -> std::pair<scene::TaskInstance, std::shared_ptr<const TaskView>>
{
    auto task = scene::generate_task(seed, kind, {});
    auto view = std::make_shared<const TaskView>(TaskView::of(task));
    return { std::move(task), std::move(view) };
}

// Direct evaluation of the objective from its definition.
inline auto loss_oracle(const GroupBatch& batch, const Policy& policy, const TokenLogProbs& old_lp,
                 const DistributionLogProbs& ref_lp, const GrpoConfig& cfg) -> double
{
    auto total = 0.0;
    const auto n = static_cast<double>(batch.trajectories.size());
    for (std::size_t i = 0; i < batch.trajectories.size(); ++i)
    {
        const auto& tr = batch.trajectories[i];
        const auto active = std::count(tr.mask.begin(), tr.mask.end(), std::uint8_t {1});
        if (active == 0)
            continue;
        auto sum = 0.0;
        for (std::size_t t = 0; t < tr.tokens.size(); ++t)
        {
            if (tr.mask[t] == 0)
                continue;
            const auto p = policy.next_token_distribution(Context { *tr.view, std::span(tr.tokens).first(t) });
            const auto rho = p[static_cast<std::size_t>(tr.tokens[t])] / std::exp(old_lp[i][t]);
            const auto clipped = std::min(std::max(rho, 1.0 - cfg.clip_ratio), 1.0 + cfg.clip_ratio);
            auto kl = 0.0;
            for (std::size_t k = 0; k < p.size(); ++k)
                kl += p[k] * (std::log(p[k]) - ref_lp[i][t][k]);
            sum += -std::min(rho * tr.advantage, clipped * tr.advantage) + cfg.kl_coeff * kl;
        }
        total += sum / static_cast<double>(active);
    }
    return total / n;
}

// Oracle token sequences with random substitutions; ends in EOS so masks are live.
inline auto random_batch(Rng& rng, int groups, int group_size) -> GroupBatch
{
    auto batch = GroupBatch {};
    batch.group_size = group_size;
    for (auto g = 0; g < groups; ++g)
    {
        const auto [task, view] = make_view(static_cast<std::uint64_t>(uniform_int(rng, 0, 1000)));
        for (auto k = 0; k < group_size; ++k)
        {
            auto tr = Trajectory {};
            tr.view = view;
            tr.tokens = oracle_tokens(*view, bernoulli(rng, 0.5) ? DialogMode::Single : DialogMode::MultiTurn);
            for (std::size_t t = 0; t + 1 < tr.tokens.size(); ++t)
                if (bernoulli(rng, 0.2))
                    tr.tokens[t] = static_cast<Token>(uniform_int(rng, 1, tok::vocab_size - 1));
            tr.mask = build_token_masks(tr.tokens, std::vector<std::uint8_t>(tr.tokens.size(), 0));
            tr.reward = static_cast<double>(uniform_int(rng, 0, 3));
            batch.trajectories.push_back(std::move(tr));
        }
    }
    assign_advantages(batch);
    return batch;
}

inline void allocate_rows(TabularSoftmaxPolicy& policy, const GroupBatch& batch)
{
    for (const auto& tr: batch.trajectories)
        for (std::size_t t = 0; t < tr.tokens.size(); ++t)
            policy.ensure_context(Context { *tr.view, std::span(tr.tokens).first(t) });
}

inline void randomize(TabularSoftmaxPolicy& policy, Rng& rng, double scale)
{
    for (auto& v: policy.parameters())
        v = scale * (2.0 * uniform01(rng) - 1.0);
}

struct Fixture
{
    GroupBatch batch;
    TabularSoftmaxPolicy policy;
    TokenLogProbs old_lp;
    DistributionLogProbs ref_lp;
};

inline auto make_fixture(std::uint64_t seed) -> Fixture
{
    auto rng = Rng { seed };
    auto f = Fixture {};
    f.batch = random_batch(rng, 2, 4);
    allocate_rows(f.policy, f.batch);
    randomize(f.policy, rng, 1.0);
    auto old = f.policy;
    for (auto& v: old.parameters())
        v += 0.3 * (2.0 * uniform01(rng) - 1.0);
    auto ref = f.policy;
    for (auto& v: ref.parameters())
        v += 0.5 * (2.0 * uniform01(rng) - 1.0);
    f.old_lp = token_log_probs(old, f.batch);
    f.ref_lp = distribution_log_probs(ref, f.batch);
    return f;
}

} // namespace grpo_fixture
