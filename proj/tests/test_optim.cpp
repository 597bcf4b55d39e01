// SPDX-License-Identifier: Apache-2.0
#include "grpo_fixture.hpp"
#include "support.hpp"

#include <gvr/grammar.hpp>
#include <gvr/optim/grpo.hpp>
#include <gvr/optim/rollout.hpp>
#include <gvr/optim/trainer.hpp>

#include <doctest.h>

#include <filesystem>
#include <numeric>
#include <set>

using namespace gvr;
using namespace gvr::optim;
using namespace grpo_fixture;

namespace
{

auto single_token_batch(const std::shared_ptr<const TaskView>& view, double advantage) -> GroupBatch
{
    auto batch = GroupBatch {};
    batch.group_size = 1;
    batch.trajectories.push_back({ view, { tok::think_open }, { 1 }, 0.0, advantage });
    return batch;
}

} // namespace

TEST_CASE("advantages are centred")
{
    const auto a = compute_advantages(std::vector { 1.0, 0.0, 0.0, 1.0, 0.0 }, 5);
    const auto expected = std::vector { 0.6, -0.4, -0.4, 0.6, -0.4 };
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    for (const auto v: compute_advantages(std::vector { 0.7, 0.7, 0.7 }, 3))
        CHECK(v == 0.0);
    CHECK_THROWS_AS((void)compute_advantages(std::vector { 1.0, 0.0 }, 3), Error);

    auto rng = Rng { 61 };
    for (auto i = 0; i < 1000; ++i)
    {
        const auto g = static_cast<int>(uniform_int(rng, 2, 16));
        auto r = std::vector<double>(static_cast<std::size_t>(g));
        for (auto& v: r)
            v = 3.0 * uniform01(rng);
        const auto adv = compute_advantages(r, g);
        CHECK(std::abs(std::accumulate(adv.begin(), adv.end(), 0.0)) <= 1e-9);
    }
}

TEST_CASE("config invariants")
{
    CHECK_NOTHROW(GrpoConfig {}.validate());
    auto c = GrpoConfig {};
    c.group_size = 1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.clip_ratio = 1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.kl_coeff = -0.1;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("token masks")
{
    const auto [task, view] = make_view(1);
    auto d = Dialog {};
    d.segments.push_back(Segment::think("Now I will look at this region"));
    d.segments.push_back(Segment::tool_call(view->grid.center(view->hint_cell)));
    d.segments.push_back(Segment::observation(nullptr));
    d.segments.push_back(Segment::think("I have enough information to answer."));
    d.segments.push_back(Segment::answer(std::get<std::string>(task.answer_key.value)));
    d.terminated = true;
    auto env = std::vector<std::uint8_t> {};
    const auto tokens = tokenize_dialog(d, task.kind, view->grid, &env);
    REQUIRE(tokens.back() == tok::eos);
    const auto mask = build_token_masks(d, tokens, task.kind, view->grid);
    REQUIRE(mask.size() == tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i)
    {
        const auto in_obs = tokens[i] == tok::obs_open || tokens[i] == tok::image || tokens[i] == tok::obs_close;
        CHECK(mask[i] == (in_obs ? 0 : 1));
    }

    const auto truncated = std::vector<Token>(tokens.begin(), tokens.end() - 3);
    for (const auto m: build_token_masks(truncated, std::vector<std::uint8_t>(truncated.size(), 0)))
        CHECK(m == 0);

    const auto single = oracle_tokens(*view, DialogMode::Single);
    for (const auto m: build_token_masks(single, std::vector<std::uint8_t>(single.size(), 0)))
        CHECK(m == 1);
}

TEST_CASE("loss is zero at the identity point")
{
    auto rng = Rng { 62 };
    auto batch = random_batch(rng, 2, 3);
    for (auto& tr: batch.trajectories)
        tr.advantage = 0.0;
    auto policy = TabularSoftmaxPolicy {};
    allocate_rows(policy, batch);
    randomize(policy, rng, 1.0);
    const auto old_lp = token_log_probs(policy, batch);
    const auto ref_lp = distribution_log_probs(policy, batch);
    const auto r = grpo_loss(batch, policy, old_lp, ref_lp, {});
    CHECK(std::abs(r.loss) <= 1e-12);
    for (const auto g: r.gradient)
        CHECK(std::abs(g) <= 1e-12);
}

TEST_CASE("surrogate arithmetic on one token")
{
    const auto [task, view] = make_view(2);
    auto policy = TabularSoftmaxPolicy {};
    auto cfg = GrpoConfig {};
    cfg.kl_coeff = 0.0;
    cfg.clip_ratio = 0.2;
    const auto logp = policy.log_prob(*view, std::vector<Token> { tok::think_open })[0];
    const auto ref = distribution_log_probs(policy, single_token_batch(view, 1.0));

    auto batch = single_token_batch(view, 1.0);
    CHECK(grpo_loss(batch, policy, { { logp } }, ref, cfg).surrogate == doctest::Approx(-1.0));

    // rho = 2: the positive advantage is clipped at 1 + eps, the negative one is not.
    const auto old = TokenLogProbs { { logp - std::log(2.0) } };
    CHECK(grpo_loss(batch, policy, old, ref, cfg).surrogate == doctest::Approx(-1.2));
    auto negative = single_token_batch(view, -1.0);
    CHECK(grpo_loss(negative, policy, old, ref, cfg).surrogate == doctest::Approx(2.0));

    // Inside the trust region clipped and unclipped terms agree.
    for (const auto rho: { 0.8, 0.9, 1.0, 1.1, 1.2 })
        for (const auto a: { -1.5, 0.5 })
        {
            auto b = single_token_batch(view, a);
            const auto r = grpo_loss(b, policy, { { logp - std::log(rho) } }, ref, cfg);
            CHECK(r.surrogate == doctest::Approx(-rho * a).epsilon(1e-9));
        }
}

TEST_CASE("loss matches the definition")
{
    for (std::uint64_t seed = 0; seed < 10; ++seed)
    {
        auto f = make_fixture(100 + seed);
        for (const auto beta: { 0.0, 0.01, 0.5 })
        {
            auto cfg = GrpoConfig {};
            cfg.kl_coeff = beta;
            const auto r = grpo_loss(f.batch, f.policy, f.old_lp, f.ref_lp, cfg);
            CHECK(r.loss == doctest::Approx(loss_oracle(f.batch, f.policy, f.old_lp, f.ref_lp, cfg)).epsilon(1e-10));
        }
    }
}

TEST_CASE("masked positions do not affect the loss")
{
    auto rng = Rng { 63 };
    auto f = make_fixture(64);
    // Mask a random subset of positions in each trajectory.
    for (auto& tr: f.batch.trajectories)
        for (std::size_t t = 0; t + 1 < tr.mask.size(); ++t)
            if (bernoulli(rng, 0.4))
                tr.mask[t] = 0;
    f.ref_lp = distribution_log_probs(f.policy, f.batch);
    const auto base = grpo_loss(f.batch, f.policy, f.old_lp, f.ref_lp, {}).loss;

    auto live_rows = std::set<std::size_t> {};
    auto masked_rows = std::set<std::size_t> {};
    for (auto& tr: f.batch.trajectories)
        for (std::size_t t = 0; t < tr.tokens.size(); ++t)
            for (const auto row: f.policy.context_rows(Context { *tr.view, std::span(tr.tokens).first(t) }))
                (tr.mask[t] != 0 ? live_rows : masked_rows).insert(row);

    auto perturbed = f.policy;
    auto touched = 0;
    for (const auto row: masked_rows)
    {
        if (live_rows.count(row) != 0)
            continue;
        ++touched;
        for (auto k = 0; k < TabularSoftmaxPolicy::row_width; ++k)
            perturbed.parameters()[row + static_cast<std::size_t>(k)] += 2.0 * uniform01(rng) - 1.0;
    }
    auto old = f.old_lp;
    for (std::size_t i = 0; i < old.size(); ++i)
        for (std::size_t t = 0; t < old[i].size(); ++t)
            if (f.batch.trajectories[i].mask[t] == 0)
                old[i][t] += 3.0 * uniform01(rng);
    CHECK(touched > 0);
    CHECK(grpo_loss(f.batch, perturbed, old, f.ref_lp, {}).loss == base);
}

TEST_CASE("all-masked batches are degenerate")
{
    auto f = make_fixture(66);
    for (auto& tr: f.batch.trajectories)
        std::fill(tr.mask.begin(), tr.mask.end(), std::uint8_t {0});
    try
    {
        (void)grpo_loss(f.batch, f.policy, f.old_lp, f.ref_lp, {});
        FAIL("expected DegenerateBatch");
    }
    catch (const Error& e)
    {
        CHECK(e.kind() == ErrorKind::DegenerateBatch);
    }
}

TEST_CASE("analytic gradient matches finite differences")
{
    for (std::uint64_t seed = 0; seed < 20; ++seed)
    {
        auto f = make_fixture(200 + seed);
        auto rng = Rng { seed };
        const auto err = finite_diff_check(f.policy, f.batch, f.old_lp, f.ref_lp, {}, 1e-4, 100, rng);
        CHECK_MESSAGE(err <= 1e-4, "seed " << seed << " error " << err);
    }
}

TEST_CASE("finite-difference special cases")
{
    auto f = make_fixture(300);
    for (auto& tr: f.batch.trajectories)
        tr.advantage = 0.0;
    auto cfg = GrpoConfig {};
    cfg.kl_coeff = 0.0;
    const auto r = grpo_loss(f.batch, f.policy, f.old_lp, f.ref_lp, cfg);
    for (const auto g: r.gradient)
        CHECK(g == 0.0);

    cfg.kl_coeff = 0.5;
    auto rng = Rng { 3 };
    CHECK(finite_diff_check(f.policy, f.batch, f.old_lp, f.ref_lp, cfg, 1e-4, 100, rng) <= 1e-4);
    CHECK_THROWS_AS((void)finite_diff_check(f.policy, f.batch, f.old_lp, f.ref_lp, cfg, 1e-2, 10, rng), Error);
}

TEST_CASE("policy distributions are valid")
{
    auto f = make_fixture(68);
    for (const auto& tr: f.batch.trajectories)
        for (std::size_t t = 0; t <= tr.tokens.size(); ++t)
            for (const auto temp: { 0.5, 1.0, 2.0 })
            {
                const auto p = f.policy.next_token_distribution(Context { *tr.view, std::span(tr.tokens).first(t) }, temp);
                REQUIRE(p.size() == static_cast<std::size_t>(tok::vocab_size));
                CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) <= 1e-9);
                CHECK(*std::min_element(p.begin(), p.end()) >= 0.0);
            }
}

TEST_CASE("single-turn rollouts")
{
    const auto [task, view] = make_view(3);
    auto rng = Rng { 69 };
    const auto fixed = fixed_policy(oracle_tokens(*view, DialogMode::Single));
    const auto r = run_single_turn(fixed, task, *view, {}, {}, rng);
    CHECK(r.reward.r_fmt == 1.0);
    CHECK(r.reward.r_task == 1.0);
    CHECK(grammar::validate_single_turn(r.text, task.raster).valid);

    // Keeps thinking and never closes the block.
    const auto rambling = ScriptedPolicy([](const Context& ctx) { return ctx.tokens.empty() ? tok::think_open : tok::look_begin; });
    const auto capped = run_single_turn(rambling, task, *view, { 1.0, 0.99, 20 }, {}, rng);
    CHECK(capped.tokens.size() == 20);
    CHECK(capped.reward.r_fmt == 0.0);
    CHECK(capped.reward.r_task == 0.0);

    const auto uniform = TabularSoftmaxPolicy {};
    auto a = Rng { 70 };
    auto b = Rng { 70 };
    CHECK(run_single_turn(uniform, task, *view, {}, {}, a).tokens == run_single_turn(uniform, task, *view, {}, {}, b).tokens);
}

TEST_CASE("multi-turn rollouts")
{
    const auto [task, view] = make_view(4);
    auto rng = Rng { 71 };
    auto cfg = MultiTurnConfig {};

    const auto answer_now = fixed_policy({ tok::think_open, tok::conclude_begin, tok::think_close, tok::answer_open,
                                           tok::color_begin + view->target_attr, tok::answer_close, tok::eos });
    const auto one = run_multi_turn(answer_now, task, *view, cfg, rng);
    CHECK(one.assistant_turns == 1);
    CHECK(one.reward.r_grammar == 1.0);
    CHECK(one.dialog.tool_call_count() == 0);

    const auto oracle = oracle_policy(DialogMode::MultiTurn);
    const auto two = run_multi_turn(oracle, task, *view, cfg, rng);
    CHECK(two.reward.r_grammar == 1.0);
    CHECK(two.reward.r_task == 1.0);
    CHECK(two.reward.r_div == doctest::Approx(0.2));

    const auto stuck = never_answering_policy();
    const auto forced = run_multi_turn(stuck, task, *view, cfg, rng);
    CHECK(forced.soft_prompt_after_turn == 5);
    CHECK(forced.assistant_turns <= 6);
    CHECK(forced.text.find("<think> Please provide your response now </think>") != std::string::npos);
    auto observations = 0;
    for (const auto& s: forced.dialog.segments)
        if (s.kind == SegmentKind::Observation)
        {
            ++observations;
            CHECK(s.image()->width == 384);
            CHECK(s.image()->height == 384);
        }
    CHECK(static_cast<std::size_t>(observations) == forced.dialog.tool_call_count());
    for (std::size_t i = 0; i < forced.tokens.size(); ++i)
        if (forced.environment[i] != 0)
            CHECK(forced.mask[i] == 0);

    auto uniform_cfg = cfg;
    const auto uniform = TabularSoftmaxPolicy {};
    for (std::uint64_t s = 0; s < 30; ++s)
    {
        auto r = Rng { s };
        CHECK(run_multi_turn(uniform, task, *view, uniform_cfg, r).assistant_turns <= 6);
    }
}

TEST_CASE("gradient clipping and Adam")
{
    auto g = std::vector { 3.0, 4.0 };
    CHECK(clip_grad_norm(g, 1.0) == doctest::Approx(5.0));
    CHECK(g[0] == doctest::Approx(0.6));
    CHECK(g[1] == doctest::Approx(0.8));
    auto small = std::vector { 0.1, 0.1 };
    clip_grad_norm(small, 1.0);
    CHECK(small[0] == 0.1);

    // First Adam step moves each parameter by lr against the sign of its gradient.
    auto theta = std::vector { 1.0, 1.0, 1.0 };
    auto adam = Adam(0.1);
    adam.step(theta, std::vector { 2.0, -0.5, 0.0 });
    CHECK(theta[0] == doctest::Approx(0.9));
    CHECK(theta[1] == doctest::Approx(1.1));
    CHECK(theta[2] == doctest::Approx(1.0));
}

TEST_CASE("zero learning rate leaves training flat")
{
    auto policy = TabularSoftmaxPolicy {};
    auto cfg = TrainConfig {};
    cfg.mode = DialogMode::Single;
    cfg.grpo.learning_rate = 0.0;
    cfg.iterations = 50;
    cfg.tasks_per_iteration = 4;
    cfg.max_tokens = 16;
    const auto sampler = [](std::uint64_t s) { return scene::generate_task(s, scene::TaskKind::MultipleChoice, {}); };
    const auto metrics = train(policy, sampler, cfg);
    REQUIRE(metrics.size() == 50);
    for (const auto v: policy.parameters())
        CHECK(v == 0.0);
    auto first = 0.0;
    auto last = 0.0;
    for (std::size_t i = 0; i < 25; ++i)
    {
        first += metrics[i].mean_reward / 25;
        last += metrics[25 + i].mean_reward / 25;
    }
    CHECK(std::abs(last - first) <= 0.1);
}

TEST_CASE("cold start rarely produces valid output")
{
    const auto uniform = TabularSoftmaxPolicy {};
    auto tasks = std::vector<scene::TaskInstance> {};
    for (std::uint64_t s = 0; s < 100; ++s)
        tasks.push_back(scene::generate_task(s, scene::TaskKind::MultipleChoice, {}));
    auto cfg = EvalConfig {};
    cfg.mode = DialogMode::MultiTurn;
    cfg.sampling.temperature = 1.0;
    CHECK(evaluate(uniform, tasks, cfg).fmt_rate <= 0.2);
    const auto oracle = oracle_policy(DialogMode::MultiTurn);
    const auto perfect = evaluate(oracle, tasks, cfg);
    CHECK(perfect.fmt_rate == 1.0);
    CHECK(perfect.accuracy == 1.0);
}

TEST_CASE("checkpoint round trip")
{
    auto f = make_fixture(400);
    const auto path = std::filesystem::temp_directory_path() / "gvr_ckpt_test.json";
    save_checkpoint(path, f.policy, { { "note", "test" } });
    const auto back = load_checkpoint(path);
    CHECK(back.policy.keys() == f.policy.keys());
    const auto a = f.policy.parameters();
    const auto b = back.policy.parameters();
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
    CHECK(back.config["note"] == "test");
    std::filesystem::remove(path);
}

TEST_CASE("parallel rollouts are reproducible regardless of workers")
{
    auto tasks = std::vector<scene::TaskInstance> {};
    for (std::uint64_t s = 0; s < 16; ++s)
        tasks.push_back(scene::generate_task(s, scene::TaskKind::MultipleChoice, {}));
    const auto uniform = TabularSoftmaxPolicy {};
    auto cfg = EvalConfig {};
    cfg.seed = 5;
    cfg.workers = 1;
    const auto a = evaluate(uniform, tasks, cfg);
    cfg.workers = 4;
    const auto b = evaluate(uniform, tasks, cfg);
    CHECK(a.mean_reward == b.mean_reward);
    CHECK(a.traces == b.traces);
}
