// SPDX-License-Identifier: Apache-2.0
#include <gvr/grammar.hpp>
#include <gvr/optim/trainer.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

namespace gvr::optim
{

void Adam::step(std::span<double> theta, std::span<const double> grad)
{
    if (grad.size() != theta.size())
        throw Error(ErrorKind::Precondition, "gradient and parameter sizes differ");
    m_.resize(theta.size(), 0.0);
    v_.resize(theta.size(), 0.0);
    ++t_;
    const auto c1 = 1.0 - std::pow(beta1_, t_);
    const auto c2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < theta.size(); ++i)
    {
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
        theta[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
}

auto clip_grad_norm(std::span<double> grad, double max_norm) -> double
{
    const auto norm = std::sqrt(std::inner_product(grad.begin(), grad.end(), grad.begin(), 0.0));
    if (norm > max_norm && norm > 0.0)
        for (auto& g: grad)
            g *= max_norm / norm;
    return norm;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn)
{
    const auto threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
    if (threads <= 1)
    {
        for (std::size_t i = 0; i < n; ++i)
            fn(i);
        return;
    }
    auto next = std::atomic<std::size_t> {0};
    auto failure = std::exception_ptr {};
    auto failure_lock = std::mutex {};
    auto pool = std::vector<std::thread> {};
    for (std::size_t w = 0; w < threads; ++w)
        pool.emplace_back([&] {
            for (auto i = next++; i < n; i = next++)
            {
                try
                {
                    fn(i);
                }
                catch (...)
                {
                    const auto lock = std::lock_guard(failure_lock);
                    if (!failure)
                        failure = std::current_exception();
                }
            }
        });
    for (auto& t: pool)
        t.join();
    if (failure)
        std::rethrow_exception(failure);
}

auto make_sft_example(const distill::DatasetRecord& record, const scene::TaskInstance& task)
    -> std::optional<SftExample>
{
    if (record.task_id != task.seed || record.kind != task.kind)
        throw Error(ErrorKind::Precondition, "dataset record does not belong to this task");
    auto view = std::make_shared<const TaskView>(TaskView::of(task));
    try
    {
        auto ex = SftExample { view, {}, {} };
        if (record.observations)
        {
            auto env = std::vector<std::uint8_t> {};
            ex.tokens = tokenize_dialog(grammar::parse_dialog(record.text), task.kind, view->grid, &env);
            ex.mask = build_token_masks(ex.tokens, env);
        }
        else
        {
            ex.tokens = tokenize_trace(grammar::parse_trace(record.text), task.kind, view->grid);
            ex.mask.assign(ex.tokens.size(), 1);
        }
        return ex;
    }
    catch (const Error&)
    {
        return std::nullopt;
    }
}

auto sft_fit(TabularSoftmaxPolicy& policy, std::span<const SftExample> examples, const SftConfig& cfg)
    -> std::vector<double>
{
    for (const auto& ex: examples)
        for (std::size_t t = 0; t < ex.tokens.size(); ++t)
            if (ex.mask[t] != 0)
                policy.ensure_context(Context { *ex.view, std::span(ex.tokens).first(t) });

    auto adam = Adam(cfg.learning_rate);
    auto rng = Rng(derive_seed(cfg.seed, 0x5f7));
    auto order = std::vector<std::size_t>(examples.size());
    std::iota(order.begin(), order.end(), 0);
    auto history = std::vector<double> {};
    auto grad = std::vector<double> {};
    auto dlogits = std::vector<double>(tok::vocab_size);
    const auto batch = static_cast<std::size_t>(std::max(1, cfg.batch_size));

    for (auto epoch = 0; epoch < cfg.epochs; ++epoch)
    {
        shuffle(std::span(order), rng);
        auto nll = 0.0;
        auto count = std::size_t {0};
        for (std::size_t begin = 0; begin < order.size(); begin += batch)
        {
            grad.assign(policy.parameters().size(), 0.0);
            auto tokens = std::size_t {0};
            for (auto k = begin; k < std::min(order.size(), begin + batch); ++k)
            {
                const auto& ex = examples[order[k]];
                for (std::size_t t = 0; t < ex.tokens.size(); ++t)
                {
                    if (ex.mask[t] == 0)
                        continue;
                    const auto ctx = Context { *ex.view, std::span(ex.tokens).first(t) };
                    const auto a = static_cast<std::size_t>(ex.tokens[t]);
                    // The backoff distribution is fit as well, so contexts whose fine row
                    // never appears in the data still get a usable distribution.
                    for (auto coarse_only: { false, true })
                    {
                        const auto p = softmax(policy.logits(ctx, coarse_only));
                        if (!coarse_only)
                            nll -= std::log(p[a]);
                        for (std::size_t u = 0; u < p.size(); ++u)
                            dlogits[u] = p[u] - (u == a ? 1.0 : 0.0);
                        policy.accumulate(ctx, dlogits, grad, coarse_only);
                    }
                    ++tokens;
                }
            }
            if (tokens == 0)
                continue;
            for (auto& g: grad)
                g /= static_cast<double>(tokens);
            adam.step(policy.parameters(), grad);
            count += tokens;
        }
        history.push_back(count > 0 ? nll / static_cast<double>(count) : 0.0);
    }
    return history;
}

auto to_json(const TrainConfig& cfg) -> nlohmann::json
{
    return {
        { "mode", cfg.mode == DialogMode::Single ? "single" : "multiturn" },
        { "grpo", to_json(cfg.grpo) },
        { "iterations", cfg.iterations },
        { "tasks_per_iteration", cfg.tasks_per_iteration },
        { "max_tokens", cfg.max_tokens },
        { "max_tokens_per_turn", cfg.multi.sampling.max_tokens },
        { "crop_window", cfg.multi.crop.window },
        { "crop_resize", cfg.multi.crop.resize },
        { "diversity_bonus", cfg.multi.diversity_bonus },
        { "lambda_fmt", cfg.weights.lambda_fmt },
        { "lambda_task", cfg.weights.lambda_task },
        { "seed", cfg.seed },
    };
}

namespace
{

auto trace_from_dialog(const Dialog& dialog) -> ReasonTrace
{
    auto trace = ReasonTrace {};
    for (std::size_t i = 0; i < dialog.segments.size(); ++i)
    {
        const auto& seg = dialog.segments[i];
        if (seg.kind == SegmentKind::Think && !seg.injected)
        {
            auto step = GroundedStep { seg.text(), std::nullopt };
            if (i + 1 < dialog.segments.size() && dialog.segments[i + 1].kind == SegmentKind::ToolCall)
                step.anchor = dialog.segments[i + 1].coordinate();
            trace.steps.push_back(std::move(step));
        }
        else if (seg.kind == SegmentKind::Answer)
            trace.answer = seg.text();
    }
    return trace;
}

} // namespace

auto rollout(const Policy& policy, const scene::TaskInstance& task, const TaskView& view, DialogMode mode,
             const SamplingConfig& sampling, const MultiTurnConfig& multi, const rewards::RewardWeights& weights,
             Rng& rng) -> RolloutRecord
{
    auto out = RolloutRecord {};
    if (mode == DialogMode::Single)
    {
        auto r = run_single_turn(policy, task, view, sampling, weights, rng);
        out.format_ok = r.reward.r_fmt == 1.0;
        if (out.format_ok)
            out.trace = grammar::parse_trace(r.text);
        out.tokens = std::move(r.tokens);
        out.mask = std::move(r.mask);
        out.text = std::move(r.text);
        out.reward = r.reward;
    }
    else
    {
        auto cfg = multi;
        cfg.sampling.temperature = sampling.temperature;
        cfg.sampling.top_p = sampling.top_p;
        auto r = run_multi_turn(policy, task, view, cfg, rng);
        out.format_ok = r.reward.r_grammar == 1.0;
        out.turns = r.assistant_turns;
        out.tool_calls = static_cast<int>(std::count(r.tokens.begin(), r.tokens.end(), tok::obs_open));
        out.trace = trace_from_dialog(r.dialog);
        out.tokens = std::move(r.tokens);
        out.mask = std::move(r.mask);
        out.text = std::move(r.text);
        out.reward = r.reward;
    }
    out.trace.reward = out.reward.r_task;
    return out;
}

auto to_json(const IterationMetrics& m) -> nlohmann::json
{
    return {
        { "iter", m.iter },
        { "mean_reward", m.mean_reward },
        { "fmt_rate", m.fmt_rate },
        { "mean_turns", m.mean_turns },
        { "mean_tool_calls", m.mean_tool_calls },
        { "mean_task_reward", m.mean_task_reward },
        { "loss", m.loss },
        { "kl", m.kl },
        { "grad_norm", m.grad_norm },
    };
}

auto train(TabularSoftmaxPolicy& policy, const TaskSampler& sampler, const TrainConfig& cfg,
           const IterationCallback& on_iteration) -> std::vector<IterationMetrics>
{
    cfg.grpo.validate();
    if (cfg.tasks_per_iteration < 1)
        throw Error(ErrorKind::Precondition, "need at least one task per iteration");

    const auto reference = policy;
    auto adam = Adam(cfg.grpo.learning_rate);
    const auto sampling = SamplingConfig { cfg.grpo.rollout_temperature, cfg.grpo.top_p, cfg.max_tokens };
    auto multi = cfg.multi;
    multi.max_turns = cfg.grpo.max_turns;
    const auto g = static_cast<std::size_t>(cfg.grpo.group_size);

    auto log = std::vector<IterationMetrics> {};
    for (auto iter = 0; iter < cfg.iterations; ++iter)
    {
        const auto iter_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(iter));
        auto tasks = std::vector<scene::TaskInstance> {};
        auto views = std::vector<std::shared_ptr<const TaskView>> {};
        for (auto k = 0; k < cfg.tasks_per_iteration; ++k)
        {
            tasks.push_back(sampler(derive_seed(iter_seed, static_cast<std::uint64_t>(k))));
            views.push_back(std::make_shared<const TaskView>(TaskView::of(tasks.back())));
        }

        const auto n = tasks.size() * g;
        auto results = std::vector<RolloutRecord>(n);
        const auto& frozen = policy;
        parallel_for(n, cfg.workers, [&](std::size_t i) {
            auto rng = Rng(derive_seed(iter_seed, 0x10000 + i));
            results[i] = rollout(frozen, tasks[i / g], *views[i / g], cfg.mode, sampling, multi, cfg.weights, rng);
        });

        auto metrics = IterationMetrics {};
        metrics.iter = iter;
        auto batch = GroupBatch { {}, cfg.grpo.group_size };
        for (std::size_t i = 0; i < n; ++i)
        {
            auto& r = results[i];
            metrics.mean_reward += r.reward.total;
            metrics.mean_task_reward += r.reward.r_task;
            metrics.fmt_rate += r.format_ok ? 1.0 : 0.0;
            metrics.mean_turns += r.turns;
            metrics.mean_tool_calls += r.tool_calls;
            batch.trajectories.push_back(Trajectory { views[i / g], std::move(r.tokens), std::move(r.mask), r.reward.total, 0.0 });
        }
        for (auto* v: { &metrics.mean_reward, &metrics.mean_task_reward, &metrics.fmt_rate, &metrics.mean_turns,
                        &metrics.mean_tool_calls })
            *v /= static_cast<double>(n);

        assign_advantages(batch);
        try
        {
            const auto old_lp = token_log_probs(policy, batch);
            const auto ref_lp = distribution_log_probs(reference, batch);
            auto result = grpo_loss(batch, policy, old_lp, ref_lp, cfg.grpo);
            metrics.loss = result.loss;
            metrics.kl = result.kl;
            metrics.grad_norm = clip_grad_norm(result.gradient, cfg.grpo.max_grad_norm);
            if (cfg.grpo.learning_rate > 0.0)
                adam.step(policy.parameters(), result.gradient);
        }
        catch (const Error& e)
        {
            if (e.kind() != ErrorKind::DegenerateBatch)
                throw;
        }

        log.push_back(metrics);
        if (on_iteration)
            on_iteration(metrics);
    }
    return log;
}

auto evaluate(const Policy& policy, std::span<const scene::TaskInstance> tasks, const EvalConfig& cfg) -> EvalResult
{
    auto out = EvalResult {};
    auto results = std::vector<RolloutRecord>(tasks.size());
    parallel_for(tasks.size(), cfg.workers, [&](std::size_t i) {
        const auto view = TaskView::of(tasks[i]);
        auto rng = Rng(derive_seed(cfg.seed, i));
        results[i] = rollout(policy, tasks[i], view, cfg.mode, cfg.sampling, cfg.multi, cfg.weights, rng);
    });
    for (std::size_t i = 0; i < tasks.size(); ++i)
    {
        const auto& r = results[i];
        const auto best = rewards::max_task_reward(tasks[i]);
        out.mean_reward += r.reward.total;
        out.mean_task_reward += r.reward.r_task;
        out.fmt_rate += r.format_ok ? 1.0 : 0.0;
        out.accuracy += r.reward.r_task >= best ? 1.0 : 0.0;
        out.mean_tool_calls += r.tool_calls;
        out.mean_turns += r.turns;
        out.traces.push_back(r.trace);
        out.max_task_rewards.push_back(best);
    }
    if (!tasks.empty())
        for (auto* v: { &out.mean_reward, &out.mean_task_reward, &out.fmt_rate, &out.accuracy, &out.mean_tool_calls,
                        &out.mean_turns })
            *v /= static_cast<double>(tasks.size());
    return out;
}

auto to_json(const EvalResult& r) -> nlohmann::json
{
    return {
        { "mean_reward", r.mean_reward },         { "fmt_rate", r.fmt_rate },
        { "accuracy", r.accuracy },               { "mean_task_reward", r.mean_task_reward },
        { "mean_tool_calls", r.mean_tool_calls }, { "mean_turns", r.mean_turns },
        { "tasks", r.traces.size() },
    };
}

void save_checkpoint(const std::filesystem::path& path, const TabularSoftmaxPolicy& policy,
                     const nlohmann::json& config)
{
    const auto theta = policy.parameters();
    const auto j = nlohmann::json {
        { "format", "gvr-checkpoint" },
        { "version", checkpoint_version },
        { "config", config },
        { "vocab_size", tok::vocab_size },
        { "feature_count", TabularSoftmaxPolicy::feature_count },
        { "rows", policy.keys() },
        { "theta", std::vector<double>(theta.begin(), theta.end()) },
    };
    auto out = std::ofstream(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    out << j.dump() << '\n';
    if (!out)
        throw Error(ErrorKind::Io, "write failed for " + path.string());
}

auto load_checkpoint(const std::filesystem::path& path) -> Checkpoint
{
    auto in = std::ifstream(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::Io, "cannot open " + path.string());
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw Error(ErrorKind::Parse, path.string() + " is not a JSON checkpoint");
    try
    {
        if (j.at("format").get<std::string>() != "gvr-checkpoint")
            throw Error(ErrorKind::Parse, "unrecognized checkpoint format");
        if (j.at("version").get<int>() != checkpoint_version)
            throw Error(ErrorKind::Parse, "unsupported checkpoint version");
        if (j.at("vocab_size").get<int>() != tok::vocab_size
            || j.at("feature_count").get<int>() != TabularSoftmaxPolicy::feature_count)
            throw Error(ErrorKind::Parse, "checkpoint vocabulary does not match this build");
        return Checkpoint { TabularSoftmaxPolicy::from_parts(j.at("rows").get<std::vector<std::uint64_t>>(),
                                                             j.at("theta").get<std::vector<double>>()),
                            j.at("config") };
    }
    catch (const nlohmann::json::exception& e)
    {
        throw Error(ErrorKind::Parse, std::string("malformed checkpoint: ") + e.what());
    }
}

} // namespace gvr::optim
