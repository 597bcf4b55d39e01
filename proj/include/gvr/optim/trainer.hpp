// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gvr/distill.hpp>
#include <gvr/optim/grpo.hpp>
#include <gvr/optim/rollout.hpp>

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace gvr::optim
{

/// Adam over a parameter vector that may grow between steps.
class Adam
{
  public:
    explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps)
    {
    }

    /// theta -= step(grad); grad is a descent direction's negative (a loss gradient).
    void step(std::span<double> theta, std::span<const double> grad);

  private:
    double lr_;
    double beta1_;
    double beta2_;
    double eps_;
    std::vector<double> m_;
    std::vector<double> v_;
    int t_ = 0;
};

/// Euclidean norm; scales `grad` in place so its norm is at most max_norm and returns the original norm.
auto clip_grad_norm(std::span<double> grad, double max_norm) -> double;

struct SftExample
{
    std::shared_ptr<const TaskView> view;
    std::vector<Token> tokens;
    std::vector<std::uint8_t> mask;
};

/// Tokenizes a dataset line against its task; nullopt when the text falls outside the template language.
[[nodiscard]] auto make_sft_example(const distill::DatasetRecord& record, const scene::TaskInstance& task)
    -> std::optional<SftExample>;

struct SftConfig
{
    int epochs = 3;
    double learning_rate = 0.1;
    int batch_size = 16;
    std::uint64_t seed = 0;
};

/// Likelihood fit on the examples' unmasked tokens. Returns mean per-token NLL for each epoch.
auto sft_fit(TabularSoftmaxPolicy& policy, std::span<const SftExample> examples, const SftConfig& cfg)
    -> std::vector<double>;

struct TrainConfig
{
    DialogMode mode = DialogMode::MultiTurn;
    GrpoConfig grpo;
    int iterations = 200;
    int tasks_per_iteration = 8;
    int max_tokens = 48;
    MultiTurnConfig multi;
    rewards::RewardWeights weights;
    std::uint64_t seed = 0;
    int workers = 1;
};

[[nodiscard]] auto to_json(const TrainConfig& cfg) -> nlohmann::json;

/// Outcome of one rollout in either mode.
struct RolloutRecord
{
    std::vector<Token> tokens;
    std::vector<std::uint8_t> mask;
    std::string text;
    rewards::RewardBreakdown reward;
    bool format_ok = false;
    int turns = 1;
    int tool_calls = 0;
    ReasonTrace trace;
};

/// One rollout under `mode`; temperature and top-p come from `sampling`.
[[nodiscard]] auto rollout(const Policy& policy, const scene::TaskInstance& task, const TaskView& view,
                           DialogMode mode, const SamplingConfig& sampling, const MultiTurnConfig& multi,
                           const rewards::RewardWeights& weights, Rng& rng) -> RolloutRecord;

struct IterationMetrics
{
    int iter = 0;
    double mean_reward = 0.0;
    double fmt_rate = 0.0;
    double mean_turns = 0.0;
    double mean_tool_calls = 0.0;
    double mean_task_reward = 0.0;
    double loss = 0.0;
    double kl = 0.0;
    double grad_norm = 0.0;
};

[[nodiscard]] auto to_json(const IterationMetrics& m) -> nlohmann::json;

using TaskSampler = std::function<scene::TaskInstance(std::uint64_t seed)>;
using IterationCallback = std::function<void(const IterationMetrics&)>;

/// GRPO: per iteration, sample tasks, roll out a group per task with the current
/// policy, center rewards within groups, take one clipped-gradient Adam step. The
/// KL reference is the policy as passed in.
auto train(TabularSoftmaxPolicy& policy, const TaskSampler& sampler, const TrainConfig& cfg,
           const IterationCallback& on_iteration = {}) -> std::vector<IterationMetrics>;

struct EvalConfig
{
    DialogMode mode = DialogMode::MultiTurn;
    SamplingConfig sampling { .temperature = 0.5, .top_p = 0.99, .max_tokens = 48 };
    MultiTurnConfig multi;
    rewards::RewardWeights weights;
    std::uint64_t seed = 0;
    int workers = 1;
};

struct EvalResult
{
    double mean_reward = 0.0;
    double fmt_rate = 0.0;
    double accuracy = 0.0;
    double mean_task_reward = 0.0;
    double mean_tool_calls = 0.0;
    double mean_turns = 0.0;
    // One per task; reward holds the task reward.
    std::vector<ReasonTrace> traces;
    std::vector<double> max_task_rewards;
};

/// One rollout per task.
[[nodiscard]] auto evaluate(const Policy& policy, std::span<const scene::TaskInstance> tasks, const EvalConfig& cfg)
    -> EvalResult;

[[nodiscard]] auto to_json(const EvalResult& r) -> nlohmann::json;

struct Checkpoint
{
    TabularSoftmaxPolicy policy;
    nlohmann::json config;
};

inline constexpr int checkpoint_version = 1;

void save_checkpoint(const std::filesystem::path& path, const TabularSoftmaxPolicy& policy,
                     const nlohmann::json& config);
[[nodiscard]] auto load_checkpoint(const std::filesystem::path& path) -> Checkpoint;

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

} // namespace gvr::optim
