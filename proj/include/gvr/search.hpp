// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gvr/core.hpp>
#include <gvr/rng.hpp>
#include <gvr/scene.hpp>

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace gvr::search
{

/// Candidate final answer; `text` is an optional closing thought.
struct AnswerLeaf
{
    std::string text;
    std::string answer;
};

using Proposal = std::variant<GroundedStep, AnswerLeaf>;

/// Step generator used for expansion and rollouts (the teacher).
class Proposer
{
  public:
    virtual ~Proposer() = default;

    virtual auto propose(std::span<const GroundedStep> path, const scene::TaskInstance& task, double temperature,
                         Rng& rng) -> Proposal = 0;
};

/// Scores a final answer against the task's ground truth.
using Verifier = std::function<double(const scene::TaskInstance&, const std::string&)>;

[[nodiscard]] auto oracle_verifier() -> Verifier;

struct SearchConfig
{
    int simulations = 20;
    int max_depth = 10;
    int rollouts_per_node = 2;
    int children_per_expansion = 3;
    double c_puct = 2.0;
    int rollout_depth_limit = 10;
    double temperature = 1.0;

    void validate() const;
};

using NodeId = std::size_t;
inline constexpr NodeId root_id = 0;

struct SearchNode
{
    NodeId id = 0;
    std::optional<NodeId> parent;
    int depth = 0;
    // Root holds no step. Terminal nodes hold the leaf's closing thought (maybe empty).
    std::optional<GroundedStep> step;
    std::string leaf_text;
    std::optional<std::string> answer;
    bool terminal = false;
    // Verifier score recorded when a terminal node is created.
    double terminal_reward = 0.0;
    std::vector<NodeId> children;
    int visits = 0;
    double value = 0.0;
    // Sum of every reward backpropagated through this node, kept alongside the running mean.
    double reward_sum = 0.0;
    std::vector<Coordinate> visited_coordinates;
};

struct SearchTree
{
    std::uint64_t task_seed = 0;
    std::vector<SearchNode> nodes;

    [[nodiscard]] auto root() const -> const SearchNode& { return nodes.front(); }
    [[nodiscard]] auto node(NodeId id) const -> const SearchNode& { return nodes.at(id); }
    [[nodiscard]] auto node(NodeId id) -> SearchNode& { return nodes.at(id); }

    /// Steps along root -> id, excluding the root and any terminal leaf.
    [[nodiscard]] auto steps_to(NodeId id) const -> std::vector<GroundedStep>;
    /// Node ids along root -> id, inclusive.
    [[nodiscard]] auto path_to(NodeId id) const -> std::vector<NodeId>;

    [[nodiscard]] auto max_depth() const -> int;
};

[[nodiscard]] auto make_tree(std::uint64_t task_seed) -> SearchTree;

/// Appends a child under parent and returns its id.
auto add_child(SearchTree& tree, NodeId parent, const Proposal& proposal, double terminal_reward) -> NodeId;

[[nodiscard]] auto ucb_score(const SearchNode& child, int parent_visits, double c) -> double;

/// Root-to-leaf path. An unvisited child is taken before any scored child; otherwise
/// argmax of Q + c sqrt(ln N / n), ties to the lowest index. Stops at a terminal,
/// a childless node, or the unvisited child it just took.
[[nodiscard]] auto select(const SearchTree& tree, double c) -> std::vector<NodeId>;

struct ExpansionContext
{
    const scene::TaskInstance& task;
    Proposer& proposer;
    const Verifier& verifier;
    int max_depth;
    double temperature;
    Rng& rng;
};

/// Adds up to k children proposed at `node`. Answer proposals become terminal nodes.
auto expand(SearchTree& tree, NodeId node, int k, ExpansionContext ctx) -> std::vector<NodeId>;

/// Simulates from `node` without touching the tree; 0 if no answer within depth_limit.
[[nodiscard]] auto rollout(const SearchTree& tree, NodeId node, int depth_limit, ExpansionContext ctx) -> double;

void backpropagate(SearchTree& tree, std::span<const NodeId> path, double reward);

/// select -> expand -> rollouts per new child -> backpropagate, `simulations` times.
[[nodiscard]] auto run_search(const scene::TaskInstance& task, Proposer& proposer, const Verifier& verifier,
                              const SearchConfig& config, std::uint64_t seed) -> SearchTree;

/// Answer of the terminal with highest Q; ties by more visits, then lowest id.
[[nodiscard]] auto search_answer(const SearchTree& tree) -> std::string;

struct LinearRollout
{
    std::vector<GroundedStep> steps;
    std::optional<std::string> answer;
    double reward = 0.0;
};

/// One straight-line generation from the root, the top-1 baseline.
[[nodiscard]] auto linear_rollout(const scene::TaskInstance& task, Proposer& proposer, const Verifier& verifier,
                                  int depth_limit, double temperature, Rng& rng) -> LinearRollout;

struct TeacherConfig
{
    // Probability that a step is grounded on the glyph the query asks about.
    double p_relevant = 0.5;
    // Probability of answering after d steps is min(1, answer_base + answer_slope * d); never at the root.
    double answer_base = 0.0;
    double answer_slope = 0.4;
    // Radius used when the teacher inspects a visited anchor.
    double perception_radius = 3.0;
};

/// Synthetic teacher: grounds steps on the queried glyph with probability p, on a
/// random distractor otherwise, and answers from what its visited anchors show,
/// guessing when the queried glyph was never visited.
class ScriptedTeacher final: public Proposer
{
  public:
    explicit ScriptedTeacher(TeacherConfig config): _config(config) {}

    auto propose(std::span<const GroundedStep> path, const scene::TaskInstance& task, double temperature, Rng& rng)
        -> Proposal override;

    [[nodiscard]] auto config() const -> const TeacherConfig& { return _config; }

  private:
    TeacherConfig _config;
};

[[nodiscard]] auto to_json(const SearchTree& tree) -> nlohmann::json;
[[nodiscard]] auto tree_from_json(const nlohmann::json& j) -> SearchTree;

} // namespace gvr::search
