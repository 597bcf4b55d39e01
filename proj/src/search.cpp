// SPDX-License-Identifier: Apache-2.0
#include <gvr/phrases.hpp>
#include <gvr/rewards.hpp>
#include <gvr/search.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace gvr::search
{

auto oracle_verifier() -> Verifier
{
    return [](const scene::TaskInstance& task, const std::string& answer) {
        return rewards::task_reward(task, answer);
    };
}

void SearchConfig::validate() const
{
    if (simulations <= 0 || max_depth <= 0 || rollouts_per_node <= 0 || children_per_expansion <= 0
        || rollout_depth_limit <= 0 || c_puct < 0.0)
        throw Error(ErrorKind::Precondition, "search configuration values must be positive");
}

auto SearchTree::path_to(NodeId id) const -> std::vector<NodeId>
{
    auto path = std::vector<NodeId> {};
    for (auto cur = std::optional<NodeId>(id); cur; cur = nodes.at(*cur).parent)
        path.push_back(*cur);
    std::reverse(path.begin(), path.end());
    return path;
}

auto SearchTree::steps_to(NodeId id) const -> std::vector<GroundedStep>
{
    auto steps = std::vector<GroundedStep> {};
    for (auto n: path_to(id))
        if (nodes[n].step)
            steps.push_back(*nodes[n].step);
    return steps;
}

auto SearchTree::max_depth() const -> int
{
    auto d = 0;
    for (const auto& n: nodes)
        d = std::max(d, n.depth);
    return d;
}

auto make_tree(std::uint64_t task_seed) -> SearchTree
{
    auto tree = SearchTree { .task_seed = task_seed, .nodes = {} };
    tree.nodes.push_back(SearchNode {});
    return tree;
}

auto add_child(SearchTree& tree, NodeId parent, const Proposal& proposal, double terminal_reward) -> NodeId
{
    auto node = SearchNode {};
    node.id = tree.nodes.size();
    node.parent = parent;
    node.depth = tree.nodes.at(parent).depth + 1;
    node.visited_coordinates = tree.nodes[parent].visited_coordinates;
    if (const auto* step = std::get_if<GroundedStep>(&proposal))
    {
        check_step(*step);
        node.step = *step;
        if (step->anchor)
            node.visited_coordinates.push_back(*step->anchor);
    }
    else
    {
        const auto& leaf = std::get<AnswerLeaf>(proposal);
        node.leaf_text = leaf.text;
        node.answer = leaf.answer;
        node.terminal = true;
        node.terminal_reward = terminal_reward;
    }
    const auto id = node.id;
    tree.nodes.push_back(std::move(node));
    tree.nodes[parent].children.push_back(id);
    return id;
}

auto ucb_score(const SearchNode& child, int parent_visits, double c) -> double
{
    return child.value
           + c * std::sqrt(std::log(static_cast<double>(parent_visits)) / static_cast<double>(child.visits));
}

auto select(const SearchTree& tree, double c) -> std::vector<NodeId>
{
    auto path = std::vector<NodeId> { root_id };
    while (true)
    {
        const auto& node = tree.nodes[path.back()];
        if (node.terminal || node.children.empty())
            return path;

        const auto unvisited = std::find_if(node.children.begin(), node.children.end(),
                                            [&](NodeId id) { return tree.nodes[id].visits == 0; });
        if (unvisited != node.children.end())
        {
            path.push_back(*unvisited);
            return path;
        }

        auto best = node.children.front();
        auto best_score = ucb_score(tree.nodes[best], node.visits, c);
        for (std::size_t i = 1; i < node.children.size(); ++i)
        {
            const auto score = ucb_score(tree.nodes[node.children[i]], node.visits, c);
            if (score > best_score)
            {
                best = node.children[i];
                best_score = score;
            }
        }
        path.push_back(best);
    }
}

auto expand(SearchTree& tree, NodeId node, int k, ExpansionContext ctx) -> std::vector<NodeId>
{
    if (tree.nodes.at(node).terminal)
        throw Error(ErrorKind::Precondition, "cannot expand a terminal node");
    if (tree.nodes[node].depth >= ctx.max_depth)
        throw Error(ErrorKind::Precondition, "node is at the maximum tree depth");

    const auto path = tree.steps_to(node);
    auto added = std::vector<NodeId> {};
    for (auto i = 0; i < k; ++i)
    {
        auto proposal = Proposal {};
        try
        {
            proposal = ctx.proposer.propose(path, ctx.task, ctx.temperature, ctx.rng);
        }
        catch (const Error&)
        {
            throw;
        }
        catch (const std::exception& e)
        {
            throw Error(ErrorKind::ProposerFailure, e.what());
        }
        auto reward = 0.0;
        if (const auto* leaf = std::get_if<AnswerLeaf>(&proposal))
            reward = ctx.verifier(ctx.task, leaf->answer);
        added.push_back(add_child(tree, node, proposal, reward));
    }
    return added;
}

auto rollout(const SearchTree& tree, NodeId node, int depth_limit, ExpansionContext ctx) -> double
{
    const auto& start = tree.nodes.at(node);
    if (start.terminal)
        return start.terminal_reward;

    auto path = tree.steps_to(node);
    for (auto depth = start.depth; depth < depth_limit; ++depth)
    {
        auto proposal = ctx.proposer.propose(path, ctx.task, ctx.temperature, ctx.rng);
        if (const auto* leaf = std::get_if<AnswerLeaf>(&proposal))
            return ctx.verifier(ctx.task, leaf->answer);
        path.push_back(std::get<GroundedStep>(std::move(proposal)));
    }
    return 0.0;
}

void backpropagate(SearchTree& tree, std::span<const NodeId> path, double reward)
{
    for (auto id: path)
    {
        auto& node = tree.nodes.at(id);
        node.visits += 1;
        node.value += (reward - node.value) / static_cast<double>(node.visits);
        node.reward_sum += reward;
    }
}

auto run_search(const scene::TaskInstance& task, Proposer& proposer, const Verifier& verifier,
                const SearchConfig& config, std::uint64_t seed) -> SearchTree
{
    config.validate();
    auto rng = Rng(seed);
    auto tree = make_tree(task.seed);
    const auto ctx = ExpansionContext { task, proposer, verifier, config.max_depth, config.temperature, rng };

    for (auto sim = 0; sim < config.simulations; ++sim)
    {
        auto path = select(tree, config.c_puct);
        const auto leaf = path.back();
        const auto& node = tree.nodes[leaf];

        if (node.terminal)
        {
            backpropagate(tree, path, node.terminal_reward);
            continue;
        }
        if ((leaf != root_id && node.visits == 0) || node.depth >= config.max_depth)
        {
            backpropagate(tree, path, rollout(tree, leaf, config.rollout_depth_limit, ctx));
            continue;
        }

        for (auto child: expand(tree, leaf, config.children_per_expansion, ctx))
        {
            path.push_back(child);
            for (auto r = 0; r < config.rollouts_per_node; ++r)
                backpropagate(tree, path, rollout(tree, child, config.rollout_depth_limit, ctx));
            path.pop_back();
        }
    }
    return tree;
}

auto search_answer(const SearchTree& tree) -> std::string
{
    const SearchNode* best = nullptr;
    for (const auto& node: tree.nodes)
    {
        if (!node.terminal)
            continue;
        if (best == nullptr || node.value > best->value || (node.value == best->value && node.visits > best->visits))
            best = &node;
    }
    if (best == nullptr)
        throw Error(ErrorKind::NoTerminal, "search tree has no terminal node");
    return *best->answer;
}

auto linear_rollout(const scene::TaskInstance& task, Proposer& proposer, const Verifier& verifier, int depth_limit,
                    double temperature, Rng& rng) -> LinearRollout
{
    auto out = LinearRollout {};
    for (auto depth = 0; depth < depth_limit; ++depth)
    {
        auto proposal = proposer.propose(out.steps, task, temperature, rng);
        if (const auto* leaf = std::get_if<AnswerLeaf>(&proposal))
        {
            out.answer = leaf->answer;
            out.reward = verifier(task, leaf->answer);
            return out;
        }
        out.steps.push_back(std::get<GroundedStep>(std::move(proposal)));
    }
    return out;
}

namespace
{

struct Sighting
{
    Coordinate at;
    std::string color;
    std::string argument;
};

// Reads descriptions of the visited anchors the way a perceiving teacher would,
// looking for the material and shape named in the query.
auto find_target(std::span<const GroundedStep> path, const scene::TaskInstance& task, double radius)
    -> std::optional<Sighting>
{
    const auto& target = task.raster.glyph(task.target);
    const auto wanted = std::string(scene::to_string(target.material)) + " " + scene::to_string(target.shape);
    for (const auto& step: path)
    {
        if (!step.anchor || !task.raster.contains(*step.anchor))
            continue;
        auto entries = std::istringstream(scene::describe_region(task.raster, *step.anchor, radius));
        auto entry = std::string {};
        while (std::getline(entries, entry, ';'))
        {
            auto words = std::istringstream(trim(entry));
            auto color = std::string {};
            auto material = std::string {};
            auto shape = std::string {};
            auto id = std::string {};
            words >> color >> material >> shape >> id;
            if (material + " " + shape == wanted && id.size() > 1)
                return Sighting { *step.anchor, color, "id_" + id.substr(1) };
        }
    }
    return std::nullopt;
}

auto query_verb(const std::string& query) -> std::string
{
    auto words = std::istringstream(query);
    auto first = std::string {};
    words >> first;
    return to_lower(first);
}

} // namespace

auto ScriptedTeacher::propose(std::span<const GroundedStep> path, const scene::TaskInstance& task, double, Rng& rng)
    -> Proposal
{
    const auto depth = static_cast<double>(path.size());
    const auto p_answer = std::min(1.0, _config.answer_base + _config.answer_slope * depth);
    if (!path.empty() && bernoulli(rng, p_answer))
    {
        auto leaf = AnswerLeaf {};
        leaf.text = std::string(phrases::conclude[static_cast<std::size_t>(
            uniform_int(rng, 0, static_cast<std::int64_t>(phrases::conclude.size()) - 1))]);

        const auto seen = find_target(path, task, _config.perception_radius);
        switch (task.kind)
        {
            case scene::TaskKind::MultipleChoice:
                leaf.answer = seen ? seen->color
                                   : task.choices.at(static_cast<std::size_t>(
                                       uniform_int(rng, 0, static_cast<std::int64_t>(task.choices.size()) - 1)));
                break;
            case scene::TaskKind::PointGrounding:
                leaf.answer = format_coordinate(
                    seen ? seen->at
                         : Coordinate { static_cast<int>(uniform_int(rng, 0, task.raster.width - 1)),
                                        static_cast<int>(uniform_int(rng, 0, task.raster.height - 1)) });
                break;
            case scene::TaskKind::ActionPrediction:
            {
                const auto guess = "id_"
                                   + std::to_string(uniform_int(
                                       rng, 0, static_cast<std::int64_t>(task.raster.glyphs.size()) - 1));
                leaf.answer = query_verb(task.query) + " " + (seen ? seen->argument : guess);
                break;
            }
        }
        return leaf;
    }

    const auto& glyphs = task.raster.glyphs;
    auto chosen = task.target;
    if (!bernoulli(rng, _config.p_relevant) && glyphs.size() > 1)
    {
        // Uniform over the distractors.
        auto pick = static_cast<int>(uniform_int(rng, 0, static_cast<std::int64_t>(glyphs.size()) - 2));
        if (pick >= task.target)
            ++pick;
        chosen = pick;
    }
    const auto text = phrases::look[static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<std::int64_t>(phrases::look.size()) - 1))];
    return GroundedStep { std::string(text), task.raster.glyph(chosen).center };
}

auto to_json(const SearchTree& tree) -> nlohmann::json
{
    auto nodes = nlohmann::json::array();
    for (const auto& n: tree.nodes)
    {
        auto j = nlohmann::json {
            { "id", n.id },
            { "parent", n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr) },
            { "depth", n.depth },
            { "text", n.step ? n.step->text : n.leaf_text },
            { "anchor", nullptr },
            { "answer", n.answer ? nlohmann::json(*n.answer) : nlohmann::json(nullptr) },
            { "terminal", n.terminal },
            { "terminal_reward", n.terminal_reward },
            { "n", n.visits },
            { "q", n.value },
            { "reward_sum", n.reward_sum },
        };
        if (n.step && n.step->anchor)
            j["anchor"] = { n.step->anchor->x, n.step->anchor->y };
        nodes.push_back(std::move(j));
    }
    return { { "task_seed", tree.task_seed }, { "nodes", nodes } };
}

auto tree_from_json(const nlohmann::json& j) -> SearchTree
{
    try
    {
        auto tree = SearchTree { .task_seed = j.at("task_seed").get<std::uint64_t>(), .nodes = {} };
        for (const auto& jn: j.at("nodes"))
        {
            auto n = SearchNode {};
            n.id = jn.at("id").get<NodeId>();
            if (n.id != tree.nodes.size())
                throw Error(ErrorKind::Parse, "tree nodes are not stored in id order");
            if (!jn.at("parent").is_null())
                n.parent = jn.at("parent").get<NodeId>();
            n.depth = jn.at("depth").get<int>();
            n.terminal = jn.at("terminal").get<bool>();
            const auto text = jn.at("text").get<std::string>();
            if (!jn.at("answer").is_null())
                n.answer = jn.at("answer").get<std::string>();
            if (n.terminal)
                n.leaf_text = text;
            else if (n.parent)
            {
                n.step = GroundedStep { text, std::nullopt };
                if (!jn.at("anchor").is_null())
                    n.step->anchor = Coordinate { jn["anchor"].at(0).get<int>(), jn["anchor"].at(1).get<int>() };
            }
            n.terminal_reward = jn.at("terminal_reward").get<double>();
            n.visits = jn.at("n").get<int>();
            n.value = jn.at("q").get<double>();
            n.reward_sum = jn.value("reward_sum", n.value * n.visits);
            if (n.parent)
            {
                auto& parent = tree.nodes.at(*n.parent);
                parent.children.push_back(n.id);
                n.visited_coordinates = parent.visited_coordinates;
                if (n.step && n.step->anchor)
                    n.visited_coordinates.push_back(*n.step->anchor);
            }
            tree.nodes.push_back(std::move(n));
        }
        if (tree.nodes.empty())
            throw Error(ErrorKind::Parse, "tree has no root");
        return tree;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw Error(ErrorKind::Parse, std::string("malformed search tree: ") + e.what());
    }
}

} // namespace gvr::search
