// SPDX-License-Identifier: Apache-2.0
#include <gvr/distill.hpp>
#include <gvr/grammar.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <unordered_set>

namespace gvr::distill
{

auto enumerate_paths(const search::SearchTree& tree) -> std::vector<PathRecord>
{
    auto out = std::vector<PathRecord> {};
    for (const auto& node: tree.nodes)
        if (node.terminal)
            out.push_back(PathRecord { tree.task_seed, tree.path_to(node.id), node.terminal_reward });
    return out;
}

auto classify_rollouts(const std::vector<PathRecord>& paths) -> Partition
{
    auto out = Partition {};
    for (const auto& p: paths)
        (p.reward >= correct_threshold ? out.correct : out.incorrect).push_back(p);
    return out;
}

auto clean_markup(std::string_view text) -> std::string
{
    auto stripped = std::string {};
    for (std::size_t i = 0; i < text.size(); ++i)
    {
        if (text[i] == '<')
        {
            auto j = i + 1;
            if (j < text.size() && text[j] == '/')
                ++j;
            const auto name_begin = j;
            while (j < text.size() && (std::islower(static_cast<unsigned char>(text[j])) || text[j] == '_'))
                ++j;
            if (j > name_begin && j < text.size() && text[j] == '>')
            {
                stripped += ' ';
                i = j;
                continue;
            }
        }
        stripped += text[i];
    }

    auto out = std::string {};
    auto pending_space = false;
    for (auto c: stripped)
    {
        if (std::isspace(static_cast<unsigned char>(c)))
        {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space)
            out += ' ';
        pending_space = false;
        out += c;
    }
    return out;
}

namespace
{

void check_membership(const search::SearchTree& tree, const PathRecord& path)
{
    if (path.tree_seed != tree.task_seed || path.nodes.empty() || path.nodes.front() != search::root_id
        || path.terminal() >= tree.nodes.size() || tree.path_to(path.terminal()) != path.nodes)
        throw Error(ErrorKind::IncompatiblePaths, "path does not belong to this search tree");
}

// Teacher text may carry stray markup; steps are cleaned before they are joined.
auto clean_step(const GroundedStep& step) -> GroundedStep
{
    return GroundedStep { clean_markup(step.text), step.anchor };
}

auto path_steps(const search::SearchTree& tree, const PathRecord& path, bool with_leaf_text)
    -> std::vector<GroundedStep>
{
    auto steps = std::vector<GroundedStep> {};
    for (auto s: tree.steps_to(path.terminal()))
        steps.push_back(clean_step(s));
    const auto& leaf = tree.node(path.terminal());
    if (with_leaf_text && !clean_markup(leaf.leaf_text).empty())
        steps.push_back(GroundedStep { clean_markup(leaf.leaf_text), std::nullopt });
    return steps;
}

auto common_depth(const PathRecord& a, const PathRecord& b) -> std::size_t
{
    auto n = std::size_t {0};
    while (n < a.nodes.size() && n < b.nodes.size() && a.nodes[n] == b.nodes[n])
        ++n;
    return n;
}

} // namespace

auto direct_chain(const search::SearchTree& tree, const PathRecord& path) -> ReasonTrace
{
    check_membership(tree, path);
    const auto& leaf = tree.node(path.terminal());
    return ReasonTrace { path_steps(tree, path, true), leaf.answer.value_or(""), path.reward };
}

auto synthesize_corrected_chain(const search::SearchTree& tree, const PathRecord& incorrect, const PathRecord& correct)
    -> ReasonTrace
{
    if (incorrect.tree_seed != correct.tree_seed)
        throw Error(ErrorKind::IncompatiblePaths, "paths come from different search trees");
    check_membership(tree, incorrect);
    check_membership(tree, correct);

    auto trace = ReasonTrace {};
    trace.steps = path_steps(tree, incorrect, false);
    trace.steps.push_back(GroundedStep { std::string(backtrack_phrase), std::nullopt });
    for (auto& s: path_steps(tree, correct, true))
        trace.steps.push_back(std::move(s));
    trace.answer = tree.node(correct.terminal()).answer.value_or("");
    trace.reward = correct.reward;
    return trace;
}

auto pick_partner(const search::SearchTree& tree, const PathRecord& incorrect, const std::vector<PathRecord>& correct)
    -> const PathRecord&
{
    if (correct.empty())
        throw Error(ErrorKind::Precondition, "no correct path to pair with");
    const PathRecord* best = &correct.front();
    for (const auto& c: correct)
    {
        const auto depth = common_depth(incorrect, c);
        const auto best_depth = common_depth(incorrect, *best);
        const auto q = tree.node(c.terminal()).value;
        const auto best_q = tree.node(best->terminal()).value;
        if (depth > best_depth || (depth == best_depth && q > best_q)
            || (depth == best_depth && q == best_q && c.terminal() < best->terminal()))
            best = &c;
    }
    return *best;
}

auto deduplicate(const std::vector<ReasonTrace>& chains) -> std::vector<ReasonTrace>
{
    auto seen = std::unordered_set<std::string> {};
    auto out = std::vector<ReasonTrace> {};
    for (const auto& c: chains)
        if (seen.insert(clean_markup(render_trace(c))).second)
            out.push_back(c);
    return out;
}

auto deduplicate(const std::vector<Chain>& chains) -> std::vector<Chain>
{
    auto seen = std::unordered_set<std::string> {};
    auto out = std::vector<Chain> {};
    for (const auto& c: chains)
        if (seen.insert(clean_markup(render_trace(c.trace))).second)
            out.push_back(c);
    return out;
}

auto to_multiturn_dialog(const ReasonTrace& trace, const scene::TaskInstance& task, const CropConfig& crop_cfg)
    -> Dialog
{
    auto dialog = Dialog {};
    auto pending = std::string {};
    const auto take_pending = [&](const std::string& text) {
        auto joined = pending.empty() ? text : pending + " " + text;
        pending.clear();
        return joined;
    };

    for (const auto& step: trace.steps)
    {
        if (!step.anchor)
        {
            pending = take_pending(step.text);
            continue;
        }
        dialog.segments.push_back(Segment::think(take_pending(step.text)));
        dialog.segments.push_back(Segment::tool_call(*step.anchor));
        dialog.segments.push_back(Segment::observation(std::make_shared<const ObservationImage>(
            scene::crop(task.raster, *step.anchor, crop_cfg.window, crop_cfg.resize))));
    }
    dialog.segments.push_back(Segment::think(pending.empty() ? std::string(default_final_thought) : pending));
    dialog.segments.push_back(Segment::answer(trace.answer));
    dialog.terminated = true;
    return dialog;
}

auto to_string(Provenance p) -> const char*
{
    return p == Provenance::Direct ? "direct" : "corrected";
}

auto distill_tree(const search::SearchTree& tree, const DistillConfig& config) -> std::vector<Chain>
{
    const auto parts = classify_rollouts(enumerate_paths(tree));
    auto out = std::vector<Chain> {};
    for (const auto& p: parts.correct)
        out.push_back(Chain { direct_chain(tree, p), Provenance::Direct });
    if (parts.correct.empty())
        return out;

    auto corrected = 0;
    for (const auto& bad: parts.incorrect)
    {
        if (corrected >= config.max_corrected_per_tree)
            break;
        out.push_back(
            Chain { synthesize_corrected_chain(tree, bad, pick_partner(tree, bad, parts.correct)), Provenance::Corrected });
        ++corrected;
    }
    return out;
}

auto parse_mode(std::string_view name) -> Mode
{
    if (name == "single")
        return Mode::Single;
    if (name == "multiturn" || name == "multi")
        return Mode::MultiTurn;
    throw Error(ErrorKind::Parse, "unknown mode '" + std::string(name) + "' (expected single or multiturn)");
}

auto to_string(Mode mode) -> const char*
{
    return mode == Mode::Single ? "single" : "multiturn";
}

auto make_record(const Chain& chain, const scene::TaskInstance& task, Mode mode, const CropConfig& crop_cfg)
    -> DatasetRecord
{
    auto record = DatasetRecord {};
    record.task_id = task.seed;
    record.kind = task.kind;
    record.reward = chain.trace.reward.value_or(0.0);
    record.provenance = chain.provenance;
    if (mode == Mode::Single)
    {
        record.text = render_trace(chain.trace);
        for (const auto& s: chain.trace.steps)
            if (s.anchor)
                record.anchors.push_back(*s.anchor);
        return record;
    }

    const auto dialog = to_multiturn_dialog(chain.trace, task, crop_cfg);
    record.text = render_dialog(dialog);
    record.anchors = dialog.tool_call_coordinates();
    auto obs = nlohmann::json::array();
    for (const auto& seg: dialog.segments)
    {
        if (seg.kind != SegmentKind::Observation)
            continue;
        const auto& img = *seg.image();
        obs.push_back({
            { "center", { img.center.x, img.center.y } },
            { "source", { img.source_x0, img.source_y0, img.source_width, img.source_height } },
            { "size", { img.width, img.height } },
        });
    }
    record.observations = std::move(obs);
    return record;
}

auto to_json(const DatasetRecord& record) -> nlohmann::json
{
    auto anchors = nlohmann::json::array();
    for (auto a: record.anchors)
        anchors.push_back({ a.x, a.y });
    auto j = nlohmann::json {
        { "task_id", record.task_id },
        { "kind", scene::to_string(record.kind) },
        { "text", record.text },
        { "anchors", anchors },
        { "reward", record.reward },
        { "provenance", to_string(record.provenance) },
    };
    if (record.observations)
        j["observations"] = *record.observations;
    return j;
}

auto record_from_json(const nlohmann::json& j) -> DatasetRecord
{
    try
    {
        auto record = DatasetRecord {};
        record.task_id = j.at("task_id").get<std::uint64_t>();
        record.kind = scene::parse_task_kind(j.at("kind").get<std::string>());
        record.text = j.at("text").get<std::string>();
        for (const auto& a: j.at("anchors"))
            record.anchors.push_back(Coordinate { a.at(0).get<int>(), a.at(1).get<int>() });
        record.reward = j.at("reward").get<double>();
        const auto prov = j.at("provenance").get<std::string>();
        if (prov != "direct" && prov != "corrected")
            throw Error(ErrorKind::Parse, "unknown provenance '" + prov + "'");
        record.provenance = prov == "direct" ? Provenance::Direct : Provenance::Corrected;
        if (j.contains("observations"))
            record.observations = j["observations"];
        return record;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw Error(ErrorKind::Parse, std::string("malformed dataset record: ") + e.what());
    }
}

void emit_dataset(const std::filesystem::path& path, const std::vector<DatasetRecord>& records)
{
    auto out = std::ofstream(path, std::ios::app | std::ios::binary);
    if (!out)
        throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    for (const auto& r: records)
        out << to_json(r).dump() << '\n';
    if (!out)
        throw Error(ErrorKind::Io, "write failed for " + path.string());
}

auto load_dataset(const std::filesystem::path& path) -> std::vector<DatasetRecord>
{
    auto in = std::ifstream(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::Io, "cannot open " + path.string());
    auto out = std::vector<DatasetRecord> {};
    auto line = std::string {};
    while (std::getline(in, line))
    {
        if (trim(line).empty())
            continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw Error(ErrorKind::Parse, "invalid JSON line in " + path.string());
        out.push_back(record_from_json(j));
    }
    return out;
}

auto dataset_stats(const std::vector<DatasetRecord>& records) -> DatasetStats
{
    auto stats = DatasetStats {};
    auto steps = std::size_t {0};
    for (const auto& r: records)
    {
        (r.provenance == Provenance::Direct ? stats.direct : stats.corrected) += 1;
        if (r.observations)
        {
            for (auto pos = r.text.find("<think>"); pos != std::string::npos; pos = r.text.find("<think>", pos + 1))
                ++steps;
        }
        else
            steps += grammar::parse_trace(r.text).steps.size();
    }
    if (!records.empty())
        stats.mean_steps = static_cast<double>(steps) / static_cast<double>(records.size());
    return stats;
}

auto to_json(const DatasetStats& stats) -> nlohmann::json
{
    return { { "direct", stats.direct }, { "corrected", stats.corrected }, { "mean_steps", stats.mean_steps } };
}

} // namespace gvr::distill
