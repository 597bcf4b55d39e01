// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gvr/core.hpp>
#include <gvr/scene.hpp>
#include <gvr/search.hpp>

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gvr::distill
{

/// Root-to-terminal node chain within one tree.
struct PathRecord
{
    std::uint64_t tree_seed = 0;
    std::vector<search::NodeId> nodes;
    double reward = 0.0;

    [[nodiscard]] auto terminal() const -> search::NodeId { return nodes.back(); }
};

/// Every root-to-leaf path that ends at a terminal node, in terminal-id order.
[[nodiscard]] auto enumerate_paths(const search::SearchTree& tree) -> std::vector<PathRecord>;

inline constexpr double correct_threshold = 1.0;

struct Partition
{
    std::vector<PathRecord> correct;
    std::vector<PathRecord> incorrect;
};

[[nodiscard]] auto classify_rollouts(const std::vector<PathRecord>& paths) -> Partition;

/// Strips tag-like markers ("<think>", "</answer>", ...) and collapses whitespace.
[[nodiscard]] auto clean_markup(std::string_view text) -> std::string;

/// Steps of a path plus the terminal's closing thought (when it has one), and its answer.
[[nodiscard]] auto direct_chain(const search::SearchTree& tree, const PathRecord& path) -> ReasonTrace;

/// Incorrect steps (answer dropped), the fixed backtrack step, then the correct path.
/// Throws IncompatiblePaths unless both paths belong to `tree`.
[[nodiscard]] auto synthesize_corrected_chain(const search::SearchTree& tree, const PathRecord& incorrect,
                                              const PathRecord& correct) -> ReasonTrace;

/// Picks the correct path sharing the deepest common ancestor with `incorrect`,
/// then the highest terminal Q, then the lowest terminal id.
[[nodiscard]] auto pick_partner(const search::SearchTree& tree, const PathRecord& incorrect,
                                const std::vector<PathRecord>& correct) -> const PathRecord&;

/// Keeps the first chain of each distinct cleaned rendering.
[[nodiscard]] auto deduplicate(const std::vector<ReasonTrace>& chains) -> std::vector<ReasonTrace>;

struct CropConfig
{
    int window = 100;
    int resize = 384;
};

/// Anchored steps become think + crop call + observation. Unanchored text is
/// carried into the next think; the remainder forms the final think before the answer.
[[nodiscard]] auto to_multiturn_dialog(const ReasonTrace& trace, const scene::TaskInstance& task,
                                       const CropConfig& crop_cfg = {}) -> Dialog;

enum class Provenance
{
    Direct,
    Corrected,
};

[[nodiscard]] auto to_string(Provenance p) -> const char*;

struct Chain
{
    ReasonTrace trace;
    Provenance provenance = Provenance::Direct;
};

struct DistillConfig
{
    int max_corrected_per_tree = 3;
};

/// Direct chains for every correct path, then up to max_corrected_per_tree corrected chains.
[[nodiscard]] auto distill_tree(const search::SearchTree& tree, const DistillConfig& config = {}) -> std::vector<Chain>;

/// Dedup across a whole collection, by cleaned rendering, keeping first occurrences.
[[nodiscard]] auto deduplicate(const std::vector<Chain>& chains) -> std::vector<Chain>;

enum class Mode
{
    Single,
    MultiTurn,
};

[[nodiscard]] auto parse_mode(std::string_view name) -> Mode;
[[nodiscard]] auto to_string(Mode mode) -> const char*;

/// One dataset line.
struct DatasetRecord
{
    std::uint64_t task_id = 0;
    scene::TaskKind kind = scene::TaskKind::MultipleChoice;
    std::string text;
    std::vector<Coordinate> anchors;
    double reward = 0.0;
    Provenance provenance = Provenance::Direct;
    // Multi-turn only: source window and size of each crop, in call order.
    std::optional<nlohmann::json> observations;

    auto operator==(const DatasetRecord&) const -> bool = default;
};

[[nodiscard]] auto make_record(const Chain& chain, const scene::TaskInstance& task, Mode mode,
                               const CropConfig& crop_cfg = {}) -> DatasetRecord;

[[nodiscard]] auto to_json(const DatasetRecord& record) -> nlohmann::json;
[[nodiscard]] auto record_from_json(const nlohmann::json& j) -> DatasetRecord;

/// Appends one JSON line per record; creates the file if needed.
void emit_dataset(const std::filesystem::path& path, const std::vector<DatasetRecord>& records);
[[nodiscard]] auto load_dataset(const std::filesystem::path& path) -> std::vector<DatasetRecord>;

struct DatasetStats
{
    std::size_t direct = 0;
    std::size_t corrected = 0;
    double mean_steps = 0.0;
};

/// Steps are counted as rendered think lines (single) or think segments (multi-turn).
[[nodiscard]] auto dataset_stats(const std::vector<DatasetRecord>& records) -> DatasetStats;
[[nodiscard]] auto to_json(const DatasetStats& stats) -> nlohmann::json;

} // namespace gvr::distill
