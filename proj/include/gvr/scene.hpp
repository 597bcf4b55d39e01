// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gvr/core.hpp>

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace gvr::scene
{

enum class Shape
{
    Circle,
    Square,
    Triangle,
    Cross,
};

enum class Color
{
    Red,
    Green,
    Blue,
    Yellow,
    Purple,
    Orange,
    Cyan,
    Magenta,
};

enum class Material
{
    Matte,
    Glossy,
};

inline constexpr int shape_count = 4;
inline constexpr int color_count = 8;

[[nodiscard]] auto to_string(Shape s) -> const char*;
[[nodiscard]] auto to_string(Color c) -> const char*;
[[nodiscard]] auto to_string(Material m) -> const char*;
[[nodiscard]] auto parse_color(std::string_view name) -> std::optional<Color>;
[[nodiscard]] auto fill_rgb(Color c) -> std::array<std::uint8_t, 3>;

struct PlacedGlyph
{
    int id = 0;
    Coordinate center;
    int size = 0;
    Shape shape = Shape::Circle;
    Color color = Color::Red;
    Material material = Material::Matte;

    [[nodiscard]] auto half() const -> int { return size / 2; }
    [[nodiscard]] auto x0() const -> int { return center.x - half(); }
    [[nodiscard]] auto y0() const -> int { return center.y - half(); }
    [[nodiscard]] auto x1() const -> int { return center.x + half(); }
    [[nodiscard]] auto y1() const -> int { return center.y + half(); }

    auto operator==(const PlacedGlyph&) const -> bool = default;
};

/// Symbolic scene. Pixels are produced on demand by the rasterizer below.
struct Raster
{
    int width = 0;
    int height = 0;
    std::vector<PlacedGlyph> glyphs;

    [[nodiscard]] auto contains(Coordinate c) const -> bool
    {
        return c.x >= 0 && c.y >= 0 && c.x < width && c.y < height;
    }

    [[nodiscard]] auto glyph(int id) const -> const PlacedGlyph&;

    auto operator==(const Raster&) const -> bool = default;
};

inline constexpr std::array<std::uint8_t, 3> background_rgb { 236, 236, 236 };

/// Colour of pixel (x, y); background where no glyph covers it.
[[nodiscard]] auto pixel_at(const Raster& raster, int x, int y) -> std::array<std::uint8_t, 3>;

/// Full RGB8 rendering, row-major.
[[nodiscard]] auto rasterize(const Raster& raster) -> std::vector<std::uint8_t>;

enum class TaskKind
{
    MultipleChoice,
    PointGrounding,
    ActionPrediction,
};

[[nodiscard]] auto to_string(TaskKind kind) -> const char*;
[[nodiscard]] auto parse_task_kind(std::string_view name) -> TaskKind;

struct Box
{
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    /// Edges count as inside.
    [[nodiscard]] auto contains(Coordinate c) const -> bool { return c.x >= x0 && c.x <= x1 && c.y >= y0 && c.y <= y1; }

    auto operator==(const Box&) const -> bool = default;
};

struct ActionKey
{
    std::string type;
    std::string argument;

    auto operator==(const ActionKey&) const -> bool = default;
};

/// Ground truth in one of three forms: a choice label, a target box, or an action pair.
struct AnswerKey
{
    std::variant<std::string, Box, ActionKey> value;

    auto operator==(const AnswerKey&) const -> bool = default;
};

struct TaskInstance
{
    std::uint64_t seed = 0;
    Raster raster;
    std::string query;
    TaskKind kind = TaskKind::MultipleChoice;
    std::vector<std::string> choices;
    AnswerKey answer_key;
    // Glyph the query refers to. Used by the scripted teacher and the policy prompt.
    int target = 0;

    auto operator==(const TaskInstance&) const -> bool = default;
};

struct Difficulty
{
    int num_glyphs = 6;
    int min_glyph_px = 12;
};

struct SceneConfig
{
    int width = 1000;
    int height = 800;
    // Glyph sizes are drawn from [min_glyph_px, min_glyph_px + size_spread].
    int size_spread = 8;
    // Point-grounding key boxes pad the target's extent by this many pixels.
    int target_box_padding = 50;
    int max_placement_attempts = 1000;
};

/// Deterministic in (seed, kind, difficulty, config). The glyph named by the
/// query is the only one with its (material, shape) pair.
[[nodiscard]] auto generate_task(std::uint64_t seed, TaskKind kind, Difficulty difficulty,
                                 const SceneConfig& config = {}) -> TaskInstance;

[[nodiscard]] auto crop(const Raster& raster, Coordinate center, int window, int resize) -> ObservationImage;

[[nodiscard]] auto oracle_answer(const TaskInstance& task) -> AnswerKey;

/// Canonical textual form of a key ("red", "(x0, y0, x1, y1)", "click id_3").
[[nodiscard]] auto answer_key_text(const AnswerKey& key) -> std::string;

/// Glyphs within `radius` of p, nearest first (ties by id), or "empty region".
[[nodiscard]] auto describe_region(const Raster& raster, Coordinate p, double radius) -> std::string;

[[nodiscard]] auto describe_glyph(const PlacedGlyph& glyph) -> std::string;

// JSON forms. The glyph list is authoritative; PNG is for inspection only.
[[nodiscard]] auto to_json(const Raster& raster) -> nlohmann::json;
[[nodiscard]] auto raster_from_json(const nlohmann::json& j) -> Raster;
[[nodiscard]] auto to_json(const AnswerKey& key) -> nlohmann::json;
[[nodiscard]] auto answer_key_from_json(const nlohmann::json& j) -> AnswerKey;
[[nodiscard]] auto to_json(const TaskInstance& task) -> nlohmann::json;
[[nodiscard]] auto task_from_json(const nlohmann::json& j) -> TaskInstance;

void write_tasks(const std::filesystem::path& path, const std::vector<TaskInstance>& tasks);
[[nodiscard]] auto read_tasks(const std::filesystem::path& path) -> std::vector<TaskInstance>;

void write_png(const std::filesystem::path& path, const Raster& raster);
void write_png(const std::filesystem::path& path, const ObservationImage& image);

} // namespace gvr::scene
