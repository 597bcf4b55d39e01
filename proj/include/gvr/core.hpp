// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gvr/error.hpp>

#include <array>
#include <compare>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace gvr
{

/// Integer pixel position. Bounds are only meaningful against a specific raster.
struct Coordinate
{
    int x = 0;
    int y = 0;

    auto operator<=>(const Coordinate&) const = default;
};

[[nodiscard]] auto distance(Coordinate a, Coordinate b) -> double;

/// One reasoning step: a single-line thought, optionally anchored to one pixel.
///
/// The text may not contain a newline, a tag, or a "(x, y)" pattern of its own;
/// the anchor is the only coordinate a rendered step carries.
struct GroundedStep
{
    std::string text;
    std::optional<Coordinate> anchor;

    auto operator==(const GroundedStep&) const -> bool = default;
};

/// Throws InvalidStep when the step violates the invariants above.
void check_step(const GroundedStep& step);

struct ReasonTrace
{
    std::vector<GroundedStep> steps;
    std::string answer;
    std::optional<double> reward;

    auto operator==(const ReasonTrace&) const -> bool = default;
};

/// Resized crop returned by the environment's crop tool.
struct ObservationImage
{
    int width = 0;
    int height = 0;
    Coordinate center;
    // Source window actually sampled, after the in-bounds shift.
    int source_x0 = 0;
    int source_y0 = 0;
    int source_width = 0;
    int source_height = 0;
    std::vector<std::uint8_t> rgb;

    [[nodiscard]] auto pixel(int x, int y) const -> std::array<std::uint8_t, 3>
    {
        const auto i = (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) * 3;
        return { rgb[i], rgb[i + 1], rgb[i + 2] };
    }
};

enum class SegmentKind
{
    Think,
    ToolCall,
    Observation,
    Answer,
};

[[nodiscard]] auto to_string(SegmentKind kind) -> const char*;

struct Segment
{
    using Payload = std::variant<std::string, Coordinate, std::shared_ptr<const ObservationImage>>;

    SegmentKind kind = SegmentKind::Think;
    Payload payload;
    // Set on think segments the environment appends (the termination prompt);
    // such segments are never trained on.
    bool injected = false;

    static auto think(std::string text) -> Segment;
    static auto tool_call(Coordinate at) -> Segment;
    static auto observation(std::shared_ptr<const ObservationImage> image) -> Segment;
    static auto answer(std::string text) -> Segment;

    [[nodiscard]] auto text() const -> const std::string&;
    [[nodiscard]] auto coordinate() const -> Coordinate;
    [[nodiscard]] auto image() const -> const std::shared_ptr<const ObservationImage>&;
};

struct Dialog
{
    std::vector<Segment> segments;
    bool terminated = false;

    [[nodiscard]] auto tool_call_coordinates() const -> std::vector<Coordinate>;
    [[nodiscard]] auto tool_call_count() const -> std::size_t;
};

/// Throws MalformedDialog if an observation precedes any tool call, or if a
/// terminated dialog does not end with an answer.
void check_dialog(const Dialog& dialog);

inline constexpr std::string_view backtrack_phrase = "Wait, this seems off. Let's try something else.";
inline constexpr std::string_view soft_termination_text = "Please provide your response now";
inline constexpr std::string_view default_final_thought = "I have enough information to answer.";

[[nodiscard]] auto format_coordinate(Coordinate c) -> std::string;
[[nodiscard]] auto render_step(const GroundedStep& step) -> std::string;
[[nodiscard]] auto render_trace(const ReasonTrace& trace) -> std::string;
[[nodiscard]] auto render_tool_call_body(Coordinate c) -> std::string;
[[nodiscard]] auto render_observation_body(const ObservationImage* image) -> std::string;
[[nodiscard]] auto render_segment(const Segment& segment) -> std::string;
[[nodiscard]] auto render_dialog(const Dialog& dialog) -> std::string;

/// Every canonical "(x, y)" occurrence (optional minus sign, single space) with its byte offset.
struct CoordinateMatch
{
    std::size_t offset = 0;
    std::size_t length = 0;
    Coordinate value;
};

[[nodiscard]] auto scan_coordinates(std::string_view text) -> std::vector<CoordinateMatch>;

[[nodiscard]] auto trim(std::string_view text) -> std::string;
[[nodiscard]] auto to_lower(std::string_view text) -> std::string;

} // namespace gvr
