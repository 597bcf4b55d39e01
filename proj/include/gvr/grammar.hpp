// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gvr/core.hpp>
#include <gvr/scene.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gvr::grammar
{

enum class TagKind
{
    OpenThink,
    CloseThink,
    OpenTool,
    CloseTool,
    OpenObservation,
    CloseObservation,
    OpenAnswer,
    CloseAnswer,
    TextRun,
};

[[nodiscard]] auto to_string(TagKind kind) -> const char*;

struct TagToken
{
    TagKind kind = TagKind::TextRun;
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Total: every byte lands in exactly one token and spans are contiguous.
[[nodiscard]] auto tokenize_tags(std::string_view text) -> std::vector<TagToken>;

enum class Failure
{
    MalformedTag,
    OutOfOrder,
    MissingAnswer,
    TrailingContent,
    InvalidCoordinate,
    PrematureObservation,
};

[[nodiscard]] auto to_string(Failure failure) -> const char*;

struct ValidationReport
{
    bool valid = true;
    std::optional<Failure> failure;
    std::optional<std::size_t> failure_offset;

    static auto ok() -> ValidationReport { return {}; }
    static auto fail(Failure f, std::size_t offset) -> ValidationReport { return { false, f, offset }; }
};

/// One think block, then one answer block; whitespace around blocks is ignored.
/// Coordinates inside the think block must lie within the raster.
[[nodiscard]] auto validate_single_turn(std::string_view text, const scene::Raster& raster) -> ValidationReport;

/// (think tool_call observation)* think answer, ending at the closing answer tag.
/// Tool-call bodies must be a crop call with an in-bounds coordinate; think-block
/// coordinates are bounds-checked too.
[[nodiscard]] auto validate_dialog(std::string_view text, const scene::Raster& raster) -> ValidationReport;

[[nodiscard]] auto extract_coordinates(std::string_view text) -> std::vector<Coordinate>;

/// Trimmed contents of the first complete answer block. Throws MissingAnswer.
[[nodiscard]] auto extract_answer(std::string_view text) -> std::string;

/// Coordinate from a crop call body, or nullopt for anything else.
[[nodiscard]] auto parse_tool_call_body(std::string_view body) -> std::optional<Coordinate>;

/// Inverse of render_trace. Throws Parse on text that is not a valid single-turn trace.
[[nodiscard]] auto parse_trace(std::string_view text) -> ReasonTrace;

/// Inverse of render_dialog for structurally valid dialogs. Observation payloads
/// come back empty (the text form carries only the image size). Throws Parse.
[[nodiscard]] auto parse_dialog(std::string_view text) -> Dialog;

} // namespace gvr::grammar
