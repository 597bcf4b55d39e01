// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gvr/core.hpp>
#include <gvr/scene.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gvr::optim
{

using Token = int;

/// Closed template language of the reference policy. Token ids are contiguous:
/// tags and specials, step templates, coordinate cells, colors, action verbs, element ids.
namespace tok
{
inline constexpr Token eos = 0;
inline constexpr Token think_open = 1;
inline constexpr Token think_close = 2;
inline constexpr Token answer_open = 3;
inline constexpr Token answer_close = 4;
inline constexpr Token tool_open = 5;
inline constexpr Token tool_close = 6;
inline constexpr Token obs_open = 7;
inline constexpr Token image = 8;
inline constexpr Token obs_close = 9;
inline constexpr Token soft_prompt = 10;

inline constexpr Token look_begin = 11;
inline constexpr int look_count = 6;
inline constexpr Token conclude_begin = look_begin + look_count;
inline constexpr int conclude_count = 2;
inline constexpr Token backtrack = conclude_begin + conclude_count;

inline constexpr Token cell_begin = backtrack + 1;
inline constexpr int grid_cols = 10;
inline constexpr int grid_rows = 8;
inline constexpr int cell_count = grid_cols * grid_rows;

inline constexpr Token color_begin = cell_begin + cell_count;
inline constexpr int color_count = 8;
inline constexpr Token verb_begin = color_begin + color_count;
inline constexpr int verb_count = 3;
inline constexpr Token arg_begin = verb_begin + verb_count;
inline constexpr int arg_count = 32;

inline constexpr int vocab_size = arg_begin + arg_count;

[[nodiscard]] constexpr auto is_cell(Token t) -> bool { return t >= cell_begin && t < cell_begin + cell_count; }
[[nodiscard]] constexpr auto is_text(Token t) -> bool { return t >= look_begin && t <= backtrack; }
[[nodiscard]] constexpr auto is_look(Token t) -> bool { return t >= look_begin && t < conclude_begin; }
[[nodiscard]] constexpr auto is_color(Token t) -> bool { return t >= color_begin && t < verb_begin; }
[[nodiscard]] constexpr auto is_verb(Token t) -> bool { return t >= verb_begin && t < arg_begin; }
[[nodiscard]] constexpr auto is_arg(Token t) -> bool { return t >= arg_begin && t < vocab_size; }
[[nodiscard]] constexpr auto cell_token(int cell) -> Token { return cell_begin + cell; }
[[nodiscard]] constexpr auto cell_of(Token t) -> int { return t - cell_begin; }
} // namespace tok

/// Verb names in token order.
[[nodiscard]] auto verb_name(int index) -> const char*;
[[nodiscard]] auto verb_index(std::string_view name) -> int;

/// Fixed grid of coordinate bins over a raster. Each bin decodes to its center pixel.
struct Grid
{
    int width = 1000;
    int height = 800;

    [[nodiscard]] auto cell_at(Coordinate c) const -> int;
    [[nodiscard]] auto center(int cell) const -> Coordinate;

    static auto of(const scene::Raster& raster) -> Grid { return { raster.width, raster.height }; }
};

enum class RenderMode
{
    Single,
    Dialog,
};

struct RenderOptions
{
    RenderMode mode = RenderMode::Single;
    Grid grid;
    int observation_size = 384;
};

/// Surface text of a token sequence. Well-formed sequences render exactly as
/// render_trace / render_dialog would render the corresponding structures.
[[nodiscard]] auto detokenize(std::span<const Token> tokens, const RenderOptions& options) -> std::string;

/// Debug name of a single token.
[[nodiscard]] auto token_name(Token t) -> std::string;

/// Phrase splitting of step text into template tokens; Parse error on unknown text.
[[nodiscard]] auto tokenize_text(std::string_view text) -> std::vector<Token>;

/// Answer tokens for a task kind; Parse error when the answer is outside the language.
[[nodiscard]] auto tokenize_answer(std::string_view answer, scene::TaskKind kind, const Grid& grid) -> std::vector<Token>;

/// Token form of a trace, ending in EOS. Anchors snap to their grid cell.
[[nodiscard]] auto tokenize_trace(const ReasonTrace& trace, scene::TaskKind kind, const Grid& grid)
    -> std::vector<Token>;

/// Token form of a dialog, ending in EOS when it terminates with an answer.
/// `environment` receives 1 for tokens the environment supplied (observations, injected prompts).
[[nodiscard]] auto tokenize_dialog(const Dialog& dialog, scene::TaskKind kind, const Grid& grid,
                                   std::vector<std::uint8_t>* environment = nullptr) -> std::vector<Token>;

} // namespace gvr::optim
