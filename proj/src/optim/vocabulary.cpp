// SPDX-License-Identifier: Apache-2.0
#include <gvr/optim/vocabulary.hpp>
#include <gvr/phrases.hpp>
#include <gvr/rewards.hpp>

#include <algorithm>
#include <array>

namespace gvr::optim
{

namespace
{

constexpr auto verbs = std::array<const char*, tok::verb_count> { "click", "hover", "select" };

auto phrase_of(Token t) -> std::string_view
{
    if (tok::is_look(t))
        return phrases::look[static_cast<std::size_t>(t - tok::look_begin)];
    if (t >= tok::conclude_begin && t < tok::backtrack)
        return phrases::conclude[static_cast<std::size_t>(t - tok::conclude_begin)];
    return backtrack_phrase;
}

auto is_close(Token t) -> bool
{
    return t == tok::think_close || t == tok::answer_close || t == tok::tool_close || t == tok::obs_close;
}

enum class Block
{
    None,
    Think,
    Answer,
    Tool,
    Observation,
};

auto surface(Token t, Block block, const RenderOptions& options) -> std::string
{
    switch (t)
    {
        case tok::eos: return {};
        case tok::think_open: return "<think>";
        case tok::think_close: return "</think>";
        case tok::answer_open: return "<answer>";
        case tok::answer_close: return "</answer>";
        case tok::tool_open: return "<tool_call>";
        case tok::tool_close: return "</tool_call>";
        case tok::obs_open: return "<observation>";
        case tok::obs_close: return "</observation>";
        case tok::image:
            return "[image " + std::to_string(options.observation_size) + "x" + std::to_string(options.observation_size)
                   + "]";
        case tok::soft_prompt: return std::string(soft_termination_text);
        default: break;
    }
    if (tok::is_text(t))
        return std::string(phrase_of(t));
    if (tok::is_cell(t))
    {
        const auto c = options.grid.center(tok::cell_of(t));
        if (block == Block::Tool)
            return render_tool_call_body(c);
        if (block == Block::Think)
            return format_coordinate(c) + ".";
        return format_coordinate(c);
    }
    if (tok::is_color(t))
        return scene::to_string(static_cast<scene::Color>(t - tok::color_begin));
    if (tok::is_verb(t))
        return verbs[static_cast<std::size_t>(t - tok::verb_begin)];
    if (tok::is_arg(t))
        return "id_" + std::to_string(t - tok::arg_begin);
    throw Error(ErrorKind::Precondition, "token id " + std::to_string(t) + " outside the vocabulary");
}

auto separator(Token prev, Token next, RenderMode mode) -> std::string_view
{
    if (next == tok::eos)
        return "";
    if (is_close(prev))
        return "\n";
    if (prev == tok::tool_open || prev == tok::obs_open || next == tok::tool_close || next == tok::obs_close)
        return "";
    if (prev == tok::think_open || prev == tok::answer_open || next == tok::think_close || next == tok::answer_close)
        return " ";
    if (tok::is_text(next) && (tok::is_text(prev) || tok::is_cell(prev)))
        return mode == RenderMode::Single ? "\n" : " ";
    return " ";
}

auto next_block(Block block, Token t) -> Block
{
    switch (t)
    {
        case tok::think_open: return Block::Think;
        case tok::answer_open: return Block::Answer;
        case tok::tool_open: return Block::Tool;
        case tok::obs_open: return Block::Observation;
        case tok::think_close:
        case tok::answer_close:
        case tok::tool_close:
        case tok::obs_close: return Block::None;
        default: return block;
    }
}

} // namespace

auto verb_name(int index) -> const char*
{
    return verbs.at(static_cast<std::size_t>(index));
}

auto verb_index(std::string_view name) -> int
{
    const auto lowered = to_lower(name);
    for (std::size_t i = 0; i < verbs.size(); ++i)
        if (lowered == verbs[i])
            return static_cast<int>(i);
    return -1;
}

auto Grid::cell_at(Coordinate c) const -> int
{
    const auto col = std::clamp(c.x * tok::grid_cols / width, 0, tok::grid_cols - 1);
    const auto row = std::clamp(c.y * tok::grid_rows / height, 0, tok::grid_rows - 1);
    return row * tok::grid_cols + col;
}

auto Grid::center(int cell) const -> Coordinate
{
    const auto col = cell % tok::grid_cols;
    const auto row = cell / tok::grid_cols;
    return { (2 * col + 1) * width / (2 * tok::grid_cols), (2 * row + 1) * height / (2 * tok::grid_rows) };
}

auto detokenize(std::span<const Token> tokens, const RenderOptions& options) -> std::string
{
    auto out = std::string {};
    auto block = Block::None;
    for (std::size_t i = 0; i < tokens.size(); ++i)
    {
        const auto t = tokens[i];
        if (i > 0)
            out += separator(tokens[i - 1], t, options.mode);
        out += surface(t, block, options);
        block = next_block(block, t);
    }
    return out;
}

auto token_name(Token t) -> std::string
{
    if (tok::is_cell(t))
        return "cell_" + std::to_string(tok::cell_of(t));
    if (t == tok::eos)
        return "<eos>";
    if (t == tok::image)
        return "<image>";
    if (t == tok::soft_prompt)
        return "<soft>";
    if (tok::is_text(t))
        return "step_" + std::to_string(t - tok::look_begin);
    return surface(t, Block::None, {});
}

auto tokenize_text(std::string_view text) -> std::vector<Token>
{
    auto out = std::vector<Token> {};
    auto rest = std::string(trim(text));
    while (!rest.empty())
    {
        auto matched = false;
        for (auto t = tok::look_begin; t <= tok::backtrack && !matched; ++t)
        {
            const auto phrase = phrase_of(t);
            if (rest.starts_with(phrase) && (rest.size() == phrase.size() || rest[phrase.size()] == ' '))
            {
                out.push_back(t);
                rest = trim(std::string_view(rest).substr(phrase.size()));
                matched = true;
            }
        }
        if (!matched)
            throw Error(ErrorKind::Parse, "text outside the template language: '" + rest + "'");
    }
    return out;
}

auto tokenize_answer(std::string_view answer, scene::TaskKind kind, const Grid& grid) -> std::vector<Token>
{
    const auto text = trim(answer);
    switch (kind)
    {
        case scene::TaskKind::MultipleChoice:
            if (const auto c = scene::parse_color(to_lower(text)))
                return { tok::color_begin + static_cast<int>(*c) };
            break;
        case scene::TaskKind::PointGrounding:
            if (const auto p = rewards::parse_point(text))
                return { tok::cell_token(grid.cell_at(*p)) };
            break;
        case scene::TaskKind::ActionPrediction:
        {
            const auto space = text.find(' ');
            if (space == std::string::npos)
                break;
            const auto verb = verb_index(text.substr(0, space));
            const auto arg = trim(std::string_view(text).substr(space + 1));
            if (verb < 0 || !arg.starts_with("id_"))
                break;
            try
            {
                auto used = std::size_t {0};
                const auto id = std::stoi(arg.substr(3), &used);
                if (used == arg.size() - 3 && id >= 0 && id < tok::arg_count)
                    return { tok::verb_begin + verb, tok::arg_begin + id };
            }
            catch (const std::exception&)
            {
            }
            break;
        }
    }
    throw Error(ErrorKind::Parse, "answer outside the template language: '" + text + "'");
}

auto tokenize_trace(const ReasonTrace& trace, scene::TaskKind kind, const Grid& grid) -> std::vector<Token>
{
    auto out = std::vector<Token> { tok::think_open };
    for (const auto& step: trace.steps)
    {
        const auto words = tokenize_text(step.text);
        out.insert(out.end(), words.begin(), words.end());
        if (step.anchor)
            out.push_back(tok::cell_token(grid.cell_at(*step.anchor)));
    }
    out.push_back(tok::think_close);
    out.push_back(tok::answer_open);
    const auto answer = tokenize_answer(trace.answer, kind, grid);
    out.insert(out.end(), answer.begin(), answer.end());
    out.push_back(tok::answer_close);
    out.push_back(tok::eos);
    return out;
}

auto tokenize_dialog(const Dialog& dialog, scene::TaskKind kind, const Grid& grid,
                     std::vector<std::uint8_t>* environment) -> std::vector<Token>
{
    auto out = std::vector<Token> {};
    auto env = std::vector<std::uint8_t> {};
    const auto emit = [&](Token t, bool from_env) {
        out.push_back(t);
        env.push_back(from_env ? 1 : 0);
    };
    for (const auto& seg: dialog.segments)
    {
        switch (seg.kind)
        {
            case SegmentKind::Think:
                emit(tok::think_open, seg.injected);
                if (seg.injected)
                    emit(tok::soft_prompt, true);
                else
                    for (auto t: tokenize_text(seg.text()))
                        emit(t, false);
                emit(tok::think_close, seg.injected);
                break;
            case SegmentKind::ToolCall:
                emit(tok::tool_open, false);
                emit(tok::cell_token(grid.cell_at(seg.coordinate())), false);
                emit(tok::tool_close, false);
                break;
            case SegmentKind::Observation:
                emit(tok::obs_open, true);
                emit(tok::image, true);
                emit(tok::obs_close, true);
                break;
            case SegmentKind::Answer:
                emit(tok::answer_open, false);
                for (auto t: tokenize_answer(seg.text(), kind, grid))
                    emit(t, false);
                emit(tok::answer_close, false);
                break;
        }
    }
    if (!dialog.segments.empty() && dialog.segments.back().kind == SegmentKind::Answer)
        emit(tok::eos, false);
    if (environment != nullptr)
        *environment = std::move(env);
    return out;
}

} // namespace gvr::optim
