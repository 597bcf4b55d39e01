// SPDX-License-Identifier: Apache-2.0
#include <gvr/grammar.hpp>

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cctype>

namespace gvr::grammar
{

namespace
{

struct TagLiteral
{
    std::string_view text;
    TagKind kind;
};

constexpr auto tag_table = std::array<TagLiteral, 8> { {
    { "<think>", TagKind::OpenThink },
    { "</think>", TagKind::CloseThink },
    { "<tool_call>", TagKind::OpenTool },
    { "</tool_call>", TagKind::CloseTool },
    { "<observation>", TagKind::OpenObservation },
    { "</observation>", TagKind::CloseObservation },
    { "<answer>", TagKind::OpenAnswer },
    { "</answer>", TagKind::CloseAnswer },
} };

enum class Block
{
    Think,
    Tool,
    Observation,
    Answer,
};

auto is_open(TagKind k) -> bool
{
    return k == TagKind::OpenThink || k == TagKind::OpenTool || k == TagKind::OpenObservation
           || k == TagKind::OpenAnswer;
}

auto block_of(TagKind k) -> Block
{
    switch (k)
    {
        case TagKind::OpenThink:
        case TagKind::CloseThink: return Block::Think;
        case TagKind::OpenTool:
        case TagKind::CloseTool: return Block::Tool;
        case TagKind::OpenObservation:
        case TagKind::CloseObservation: return Block::Observation;
        default: return Block::Answer;
    }
}

auto is_blank(std::string_view text) -> bool
{
    return std::all_of(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

enum class Mode
{
    SingleTurn,
    Dialog,
};

enum class State
{
    ExpectThink,
    AfterThink,
    AfterTool,
    Done,
};

auto check_think_coordinates(std::string_view content, std::size_t base, const scene::Raster& raster)
    -> std::optional<ValidationReport>
{
    for (const auto& m: scan_coordinates(content))
        if (!raster.contains(m.value))
            return ValidationReport::fail(Failure::InvalidCoordinate, base + m.offset);
    return std::nullopt;
}

auto validate(std::string_view text, const scene::Raster& raster, Mode mode) -> ValidationReport
{
    const auto tokens = tokenize_tags(text);
    auto state = State::ExpectThink;
    auto seen_tool = false;
    auto inside = false;
    auto open_block = Block::Think;
    auto content_begin = std::size_t {0};

    for (const auto& tok: tokens)
    {
        const auto span = text.substr(tok.begin, tok.end - tok.begin);
        if (tok.kind == TagKind::TextRun)
        {
            if (inside || is_blank(span))
                continue;
            return ValidationReport::fail(state == State::Done ? Failure::TrailingContent : Failure::MalformedTag,
                                          tok.begin);
        }

        if (inside)
        {
            const auto closes = !is_open(tok.kind) && block_of(tok.kind) == open_block;
            if (!closes)
                return ValidationReport::fail(Failure::MalformedTag, tok.begin);

            const auto content = text.substr(content_begin, tok.begin - content_begin);
            switch (open_block)
            {
                case Block::Think:
                    if (auto bad = check_think_coordinates(content, content_begin, raster))
                        return *bad;
                    state = State::AfterThink;
                    break;
                case Block::Tool:
                {
                    const auto at = parse_tool_call_body(content);
                    if (!at)
                        return ValidationReport::fail(Failure::MalformedTag, content_begin);
                    if (!raster.contains(*at))
                        return ValidationReport::fail(Failure::InvalidCoordinate, content_begin);
                    seen_tool = true;
                    state = State::AfterTool;
                    break;
                }
                case Block::Observation: state = State::ExpectThink; break;
                case Block::Answer: state = State::Done; break;
            }
            inside = false;
            continue;
        }

        if (!is_open(tok.kind))
            return ValidationReport::fail(state == State::Done ? Failure::TrailingContent : Failure::MalformedTag,
                                          tok.begin);
        if (state == State::Done)
            return ValidationReport::fail(Failure::TrailingContent, tok.begin);

        const auto block = block_of(tok.kind);
        if (block == Block::Observation && mode == Mode::Dialog && !seen_tool)
            return ValidationReport::fail(Failure::PrematureObservation, tok.begin);

        auto expected = false;
        switch (state)
        {
            case State::ExpectThink: expected = block == Block::Think; break;
            case State::AfterThink:
                expected = block == Block::Answer || (mode == Mode::Dialog && block == Block::Tool);
                break;
            case State::AfterTool: expected = block == Block::Observation; break;
            case State::Done: break;
        }
        if (!expected)
            return ValidationReport::fail(Failure::OutOfOrder, tok.begin);

        inside = true;
        open_block = block;
        content_begin = tok.end;
    }

    if (inside || state != State::Done)
        return ValidationReport::fail(Failure::MissingAnswer, text.size());
    return ValidationReport::ok();
}

// Blocks of a text that is a plain sequence of tagged blocks separated by whitespace.
struct RawBlock
{
    Block kind;
    std::string_view content;
};

auto split_blocks(std::string_view text) -> std::vector<RawBlock>
{
    const auto tokens = tokenize_tags(text);
    auto blocks = std::vector<RawBlock> {};
    for (std::size_t i = 0; i < tokens.size(); ++i)
    {
        const auto& tok = tokens[i];
        if (tok.kind == TagKind::TextRun)
        {
            if (!is_blank(text.substr(tok.begin, tok.end - tok.begin)))
                throw Error(ErrorKind::Parse, "text outside any block at offset " + std::to_string(tok.begin));
            continue;
        }
        if (!is_open(tok.kind))
            throw Error(ErrorKind::Parse, "unbalanced closing tag at offset " + std::to_string(tok.begin));
        auto content = std::string_view {};
        auto j = i + 1;
        if (j < tokens.size() && tokens[j].kind == TagKind::TextRun)
        {
            content = text.substr(tokens[j].begin, tokens[j].end - tokens[j].begin);
            ++j;
        }
        if (j >= tokens.size() || is_open(tokens[j].kind) || tokens[j].kind == TagKind::TextRun
            || block_of(tokens[j].kind) != block_of(tok.kind))
            throw Error(ErrorKind::Parse, "unterminated block at offset " + std::to_string(tok.begin));
        blocks.push_back(RawBlock { block_of(tok.kind), content });
        i = j;
    }
    return blocks;
}

} // namespace

auto to_string(TagKind kind) -> const char*
{
    switch (kind)
    {
        case TagKind::OpenThink: return "open_think";
        case TagKind::CloseThink: return "close_think";
        case TagKind::OpenTool: return "open_tool";
        case TagKind::CloseTool: return "close_tool";
        case TagKind::OpenObservation: return "open_obs";
        case TagKind::CloseObservation: return "close_obs";
        case TagKind::OpenAnswer: return "open_answer";
        case TagKind::CloseAnswer: return "close_answer";
        case TagKind::TextRun: return "text_run";
    }
    return "?";
}

auto to_string(Failure failure) -> const char*
{
    switch (failure)
    {
        case Failure::MalformedTag: return "malformed_tag";
        case Failure::OutOfOrder: return "out_of_order";
        case Failure::MissingAnswer: return "missing_answer";
        case Failure::TrailingContent: return "trailing_content";
        case Failure::InvalidCoordinate: return "invalid_coordinate";
        case Failure::PrematureObservation: return "premature_observation";
    }
    return "?";
}

auto tokenize_tags(std::string_view text) -> std::vector<TagToken>
{
    auto tokens = std::vector<TagToken> {};
    auto run_begin = std::size_t {0};
    auto pos = text.find('<');
    while (pos != std::string_view::npos)
    {
        const auto* match = std::find_if(tag_table.begin(), tag_table.end(), [&](const TagLiteral& lit) {
            return text.substr(pos, lit.text.size()) == lit.text;
        });
        if (match == tag_table.end())
        {
            pos = text.find('<', pos + 1);
            continue;
        }
        if (pos > run_begin)
            tokens.push_back(TagToken { TagKind::TextRun, run_begin, pos });
        tokens.push_back(TagToken { match->kind, pos, pos + match->text.size() });
        run_begin = pos + match->text.size();
        pos = text.find('<', run_begin);
    }
    if (run_begin < text.size())
        tokens.push_back(TagToken { TagKind::TextRun, run_begin, text.size() });
    return tokens;
}

auto validate_single_turn(std::string_view text, const scene::Raster& raster) -> ValidationReport
{
    return validate(text, raster, Mode::SingleTurn);
}

auto validate_dialog(std::string_view text, const scene::Raster& raster) -> ValidationReport
{
    return validate(text, raster, Mode::Dialog);
}

auto extract_coordinates(std::string_view text) -> std::vector<Coordinate>
{
    auto out = std::vector<Coordinate> {};
    for (const auto& m: scan_coordinates(text))
        out.push_back(m.value);
    return out;
}

auto extract_answer(std::string_view text) -> std::string
{
    constexpr auto open = std::string_view("<answer>");
    constexpr auto close = std::string_view("</answer>");
    const auto begin = text.find(open);
    if (begin == std::string_view::npos)
        throw Error(ErrorKind::MissingAnswer, "no answer block");
    const auto end = text.find(close, begin + open.size());
    if (end == std::string_view::npos)
        throw Error(ErrorKind::MissingAnswer, "answer block is not closed");
    return trim(text.substr(begin + open.size(), end - begin - open.size()));
}

auto parse_tool_call_body(std::string_view body) -> std::optional<Coordinate>
{
    const auto j = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
    if (!j.is_object() || j.size() != 2 || !j.contains("name") || !j.contains("arguments"))
        return std::nullopt;
    if (j["name"] != "crop")
        return std::nullopt;
    const auto& args = j["arguments"];
    if (!args.is_object() || args.size() != 1 || !args.contains("coordinate"))
        return std::nullopt;
    const auto& c = args["coordinate"];
    if (!c.is_array() || c.size() != 2 || !c[0].is_number_integer() || !c[1].is_number_integer())
        return std::nullopt;
    const auto x = c[0].get<long long>();
    const auto y = c[1].get<long long>();
    if (x < -(1LL << 30) || x > (1LL << 30) || y < -(1LL << 30) || y > (1LL << 30))
        return std::nullopt;
    return Coordinate { static_cast<int>(x), static_cast<int>(y) };
}

auto parse_trace(std::string_view text) -> ReasonTrace
{
    const auto blocks = split_blocks(text);
    if (blocks.size() != 2 || blocks[0].kind != Block::Think || blocks[1].kind != Block::Answer)
        throw Error(ErrorKind::Parse, "not a think block followed by an answer block");

    auto trace = ReasonTrace {};
    const auto body = trim(blocks[0].content);
    auto line_begin = std::size_t {0};
    while (line_begin <= body.size())
    {
        auto line_end = body.find('\n', line_begin);
        if (line_end == std::string::npos)
            line_end = body.size();
        const auto line = std::string_view(body).substr(line_begin, line_end - line_begin);
        line_begin = line_end + 1;
        if (line.empty())
            continue;

        auto step = GroundedStep {};
        const auto coords = scan_coordinates(line);
        if (!coords.empty() && coords.back().offset + coords.back().length + 1 == line.size() && line.back() == '.'
            && coords.back().offset > 0 && line[coords.back().offset - 1] == ' ')
        {
            step.text = std::string(line.substr(0, coords.back().offset - 1));
            step.anchor = coords.back().value;
        }
        else
        {
            step.text = std::string(line);
        }
        trace.steps.push_back(std::move(step));
    }
    trace.answer = trim(blocks[1].content);
    return trace;
}

auto parse_dialog(std::string_view text) -> Dialog
{
    auto dialog = Dialog {};
    for (const auto& block: split_blocks(text))
    {
        switch (block.kind)
        {
            case Block::Think: dialog.segments.push_back(Segment::think(trim(block.content))); break;
            case Block::Tool:
            {
                const auto at = parse_tool_call_body(block.content);
                if (!at)
                    throw Error(ErrorKind::Parse, "tool call body is not a crop call");
                dialog.segments.push_back(Segment::tool_call(*at));
                break;
            }
            case Block::Observation:
                dialog.segments.push_back(Segment::observation(nullptr));
                break;
            case Block::Answer: dialog.segments.push_back(Segment::answer(trim(block.content))); break;
        }
    }
    for (auto& s: dialog.segments)
        if (s.kind == SegmentKind::Think && s.text() == soft_termination_text)
            s.injected = true;
    dialog.terminated = !dialog.segments.empty() && dialog.segments.back().kind == SegmentKind::Answer;
    return dialog;
}

} // namespace gvr::grammar
