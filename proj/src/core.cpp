// SPDX-License-Identifier: Apache-2.0
#include <gvr/core.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

namespace gvr
{

auto to_string(ErrorKind kind) -> const char*
{
    switch (kind)
    {
        case ErrorKind::EmptyTrace: return "EmptyTrace";
        case ErrorKind::InvalidStep: return "InvalidStep";
        case ErrorKind::MalformedDialog: return "MalformedDialog";
        case ErrorKind::PlacementFailure: return "PlacementFailure";
        case ErrorKind::Precondition: return "Precondition";
        case ErrorKind::OutOfBounds: return "OutOfBounds";
        case ErrorKind::MissingAnswer: return "MissingAnswer";
        case ErrorKind::ProposerFailure: return "ProposerFailure";
        case ErrorKind::NoTerminal: return "NoTerminal";
        case ErrorKind::IncompatiblePaths: return "IncompatiblePaths";
        case ErrorKind::DegenerateBatch: return "DegenerateBatch";
        case ErrorKind::Io: return "Io";
        case ErrorKind::Parse: return "Parse";
    }
    return "Unknown";
}

auto to_string(SegmentKind kind) -> const char*
{
    switch (kind)
    {
        case SegmentKind::Think: return "think";
        case SegmentKind::ToolCall: return "tool_call";
        case SegmentKind::Observation: return "observation";
        case SegmentKind::Answer: return "answer";
    }
    return "unknown";
}

auto distance(Coordinate a, Coordinate b) -> double
{
    const auto dx = static_cast<double>(a.x - b.x);
    const auto dy = static_cast<double>(a.y - b.y);
    return std::sqrt(dx * dx + dy * dy);
}

namespace
{

constexpr auto tag_literals = std::array<std::string_view, 8> {
    "<think>", "</think>", "<tool_call>", "</tool_call>", "<observation>", "</observation>", "<answer>", "</answer>",
};

auto contains_tag(std::string_view text) -> bool
{
    return std::any_of(tag_literals.begin(), tag_literals.end(),
                       [&](std::string_view tag) { return text.find(tag) != std::string_view::npos; });
}

auto is_space(char c) -> bool
{
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

auto is_digit(char c) -> bool
{
    return c >= '0' && c <= '9';
}

// Parses an optionally signed integer of at most 9 digits starting at pos.
auto parse_int(std::string_view text, std::size_t& pos, int& out) -> bool
{
    auto sign = 1;
    auto i = pos;
    if (i < text.size() && text[i] == '-')
    {
        sign = -1;
        ++i;
    }
    const auto start = i;
    auto value = 0;
    while (i < text.size() && is_digit(text[i]) && i - start < 9)
        value = value * 10 + (text[i++] - '0');
    if (i == start || (i < text.size() && is_digit(text[i])))
        return false;
    out = sign * value;
    pos = i;
    return true;
}

} // namespace

auto scan_coordinates(std::string_view text) -> std::vector<CoordinateMatch>
{
    auto matches = std::vector<CoordinateMatch> {};
    auto pos = text.find('(');
    while (pos != std::string_view::npos)
    {
        auto i = pos + 1;
        auto x = 0;
        auto y = 0;
        const auto ok = parse_int(text, i, x) && text.substr(i, 2) == ", " && ((i += 2), parse_int(text, i, y))
                        && i < text.size() && text[i] == ')';
        if (ok)
        {
            matches.push_back(CoordinateMatch { .offset = pos, .length = i + 1 - pos, .value = Coordinate { x, y } });
            pos = text.find('(', i + 1);
        }
        else
        {
            pos = text.find('(', pos + 1);
        }
    }
    return matches;
}

void check_step(const GroundedStep& step)
{
    if (trim(step.text).empty())
        throw Error(ErrorKind::InvalidStep, "step text is empty");
    if (step.text != trim(step.text))
        throw Error(ErrorKind::InvalidStep, "step text has surrounding whitespace");
    if (step.text.find('\n') != std::string::npos)
        throw Error(ErrorKind::InvalidStep, "step text spans several lines");
    if (contains_tag(step.text))
        throw Error(ErrorKind::InvalidStep, "step text contains a tag");
    if (!scan_coordinates(step.text).empty())
        throw Error(ErrorKind::InvalidStep, "step text carries its own coordinate: " + step.text);
}

auto Segment::think(std::string text) -> Segment
{
    return Segment { .kind = SegmentKind::Think, .payload = std::move(text) };
}

auto Segment::tool_call(Coordinate at) -> Segment
{
    return Segment { .kind = SegmentKind::ToolCall, .payload = at };
}

auto Segment::observation(std::shared_ptr<const ObservationImage> image) -> Segment
{
    return Segment { .kind = SegmentKind::Observation, .payload = std::move(image) };
}

auto Segment::answer(std::string text) -> Segment
{
    return Segment { .kind = SegmentKind::Answer, .payload = std::move(text) };
}

auto Segment::text() const -> const std::string&
{
    return std::get<std::string>(payload);
}

auto Segment::coordinate() const -> Coordinate
{
    return std::get<Coordinate>(payload);
}

auto Segment::image() const -> const std::shared_ptr<const ObservationImage>&
{
    return std::get<std::shared_ptr<const ObservationImage>>(payload);
}

auto Dialog::tool_call_coordinates() const -> std::vector<Coordinate>
{
    auto out = std::vector<Coordinate> {};
    for (const auto& s: segments)
        if (s.kind == SegmentKind::ToolCall)
            out.push_back(s.coordinate());
    return out;
}

auto Dialog::tool_call_count() const -> std::size_t
{
    return static_cast<std::size_t>(std::count_if(segments.begin(), segments.end(),
                                                  [](const Segment& s) { return s.kind == SegmentKind::ToolCall; }));
}

void check_dialog(const Dialog& dialog)
{
    auto seen_tool = false;
    for (const auto& s: dialog.segments)
    {
        if (s.kind == SegmentKind::ToolCall)
            seen_tool = true;
        if (s.kind == SegmentKind::Observation && !seen_tool)
            throw Error(ErrorKind::MalformedDialog, "observation precedes any tool call");
    }
    if (dialog.terminated && (dialog.segments.empty() || dialog.segments.back().kind != SegmentKind::Answer))
        throw Error(ErrorKind::MalformedDialog, "terminated dialog does not end with an answer");
}

auto format_coordinate(Coordinate c) -> std::string
{
    return "(" + std::to_string(c.x) + ", " + std::to_string(c.y) + ")";
}

auto render_step(const GroundedStep& step) -> std::string
{
    check_step(step);
    if (!step.anchor)
        return step.text;
    return step.text + " " + format_coordinate(*step.anchor) + ".";
}

auto render_trace(const ReasonTrace& trace) -> std::string
{
    if (trace.steps.empty())
        throw Error(ErrorKind::EmptyTrace, "trace has no steps");
    const auto answer = trim(trace.answer);
    if (answer.empty())
        throw Error(ErrorKind::EmptyTrace, "trace has an empty answer");

    auto out = std::string("<think> ");
    for (std::size_t i = 0; i < trace.steps.size(); ++i)
    {
        if (i > 0)
            out += '\n';
        out += render_step(trace.steps[i]);
    }
    out += " </think>\n<answer> ";
    out += answer;
    out += " </answer>";
    return out;
}

auto render_tool_call_body(Coordinate c) -> std::string
{
    return R"({"name": "crop", "arguments": {"coordinate": [)" + std::to_string(c.x) + ", " + std::to_string(c.y)
           + "]}}";
}

auto render_observation_body(const ObservationImage* image) -> std::string
{
    if (image == nullptr)
        return "[image]";
    return "[image " + std::to_string(image->width) + "x" + std::to_string(image->height) + "]";
}

auto render_segment(const Segment& segment) -> std::string
{
    switch (segment.kind)
    {
        case SegmentKind::Think: return "<think> " + segment.text() + " </think>";
        case SegmentKind::ToolCall: return "<tool_call>" + render_tool_call_body(segment.coordinate()) + "</tool_call>";
        case SegmentKind::Observation:
            return "<observation>" + render_observation_body(segment.image().get()) + "</observation>";
        case SegmentKind::Answer: return "<answer> " + trim(segment.text()) + " </answer>";
    }
    return {};
}

auto render_dialog(const Dialog& dialog) -> std::string
{
    check_dialog(dialog);
    auto out = std::string {};
    for (std::size_t i = 0; i < dialog.segments.size(); ++i)
    {
        if (i > 0)
            out += '\n';
        out += render_segment(dialog.segments[i]);
    }
    return out;
}

auto trim(std::string_view text) -> std::string
{
    auto begin = std::size_t {0};
    auto end = text.size();
    while (begin < end && is_space(text[begin]))
        ++begin;
    while (end > begin && is_space(text[end - 1]))
        --end;
    return std::string(text.substr(begin, end - begin));
}

auto to_lower(std::string_view text) -> std::string
{
    auto out = std::string(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

} // namespace gvr
