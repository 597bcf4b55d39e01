// SPDX-License-Identifier: Apache-2.0
// Test-side oracles and generators. Everything here is written independently of the
// library implementation so that tests compare two derivations of the same value.
#pragma once

#include <gvr/core.hpp>
#include <gvr/grammar.hpp>
#include <gvr/rng.hpp>
#include <gvr/scene.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace support
{

// UCB score straight from its definition.
inline auto ucb(double q, int n, int parent_n, double c) -> double
{
    return q + c * std::sqrt(std::log(static_cast<double>(parent_n)) / static_cast<double>(n));
}

// Number of points that are at least `min_d` away from every earlier point, capped.
inline auto distinct_points(const std::vector<gvr::Coordinate>& pts, double min_d, int cap) -> int
{
    auto k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i)
    {
        auto ok = true;
        for (std::size_t j = 0; j < i; ++j)
        {
            const auto dx = static_cast<double>(pts[i].x - pts[j].x);
            const auto dy = static_cast<double>(pts[i].y - pts[j].y);
            if (std::hypot(dx, dy) < min_d)
                ok = false;
        }
        k += ok ? 1 : 0;
    }
    return std::min(k, cap);
}

inline const std::array<const char*, 12> words = {
    "scan", "the", "left", "glyph", "looks", "bright", "next", "region", "seems", "empty", "maybe", "square",
};

inline auto random_text(gvr::Rng& rng, int min_words = 1, int max_words = 6) -> std::string
{
    const auto n = gvr::uniform_int(rng, min_words, max_words);
    auto out = std::string {};
    for (auto i = 0; i < n; ++i)
    {
        if (i > 0)
            out += ' ';
        out += words[static_cast<std::size_t>(gvr::uniform_int(rng, 0, words.size() - 1))];
    }
    return out;
}

inline auto random_point(gvr::Rng& rng, int width, int height) -> gvr::Coordinate
{
    return { static_cast<int>(gvr::uniform_int(rng, 0, width - 1)), static_cast<int>(gvr::uniform_int(rng, 0, height - 1)) };
}

inline auto random_trace(gvr::Rng& rng, int width = 1000, int height = 800) -> gvr::ReasonTrace
{
    auto trace = gvr::ReasonTrace {};
    const auto steps = gvr::uniform_int(rng, 1, 6);
    for (auto i = 0; i < steps; ++i)
    {
        auto step = gvr::GroundedStep { random_text(rng), std::nullopt };
        if (gvr::bernoulli(rng, 0.8))
            step.anchor = random_point(rng, width, height);
        trace.steps.push_back(std::move(step));
    }
    trace.answer = random_text(rng, 1, 2);
    return trace;
}

// A dialog built by walking the accepted language: (think call obs)* think answer.
inline auto random_dialog(gvr::Rng& rng, int width = 1000, int height = 800) -> gvr::Dialog
{
    auto d = gvr::Dialog {};
    const auto calls = gvr::uniform_int(rng, 0, 5);
    for (auto i = 0; i < calls; ++i)
    {
        d.segments.push_back(gvr::Segment::think(random_text(rng)));
        d.segments.push_back(gvr::Segment::tool_call(random_point(rng, width, height)));
        auto image = std::make_shared<gvr::ObservationImage>();
        image->width = 384;
        image->height = 384;
        d.segments.push_back(gvr::Segment::observation(std::move(image)));
    }
    d.segments.push_back(gvr::Segment::think(random_text(rng)));
    d.segments.push_back(gvr::Segment::answer(random_text(rng, 1, 2)));
    d.terminated = true;
    return d;
}

// Symbolic view of a tagged text: one character per tag, 'x' for non-blank text.
// T/t think, C/c tool call, O/o observation, A/a answer.
inline auto symbols(std::string_view text) -> std::string
{
    static const std::array<std::pair<std::string_view, char>, 8> tags = { {
        { "<think>", 'T' },
        { "</think>", 't' },
        { "<tool_call>", 'C' },
        { "</tool_call>", 'c' },
        { "<observation>", 'O' },
        { "</observation>", 'o' },
        { "<answer>", 'A' },
        { "</answer>", 'a' },
    } };
    auto out = std::string {};
    auto pending_text = false;
    for (std::size_t i = 0; i < text.size();)
    {
        auto matched = false;
        for (const auto& [lit, sym]: tags)
        {
            if (text.substr(i, lit.size()) == lit)
            {
                if (pending_text)
                    out += 'x';
                pending_text = false;
                out += sym;
                i += lit.size();
                matched = true;
                break;
            }
        }
        if (!matched)
        {
            pending_text = pending_text || std::isspace(static_cast<unsigned char>(text[i])) == 0;
            ++i;
        }
    }
    if (pending_text)
        out += 'x';
    return out;
}

// Expected failure for a symbol string whose tool-call bodies are all well-formed and
// in bounds. Text inside a block is 'x' and never fails by itself.
inline auto expected_failure(const std::string& s, bool dialog) -> std::optional<gvr::grammar::Failure>
{
    using F = gvr::grammar::Failure;
    auto open = '\0';
    // 0 expect think, 1 after think, 2 after tool, 3 done
    auto phase = 0;
    auto tools = 0;
    for (const auto c: s)
    {
        if (open != '\0')
        {
            if (c == 'x')
                continue;
            if (c != static_cast<char>(std::tolower(static_cast<unsigned char>(open))))
                return F::MalformedTag;
            phase = open == 'T' ? 1 : open == 'C' ? 2 : open == 'O' ? 0 : 3;
            tools += open == 'C' ? 1 : 0;
            open = '\0';
            continue;
        }
        const auto is_open_tag = c == 'T' || c == 'C' || c == 'O' || c == 'A';
        if (!is_open_tag)
            return phase == 3 ? F::TrailingContent : F::MalformedTag;
        if (phase == 3)
            return F::TrailingContent;
        if (c == 'O' && dialog && tools == 0)
            return F::PrematureObservation;
        const auto allowed = (phase == 0 && c == 'T') || (phase == 1 && (c == 'A' || (dialog && c == 'C')))
                             || (phase == 2 && c == 'O');
        if (!allowed)
            return F::OutOfOrder;
        open = c;
    }
    if (open != '\0' || phase != 3)
        return F::MissingAnswer;
    return std::nullopt;
}

struct TagSpan
{
    std::size_t begin;
    std::size_t end;
};

inline auto tag_spans(std::string_view text) -> std::vector<TagSpan>
{
    auto out = std::vector<TagSpan> {};
    for (const auto& t: gvr::grammar::tokenize_tags(text))
        if (t.kind != gvr::grammar::TagKind::TextRun)
            out.push_back({ t.begin, t.end });
    return out;
}

// One random single-edit mutation of the tag structure: delete, duplicate, or swap two tags.
inline auto mutate_tags(const std::string& text, gvr::Rng& rng) -> std::string
{
    const auto spans = tag_spans(text);
    const auto pick = [&] { return spans[static_cast<std::size_t>(gvr::uniform_int(rng, 0, spans.size() - 1))]; };
    switch (gvr::uniform_int(rng, 0, 2))
    {
        case 0:
        {
            const auto s = pick();
            return text.substr(0, s.begin) + text.substr(s.end);
        }
        case 1:
        {
            const auto s = pick();
            const auto tag = text.substr(s.begin, s.end - s.begin);
            return text.substr(0, s.end) + tag + text.substr(s.end);
        }
        default:
        {
            auto a = pick();
            auto b = pick();
            if (a.begin > b.begin)
                std::swap(a, b);
            if (a.begin == b.begin)
                return text.substr(0, a.begin) + text.substr(a.end);
            const auto ta = text.substr(a.begin, a.end - a.begin);
            const auto tb = text.substr(b.begin, b.end - b.begin);
            return text.substr(0, a.begin) + tb + text.substr(a.end, b.begin - a.end) + ta + text.substr(b.end);
        }
    }
}

// Fraction of pixels of a window that two windows share.
inline auto overlap_fraction(int ax, int ay, int bx, int by, int w) -> double
{
    const auto ox = std::max(0, std::min(ax, bx) + w - std::max(ax, bx));
    const auto oy = std::max(0, std::min(ay, by) + w - std::max(ay, by));
    return static_cast<double>(ox) * static_cast<double>(oy) / (static_cast<double>(w) * static_cast<double>(w));
}

} // namespace support
