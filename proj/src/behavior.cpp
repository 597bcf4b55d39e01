// SPDX-License-Identifier: Apache-2.0
#include <gvr/behavior.hpp>
#include <gvr/error.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace gvr::behavior
{

namespace
{

auto is_word_char(char c) -> bool
{
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// Next occurrence of `piece` at or after `from` that starts and ends on word boundaries.
auto find_word(std::string_view text, std::string_view piece, std::size_t from) -> std::size_t
{
    while (true)
    {
        const auto at = text.find(piece, from);
        if (at == std::string_view::npos)
            return at;
        const auto end = at + piece.size();
        const auto left_ok = at == 0 || !is_word_char(text[at - 1]) || !is_word_char(piece.front());
        const auto right_ok = end == text.size() || !is_word_char(text[end]) || !is_word_char(piece.back());
        if (left_ok && right_ok)
            return at;
        from = at + 1;
    }
}

auto split_sentences(std::string_view text) -> std::vector<std::string_view>
{
    auto out = std::vector<std::string_view> {};
    std::size_t begin = 0;
    for (std::size_t i = 0; i <= text.size(); ++i)
    {
        if (i == text.size() || text[i] == '.' || text[i] == '!' || text[i] == '?' || text[i] == '\n')
        {
            if (i > begin)
                out.push_back(text.substr(begin, i - begin));
            begin = i + 1;
        }
    }
    return out;
}

auto step_text(const ReasonTrace& trace) -> std::string
{
    auto out = std::string {};
    for (const auto& step: trace.steps)
    {
        out += step.text;
        out += '\n';
    }
    return out;
}

} // namespace

Lexicon::Lexicon(std::vector<std::string> phrases): phrases_(std::move(phrases))
{
    for (const auto& phrase: phrases_)
    {
        auto pieces = std::vector<std::string> {};
        const auto lower = to_lower(phrase);
        std::size_t begin = 0;
        while (true)
        {
            const auto at = lower.find("...", begin);
            auto piece = trim(std::string_view(lower).substr(begin, at == std::string::npos ? std::string::npos : at - begin));
            if (!piece.empty())
                pieces.push_back(std::move(piece));
            if (at == std::string::npos)
                break;
            begin = at + 3;
        }
        if (pieces.empty())
            throw Error(ErrorKind::Parse, "empty lexicon phrase");
        pieces_.push_back(std::move(pieces));
    }
}

auto Lexicon::parse(std::string_view text) -> Lexicon
{
    auto phrases = std::vector<std::string> {};
    auto in = std::istringstream(std::string(text));
    for (std::string line; std::getline(in, line);)
    {
        auto t = trim(line);
        if (!t.empty() && t.front() != '#')
            phrases.push_back(std::move(t));
    }
    return Lexicon(std::move(phrases));
}

auto Lexicon::load(const std::filesystem::path& path) -> Lexicon
{
    auto in = std::ifstream(path);
    if (!in)
        throw Error(ErrorKind::Io, "cannot read lexicon " + path.string());
    auto buffer = std::ostringstream {};
    buffer << in.rdbuf();
    return parse(buffer.str());
}

auto Lexicon::count(std::string_view text) const -> int
{
    const auto lower = to_lower(text);
    auto total = 0;
    for (const auto sentence: split_sentences(lower))
    {
        auto spans = std::vector<std::pair<std::size_t, std::size_t>> {};
        for (const auto& pieces: pieces_)
        {
            for (auto start = find_word(sentence, pieces.front(), 0); start != std::string_view::npos;
                 start = find_word(sentence, pieces.front(), start + 1))
            {
                auto end = start + pieces.front().size();
                auto matched = true;
                for (std::size_t k = 1; k < pieces.size() && matched; ++k)
                {
                    const auto at = find_word(sentence, pieces[k], end);
                    matched = at != std::string_view::npos;
                    if (matched)
                        end = at + pieces[k].size();
                }
                if (!matched)
                    break;
                spans.emplace_back(start, end);
            }
        }
        std::sort(spans.begin(), spans.end());
        auto reach = std::size_t {0};
        for (std::size_t i = 0; i < spans.size(); ++i)
        {
            if (i == 0 || spans[i].first >= reach)
                ++total;
            reach = std::max(reach, spans[i].second);
        }
    }
    return total;
}

auto Lexicons::load(const std::filesystem::path& dir) -> Lexicons
{
    return Lexicons {
        .subgoals = Lexicon::load(dir / "subgoals.txt"),
        .verifications = Lexicon::load(dir / "verifications.txt"),
        .backtracks = Lexicon::load(dir / "backtracks.txt"),
    };
}

auto default_lexicon_dir() -> std::filesystem::path
{
    return std::filesystem::path(GVR_DATA_DIR) / "lexicons";
}

auto default_lexicons() -> const Lexicons&
{
    static const auto lexicons = Lexicons::load(default_lexicon_dir());
    return lexicons;
}

auto count_regions(const ReasonTrace& trace, double min_separation) -> int
{
    auto centers = std::vector<Coordinate> {};
    for (const auto& step: trace.steps)
    {
        if (!step.anchor)
            continue;
        const auto far = std::all_of(centers.begin(), centers.end(),
                                     [&](Coordinate c) { return distance(c, *step.anchor) >= min_separation; });
        if (far)
            centers.push_back(*step.anchor);
    }
    return static_cast<int>(centers.size());
}

auto count_backtracks(const ReasonTrace& trace, const Lexicons& lexicons) -> int
{
    return lexicons.backtracks.count(step_text(trace));
}

auto count_subgoals(const ReasonTrace& trace, const Lexicons& lexicons) -> int
{
    return lexicons.subgoals.count(step_text(trace));
}

auto count_verifications(const ReasonTrace& trace, const Lexicons& lexicons) -> int
{
    return lexicons.verifications.count(step_text(trace));
}

auto LexiconJudge::code(const ReasonTrace& trace) const -> BehaviorCounts
{
    return BehaviorCounts {
        .regions = count_regions(trace, min_separation_),
        .subgoals = count_subgoals(trace, lexicons_),
        .verifications = count_verifications(trace, lexicons_),
        .backtracks = count_backtracks(trace, lexicons_),
    };
}

auto behavior_report(std::span<const ReasonTrace> traces, const Judge& judge, const ReportOptions& options)
    -> BehaviorReport
{
    auto report = BehaviorReport {};
    report.traces = traces.size();
    auto correct = std::size_t {0};
    for (const auto& trace: traces)
    {
        if (!trace.reward)
            throw Error(ErrorKind::Precondition, "behavior report needs rewarded traces");
        const auto is_correct = *trace.reward == options.max_reward;
        correct += is_correct ? 1 : 0;
        if (options.correct_only && !is_correct)
            continue;
        const auto counts = judge.code(trace);
        ++report.coded;
        report.regions += counts.regions;
        report.subgoals += counts.subgoals;
        report.verifications += counts.verifications;
        report.backtracks += counts.backtracks;
    }
    if (report.coded > 0)
    {
        const auto n = static_cast<double>(report.coded);
        report.regions /= n;
        report.subgoals /= n;
        report.verifications /= n;
        report.backtracks /= n;
    }
    if (!traces.empty())
        report.accuracy = static_cast<double>(correct) / static_cast<double>(traces.size());
    return report;
}

auto to_json(const BehaviorReport& report) -> nlohmann::json
{
    return {
        { "traces", report.traces },
        { "coded", report.coded },
        { "regions", report.regions },
        { "subgoals", report.subgoals },
        { "verifications", report.verifications },
        { "backtracks", report.backtracks },
        { "accuracy", report.accuracy },
    };
}

} // namespace gvr::behavior
