// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <gvr/behavior.hpp>
#include <gvr/distill.hpp>
#include <gvr/search.hpp>

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace gvr;
using namespace gvr::behavior;

namespace
{

auto read_file(const std::filesystem::path& p) -> std::string
{
    auto in = std::ifstream(p);
    auto ss = std::stringstream {};
    ss << in.rdbuf();
    return ss.str();
}

// Splits free text into sentence steps; each step keeps its first coordinate as the anchor.
auto trace_from_text(const std::string& text) -> ReasonTrace
{
    auto trace = ReasonTrace {};
    auto sentence = std::string {};
    const auto flush = [&] {
        const auto coords = scan_coordinates(sentence);
        auto stripped = std::string {};
        auto pos = std::size_t {0};
        for (const auto& m: coords)
        {
            stripped += sentence.substr(pos, m.offset - pos);
            pos = m.offset + m.length;
        }
        stripped += sentence.substr(pos);
        const auto body = trim(stripped);
        if (!body.empty())
            trace.steps.push_back({ body, coords.empty() ? std::nullopt : std::optional(coords.front().value) });
        sentence.clear();
    };
    for (const auto c: text)
    {
        if (c == '\n')
            continue;
        sentence += c;
        if (c == '.')
            flush();
    }
    flush();
    trace.answer = "done";
    return trace;
}

// Greedy clustering: an anchor opens a region when it is far from every region opened so far.
auto greedy_regions(const std::vector<Coordinate>& pts, double min_sep) -> int
{
    auto centers = std::vector<Coordinate> {};
    for (const auto& p: pts)
    {
        const auto far = std::all_of(centers.begin(), centers.end(), [&](const Coordinate& c) {
            return std::hypot(static_cast<double>(p.x - c.x), static_cast<double>(p.y - c.y)) >= min_sep;
        });
        if (far)
            centers.push_back(p);
    }
    return static_cast<int>(centers.size());
}

auto with_steps(std::vector<GroundedStep> steps, std::optional<double> reward = 1.0) -> ReasonTrace
{
    return ReasonTrace { std::move(steps), "x", reward };
}

} // namespace

TEST_CASE("region clustering")
{
    CHECK(count_regions(with_steps({ { "a", Coordinate { 10, 10 } }, { "b", Coordinate { 200, 200 } }, { "c", Coordinate { 12, 11 } } }))
          == 2);
    CHECK(count_regions(with_steps({ { "a", std::nullopt } })) == 0);
    auto rng = Rng { 81 };
    for (auto i = 0; i < 500; ++i)
    {
        const auto t = support::random_trace(rng, 60, 60);
        auto anchors = std::vector<Coordinate> {};
        for (const auto& s: t.steps)
            if (s.anchor)
                anchors.push_back(*s.anchor);
        CHECK(count_regions(t) == greedy_regions(anchors, 10.0));
        CHECK(count_regions(t) <= static_cast<int>(t.steps.size()));
    }
}

TEST_CASE("grounded subgoals in the reference warm-start trace")
{
    const auto text = read_file(std::filesystem::path(GVR_TEST_DATA_DIR) / "warm_start_trace.txt");
    REQUIRE(text.find("Now I will check") != std::string::npos);
    const auto trace = trace_from_text(text);
    CHECK(count_subgoals(trace) >= 2);
    CHECK(count_verifications(trace) >= 1);
    CHECK(count_backtracks(trace) == 0);
}

TEST_CASE("empty think block codes to zero")
{
    const auto empty = with_steps({});
    CHECK(count_regions(empty) == 0);
    CHECK(count_subgoals(empty) == 0);
    CHECK(count_verifications(empty) == 0);
    CHECK(count_backtracks(empty) == 0);
}

TEST_CASE("lexicon matching")
{
    const auto lex = Lexicon::parse("# comment\n\nnow i will\nfirst ... then\nwait, this seems off\n");
    CHECK(lex.phrases().size() == 3);
    CHECK(lex.count("NOW I WILL look") == 1);
    CHECK(lex.count("snow i willow") == 0);
    CHECK(lex.count("First the left. Then the right.") == 0);
    CHECK(lex.count("First the left, then the right.") == 1);
    CHECK(lex.count("Wait, this seems off. Let's try something else.") == 1);
    CHECK(lex.count("Now I will check. Now I will look.") == 2);
    try
    {
        (void)Lexicon::load("/nonexistent/lexicon.txt");
        FAIL("expected Io");
    }
    catch (const Error& e)
    {
        CHECK(e.kind() == ErrorKind::Io);
    }
}

TEST_CASE("backtrack counting on distilled chains")
{
    const auto corrected = with_steps({ { "Now I will check this region", Coordinate { 1, 1 } },
                                        { std::string(backtrack_phrase), std::nullopt },
                                        { "I can confirm what is here", Coordinate { 50, 50 } } });
    CHECK(count_backtracks(corrected) == 1);
    auto shouted = corrected;
    shouted.steps[1].text = to_lower(shouted.steps[1].text);
    CHECK(count_backtracks(shouted) == 1);
    const auto direct = with_steps({ { "Now I will check this region", Coordinate { 1, 1 } } });
    CHECK(count_backtracks(direct) == 0);
}

TEST_CASE("counts ignore coordinates")
{
    auto rng = Rng { 82 };
    const auto phrases = std::vector<std::string> { "Now I will check the glyph", "I can confirm the colour",
                                                    std::string(backtrack_phrase), "First the left, then the right",
                                                    "scan the region" };
    for (auto i = 0; i < 300; ++i)
    {
        auto t = with_steps({});
        const auto n = uniform_int(rng, 1, 6);
        for (auto k = 0; k < n; ++k)
            t.steps.push_back({ phrases[static_cast<std::size_t>(uniform_int(rng, 0, phrases.size() - 1))],
                                support::random_point(rng, 1000, 800) });
        auto moved = t;
        for (auto& s: moved.steps)
            s.anchor = support::random_point(rng, 1000, 800);
        const auto judge = LexiconJudge {};
        const auto a = judge.code(t);
        const auto b = judge.code(moved);
        CHECK(a.subgoals == b.subgoals);
        CHECK(a.verifications == b.verifications);
        CHECK(a.backtracks == b.backtracks);
        CHECK(a == judge.code(t));
        CHECK(a.regions >= 0);
        CHECK(a.subgoals >= 0);
    }
}

TEST_CASE("behavior report aggregation")
{
    const auto judge = LexiconJudge {};
    const auto t1 = with_steps({ { "Now I will check this region", Coordinate { 1, 1 } },
                                 { "I can confirm what is here", Coordinate { 100, 100 } } });
    const auto single = behavior_report(std::vector { t1 }, judge);
    const auto c1 = judge.code(t1);
    CHECK(single.coded == 1);
    CHECK(single.regions == c1.regions);
    CHECK(single.subgoals == c1.subgoals);
    CHECK(single.verifications == c1.verifications);
    CHECK(single.backtracks == c1.backtracks);
    CHECK(single.accuracy == 1.0);

    // Sums over a concatenation equal the sums of the parts.
    const auto t2 = with_steps({ { std::string(backtrack_phrase), std::nullopt }, { "Let me verify this spot", Coordinate { 9, 9 } } });
    const auto t3 = with_steps({ { "I see a glyph here", Coordinate { 5, 5 } } });
    const auto a = behavior_report(std::vector { t1, t2 }, judge);
    const auto b = behavior_report(std::vector { t3 }, judge);
    const auto ab = behavior_report(std::vector { t1, t2, t3 }, judge);
    CHECK(ab.subgoals * 3 == doctest::Approx(a.subgoals * 2 + b.subgoals));
    CHECK(ab.backtracks * 3 == doctest::Approx(a.backtracks * 2 + b.backtracks));
    CHECK(ab.regions * 3 == doctest::Approx(a.regions * 2 + b.regions));

    // Only correct traces are coded unless the filter is lifted; accuracy counts all traces.
    const auto wrong = with_steps({ { std::string(backtrack_phrase), std::nullopt } }, 0.0);
    const auto filtered = behavior_report(std::vector { t1, wrong }, judge);
    CHECK(filtered.traces == 2);
    CHECK(filtered.coded == 1);
    CHECK(filtered.backtracks == 0.0);
    CHECK(filtered.accuracy == 0.5);
    const auto all = behavior_report(std::vector { t1, wrong }, judge, { false, 1.0 });
    CHECK(all.coded == 2);
    CHECK(all.backtracks == 0.5);

    CHECK_THROWS_AS((void)behavior_report(std::vector { with_steps({}, std::nullopt) }, judge), Error);
    const auto j = to_json(ab);
    for (const auto* key: { "regions", "subgoals", "verifications", "backtracks", "accuracy" })
        CHECK(j.contains(key));
}

TEST_CASE("corrected chains carry more backtracks than direct chains")
{
    auto direct = std::vector<ReasonTrace> {};
    auto corrected = std::vector<ReasonTrace> {};
    for (std::uint64_t s = 0; s < 30; ++s)
    {
        const auto task = scene::generate_task(s, scene::TaskKind::MultipleChoice, {});
        auto teacher = search::ScriptedTeacher({});
        const auto tree = search::run_search(task, teacher, search::oracle_verifier(), {}, s);
        for (auto c: distill::distill_tree(tree))
        {
            c.trace.reward = 1.0;
            (c.provenance == distill::Provenance::Corrected ? corrected : direct).push_back(c.trace);
        }
    }
    REQUIRE_FALSE(corrected.empty());
    REQUIRE_FALSE(direct.empty());
    const auto judge = LexiconJudge {};
    const auto rc = behavior_report(corrected, judge);
    const auto rd = behavior_report(direct, judge);
    CHECK(rc.backtracks == 1.0);
    CHECK(rd.backtracks == 0.0);
    CHECK(rc.backtracks > rd.backtracks);
}
