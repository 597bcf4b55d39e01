// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <gvr/grammar.hpp>

#include <doctest.h>

using namespace gvr;
using grammar::Failure;
using grammar::TagKind;

namespace
{

auto kinds(std::string_view text) -> std::vector<TagKind>
{
    auto out = std::vector<TagKind> {};
    for (const auto& t: grammar::tokenize_tags(text))
        out.push_back(t.kind);
    return out;
}

const auto raster100 = scene::Raster { 100, 100, {} };
const auto raster1000 = scene::Raster { 1000, 800, {} };

} // namespace

TEST_CASE("tokenizer minimal cases")
{
    CHECK(kinds("<think>a</think>") == std::vector { TagKind::OpenThink, TagKind::TextRun, TagKind::CloseThink });
    CHECK(kinds("<think><think>") == std::vector { TagKind::OpenThink, TagKind::OpenThink });
    CHECK(kinds("<thonk>") == std::vector { TagKind::TextRun });
}

TEST_CASE("tokenizer is total and spans tile the input")
{
    auto rng = Rng { 21 };
    const auto alphabet = std::string("<>/thinkanswertool_callobservation \n(),0123456789");
    for (auto i = 0; i < 100000; ++i)
    {
        auto text = std::string {};
        const auto len = uniform_int(rng, 0, 40);
        for (auto k = 0; k < len; ++k)
        {
            // Half the bytes are arbitrary, half come from the tag alphabet.
            text += bernoulli(rng, 0.5) ? static_cast<char>(uniform_int(rng, 0, 255))
                                        : alphabet[static_cast<std::size_t>(uniform_int(rng, 0, alphabet.size() - 1))];
        }
        const auto toks = grammar::tokenize_tags(text);
        auto pos = std::size_t {0};
        for (const auto& t: toks)
        {
            REQUIRE(t.begin == pos);
            REQUIRE(t.end > t.begin);
            pos = t.end;
        }
        REQUIRE(pos == text.size());
    }
}

TEST_CASE("single-turn validation examples")
{
    CHECK(grammar::validate_single_turn("<think> step (5, 5). </think><answer> A </answer>", raster100).valid);
    const auto bad = grammar::validate_single_turn("<think> step (5, 500). </think><answer> A </answer>", raster100);
    CHECK_FALSE(bad.valid);
    CHECK(bad.failure == Failure::InvalidCoordinate);
    const auto order = grammar::validate_single_turn("<answer> A </answer><think> x </think>", raster100);
    CHECK(order.failure == Failure::OutOfOrder);
    CHECK(grammar::validate_single_turn("  <think> a </think>\n\n<answer> b </answer>  \n", raster100).valid);
    CHECK(grammar::validate_single_turn("<think> a </think><answer> b </answer> extra", raster100).failure
          == Failure::TrailingContent);
    CHECK(grammar::validate_single_turn("<think><think> a </think></think><answer> b </answer>", raster100).failure
          == Failure::MalformedTag);
    CHECK(grammar::validate_single_turn("<think> a </think>", raster100).failure == Failure::MissingAnswer);
}

TEST_CASE("valid report carries no failure")
{
    const auto r = grammar::validate_single_turn("<think> a </think><answer> b </answer>", raster100);
    CHECK(r.valid);
    CHECK_FALSE(r.failure.has_value());
    CHECK_FALSE(r.failure_offset.has_value());
}

TEST_CASE("dialog validation examples")
{
    const auto call = std::string(R"(<tool_call>{"name": "crop", "arguments": {"coordinate": [30, 40]}}</tool_call>)");
    const auto good = "<think> a </think>" + call + "<observation>[image 384x384]</observation><think> b </think><answer> c </answer>";
    CHECK(grammar::validate_dialog(good, raster1000).valid);

    const auto unfinished = grammar::validate_dialog("<think> a </think>" + call, raster1000);
    CHECK(unfinished.failure == Failure::MissingAnswer);

    const auto premature = grammar::validate_dialog("<think> a </think><observation>x</observation>", raster1000);
    CHECK(premature.failure == Failure::PrematureObservation);

    CHECK(grammar::validate_dialog("<think> a </think><answer> c </answer>", raster1000).valid);

    const auto off = R"(<think> a </think><tool_call>{"name": "crop", "arguments": {"coordinate": [3000, 40]}}</tool_call>)";
    CHECK(grammar::validate_dialog(off, raster1000).failure == Failure::InvalidCoordinate);

    const auto wrong_tool = R"(<think> a </think><tool_call>{"name": "zoom", "arguments": {"coordinate": [3, 4]}}</tool_call>)";
    CHECK(grammar::validate_dialog(wrong_tool, raster1000).failure == Failure::MalformedTag);
}

TEST_CASE("coordinate extraction")
{
    CHECK(grammar::extract_coordinates("look at (10, 20) then (30, 40)") == std::vector<Coordinate> { { 10, 20 }, { 30, 40 } });
    CHECK(grammar::extract_coordinates("ratio (3.5, 2)").empty());
    auto rng = Rng { 22 };
    for (auto i = 0; i < 500; ++i)
    {
        const auto trace = support::random_trace(rng);
        auto anchored = std::size_t {0};
        for (const auto& s: trace.steps)
            anchored += s.anchor ? 1 : 0;
        CHECK(grammar::extract_coordinates(render_trace(trace)).size() == anchored);
    }
}

TEST_CASE("answer extraction")
{
    CHECK(grammar::extract_answer("<answer> blue </answer>") == "blue");
    CHECK(grammar::extract_answer("<answer>(40, 40)</answer>") == "(40, 40)");
    CHECK_THROWS_AS((void)grammar::extract_answer("<think> x </think>"), Error);
    try
    {
        (void)grammar::extract_answer("nothing");
    }
    catch (const Error& e)
    {
        CHECK(e.kind() == ErrorKind::MissingAnswer);
    }
}

TEST_CASE("generated dialogs are always accepted")
{
    auto rng = Rng { 23 };
    for (auto i = 0; i < 1000; ++i)
    {
        const auto text = render_dialog(support::random_dialog(rng));
        REQUIRE_MESSAGE(grammar::validate_dialog(text, raster1000).valid, text);
        CHECK(support::expected_failure(support::symbols(text), true) == std::nullopt);
    }
}

TEST_CASE("single-edit mutations are rejected with the right failure kind")
{
    auto rng = Rng { 24 };
    auto rejected = 0;
    auto agreed = 0;
    for (auto i = 0; i < 1000; ++i)
    {
        const auto mutant = support::mutate_tags(render_dialog(support::random_dialog(rng)), rng);
        const auto report = grammar::validate_dialog(mutant, raster1000);
        const auto expected = support::expected_failure(support::symbols(mutant), true);
        if (report.valid)
        {
            // A mutant that still parses must be a valid string by the independent scanner too.
            CHECK_MESSAGE(expected == std::nullopt, mutant);
            continue;
        }
        ++rejected;
        agreed += report.failure == expected ? 1 : 0;
    }
    REQUIRE(rejected > 900);
    CHECK(static_cast<double>(agreed) / rejected >= 0.99);
}

TEST_CASE("single-turn mutations agree with the scanner")
{
    auto rng = Rng { 25 };
    auto rejected = 0;
    auto agreed = 0;
    for (auto i = 0; i < 1000; ++i)
    {
        const auto mutant = support::mutate_tags(render_trace(support::random_trace(rng)), rng);
        const auto report = grammar::validate_single_turn(mutant, raster1000);
        const auto expected = support::expected_failure(support::symbols(mutant), false);
        if (report.valid)
        {
            CHECK(expected == std::nullopt);
            continue;
        }
        ++rejected;
        agreed += report.failure == expected ? 1 : 0;
    }
    CHECK(static_cast<double>(agreed) / rejected >= 0.99);
}

TEST_CASE("crop call body parsing")
{
    CHECK(grammar::parse_tool_call_body(R"({"name": "crop", "arguments": {"coordinate": [1, 2]}})") == Coordinate { 1, 2 });
    CHECK_FALSE(grammar::parse_tool_call_body(R"({"name": "crop", "arguments": {"coordinate": [1.5, 2]}})"));
    CHECK_FALSE(grammar::parse_tool_call_body("not json"));
}
