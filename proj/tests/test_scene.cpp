// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <gvr/scene.hpp>

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace gvr;
using namespace gvr::scene;

namespace
{

constexpr auto all_kinds = std::array { TaskKind::MultipleChoice, TaskKind::PointGrounding, TaskKind::ActionPrediction };

// Nearest-neighbour oracle: output pixel u samples the source pixel under its centre.
auto expected_pixel(const Raster& r, const ObservationImage& img, int u, int v) -> std::array<std::uint8_t, 3>
{
    const auto sx = static_cast<int>(std::floor((u + 0.5) * img.source_width / img.width));
    const auto sy = static_cast<int>(std::floor((v + 0.5) * img.source_height / img.height));
    return pixel_at(r, img.source_x0 + sx, img.source_y0 + sy);
}

auto boxes_overlap(const PlacedGlyph& a, const PlacedGlyph& b) -> bool
{
    return a.x0() <= b.x1() && b.x0() <= a.x1() && a.y0() <= b.y1() && b.y0() <= a.y1();
}

} // namespace

TEST_CASE("generation is deterministic")
{
    const auto a = generate_task(7, TaskKind::MultipleChoice, { 6, 4 });
    const auto b = generate_task(7, TaskKind::MultipleChoice, { 6, 4 });
    CHECK(a == b);
    CHECK(to_json(a).dump() == to_json(b).dump());
    CHECK(a.choices.size() == 4);
    CHECK(a.query.rfind("What color is the small", 0) == 0);
    CHECK(to_json(generate_task(8, TaskKind::MultipleChoice, { 6, 4 })).dump() != to_json(a).dump());
}

TEST_CASE("a single glyph is rejected")
{
    CHECK_THROWS_AS((void)generate_task(7, TaskKind::MultipleChoice, { 1, 4 }), Error);
}

TEST_CASE("impossible placement reports a placement failure")
{
    try
    {
        (void)generate_task(1, TaskKind::MultipleChoice, { 40, 300 });
        FAIL("expected a placement failure");
    }
    catch (const Error& e)
    {
        CHECK(e.kind() == ErrorKind::PlacementFailure);
    }
}

TEST_CASE("generated tasks satisfy the structural invariants")
{
    for (std::uint64_t seed = 0; seed < 150; ++seed)
    {
        for (const auto kind: all_kinds)
        {
            const auto t = generate_task(seed, kind, {});
            const auto& g = t.raster.glyphs;
            for (std::size_t i = 0; i < g.size(); ++i)
            {
                CHECK(g[i].x0() >= 0);
                CHECK(g[i].y0() >= 0);
                CHECK(g[i].x1() < t.raster.width);
                CHECK(g[i].y1() < t.raster.height);
                for (std::size_t j = 0; j < i; ++j)
                    CHECK_FALSE(boxes_overlap(g[i], g[j]));
            }
            CHECK(oracle_answer(t) == t.answer_key);
            const auto& target = t.raster.glyph(t.target);
            switch (kind)
            {
                case TaskKind::MultipleChoice:
                {
                    REQUIRE(t.choices.size() >= 2);
                    const auto& key = std::get<std::string>(t.answer_key.value);
                    CHECK(std::count(t.choices.begin(), t.choices.end(), key) == 1);
                    // Brute-force uniqueness: the query's (material, shape) names one glyph.
                    auto matches = 0;
                    for (const auto& other: g)
                    {
                        const auto phrase = std::string(to_string(other.material)) + " " + to_string(other.shape);
                        matches += t.query.find(" " + phrase + " ") != std::string::npos ? 1 : 0;
                    }
                    CHECK(matches == 1);
                    auto consistent = 0;
                    for (const auto& c: t.choices)
                        consistent += c == to_string(target.color) ? 1 : 0;
                    CHECK(consistent == 1);
                    break;
                }
                case TaskKind::PointGrounding:
                {
                    const auto& box = std::get<Box>(t.answer_key.value);
                    CHECK(box.x0 < box.x1);
                    CHECK(box.y0 < box.y1);
                    CHECK(box.x0 >= 0);
                    CHECK(box.y0 >= 0);
                    CHECK(box.x1 < t.raster.width);
                    CHECK(box.y1 < t.raster.height);
                    CHECK(box.contains(target.center));
                    break;
                }
                case TaskKind::ActionPrediction:
                {
                    const auto& key = std::get<ActionKey>(t.answer_key.value);
                    CHECK_FALSE(key.type.empty());
                    CHECK(key.argument == "id_" + std::to_string(target.id));
                    break;
                }
            }
        }
    }
}

TEST_CASE("small-object regime")
{
    const auto t = generate_task(3, TaskKind::PointGrounding, {});
    for (const auto& g: t.raster.glyphs)
        CHECK(static_cast<double>(g.size) * g.size < 0.001 * t.raster.width * t.raster.height);
}

TEST_CASE("crop near the corner shifts the window")
{
    const auto t = generate_task(5, TaskKind::MultipleChoice, {});
    const auto img = crop(t.raster, { 50, 50 }, 100, 384);
    CHECK(img.width == 384);
    CHECK(img.height == 384);
    CHECK(img.source_x0 == 0);
    CHECK(img.source_y0 == 0);
    CHECK(img.source_width == 100);
    CHECK(img.source_height == 100);
    for (auto v = 0; v < 384; v += 7)
        for (auto u = 0; u < 384; u += 5)
            CHECK(img.pixel(u, v) == expected_pixel(t.raster, img, u, v));
}

TEST_CASE("full-raster crop equals the resized raster")
{
    const auto t = generate_task(6, TaskKind::MultipleChoice, {});
    const auto img = crop(t.raster, { 500, 400 }, 1000, 200);
    CHECK(img.source_x0 == 0);
    CHECK(img.source_y0 == 0);
    CHECK(img.source_width == 1000);
    CHECK(img.source_height == 800);
    for (auto v = 0; v < 200; ++v)
        for (auto u = 0; u < 200; ++u)
            REQUIRE(img.pixel(u, v) == expected_pixel(t.raster, img, u, v));
}

TEST_CASE("nearby crops overlap")
{
    const auto t = generate_task(9, TaskKind::MultipleChoice, {});
    for (const auto c: { Coordinate { 300, 300 }, Coordinate { 2, 2 }, Coordinate { 997, 797 } })
    {
        const auto a = crop(t.raster, c, 100, 384);
        const auto b = crop(t.raster, { std::min(c.x + 5, 999), c.y }, 100, 384);
        CHECK(support::overlap_fraction(a.source_x0, a.source_y0, b.source_x0, b.source_y0, 100) >= 0.9);
    }
}

TEST_CASE("crop size holds across a corner sweep")
{
    const auto t = generate_task(10, TaskKind::MultipleChoice, {});
    for (const auto x: { 0, 1, 49, 50, 500, 949, 950, 998, 999 })
        for (const auto y: { 0, 1, 49, 50, 400, 749, 750, 798, 799 })
        {
            const auto img = crop(t.raster, { x, y }, 100, 64);
            CHECK(img.width == 64);
            CHECK(img.height == 64);
            CHECK(img.rgb.size() == 64u * 64u * 3u);
            CHECK(img.source_x0 >= 0);
            CHECK(img.source_y0 >= 0);
            CHECK(img.source_x0 + img.source_width <= 1000);
            CHECK(img.source_y0 + img.source_height <= 800);
        }
}

TEST_CASE("crop rejects out-of-bounds centres")
{
    const auto t = generate_task(10, TaskKind::MultipleChoice, {});
    try
    {
        (void)crop(t.raster, { 1000, 10 }, 100, 384);
        FAIL("expected OutOfBounds");
    }
    catch (const Error& e)
    {
        CHECK(e.kind() == ErrorKind::OutOfBounds);
    }
    CHECK_THROWS_AS((void)crop(t.raster, { 10, 10 }, 0, 384), Error);
}

TEST_CASE("describe_region")
{
    const auto t = generate_task(11, TaskKind::MultipleChoice, {});
    for (const auto& g: t.raster.glyphs)
        CHECK(describe_region(t.raster, g.center, 30.0).rfind(describe_glyph(g), 0) == 0);

    auto empty = Raster { 100, 100, {} };
    CHECK(describe_region(empty, { 5, 5 }, 30.0) == "empty region");

    auto rng = Rng { 41 };
    for (auto i = 0; i < 100; ++i)
    {
        auto shuffled = t.raster;
        shuffle(std::span(shuffled.glyphs), rng);
        const auto p = support::random_point(rng, 1000, 800);
        CHECK(describe_region(shuffled, p, 400.0) == describe_region(t.raster, p, 400.0));
    }
}

TEST_CASE("task JSON round trip and dataset file")
{
    auto tasks = std::vector<TaskInstance> {};
    for (const auto kind: all_kinds)
        tasks.push_back(generate_task(12, kind, {}));
    for (const auto& t: tasks)
        CHECK(task_from_json(to_json(t)) == t);

    const auto dir = std::filesystem::temp_directory_path() / "gvr_scene_test";
    std::filesystem::create_directories(dir);
    write_tasks(dir / "tasks.jsonl", tasks);
    CHECK(read_tasks(dir / "tasks.jsonl") == tasks);
    const auto j = to_json(tasks[0]);
    for (const auto* key: { "seed", "kind", "query", "choices", "answer_key", "raster" })
        CHECK(j.contains(key));

    write_png(dir / "scene.png", tasks[0].raster);
    CHECK(std::filesystem::file_size(dir / "scene.png") > 8);
    auto in = std::ifstream(dir / "scene.png", std::ios::binary);
    auto magic = std::string(8, '\0');
    in.read(magic.data(), 8);
    CHECK(magic == std::string("\x89PNG\r\n\x1a\n", 8));
    std::filesystem::remove_all(dir);

    try
    {
        (void)read_tasks(dir / "missing.jsonl");
        FAIL("expected Io");
    }
    catch (const Error& e)
    {
        CHECK(e.kind() == ErrorKind::Io);
    }
}
