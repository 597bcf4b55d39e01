// SPDX-License-Identifier: Apache-2.0
#include <gvr/rng.hpp>
#include <gvr/scene.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gvr::scene
{

auto to_string(Shape s) -> const char*
{
    switch (s)
    {
        case Shape::Circle: return "circle";
        case Shape::Square: return "square";
        case Shape::Triangle: return "triangle";
        case Shape::Cross: return "cross";
    }
    return "?";
}

auto to_string(Color c) -> const char*
{
    switch (c)
    {
        case Color::Red: return "red";
        case Color::Green: return "green";
        case Color::Blue: return "blue";
        case Color::Yellow: return "yellow";
        case Color::Purple: return "purple";
        case Color::Orange: return "orange";
        case Color::Cyan: return "cyan";
        case Color::Magenta: return "magenta";
    }
    return "?";
}

auto to_string(Material m) -> const char*
{
    return m == Material::Matte ? "matte" : "glossy";
}

auto parse_color(std::string_view name) -> std::optional<Color>
{
    const auto lowered = to_lower(trim(name));
    for (auto i = 0; i < color_count; ++i)
        if (lowered == to_string(static_cast<Color>(i)))
            return static_cast<Color>(i);
    return std::nullopt;
}

auto fill_rgb(Color c) -> std::array<std::uint8_t, 3>
{
    switch (c)
    {
        case Color::Red: return { 220, 40, 40 };
        case Color::Green: return { 40, 170, 60 };
        case Color::Blue: return { 40, 70, 210 };
        case Color::Yellow: return { 230, 210, 40 };
        case Color::Purple: return { 130, 50, 170 };
        case Color::Orange: return { 240, 140, 30 };
        case Color::Cyan: return { 40, 200, 210 };
        case Color::Magenta: return { 220, 50, 190 };
    }
    return background_rgb;
}

auto to_string(TaskKind kind) -> const char*
{
    switch (kind)
    {
        case TaskKind::MultipleChoice: return "multiple_choice";
        case TaskKind::PointGrounding: return "point_grounding";
        case TaskKind::ActionPrediction: return "action_prediction";
    }
    return "?";
}

auto parse_task_kind(std::string_view name) -> TaskKind
{
    for (auto kind: { TaskKind::MultipleChoice, TaskKind::PointGrounding, TaskKind::ActionPrediction })
        if (name == to_string(kind))
            return kind;
    throw Error(ErrorKind::Parse, "unknown task kind: " + std::string(name));
}

auto Raster::glyph(int id) const -> const PlacedGlyph&
{
    for (const auto& g: glyphs)
        if (g.id == id)
            return g;
    throw Error(ErrorKind::Precondition, "no glyph with id " + std::to_string(id));
}

namespace
{

auto covers(const PlacedGlyph& g, int x, int y) -> bool
{
    if (x < g.x0() || x > g.x1() || y < g.y0() || y > g.y1())
        return false;
    const auto h = g.half();
    const auto dx = x - g.center.x;
    const auto dy = y - g.center.y;
    switch (g.shape)
    {
        case Shape::Square: return true;
        case Shape::Circle: return dx * dx + dy * dy <= h * h;
        case Shape::Triangle:
        {
            // Apex at the top edge, base along the bottom edge.
            const auto row = y - g.y0();
            return 2 * std::abs(dx) <= row;
        }
        case Shape::Cross:
        {
            const auto arm = std::max(1, h / 3);
            return std::abs(dx) <= arm || std::abs(dy) <= arm;
        }
    }
    return false;
}

auto shade(const PlacedGlyph& g, int x, int y) -> std::array<std::uint8_t, 3>
{
    auto rgb = fill_rgb(g.color);
    if (g.material == Material::Glossy && (x - g.center.x) + (y - g.center.y) < -g.half() / 2)
        for (auto& c: rgb)
            c = static_cast<std::uint8_t>((c + 255) / 2);
    return rgb;
}

auto overlaps(const PlacedGlyph& a, const PlacedGlyph& b) -> bool
{
    constexpr auto gap = 1;
    return !(a.x1() + gap < b.x0() || b.x1() + gap < a.x0() || a.y1() + gap < b.y0() || b.y1() + gap < a.y0());
}

auto choose(Rng& rng, int count) -> int
{
    return static_cast<int>(uniform_int(rng, 0, count - 1));
}

const auto action_verbs = std::array<const char*, 3> { "click", "hover", "select" };

auto action_phrase(std::string_view verb) -> std::string
{
    if (verb == "click")
        return "Click";
    if (verb == "hover")
        return "Hover over";
    return "Select";
}

} // namespace

auto pixel_at(const Raster& raster, int x, int y) -> std::array<std::uint8_t, 3>
{
    for (const auto& g: raster.glyphs)
        if (covers(g, x, y))
            return shade(g, x, y);
    return background_rgb;
}

auto rasterize(const Raster& raster) -> std::vector<std::uint8_t>
{
    auto out = std::vector<std::uint8_t>(static_cast<std::size_t>(raster.width) * raster.height * 3);
    for (std::size_t i = 0; i < out.size(); i += 3)
        std::copy(background_rgb.begin(), background_rgb.end(), out.begin() + static_cast<std::ptrdiff_t>(i));
    for (const auto& g: raster.glyphs)
        for (auto y = std::max(0, g.y0()); y <= std::min(raster.height - 1, g.y1()); ++y)
            for (auto x = std::max(0, g.x0()); x <= std::min(raster.width - 1, g.x1()); ++x)
                if (covers(g, x, y))
                {
                    const auto rgb = shade(g, x, y);
                    const auto i = (static_cast<std::size_t>(y) * raster.width + x) * 3;
                    std::copy(rgb.begin(), rgb.end(), out.begin() + static_cast<std::ptrdiff_t>(i));
                }
    return out;
}

auto generate_task(std::uint64_t seed, TaskKind kind, Difficulty difficulty, const SceneConfig& config) -> TaskInstance
{
    if (difficulty.num_glyphs < 2)
        throw Error(ErrorKind::Precondition, "a scene needs at least two glyphs");
    if (difficulty.min_glyph_px < 1)
        throw Error(ErrorKind::Precondition, "glyph size must be positive");
    if (config.width <= 0 || config.height <= 0)
        throw Error(ErrorKind::Precondition, "raster dimensions must be positive");

    auto rng = Rng(derive_seed(seed, static_cast<std::uint64_t>(kind) + 1));
    auto raster = Raster { .width = config.width, .height = config.height, .glyphs = {} };

    const auto target_shape = static_cast<Shape>(choose(rng, shape_count));
    const auto target_material = static_cast<Material>(choose(rng, 2));
    const auto target = choose(rng, difficulty.num_glyphs);

    for (auto id = 0; id < difficulty.num_glyphs; ++id)
    {
        auto glyph = PlacedGlyph {};
        glyph.id = id;
        glyph.size = difficulty.min_glyph_px + choose(rng, config.size_spread + 1);
        glyph.color = static_cast<Color>(choose(rng, color_count));
        if (id == target)
        {
            glyph.shape = target_shape;
            glyph.material = target_material;
        }
        else
        {
            // Any pair except the target's keeps the query unambiguous.
            do
            {
                glyph.shape = static_cast<Shape>(choose(rng, shape_count));
                glyph.material = static_cast<Material>(choose(rng, 2));
            } while (glyph.shape == target_shape && glyph.material == target_material);
        }

        const auto h = glyph.half();
        if (2 * h + 1 > config.width || 2 * h + 1 > config.height)
            throw Error(ErrorKind::PlacementFailure, "glyph larger than the raster");

        auto placed = false;
        for (auto attempt = 0; attempt < config.max_placement_attempts && !placed; ++attempt)
        {
            glyph.center = Coordinate { static_cast<int>(uniform_int(rng, h, config.width - 1 - h)),
                                        static_cast<int>(uniform_int(rng, h, config.height - 1 - h)) };
            placed = std::none_of(raster.glyphs.begin(), raster.glyphs.end(),
                                  [&](const PlacedGlyph& other) { return overlaps(glyph, other); });
        }
        if (!placed)
            throw Error(ErrorKind::PlacementFailure, "could not place glyph " + std::to_string(id) + " after "
                                                         + std::to_string(config.max_placement_attempts)
                                                         + " attempts");
        raster.glyphs.push_back(glyph);
    }

    const auto& t = raster.glyphs[static_cast<std::size_t>(target)];
    const auto noun = std::string("small ") + to_string(t.material) + " " + to_string(t.shape);

    auto task = TaskInstance {};
    task.seed = seed;
    task.kind = kind;
    task.target = target;

    switch (kind)
    {
        case TaskKind::MultipleChoice:
        {
            task.query = "What color is the " + noun + " in the scene?";
            auto colors = std::vector<int> { static_cast<int>(t.color) };
            while (colors.size() < 4)
            {
                const auto c = choose(rng, color_count);
                if (std::find(colors.begin(), colors.end(), c) == colors.end())
                    colors.push_back(c);
            }
            shuffle(std::span(colors), rng);
            for (auto c: colors)
                task.choices.emplace_back(to_string(static_cast<Color>(c)));
            task.answer_key.value = std::string(to_string(t.color));
            break;
        }
        case TaskKind::PointGrounding:
        {
            task.query = "Point to the " + noun + ".";
            const auto pad = config.target_box_padding;
            task.answer_key.value = Box { .x0 = std::max(0, t.x0() - pad),
                                          .y0 = std::max(0, t.y0() - pad),
                                          .x1 = std::min(config.width - 1, t.x1() + pad),
                                          .y1 = std::min(config.height - 1, t.y1() + pad) };
            break;
        }
        case TaskKind::ActionPrediction:
        {
            const auto verb = std::string(action_verbs[static_cast<std::size_t>(choose(rng, 3))]);
            task.query = action_phrase(verb) + " the " + noun + ".";
            task.answer_key.value = ActionKey { .type = verb, .argument = "id_" + std::to_string(t.id) };
            break;
        }
    }
    task.raster = std::move(raster);
    return task;
}

auto crop(const Raster& raster, Coordinate center, int window, int resize) -> ObservationImage
{
    if (!raster.contains(center))
        throw Error(ErrorKind::OutOfBounds, "crop center " + format_coordinate(center) + " outside raster");
    if (window <= 0 || resize <= 0)
        throw Error(ErrorKind::Precondition, "crop window and resize must be positive");

    auto image = ObservationImage {};
    image.width = resize;
    image.height = resize;
    image.center = center;
    image.source_width = std::min(window, raster.width);
    image.source_height = std::min(window, raster.height);
    // Shift, never shrink, a window that would leave the raster.
    image.source_x0 = std::clamp(center.x - window / 2, 0, raster.width - image.source_width);
    image.source_y0 = std::clamp(center.y - window / 2, 0, raster.height - image.source_height);

    // Sample each source pixel once, then map output pixels by nearest neighbour.
    const auto sw = image.source_width;
    const auto sh = image.source_height;
    auto source = std::vector<std::array<std::uint8_t, 3>>(static_cast<std::size_t>(sw) * sh);
    for (auto y = 0; y < sh; ++y)
        for (auto x = 0; x < sw; ++x)
            source[static_cast<std::size_t>(y) * sw + x] = pixel_at(raster, image.source_x0 + x, image.source_y0 + y);

    auto column = std::vector<int>(static_cast<std::size_t>(resize));
    for (auto u = 0; u < resize; ++u)
        column[static_cast<std::size_t>(u)] = static_cast<int>((2LL * u + 1) * sw / (2LL * resize));

    image.rgb.resize(static_cast<std::size_t>(resize) * resize * 3);
    auto* out = image.rgb.data();
    for (auto v = 0; v < resize; ++v)
    {
        const auto row = static_cast<int>((2LL * v + 1) * sh / (2LL * resize));
        for (auto u = 0; u < resize; ++u)
        {
            const auto& px = source[static_cast<std::size_t>(row) * sw + column[static_cast<std::size_t>(u)]];
            *out++ = px[0];
            *out++ = px[1];
            *out++ = px[2];
        }
    }
    return image;
}

auto oracle_answer(const TaskInstance& task) -> AnswerKey
{
    return task.answer_key;
}

auto answer_key_text(const AnswerKey& key) -> std::string
{
    if (const auto* label = std::get_if<std::string>(&key.value))
        return *label;
    if (const auto* box = std::get_if<Box>(&key.value))
        return "(" + std::to_string(box->x0) + ", " + std::to_string(box->y0) + ", " + std::to_string(box->x1) + ", "
               + std::to_string(box->y1) + ")";
    const auto& action = std::get<ActionKey>(key.value);
    return action.type + " " + action.argument;
}

auto describe_glyph(const PlacedGlyph& glyph) -> std::string
{
    return std::string(to_string(glyph.color)) + " " + to_string(glyph.material) + " " + to_string(glyph.shape) + " #"
           + std::to_string(glyph.id);
}

auto describe_region(const Raster& raster, Coordinate p, double radius) -> std::string
{
    if (!raster.contains(p))
        throw Error(ErrorKind::OutOfBounds, "region center " + format_coordinate(p) + " outside raster");

    auto near = std::vector<std::pair<double, const PlacedGlyph*>> {};
    for (const auto& g: raster.glyphs)
    {
        const auto d = distance(g.center, p);
        if (d <= radius)
            near.emplace_back(d, &g);
    }
    if (near.empty())
        return "empty region";
    std::sort(near.begin(), near.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first < b.first : a.second->id < b.second->id;
    });

    auto out = std::string {};
    for (const auto& [d, g]: near)
    {
        if (!out.empty())
            out += "; ";
        out += describe_glyph(*g);
    }
    return out;
}

auto to_json(const Raster& raster) -> nlohmann::json
{
    auto glyphs = nlohmann::json::array();
    for (const auto& g: raster.glyphs)
        glyphs.push_back({
            { "id", g.id },
            { "center", { g.center.x, g.center.y } },
            { "size", g.size },
            { "shape", to_string(g.shape) },
            { "color", to_string(g.color) },
            { "material", to_string(g.material) },
        });
    return { { "width", raster.width }, { "height", raster.height }, { "glyphs", glyphs } };
}

namespace
{

template <typename Enum, int Count>
auto parse_enum(const std::string& name, const char* what) -> Enum
{
    for (auto i = 0; i < Count; ++i)
        if (name == to_string(static_cast<Enum>(i)))
            return static_cast<Enum>(i);
    throw Error(ErrorKind::Parse, std::string("unknown ") + what + ": " + name);
}

} // namespace

auto raster_from_json(const nlohmann::json& j) -> Raster
{
    auto raster = Raster { .width = j.at("width").get<int>(), .height = j.at("height").get<int>(), .glyphs = {} };
    for (const auto& g: j.at("glyphs"))
    {
        raster.glyphs.push_back(PlacedGlyph {
            .id = g.at("id").get<int>(),
            .center = Coordinate { g.at("center").at(0).get<int>(), g.at("center").at(1).get<int>() },
            .size = g.at("size").get<int>(),
            .shape = parse_enum<Shape, shape_count>(g.at("shape").get<std::string>(), "shape"),
            .color = parse_enum<Color, color_count>(g.at("color").get<std::string>(), "color"),
            .material = parse_enum<Material, 2>(g.at("material").get<std::string>(), "material"),
        });
    }
    return raster;
}

auto to_json(const AnswerKey& key) -> nlohmann::json
{
    if (const auto* label = std::get_if<std::string>(&key.value))
        return { { "choice", *label } };
    if (const auto* box = std::get_if<Box>(&key.value))
        return { { "box", { box->x0, box->y0, box->x1, box->y1 } } };
    const auto& action = std::get<ActionKey>(key.value);
    return { { "action", { { "type", action.type }, { "argument", action.argument } } } };
}

auto answer_key_from_json(const nlohmann::json& j) -> AnswerKey
{
    if (j.contains("choice"))
        return AnswerKey { j.at("choice").get<std::string>() };
    if (j.contains("box"))
    {
        const auto& b = j.at("box");
        return AnswerKey { Box { b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>() } };
    }
    const auto& a = j.at("action");
    return AnswerKey { ActionKey { a.at("type").get<std::string>(), a.at("argument").get<std::string>() } };
}

auto to_json(const TaskInstance& task) -> nlohmann::json
{
    return {
        { "seed", task.seed },
        { "kind", to_string(task.kind) },
        { "query", task.query },
        { "choices", task.choices },
        { "answer_key", to_json(task.answer_key) },
        { "target", task.target },
        { "raster", to_json(task.raster) },
    };
}

auto task_from_json(const nlohmann::json& j) -> TaskInstance
{
    try
    {
        auto task = TaskInstance {};
        task.seed = j.at("seed").get<std::uint64_t>();
        task.kind = parse_task_kind(j.at("kind").get<std::string>());
        task.query = j.at("query").get<std::string>();
        task.choices = j.at("choices").get<std::vector<std::string>>();
        task.answer_key = answer_key_from_json(j.at("answer_key"));
        task.target = j.at("target").get<int>();
        task.raster = raster_from_json(j.at("raster"));
        return task;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw Error(ErrorKind::Parse, std::string("malformed task record: ") + e.what());
    }
}

void write_tasks(const std::filesystem::path& path, const std::vector<TaskInstance>& tasks)
{
    auto out = std::ofstream(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
    for (const auto& t: tasks)
        out << to_json(t).dump() << '\n';
    if (!out)
        throw Error(ErrorKind::Io, "failed writing " + path.string());
}

auto read_tasks(const std::filesystem::path& path) -> std::vector<TaskInstance>
{
    auto in = std::ifstream(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::Io, "cannot open task file " + path.string());
    auto tasks = std::vector<TaskInstance> {};
    auto line = std::string {};
    while (std::getline(in, line))
    {
        if (trim(line).empty())
            continue;
        try
        {
            tasks.push_back(task_from_json(nlohmann::json::parse(line)));
        }
        catch (const nlohmann::json::parse_error& e)
        {
            throw Error(ErrorKind::Parse, "bad JSON in " + path.string() + ": " + e.what());
        }
    }
    return tasks;
}

} // namespace gvr::scene
