// SPDX-License-Identifier: Apache-2.0
#include <gvr/config.hpp>
#include <gvr/error.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace gvr
{

namespace
{

auto parse_error(std::string_view key, std::string_view value, std::string_view expected) -> Error
{
    return Error(ErrorKind::Parse,
                 "config key '" + std::string(key) + "': expected " + std::string(expected) + ", got '"
                     + std::string(value) + "'");
}

auto unquote(std::string_view value) -> std::string
{
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
        return std::string(value.substr(1, value.size() - 2));
    return std::string(value);
}

template <typename Int> auto parse_int(std::string_view key, std::string_view value) -> Int
{
    auto out = Int {};
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc {} || ptr != value.data() + value.size())
        throw parse_error(key, value, "an integer");
    return out;
}

auto parse_real(std::string_view key, std::string_view value) -> double
{
    auto out = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc {} || ptr != value.data() + value.size() || !std::isfinite(out))
        throw parse_error(key, value, "a real number");
    return out;
}

auto parse_bool(std::string_view key, std::string_view value) -> bool
{
    if (value == "true")
        return true;
    if (value == "false")
        return false;
    throw parse_error(key, value, "true or false");
}

// Shortest text that parses back to the same double.
auto format_real(double v) -> std::string
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    auto out = std::string(buf, ptr);
    if (out.find_first_of(".eE") == std::string::npos)
        out += ".0";
    return out;
}

struct Binding
{
    std::string key;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<nlohmann::json(const RunConfig&)> get;
};

template <typename Int> auto int_field(std::string key, Int RunConfig::*field) -> Binding
{
    return { key, [key, field](RunConfig& c, std::string_view v) { c.*field = parse_int<Int>(key, v); },
             [field](const RunConfig& c) { return nlohmann::json(c.*field); } };
}

template <typename Member, typename Int>
auto nested_int(std::string key, Member RunConfig::*outer, Int Member::*inner) -> Binding
{
    return { key, [key, outer, inner](RunConfig& c, std::string_view v) { c.*outer.*inner = parse_int<Int>(key, v); },
             [outer, inner](const RunConfig& c) { return nlohmann::json(c.*outer.*inner); } };
}

auto real_field(std::string key, double RunConfig::*field) -> Binding
{
    return { key, [key, field](RunConfig& c, std::string_view v) { c.*field = parse_real(key, v); },
             [field](const RunConfig& c) { return nlohmann::json(c.*field); } };
}

template <typename Member> auto nested_real(std::string key, Member RunConfig::*outer, double Member::*inner) -> Binding
{
    return { key, [key, outer, inner](RunConfig& c, std::string_view v) { c.*outer.*inner = parse_real(key, v); },
             [outer, inner](const RunConfig& c) { return nlohmann::json(c.*outer.*inner); } };
}

auto bool_field(std::string key, bool RunConfig::*field) -> Binding
{
    return { key, [key, field](RunConfig& c, std::string_view v) { c.*field = parse_bool(key, v); },
             [field](const RunConfig& c) { return nlohmann::json(c.*field); } };
}

// Both GRPO tables share their key names under different sections.
void grpo_fields(std::vector<Binding>& out, const std::string& section, optim::GrpoConfig RunConfig::*table)
{
    using G = optim::GrpoConfig;
    out.push_back(nested_int(section + ".group_size", table, &G::group_size));
    out.push_back(nested_real(section + ".clip_ratio", table, &G::clip_ratio));
    out.push_back(nested_real(section + ".kl_coeff", table, &G::kl_coeff));
    out.push_back(nested_real(section + ".learning_rate", table, &G::learning_rate));
    out.push_back(nested_real(section + ".max_grad_norm", table, &G::max_grad_norm));
    out.push_back(nested_real(section + ".temperature", table, &G::rollout_temperature));
    out.push_back(nested_real(section + ".top_p", table, &G::top_p));
}

auto bindings() -> const std::vector<Binding>&
{
    static const auto table = [] {
        auto b = std::vector<Binding> {};
        b.push_back(int_field("run.seed", &RunConfig::seed));
        b.push_back(int_field("run.workers", &RunConfig::workers));
        b.push_back({ "run.mode", [](RunConfig& c, std::string_view v) { c.mode = parse_dialog_mode(unquote(v)); },
                      [](const RunConfig& c) { return nlohmann::json(to_string(c.mode)); } });

        b.push_back({ "tasks.kind", [](RunConfig& c, std::string_view v) { c.kind = scene::parse_task_kind(unquote(v)); },
                      [](const RunConfig& c) { return nlohmann::json(scene::to_string(c.kind)); } });
        b.push_back(int_field("tasks.first_seed", &RunConfig::first_seed));
        b.push_back(int_field("tasks.count", &RunConfig::count));
        b.push_back(nested_int("tasks.num_glyphs", &RunConfig::difficulty, &scene::Difficulty::num_glyphs));
        b.push_back(nested_int("tasks.min_glyph_px", &RunConfig::difficulty, &scene::Difficulty::min_glyph_px));

        using S = search::SearchConfig;
        b.push_back(nested_int("search.simulations", &RunConfig::search, &S::simulations));
        b.push_back(nested_int("search.max_depth", &RunConfig::search, &S::max_depth));
        b.push_back(nested_int("search.rollouts_per_node", &RunConfig::search, &S::rollouts_per_node));
        b.push_back(nested_int("search.children_per_expansion", &RunConfig::search, &S::children_per_expansion));
        b.push_back(nested_real("search.c_puct", &RunConfig::search, &S::c_puct));
        b.push_back(nested_int("search.rollout_depth_limit", &RunConfig::search, &S::rollout_depth_limit));
        b.push_back(nested_real("search.temperature", &RunConfig::search, &S::temperature));

        using T = search::TeacherConfig;
        b.push_back(nested_real("teacher.p_relevant", &RunConfig::teacher, &T::p_relevant));
        b.push_back(nested_real("teacher.answer_base", &RunConfig::teacher, &T::answer_base));
        b.push_back(nested_real("teacher.answer_slope", &RunConfig::teacher, &T::answer_slope));

        b.push_back(nested_int("distill.max_corrected_per_tree", &RunConfig::distill,
                               &distill::DistillConfig::max_corrected_per_tree));

        using F = optim::SftConfig;
        b.push_back(nested_int("sft.epochs", &RunConfig::sft, &F::epochs));
        b.push_back(nested_real("sft.learning_rate", &RunConfig::sft, &F::learning_rate));
        b.push_back(nested_int("sft.batch_size", &RunConfig::sft, &F::batch_size));

        b.push_back(int_field("grpo.iterations", &RunConfig::iterations));
        b.push_back(int_field("grpo.tasks_per_iteration", &RunConfig::tasks_per_iteration));
        b.push_back(int_field("grpo.max_tokens", &RunConfig::max_tokens));
        grpo_fields(b, "grpo", &RunConfig::grpo);

        grpo_fields(b, "multiturn", &RunConfig::multiturn);
        b.push_back(nested_int("multiturn.max_turns", &RunConfig::multiturn, &optim::GrpoConfig::max_turns));
        b.push_back(int_field("multiturn.max_tokens_per_turn", &RunConfig::max_tokens_per_turn));
        b.push_back(nested_int("multiturn.crop_size", &RunConfig::crop, &distill::CropConfig::window));
        b.push_back(nested_int("multiturn.crop_resize", &RunConfig::crop, &distill::CropConfig::resize));
        b.push_back(bool_field("multiturn.diversity_bonus", &RunConfig::diversity_bonus));

        using W = rewards::RewardWeights;
        using D = rewards::DiversityRule;
        b.push_back(nested_real("rewards.lambda_fmt", &RunConfig::weights, &W::lambda_fmt));
        b.push_back(nested_real("rewards.lambda_task", &RunConfig::weights, &W::lambda_task));
        b.push_back(nested_real("rewards.diversity_bonus", &RunConfig::diversity, &D::bonus));
        b.push_back(nested_real("rewards.diversity_min_distance", &RunConfig::diversity, &D::min_distance_px));
        b.push_back(nested_int("rewards.diversity_max_awards", &RunConfig::diversity, &D::max_awards));

        b.push_back(real_field("eval.temperature", &RunConfig::eval_temperature));
        b.push_back(real_field("eval.top_p", &RunConfig::eval_top_p));

        b.push_back({ "behavior.lexicon_dir",
                      [](RunConfig& c, std::string_view v) { c.lexicon_dir = unquote(v); },
                      [](const RunConfig& c) { return nlohmann::json(c.lexicon_dir); } });
        b.push_back(bool_field("behavior.correct_only", &RunConfig::correct_only));
        b.push_back(real_field("behavior.min_separation", &RunConfig::min_separation));
        return b;
    }();
    return table;
}

} // namespace

void RunConfig::validate() const
{
    const auto require = [](bool ok, const char* what) {
        if (!ok)
            throw Error(ErrorKind::Precondition, what);
    };
    require(workers >= 1, "run.workers must be at least 1");
    require(count >= 0, "tasks.count must be non-negative");
    require(difficulty.num_glyphs >= 1 && difficulty.min_glyph_px >= 1, "tasks difficulty must be positive");
    search.validate();
    require(teacher.p_relevant >= 0.0 && teacher.p_relevant <= 1.0, "teacher.p_relevant must lie in [0, 1]");
    require(distill.max_corrected_per_tree >= 0, "distill.max_corrected_per_tree must be non-negative");
    require(sft.epochs >= 0 && sft.batch_size >= 1 && sft.learning_rate >= 0.0, "invalid sft settings");
    require(iterations >= 0 && tasks_per_iteration >= 1 && max_tokens >= 1, "invalid grpo loop settings");
    grpo.validate();
    multiturn.validate();
    require(max_tokens_per_turn >= 1, "multiturn.max_tokens_per_turn must be at least 1");
    require(crop.window >= 1 && crop.resize >= 1, "crop sizes must be positive");
    require(diversity.max_awards >= 0 && diversity.min_distance_px >= 0.0, "invalid diversity rule");
    require(eval_temperature > 0.0 && eval_top_p > 0.0 && eval_top_p <= 1.0, "invalid eval sampling");
    require(min_separation >= 0.0, "behavior.min_separation must be non-negative");
}

auto parse_dialog_mode(std::string_view name) -> optim::DialogMode
{
    if (name == "single")
        return optim::DialogMode::Single;
    if (name == "multiturn" || name == "multi")
        return optim::DialogMode::MultiTurn;
    throw Error(ErrorKind::Parse, "unknown mode '" + std::string(name) + "' (single|multiturn)");
}

auto to_string(optim::DialogMode mode) -> const char*
{
    return mode == optim::DialogMode::Single ? "single" : "multiturn";
}

namespace
{

struct Setting
{
    std::string key;
    std::string value;
    int line;
};

auto parse_settings(std::string_view text) -> std::vector<Setting>
{
    auto out = std::vector<Setting> {};
    auto section = std::string {};
    auto in = std::istringstream(std::string(text));
    auto line_no = 0;
    for (std::string raw; std::getline(in, raw);)
    {
        ++line_no;
        const auto where = "config line " + std::to_string(line_no) + ": ";
        // Strip a trailing comment unless the '#' sits inside quotes.
        auto quoted = false;
        auto cut = raw.size();
        for (std::size_t i = 0; i < raw.size(); ++i)
        {
            if (raw[i] == '"')
                quoted = !quoted;
            else if (raw[i] == '#' && !quoted)
            {
                cut = i;
                break;
            }
        }
        const auto line = trim(std::string_view(raw).substr(0, cut));
        if (line.empty())
            continue;
        if (line.front() == '[')
        {
            if (line.back() != ']' || line.size() < 3)
                throw Error(ErrorKind::Parse, where + "malformed section header");
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorKind::Parse, where + "expected key = value");
        const auto key = trim(std::string_view(line).substr(0, eq));
        const auto value = trim(std::string_view(line).substr(eq + 1));
        if (key.empty() || value.empty())
            throw Error(ErrorKind::Parse, where + "empty key or value");
        out.push_back({ section.empty() ? key : section + "." + key, value, line_no });
    }
    return out;
}

} // namespace

auto parse_config_text(std::string_view text) -> std::vector<std::pair<std::string, std::string>>
{
    auto out = std::vector<std::pair<std::string, std::string>> {};
    for (auto& s: parse_settings(text))
        out.emplace_back(std::move(s.key), std::move(s.value));
    return out;
}

void apply_setting(RunConfig& config, std::string_view key, std::string_view value)
{
    for (const auto& b: bindings())
    {
        if (b.key == key)
        {
            b.set(config, trim(value));
            return;
        }
    }
    throw Error(ErrorKind::Parse, "unknown config key '" + std::string(key) + "'");
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path)
{
    auto in = std::ifstream(path);
    if (!in)
        throw Error(ErrorKind::Io, "cannot read config " + path.string());
    auto buffer = std::ostringstream {};
    buffer << in.rdbuf();
    for (const auto& s: parse_settings(buffer.str()))
    {
        try
        {
            apply_setting(config, s.key, s.value);
        }
        catch (const Error& e)
        {
            throw Error(e.kind(), path.string() + ": config line " + std::to_string(s.line) + ": " + e.what());
        }
    }
}

auto config_keys() -> std::vector<std::string>
{
    auto out = std::vector<std::string> {};
    for (const auto& b: bindings())
        out.push_back(b.key);
    return out;
}

auto to_json(const RunConfig& config) -> nlohmann::json
{
    auto out = nlohmann::json::object();
    for (const auto& b: bindings())
    {
        const auto dot = b.key.find('.');
        out[b.key.substr(0, dot)][b.key.substr(dot + 1)] = b.get(config);
    }
    return out;
}

auto to_config_text(const RunConfig& config) -> std::string
{
    auto out = std::string {};
    auto section = std::string {};
    for (const auto& b: bindings())
    {
        const auto dot = b.key.find('.');
        const auto s = b.key.substr(0, dot);
        if (s != section)
        {
            out += (section.empty() ? "[" : "\n[") + s + "]\n";
            section = s;
        }
        const auto v = b.get(config);
        out += b.key.substr(dot + 1) + " = " + (v.is_number_float() ? format_real(v.get<double>()) : v.dump()) + "\n";
    }
    return out;
}

auto train_config(const RunConfig& config) -> optim::TrainConfig
{
    auto out = optim::TrainConfig {};
    out.mode = config.mode;
    out.grpo = config.mode == optim::DialogMode::Single ? config.grpo : config.multiturn;
    out.iterations = config.iterations;
    out.tasks_per_iteration = config.tasks_per_iteration;
    out.max_tokens = config.max_tokens;
    out.multi.max_turns = config.multiturn.max_turns;
    out.multi.sampling = optim::SamplingConfig { .temperature = config.multiturn.rollout_temperature,
                                                 .top_p = config.multiturn.top_p,
                                                 .max_tokens = config.max_tokens_per_turn };
    out.multi.crop = config.crop;
    out.multi.diversity_bonus = config.diversity_bonus;
    out.multi.diversity = config.diversity;
    out.multi.weights = config.weights;
    out.weights = config.weights;
    out.seed = config.seed;
    out.workers = config.workers;
    return out;
}

auto eval_config(const RunConfig& config) -> optim::EvalConfig
{
    const auto train = train_config(config);
    auto out = optim::EvalConfig {};
    out.mode = config.mode;
    out.sampling = optim::SamplingConfig { .temperature = config.eval_temperature,
                                           .top_p = config.eval_top_p,
                                           .max_tokens = config.max_tokens };
    out.multi = train.multi;
    out.multi.sampling.temperature = config.eval_temperature;
    out.multi.sampling.top_p = config.eval_top_p;
    out.weights = config.weights;
    out.seed = config.seed;
    out.workers = config.workers;
    return out;
}

} // namespace gvr
