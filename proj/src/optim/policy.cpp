// SPDX-License-Identifier: Apache-2.0
#include <gvr/optim/policy.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gvr::optim
{

auto TaskView::of(const scene::TaskInstance& task) -> TaskView
{
    auto view = TaskView {};
    view.kind = task.kind;
    view.grid = Grid::of(task.raster);
    const auto& target = task.raster.glyph(task.target);
    view.hint_cell = view.grid.cell_at(target.center);
    const auto attr_of = [&](const scene::PlacedGlyph& g) {
        switch (task.kind)
        {
            case scene::TaskKind::MultipleChoice: return static_cast<int>(g.color);
            case scene::TaskKind::PointGrounding: return 0;
            case scene::TaskKind::ActionPrediction: return std::min(g.id, tok::arg_count - 1);
        }
        return 0;
    };
    view.target_attr = attr_of(target);
    if (task.kind == scene::TaskKind::ActionPrediction)
        view.verb = verb_index(std::get<scene::ActionKey>(task.answer_key.value).type);

    for (const auto& g: task.raster.glyphs)
    {
        const auto cell = static_cast<std::size_t>(view.grid.cell_at(g.center));
        const auto state = g.id == task.target       ? Target
                           : g.shape == target.shape ? Lookalike
                                                     : Other;
        // The queried glyph wins a shared cell, then a lookalike, then anything else.
        const auto rank = [](std::uint8_t s) { return s == Target ? 3 : s == Lookalike ? 2 : s == Other ? 1 : 0; };
        if (rank(state) > rank(view.cell_state[cell]))
        {
            view.cell_state[cell] = state;
            view.cell_attr[cell] = static_cast<std::uint8_t>(attr_of(g));
        }
    }
    return view;
}

auto softmax(std::span<const double> logits, double temperature) -> std::vector<double>
{
    if (temperature <= 0.0)
        throw Error(ErrorKind::Precondition, "temperature must be positive");
    auto out = std::vector<double>(logits.size());
    const auto top = *std::max_element(logits.begin(), logits.end());
    auto total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i)
    {
        out[i] = std::exp((logits[i] - top) / temperature);
        total += out[i];
    }
    for (auto& p: out)
        p /= total;
    return out;
}

auto Policy::sample(const Context& ctx, double temperature, double top_p, Rng& rng) const -> Token
{
    const auto probs = next_token_distribution(ctx, temperature);
    auto order = std::vector<int>(probs.size());
    std::iota(order.begin(), order.end(), 0);
    auto kept = order.size();
    auto mass = 1.0;
    if (top_p < 1.0)
    {
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs[a] > probs[b]; });
        mass = 0.0;
        kept = 0;
        while (kept < order.size() && mass < top_p)
            mass += probs[static_cast<std::size_t>(order[kept++])];
    }
    const auto draw = uniform01(rng) * mass;
    auto acc = 0.0;
    for (std::size_t i = 0; i < kept; ++i)
    {
        acc += probs[static_cast<std::size_t>(order[i])];
        if (draw < acc)
            return order[i];
    }
    // Rounding can leave draw just above the accumulated mass.
    for (auto i = kept; i-- > 0;)
        if (probs[static_cast<std::size_t>(order[i])] > 0.0)
            return order[i];
    return order.front();
}

auto Policy::log_prob(const TaskView& view, std::span<const Token> tokens, std::size_t start) const
    -> std::vector<double>
{
    auto out = std::vector<double> {};
    for (auto t = start; t < tokens.size(); ++t)
    {
        const auto probs = next_token_distribution(Context { view, tokens.first(t) });
        out.push_back(std::log(probs[static_cast<std::size_t>(tokens[t])]));
    }
    return out;
}

namespace
{

constexpr auto cell_class = tok::vocab_size;
constexpr auto start_class = tok::vocab_size + 1;

// Set on coarse keys so the two key spaces never collide.
constexpr auto coarse_flag = std::uint64_t {1} << 63;

struct Scan
{
    std::array<std::uint64_t, 2> keys {};
    int last_cell = -1;
    std::bitset<tok::cell_count> visited;
};

auto token_class(std::span<const Token> tokens, std::size_t back) -> std::uint64_t
{
    if (tokens.size() < back)
        return start_class;
    const auto t = tokens[tokens.size() - back];
    return tok::is_cell(t) ? cell_class : static_cast<std::uint64_t>(t);
}

auto scan(const Context& ctx) -> Scan
{
    auto out = Scan {};
    auto inspections = 0;
    for (auto t: ctx.tokens)
    {
        if (!tok::is_cell(t))
            continue;
        out.last_cell = tok::cell_of(t);
        out.visited.set(static_cast<std::size_t>(out.last_cell));
        ++inspections;
    }

    auto perception = std::uint64_t {0};
    if (out.last_cell >= 0)
    {
        const auto cell = static_cast<std::size_t>(out.last_cell);
        const auto state = ctx.view.cell_state[cell];
        perception = state == TaskView::Empty   ? 0
                     : state == TaskView::Other ? 1
                                                : 2 + static_cast<std::uint64_t>(ctx.view.cell_attr[cell]);
    }
    const auto structure = static_cast<std::uint64_t>(ctx.view.kind)
                           | (static_cast<std::uint64_t>(ctx.view.verb + 1) << 2) | (token_class(ctx.tokens, 1) << 4)
                           | (token_class(ctx.tokens, 2) << 12);
    out.keys[0] = structure | coarse_flag;
    out.keys[1] = structure | (perception << 20) | (static_cast<std::uint64_t>(std::min(inspections, 5)) << 26);
    return out;
}

auto feature(const Scan& s, const TaskView& view, int f, Token u) -> double
{
    if (!tok::is_cell(u))
        return 0.0;
    const auto cell = tok::cell_of(u);
    switch (f)
    {
        case 0: return cell == view.hint_cell ? 1.0 : 0.0;
        case 1: return s.visited.test(static_cast<std::size_t>(cell)) ? 1.0 : 0.0;
        case 2: return cell == s.last_cell ? 1.0 : 0.0;
        default: return view.cell_state[static_cast<std::size_t>(cell)] != TaskView::Empty ? 1.0 : 0.0;
    }
}

} // namespace

auto TabularSoftmaxPolicy::context_keys(const Context& ctx) -> std::array<std::uint64_t, 2>
{
    return scan(ctx).keys;
}

auto TabularSoftmaxPolicy::logits(const Context& ctx, bool coarse_only) const -> std::vector<double>
{
    auto out = std::vector<double>(tok::vocab_size, 0.0);
    const auto s = scan(ctx);
    for (auto key: std::span(s.keys).first(coarse_only ? 1 : 2))
    {
        const auto row = row_offset(key);
        if (!row)
            continue;
        const auto* w = theta_.data() + *row;
        for (auto u = 0; u < tok::vocab_size; ++u)
            out[static_cast<std::size_t>(u)] += w[u];
        for (auto u = tok::cell_begin; u < tok::cell_begin + tok::cell_count; ++u)
            for (auto f = 0; f < feature_count; ++f)
                out[static_cast<std::size_t>(u)] += w[tok::vocab_size + f] * feature(s, ctx.view, f, u);
    }
    return out;
}

auto TabularSoftmaxPolicy::next_token_distribution(const Context& ctx, double temperature) const
    -> std::vector<double>
{
    return softmax(logits(ctx), temperature);
}

auto TabularSoftmaxPolicy::row_offset(std::uint64_t key) const -> std::optional<std::size_t>
{
    const auto it = rows_.find(key);
    if (it == rows_.end())
        return std::nullopt;
    return it->second;
}

auto TabularSoftmaxPolicy::ensure_row(std::uint64_t key) -> std::size_t
{
    const auto [it, inserted] = rows_.try_emplace(key, theta_.size());
    if (inserted)
    {
        keys_.push_back(key);
        theta_.resize(theta_.size() + row_width, 0.0);
    }
    return it->second;
}

void TabularSoftmaxPolicy::ensure_context(const Context& ctx)
{
    for (auto key: context_keys(ctx))
        ensure_row(key);
}

auto TabularSoftmaxPolicy::context_rows(const Context& ctx) const -> std::vector<std::size_t>
{
    auto out = std::vector<std::size_t> {};
    for (auto key: context_keys(ctx))
        if (const auto row = row_offset(key))
            out.push_back(*row);
    return out;
}

void TabularSoftmaxPolicy::accumulate(const Context& ctx, std::span<const double> dlogits, std::span<double> grad,
                                      bool coarse_only) const
{
    const auto s = scan(ctx);
    for (auto key: std::span(s.keys).first(coarse_only ? 1 : 2))
    {
        const auto row = row_offset(key);
        if (!row)
            throw Error(ErrorKind::Precondition, "policy row missing for gradient accumulation");
        auto* g = grad.data() + *row;
        for (auto u = 0; u < tok::vocab_size; ++u)
            g[u] += dlogits[static_cast<std::size_t>(u)];
        for (auto u = tok::cell_begin; u < tok::cell_begin + tok::cell_count; ++u)
            for (auto f = 0; f < feature_count; ++f)
                g[tok::vocab_size + f] += dlogits[static_cast<std::size_t>(u)] * feature(s, ctx.view, f, u);
    }
}

auto TabularSoftmaxPolicy::clone() const -> std::unique_ptr<Policy>
{
    return std::make_unique<TabularSoftmaxPolicy>(*this);
}

auto TabularSoftmaxPolicy::from_parts(std::vector<std::uint64_t> keys, std::vector<double> theta)
    -> TabularSoftmaxPolicy
{
    if (theta.size() != keys.size() * row_width)
        throw Error(ErrorKind::Parse, "parameter vector does not match the row table");
    auto policy = TabularSoftmaxPolicy {};
    for (std::size_t i = 0; i < keys.size(); ++i)
        if (!policy.rows_.try_emplace(keys[i], i * row_width).second)
            throw Error(ErrorKind::Parse, "duplicate policy row key");
    policy.keys_ = std::move(keys);
    policy.theta_ = std::move(theta);
    return policy;
}

auto ScriptedPolicy::next_token_distribution(const Context& ctx, double) const -> std::vector<double>
{
    auto out = std::vector<double>(tok::vocab_size, 0.0);
    out.at(static_cast<std::size_t>(script_(ctx))) = 1.0;
    return out;
}

auto ScriptedPolicy::clone() const -> std::unique_ptr<Policy>
{
    return std::make_unique<ScriptedPolicy>(*this);
}

auto oracle_tokens(const TaskView& view, DialogMode mode) -> std::vector<Token>
{
    auto answer = std::vector<Token> {};
    switch (view.kind)
    {
        case scene::TaskKind::MultipleChoice: answer = { tok::color_begin + view.target_attr }; break;
        case scene::TaskKind::PointGrounding: answer = { tok::cell_token(view.hint_cell) }; break;
        case scene::TaskKind::ActionPrediction:
            answer = { tok::verb_begin + std::max(view.verb, 0), tok::arg_begin + view.target_attr };
            break;
    }
    const auto cell = tok::cell_token(view.hint_cell);
    auto out = std::vector<Token> {};
    if (mode == DialogMode::Single)
        out = { tok::think_open, tok::look_begin, cell, tok::conclude_begin, tok::think_close, tok::answer_open };
    else
        out = { tok::think_open, tok::look_begin, tok::think_close, tok::tool_open, cell,        tok::tool_close,
                tok::obs_open,   tok::image,      tok::obs_close,   tok::think_open, tok::conclude_begin,
                tok::think_close, tok::answer_open };
    out.insert(out.end(), answer.begin(), answer.end());
    out.push_back(tok::answer_close);
    out.push_back(tok::eos);
    return out;
}

auto oracle_policy(DialogMode mode) -> ScriptedPolicy
{
    return ScriptedPolicy([mode](const Context& ctx) {
        const auto script = oracle_tokens(ctx.view, mode);
        return ctx.tokens.size() < script.size() ? script[ctx.tokens.size()] : tok::eos;
    });
}

auto never_answering_policy() -> ScriptedPolicy
{
    return ScriptedPolicy([](const Context& ctx) -> Token {
        if (ctx.tokens.empty())
            return tok::think_open;
        const auto last = ctx.tokens.back();
        if (last == tok::think_open)
            return tok::look_begin;
        if (tok::is_text(last))
            return tok::think_close;
        if (last == tok::think_close)
            return tok::tool_open;
        if (last == tok::tool_open)
            return tok::cell_token(ctx.view.hint_cell);
        if (tok::is_cell(last))
            return tok::tool_close;
        return tok::think_open;
    });
}

auto fixed_policy(std::vector<Token> tokens) -> ScriptedPolicy
{
    return ScriptedPolicy([tokens = std::move(tokens)](const Context& ctx) {
        return ctx.tokens.size() < tokens.size() ? tokens[ctx.tokens.size()] : tok::eos;
    });
}

} // namespace gvr::optim
