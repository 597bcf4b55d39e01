// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gvr/optim/vocabulary.hpp>
#include <gvr/rng.hpp>
#include <gvr/scene.hpp>

#include <array>
#include <bitset>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace gvr::optim
{

/// What the policy can see of a task: the prompt (kind, verb), a coarse global
/// view (which cells hold a glyph, and the cell holding the queried glyph), and
/// per-cell local detail that is only revealed once that cell has been inspected.
///
/// Local detail resolves shape but not material, so a glyph sharing the queried
/// shape reads as the queried glyph and reports its own attribute.
struct TaskView
{
    enum CellState : std::uint8_t
    {
        Empty = 0,
        Other = 1,
        Target = 2,
        Lookalike = 3,
    };

    scene::TaskKind kind = scene::TaskKind::MultipleChoice;
    int verb = -1;
    int hint_cell = 0;
    // Color index (multiple choice) or glyph id (action prediction); 0 for pointing.
    int target_attr = 0;
    std::array<std::uint8_t, tok::cell_count> cell_state {};
    // Attribute reported when a Target or Lookalike cell is inspected.
    std::array<std::uint8_t, tok::cell_count> cell_attr {};
    Grid grid;

    static auto of(const scene::TaskInstance& task) -> TaskView;
};

struct Context
{
    const TaskView& view;
    std::span<const Token> tokens;
};

/// Autoregressive token policy. Distributions are over the full vocabulary.
class Policy
{
  public:
    virtual ~Policy() = default;

    [[nodiscard]] virtual auto next_token_distribution(const Context& ctx, double temperature = 1.0) const
        -> std::vector<double> = 0;

    /// Nucleus sampling: keeps the most likely tokens until their mass reaches top_p.
    [[nodiscard]] auto sample(const Context& ctx, double temperature, double top_p, Rng& rng) const -> Token;

    /// log pi(tokens[t] | tokens[0..t)) at temperature 1 for every t >= start.
    [[nodiscard]] auto log_prob(const TaskView& view, std::span<const Token> tokens, std::size_t start = 0) const
        -> std::vector<double>;

    [[nodiscard]] virtual auto parameters() -> std::span<double> { return {}; }
    [[nodiscard]] virtual auto parameters() const -> std::span<const double> { return {}; }

    [[nodiscard]] virtual auto clone() const -> std::unique_ptr<Policy> = 0;
};

/// Log-linear policy over the template vocabulary.
///
/// logit(u) = sum over s in {coarse, fine} of W[s, u] + sum_f U[s, f] * phi_f(u).
/// The coarse key is (task kind, verb, last two tokens with cells collapsed); the
/// fine key adds the local detail at the most recently inspected cell and the number
/// of inspections so far. phi are indicator features of coordinate tokens: equals the
/// coarse target cell, equals an already inspected cell, equals the most recently
/// inspected cell, holds a glyph. Rows are allocated on first use; a missing row
/// contributes nothing.
class TabularSoftmaxPolicy final: public Policy
{
  public:
    static constexpr int feature_count = 4;
    static constexpr int row_width = tok::vocab_size + feature_count;

    /// Coarse and fine row keys of a context.
    [[nodiscard]] static auto context_keys(const Context& ctx) -> std::array<std::uint64_t, 2>;

    /// With coarse_only set, only the coarse row contributes (the backoff distribution).
    [[nodiscard]] auto logits(const Context& ctx, bool coarse_only = false) const -> std::vector<double>;
    [[nodiscard]] auto next_token_distribution(const Context& ctx, double temperature = 1.0) const
        -> std::vector<double> override;

    [[nodiscard]] auto row_offset(std::uint64_t key) const -> std::optional<std::size_t>;
    auto ensure_row(std::uint64_t key) -> std::size_t;
    /// Allocates both rows of ctx.
    void ensure_context(const Context& ctx);
    /// Offsets of the rows of ctx that exist.
    [[nodiscard]] auto context_rows(const Context& ctx) const -> std::vector<std::size_t>;

    /// Adds d(objective)/d(theta) given d(objective)/d(logits) at ctx. The rows must exist.
    void accumulate(const Context& ctx, std::span<const double> dlogits, std::span<double> grad,
                    bool coarse_only = false) const;

    [[nodiscard]] auto parameters() -> std::span<double> override { return theta_; }
    [[nodiscard]] auto parameters() const -> std::span<const double> override { return theta_; }
    [[nodiscard]] auto keys() const -> const std::vector<std::uint64_t>& { return keys_; }

    [[nodiscard]] auto clone() const -> std::unique_ptr<Policy> override;

    /// Rebuilds a policy from its row keys and flat parameters.
    [[nodiscard]] static auto from_parts(std::vector<std::uint64_t> keys, std::vector<double> theta)
        -> TabularSoftmaxPolicy;

  private:
    std::unordered_map<std::uint64_t, std::size_t> rows_;
    std::vector<std::uint64_t> keys_;
    std::vector<double> theta_;
};

/// Numerically stable softmax of logits / temperature.
[[nodiscard]] auto softmax(std::span<const double> logits, double temperature = 1.0) -> std::vector<double>;

/// Deterministic policy driven by a script; each step puts all mass on one token.
class ScriptedPolicy final: public Policy
{
  public:
    using Script = std::function<Token(const Context&)>;

    explicit ScriptedPolicy(Script script): script_(std::move(script)) {}

    [[nodiscard]] auto next_token_distribution(const Context& ctx, double temperature = 1.0) const
        -> std::vector<double> override;
    [[nodiscard]] auto clone() const -> std::unique_ptr<Policy> override;

  private:
    Script script_;
};

enum class DialogMode
{
    Single,
    MultiTurn,
};

/// Inspects the coarse target cell once and answers correctly.
[[nodiscard]] auto oracle_policy(DialogMode mode) -> ScriptedPolicy;

/// Keeps requesting crops forever and never opens an answer block.
[[nodiscard]] auto never_answering_policy() -> ScriptedPolicy;

/// Emits `tokens` in order, then EOS.
[[nodiscard]] auto fixed_policy(std::vector<Token> tokens) -> ScriptedPolicy;

/// Tokens the oracle would produce for this view (environment tokens included in multi-turn).
[[nodiscard]] auto oracle_tokens(const TaskView& view, DialogMode mode) -> std::vector<Token>;

} // namespace gvr::optim
