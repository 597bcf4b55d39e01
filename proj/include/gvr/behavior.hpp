// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <gvr/core.hpp>

#include <json.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gvr::behavior
{

/// Marker phrases for one behavior. Matching is case-insensitive and respects word
/// boundaries; "..." inside a phrase matches any text within the same sentence.
/// Matches that overlap (from any phrase) count once.
class Lexicon
{
  public:
    Lexicon() = default;
    explicit Lexicon(std::vector<std::string> phrases);

    /// One phrase per line; blank lines and lines starting with '#' are skipped.
    [[nodiscard]] static auto parse(std::string_view text) -> Lexicon;
    /// Throws Io when the file cannot be read.
    [[nodiscard]] static auto load(const std::filesystem::path& path) -> Lexicon;

    [[nodiscard]] auto count(std::string_view text) const -> int;
    [[nodiscard]] auto phrases() const -> const std::vector<std::string>& { return phrases_; }

  private:
    std::vector<std::string> phrases_;
    // Lower-cased phrase pieces split at "...".
    std::vector<std::vector<std::string>> pieces_;
};

struct Lexicons
{
    Lexicon subgoals;
    Lexicon verifications;
    Lexicon backtracks;

    /// Reads subgoals.txt, verifications.txt and backtracks.txt from `dir`.
    [[nodiscard]] static auto load(const std::filesystem::path& dir) -> Lexicons;
};

/// The lexicon directory shipped with the sources.
[[nodiscard]] auto default_lexicon_dir() -> std::filesystem::path;
/// Lexicons from default_lexicon_dir(), loaded once.
[[nodiscard]] auto default_lexicons() -> const Lexicons&;

inline constexpr double default_min_separation = 10.0;

/// Greedy clustering of anchors: an anchor opens a new region when it lies at least
/// min_separation from every anchor that already opened one.
[[nodiscard]] auto count_regions(const ReasonTrace& trace, double min_separation = default_min_separation) -> int;
[[nodiscard]] auto count_backtracks(const ReasonTrace& trace, const Lexicons& lexicons = default_lexicons()) -> int;
[[nodiscard]] auto count_subgoals(const ReasonTrace& trace, const Lexicons& lexicons = default_lexicons()) -> int;
[[nodiscard]] auto count_verifications(const ReasonTrace& trace, const Lexicons& lexicons = default_lexicons())
    -> int;

struct BehaviorCounts
{
    int regions = 0;
    int subgoals = 0;
    int verifications = 0;
    int backtracks = 0;

    auto operator==(const BehaviorCounts&) const -> bool = default;
};

/// Codes one trace. Implementations must be deterministic and thread-safe.
class Judge
{
  public:
    virtual ~Judge() = default;
    [[nodiscard]] virtual auto code(const ReasonTrace& trace) const -> BehaviorCounts = 0;
};

/// Rule-based judge: anchor clustering plus lexicon markers over the step texts.
class LexiconJudge final: public Judge
{
  public:
    explicit LexiconJudge(Lexicons lexicons = default_lexicons(), double min_separation = default_min_separation)
        : lexicons_(std::move(lexicons)), min_separation_(min_separation)
    {
    }

    [[nodiscard]] auto code(const ReasonTrace& trace) const -> BehaviorCounts override;

  private:
    Lexicons lexicons_;
    double min_separation_;
};

struct ReportOptions
{
    // Code only traces whose reward equals max_reward.
    bool correct_only = true;
    double max_reward = 1.0;
};

struct BehaviorReport
{
    std::size_t traces = 0;
    std::size_t coded = 0;
    double regions = 0.0;
    double subgoals = 0.0;
    double verifications = 0.0;
    double backtracks = 0.0;
    double accuracy = 0.0;
};

/// Means of the coded traces' counts; accuracy is the share of all traces at max reward.
/// Throws Precondition when a trace carries no reward.
[[nodiscard]] auto behavior_report(std::span<const ReasonTrace> traces, const Judge& judge,
                                   const ReportOptions& options = {}) -> BehaviorReport;

[[nodiscard]] auto to_json(const BehaviorReport& report) -> nlohmann::json;

} // namespace gvr::behavior
