#pragma once

#include "meco/decision_core.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace meco::eval {

using decision::Verdict;

enum class Suite { Metatool, MeCaTool, MeCaRAG };
enum class Category { Positive, Negative, Neutral };
enum class ContextMode { WithContext, WithoutContext };
enum class Speaker { User, Assistant };

inline constexpr int kNoTask = 0; // Metatool items carry no task number
inline constexpr int kRagTask = 7;

std::string to_string(Suite s);
std::string to_string(Category c);
std::string to_string(ContextMode m);
std::string task_to_string(int task);

struct Turn {
    Speaker speaker = Speaker::User;
    std::string text;
};

struct Tool {
    std::string name;
    std::string description;
};

struct BenchmarkItem {
    std::uint64_t item_id = 0;
    Suite suite = Suite::MeCaTool;
    int task = 1;
    Category category = Category::Positive;
    ContextMode context_mode = ContextMode::WithoutContext;
    std::vector<Turn> turns;
    std::vector<Tool> provided_tools;
    Verdict label = Verdict::Yes;
};

// Returns human-readable invariant violations; empty when the item is valid.
std::vector<std::string> validate_item(const BenchmarkItem & item);

// Parses and validates a JSON-lines benchmark. All violations are collected
// and raised together as one ValidationError, each prefixed with its line.
std::vector<BenchmarkItem> load_benchmark(const std::filesystem::path & path);
std::vector<BenchmarkItem> parse_benchmark(const std::string & text);
std::string benchmark_to_jsonl(std::span<const BenchmarkItem> items);

// Compares MeCa category counts with the published per-row contract
// (500 per Tool row, 150 per RAG row), per context mode present.
std::vector<std::string> check_official_counts(std::span<const BenchmarkItem> items);

// Scored-item JSON lines: {item_id, first_token, meta_score?, p_yes, p_no, label?}
std::vector<decision::ScoredItem> parse_scored_items(const std::string & text);
std::vector<decision::ScoredItem> load_scored_items(const std::filesystem::path & path);
std::string scored_items_to_jsonl(std::span<const decision::ScoredItem> items);

struct Outcome {
    std::optional<Verdict> predicted; // empty: unparseable response
    Verdict label = Verdict::No;
    bool flipped = false;
};

struct Metrics {
    std::size_t support = 0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;
    std::size_t unparsed = 0;
    std::size_t flip_count = 0;
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool zero_division = false; // some ratio had a zero denominator and was set to 0
};

// Yes is the positive class.
Metrics compute_metrics(std::span<const Outcome> outcomes);
Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn, std::size_t unparsed,
                            std::size_t flip_count);

struct GroupBy {
    bool suite = true;
    bool task = true;
    bool context = true;
};

struct ReportRow {
    std::string policy;
    std::string suite = "*";
    std::string task = "*";
    std::string context_mode = "*";
    Metrics metrics;
};

struct TransferInfo {
    std::string fit_suite;
    std::string eval_suite;
    double fit_mean = 0.0;
    double fit_std = 0.0;
    double eval_mean = 0.0;
    double mean_delta = 0.0;
    bool shift_flagged = false;
};

struct EvalReport {
    std::vector<ReportRow> rows;
    std::optional<TransferInfo> transfer;
};

struct NamedPolicy {
    std::string name;
    decision::DecisionPolicy policy;
};

// Joins scored items to benchmark items by id and evaluates each policy per
// group. Items with an unusable first token or score are tallied as unparsed.
EvalReport run_policy(std::span<const NamedPolicy> policies, std::span<const decision::ScoredItem> scored,
                      std::span<const BenchmarkItem> benchmark, GroupBy grouping = {},
                      decision::TokenMode mode = decision::TokenMode::Strict);

// Shift is flagged when |eval_mean - fit_mean| exceeds half the fit-time std.
inline constexpr double kShiftEffectSize = 0.5;

EvalReport transfer_eval(const NamedPolicy & policy, const std::string & fit_suite,
                         std::span<const decision::ScoredItem> scored, std::span<const BenchmarkItem> benchmark,
                         GroupBy grouping = {}, decision::TokenMode mode = decision::TokenMode::Strict);

std::string report_to_csv(const EvalReport & report);
std::string report_to_json(const EvalReport & report);

struct DistributionRow {
    std::optional<std::uint32_t> layer;
    std::string group; // "<token>/<correct|incorrect>"
    std::size_t bin = 0;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
};

struct DistributionReport {
    std::vector<DistributionRow> rows;
};

// Histogram of meta-scores per (first token, Naive correctness). Bin edges
// span the observed score range; groups with no items emit no rows.
DistributionReport score_distribution_report(std::span<const decision::ScoredItem> scored, std::size_t bins);

struct LayerScores {
    std::uint32_t layer = 0;
    std::vector<decision::ScoredItem> items;
};

DistributionReport score_distribution_report(std::span<const LayerScores> layers, std::size_t bins);

std::string distribution_to_csv(const DistributionReport & report);
std::string distribution_to_json(const DistributionReport & report);

} // namespace meco::eval
