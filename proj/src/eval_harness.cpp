#include "meco/eval_harness.hpp"

#include "meco/error.hpp"
#include "meco/io_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace meco::eval {

namespace {

using ordered_json = nlohmann::ordered_json;
using json = nlohmann::json;

Suite parse_suite(const std::string & s) {
    if (s == "Metatool") return Suite::Metatool;
    if (s == "MeCaTool") return Suite::MeCaTool;
    if (s == "MeCaRAG") return Suite::MeCaRAG;
    throw ValidationError("unknown suite \"" + s + "\"");
}

Category parse_category(const std::string & s) {
    if (s == "Positive") return Category::Positive;
    if (s == "Negative") return Category::Negative;
    if (s == "Neutral") return Category::Neutral;
    throw ValidationError("unknown category \"" + s + "\"");
}

ContextMode parse_context(const std::string & s) {
    if (s == "WithContext") return ContextMode::WithContext;
    if (s == "WithoutContext") return ContextMode::WithoutContext;
    throw ValidationError("unknown context_mode \"" + s + "\"");
}

Speaker parse_speaker(const std::string & s) {
    if (s == "User") return Speaker::User;
    if (s == "Assistant") return Speaker::Assistant;
    throw ValidationError("unknown speaker \"" + s + "\"");
}

int parse_task(const json & j) {
    if (j.is_null()) {
        return kNoTask;
    }
    if (j.is_string()) {
        if (j.get<std::string>() == "RAG") {
            return kRagTask;
        }
        throw ValidationError("unknown task \"" + j.get<std::string>() + "\"");
    }
    const int t = j.get<int>();
    if (t < 1 || t > 6) {
        throw ValidationError("task " + std::to_string(t) + " outside 1..6");
    }
    return t;
}

ordered_json task_json(int task) {
    if (task == kNoTask) return nullptr;
    if (task == kRagTask) return "RAG";
    return task;
}

BenchmarkItem item_from_json(const json & j) {
    BenchmarkItem it;
    it.item_id = j.at("item_id").get<std::uint64_t>();
    it.suite = parse_suite(j.at("suite").get<std::string>());
    it.task = parse_task(j.contains("task") ? j.at("task") : json(nullptr));
    it.category = parse_category(j.at("category").get<std::string>());
    it.context_mode = parse_context(j.at("context_mode").get<std::string>());
    for (const auto & t : j.at("turns")) {
        it.turns.push_back({parse_speaker(t.at("speaker").get<std::string>()), t.at("text").get<std::string>()});
    }
    if (j.contains("provided_tools")) {
        for (const auto & t : j.at("provided_tools")) {
            it.provided_tools.push_back({t.at("name").get<std::string>(), t.value("description", std::string())});
        }
    }
    it.label = decision::parse_verdict(j.at("label").get<std::string>());
    return it;
}

ordered_json item_to_json(const BenchmarkItem & it) {
    ordered_json j;
    j["item_id"] = it.item_id;
    j["suite"] = to_string(it.suite);
    j["task"] = task_json(it.task);
    j["category"] = to_string(it.category);
    j["context_mode"] = to_string(it.context_mode);
    ordered_json turns = ordered_json::array();
    for (const auto & t : it.turns) {
        turns.push_back({{"speaker", t.speaker == Speaker::User ? "User" : "Assistant"}, {"text", t.text}});
    }
    j["turns"] = std::move(turns);
    ordered_json tools = ordered_json::array();
    for (const auto & t : it.provided_tools) {
        tools.push_back({{"name", t.name}, {"description", t.description}});
    }
    j["provided_tools"] = std::move(tools);
    j["label"] = decision::to_string(it.label);
    return j;
}

template <typename F>
void for_each_line(const std::string & text, F && f) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        f(line, line_no);
    }
}

double safe_ratio(std::size_t num, std::size_t den, bool & zero_division) {
    if (den == 0) {
        zero_division = true;
        return 0.0;
    }
    return static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt_metric(double v) { return io::format_fixed(v, 6); }

// Statistic the policy thresholds: meta-score for MeCo, Yes-score for PYes.
std::optional<double> policy_statistic(const decision::DecisionPolicy & policy, const decision::ScoredItem & item) {
    if (std::holds_alternative<decision::MeCoPolicy>(policy.kind)) {
        if (item.first_token.kind == decision::FirstToken::Kind::Other) {
            return std::nullopt;
        }
        return item.meta_score;
    }
    if (std::holds_alternative<decision::PYesPolicy>(policy.kind)) {
        if (item.p_yes + item.p_no <= 0.0) {
            return std::nullopt;
        }
        return decision::yes_score(item.p_yes, item.p_no);
    }
    return std::nullopt;
}

} // namespace

std::string to_string(Suite s) {
    switch (s) {
    case Suite::Metatool: return "Metatool";
    case Suite::MeCaTool: return "MeCaTool";
    case Suite::MeCaRAG: return "MeCaRAG";
    }
    return "?";
}

std::string to_string(Category c) {
    switch (c) {
    case Category::Positive: return "Positive";
    case Category::Negative: return "Negative";
    case Category::Neutral: return "Neutral";
    }
    return "?";
}

std::string to_string(ContextMode m) { return m == ContextMode::WithContext ? "WithContext" : "WithoutContext"; }

std::string task_to_string(int task) {
    if (task == kNoTask) return "-";
    if (task == kRagTask) return "RAG";
    return std::to_string(task);
}

std::vector<std::string> validate_item(const BenchmarkItem & it) {
    std::vector<std::string> problems;
    const auto fail = [&](const std::string & msg) { problems.push_back(msg); };

    std::size_t user_turns = 0;
    for (const auto & t : it.turns) {
        user_turns += t.speaker == Speaker::User;
    }
    if (it.turns.empty() || user_turns == 0) {
        fail("item has no user turn");
    }

    switch (it.suite) {
    case Suite::Metatool:
        if (it.task != kNoTask) {
            fail("Metatool items carry no task number");
        }
        if (it.category == Category::Neutral) {
            fail("Neutral category is not defined for Metatool");
        }
        break;
    case Suite::MeCaRAG:
        if (it.task != kRagTask) {
            fail("MeCaRAG items must have task \"RAG\"");
        }
        if (it.category == Category::Neutral) {
            fail("Neutral category is not defined for MeCaRAG");
        }
        break;
    case Suite::MeCaTool: {
        if (it.task < 1 || it.task > 6) {
            fail("MeCaTool task must be 1..6, got " + task_to_string(it.task));
            break;
        }
        const std::size_t tools = it.provided_tools.size();
        if ((it.task == 1 || it.task == 4) && tools != 0) {
            fail("task " + std::to_string(it.task) + " must provide no tools, got " + std::to_string(tools));
        }
        if ((it.task == 2 || it.task == 5) && tools != 1) {
            fail("task " + std::to_string(it.task) + " must provide exactly 1 tool, got " + std::to_string(tools));
        }
        if ((it.task == 3 || it.task == 6) && (tools < 2 || tools > 5)) {
            fail("task " + std::to_string(it.task) + " must provide 2-5 tools, got " + std::to_string(tools));
        }
        if (it.task >= 4 && user_turns < 2) {
            fail("multi-turn task " + std::to_string(it.task) + " needs >= 2 user turns, got " +
                 std::to_string(user_turns));
        }
        if (it.task <= 3 && user_turns != 1) {
            fail("task " + std::to_string(it.task) + " needs exactly 1 user turn, got " + std::to_string(user_turns));
        }
        if (it.category == Category::Neutral && it.task != 2 && it.task != 3) {
            fail("Neutral category only exists for tasks 2 and 3, got task " + std::to_string(it.task));
        }
        break;
    }
    }
    return problems;
}

std::vector<BenchmarkItem> parse_benchmark(const std::string & text) {
    std::vector<BenchmarkItem> items;
    std::vector<std::string> problems;
    for_each_line(text, [&](const std::string & line, std::size_t line_no) {
        try {
            auto it = item_from_json(json::parse(line));
            for (const auto & p : validate_item(it)) {
                problems.push_back("line " + std::to_string(line_no) + ": " + p);
            }
            items.push_back(std::move(it));
        } catch (const json::exception & e) {
            problems.push_back("line " + std::to_string(line_no) + ": schema violation: " + e.what());
        } catch (const ValidationError & e) {
            problems.push_back("line " + std::to_string(line_no) + ": " + e.what());
        }
    });
    if (!problems.empty()) {
        std::string msg = "benchmark validation failed:";
        for (const auto & p : problems) {
            msg += "\n  " + p;
        }
        throw ValidationError(msg);
    }
    return items;
}

std::vector<BenchmarkItem> load_benchmark(const std::filesystem::path & path) {
    return parse_benchmark(io::read_text(path));
}

std::string benchmark_to_jsonl(std::span<const BenchmarkItem> items) {
    std::string out;
    for (const auto & it : items) {
        out += item_to_json(it).dump();
        out += '\n';
    }
    return out;
}

std::vector<std::string> check_official_counts(std::span<const BenchmarkItem> items) {
    // (task, category) -> expected rows per context mode
    std::map<std::pair<int, Category>, std::size_t> expected;
    for (int t : {1, 4, 5, 6}) {
        expected[{t, Category::Positive}] = 500;
        expected[{t, Category::Negative}] = 500;
    }
    for (int t : {2, 3}) {
        expected[{t, Category::Positive}] = 500;
        expected[{t, Category::Negative}] = 500;
        expected[{t, Category::Neutral}] = 500;
    }
    expected[{kRagTask, Category::Positive}] = 150;
    expected[{kRagTask, Category::Negative}] = 150;

    std::map<std::tuple<ContextMode, int, Category>, std::size_t> seen;
    std::map<ContextMode, bool> has_tool;
    std::map<ContextMode, bool> has_rag;
    for (const auto & it : items) {
        if (it.suite == Suite::Metatool) {
            continue;
        }
        ++seen[{it.context_mode, it.task, it.category}];
        (it.suite == Suite::MeCaRAG ? has_rag : has_tool)[it.context_mode] = true;
    }
    std::vector<std::string> problems;
    for (ContextMode mode : {ContextMode::WithContext, ContextMode::WithoutContext}) {
        for (const auto & [key, want] : expected) {
            const bool rag = key.first == kRagTask;
            if (!(rag ? has_rag[mode] : has_tool[mode])) {
                continue;
            }
            const auto it = seen.find({mode, key.first, key.second});
            const std::size_t got = it == seen.end() ? 0 : it->second;
            if (got != want) {
                problems.push_back(to_string(mode) + " task " + task_to_string(key.first) + " " +
                                   to_string(key.second) + ": " + std::to_string(got) + " items, expected " +
                                   std::to_string(want));
            }
        }
    }
    return problems;
}

std::vector<decision::ScoredItem> parse_scored_items(const std::string & text) {
    std::vector<decision::ScoredItem> items;
    for_each_line(text, [&](const std::string & line, std::size_t line_no) {
        try {
            const auto j = json::parse(line);
            decision::ScoredItem it;
            it.item_id = j.at("item_id").get<std::uint64_t>();
            it.first_token = decision::FirstToken::parse(j.at("first_token").get<std::string>());
            if (j.contains("meta_score") && !j.at("meta_score").is_null()) {
                it.meta_score = j.at("meta_score").get<double>();
            }
            it.p_yes = j.at("p_yes").get<double>();
            it.p_no = j.at("p_no").get<double>();
            if (j.contains("label") && !j.at("label").is_null()) {
                it.label = decision::parse_verdict(j.at("label").get<std::string>());
            }
            const double total = it.p_yes + it.p_no;
            if (it.p_yes < 0.0 || it.p_no < 0.0 || total <= 0.0 || total > 1.0 + 1e-9) {
                throw ValidationError("p_yes + p_no must lie in (0, 1] with both non-negative");
            }
            items.push_back(std::move(it));
        } catch (const json::exception & e) {
            throw ValidationError("scored items line " + std::to_string(line_no) + ": " + e.what());
        } catch (const ValidationError & e) {
            throw ValidationError("scored items line " + std::to_string(line_no) + ": " + e.what());
        }
    });
    return items;
}

std::vector<decision::ScoredItem> load_scored_items(const std::filesystem::path & path) {
    return parse_scored_items(io::read_text(path));
}

std::string scored_items_to_jsonl(std::span<const decision::ScoredItem> items) {
    std::string out;
    for (const auto & it : items) {
        ordered_json j;
        j["item_id"] = it.item_id;
        j["first_token"] = it.first_token.text;
        j["meta_score"] = it.meta_score ? ordered_json(*it.meta_score) : ordered_json(nullptr);
        j["p_yes"] = it.p_yes;
        j["p_no"] = it.p_no;
        j["label"] = it.label ? ordered_json(decision::to_string(*it.label)) : ordered_json(nullptr);
        out += j.dump();
        out += '\n';
    }
    return out;
}

Metrics metrics_from_counts(std::size_t tp, std::size_t fp, std::size_t tn, std::size_t fn, std::size_t unparsed,
                            std::size_t flip_count) {
    Metrics m;
    m.tp = tp;
    m.fp = fp;
    m.tn = tn;
    m.fn = fn;
    m.unparsed = unparsed;
    m.flip_count = flip_count;
    m.support = tp + fp + tn + fn + unparsed;
    bool zd = false;
    m.accuracy = safe_ratio(tp + tn, m.support, zd);
    m.precision = safe_ratio(tp, tp + fp, zd);
    m.recall = safe_ratio(tp, tp + fn, zd);
    if (m.precision + m.recall > 0.0) {
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    } else {
        m.f1 = 0.0;
        zd = true;
    }
    m.zero_division = zd;
    return m;
}

Metrics compute_metrics(std::span<const Outcome> outcomes) {
    if (outcomes.empty()) {
        throw InsufficientDataError("compute_metrics needs at least one outcome");
    }
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0, unparsed = 0, flips = 0;
    for (const auto & o : outcomes) {
        flips += o.flipped;
        if (!o.predicted) {
            ++unparsed;
            continue;
        }
        const bool pred_yes = *o.predicted == Verdict::Yes;
        const bool label_yes = o.label == Verdict::Yes;
        if (pred_yes && label_yes) ++tp;
        else if (pred_yes) ++fp;
        else if (label_yes) ++fn;
        else ++tn;
    }
    return metrics_from_counts(tp, fp, tn, fn, unparsed, flips);
}

EvalReport run_policy(std::span<const NamedPolicy> policies, std::span<const decision::ScoredItem> scored,
                      std::span<const BenchmarkItem> benchmark, GroupBy grouping, decision::TokenMode mode) {
    if (scored.empty()) {
        throw InsufficientDataError("no scored items to evaluate");
    }
    std::unordered_map<std::uint64_t, const BenchmarkItem *> by_id;
    for (const auto & b : benchmark) {
        if (!by_id.emplace(b.item_id, &b).second) {
            throw ValidationError("duplicate benchmark item_id " + std::to_string(b.item_id));
        }
    }
    std::vector<const BenchmarkItem *> joined(scored.size());
    std::vector<std::uint64_t> unjoined;
    for (std::size_t i = 0; i < scored.size(); ++i) {
        const auto it = by_id.find(scored[i].item_id);
        if (it == by_id.end()) {
            unjoined.push_back(scored[i].item_id);
        } else {
            joined[i] = it->second;
        }
    }
    if (!unjoined.empty()) {
        std::string msg = std::to_string(unjoined.size()) + " scored item(s) have no benchmark entry:";
        for (std::size_t i = 0; i < unjoined.size() && i < 20; ++i) {
            msg += " " + std::to_string(unjoined[i]);
        }
        if (unjoined.size() > 20) {
            msg += " ...";
        }
        throw ValidationError(msg);
    }

    // Stable group order: enum order of (suite, task, context), "*" when not grouped.
    using Key = std::tuple<int, int, int>;
    std::map<Key, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < scored.size(); ++i) {
        const auto & b = *joined[i];
        groups[{grouping.suite ? static_cast<int>(b.suite) : -1, grouping.task ? b.task : -1,
                grouping.context ? static_cast<int>(b.context_mode) : -1}]
            .push_back(i);
    }

    EvalReport report;
    for (const auto & np : policies) {
        std::vector<Outcome> outcomes(scored.size());
        std::vector<std::exception_ptr> failures(scored.size());
        const auto n = static_cast<std::int64_t>(scored.size());
#pragma omp parallel for schedule(static)
        for (std::int64_t ii = 0; ii < n; ++ii) {
            const auto i = static_cast<std::size_t>(ii);
            outcomes[i].label = joined[i]->label;
            try {
                const auto d = decision::decide(np.policy, scored[i], mode);
                outcomes[i].predicted = d.verdict;
                outcomes[i].flipped = d.flipped;
            } catch (const UnparseableResponseError &) {
            } catch (const UndefinedScoreError &) {
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
        for (const auto & f : failures) {
            if (f) {
                std::rethrow_exception(f);
            }
        }
        for (const auto & [key, members] : groups) {
            std::vector<Outcome> sub;
            sub.reserve(members.size());
            for (std::size_t i : members) {
                sub.push_back(outcomes[i]);
            }
            ReportRow row;
            row.policy = np.name;
            const auto & first = *joined[members.front()];
            if (grouping.suite) row.suite = to_string(first.suite);
            if (grouping.task) row.task = task_to_string(first.task);
            if (grouping.context) row.context_mode = to_string(first.context_mode);
            row.metrics = compute_metrics(sub);
            report.rows.push_back(std::move(row));
        }
    }
    // Group-major ordering for readability: all policies of a group are adjacent.
    std::stable_sort(report.rows.begin(), report.rows.end(), [](const ReportRow & a, const ReportRow & b) {
        return std::tie(a.suite, a.task, a.context_mode) < std::tie(b.suite, b.task, b.context_mode);
    });
    return report;
}

EvalReport transfer_eval(const NamedPolicy & policy, const std::string & fit_suite,
                         std::span<const decision::ScoredItem> scored, std::span<const BenchmarkItem> benchmark,
                         GroupBy grouping, decision::TokenMode mode) {
    const NamedPolicy one[] = {policy};
    EvalReport report = run_policy(one, scored, benchmark, grouping, mode);

    TransferInfo info;
    info.fit_suite = fit_suite.empty() ? policy.policy.fit.dataset_id : fit_suite;
    std::vector<std::string> suites;
    for (const auto & b : benchmark) {
        const auto s = to_string(b.suite);
        if (std::find(suites.begin(), suites.end(), s) == suites.end()) {
            suites.push_back(s);
        }
    }
    for (std::size_t i = 0; i < suites.size(); ++i) {
        info.eval_suite += (i ? "+" : "") + suites[i];
    }
    info.fit_mean = policy.policy.fit.score_mean;
    info.fit_std = policy.policy.fit.score_std;
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto & it : scored) {
        if (auto s = policy_statistic(policy.policy, it)) {
            sum += *s;
            ++n;
        }
    }
    info.eval_mean = n ? sum / static_cast<double>(n) : 0.0;
    info.mean_delta = info.eval_mean - info.fit_mean;
    info.shift_flagged = n > 0 && std::abs(info.mean_delta) > kShiftEffectSize * info.fit_std;
    report.transfer = info;
    return report;
}

std::string report_to_csv(const EvalReport & report) {
    std::string out;
    const bool transfer = report.transfer.has_value();
    if (transfer) {
        out += "fit_suite,eval_suite,";
    }
    out += "policy,suite,task,context_mode,support,tp,fp,tn,fn,unparsed_count,flip_count,accuracy,precision,recall,f1,"
           "zero_division\n";
    for (const auto & r : report.rows) {
        if (transfer) {
            out += report.transfer->fit_suite + "," + report.transfer->eval_suite + ",";
        }
        const auto & m = r.metrics;
        out += r.policy + "," + r.suite + "," + r.task + "," + r.context_mode + "," + std::to_string(m.support) + "," +
               std::to_string(m.tp) + "," + std::to_string(m.fp) + "," + std::to_string(m.tn) + "," +
               std::to_string(m.fn) + "," + std::to_string(m.unparsed) + "," + std::to_string(m.flip_count) + "," +
               fmt_metric(m.accuracy) + "," + fmt_metric(m.precision) + "," + fmt_metric(m.recall) + "," +
               fmt_metric(m.f1) + "," + (m.zero_division ? "1" : "0") + "\n";
    }
    return out;
}

std::string report_to_json(const EvalReport & report) {
    ordered_json j;
    if (report.transfer) {
        const auto & t = *report.transfer;
        j["transfer"] = {{"fit_suite", t.fit_suite},   {"eval_suite", t.eval_suite}, {"fit_mean", t.fit_mean},
                         {"fit_std", t.fit_std},       {"eval_mean", t.eval_mean},   {"mean_delta", t.mean_delta},
                         {"shift_flagged", t.shift_flagged}};
    }
    ordered_json rows = ordered_json::array();
    for (const auto & r : report.rows) {
        const auto & m = r.metrics;
        ordered_json row;
        row["policy"] = r.policy;
        row["suite"] = r.suite;
        row["task"] = r.task;
        row["context_mode"] = r.context_mode;
        row["support"] = m.support;
        row["tp"] = m.tp;
        row["fp"] = m.fp;
        row["tn"] = m.tn;
        row["fn"] = m.fn;
        row["unparsed_count"] = m.unparsed;
        row["flip_count"] = m.flip_count;
        row["accuracy"] = m.accuracy;
        row["precision"] = m.precision;
        row["recall"] = m.recall;
        row["f1"] = m.f1;
        row["zero_division"] = m.zero_division;
        rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);
    return j.dump(2) + "\n";
}

namespace {

std::string group_name(const decision::ScoredItem & it) {
    std::string token = it.first_token.kind == decision::FirstToken::Kind::Yes  ? "Yes"
                        : it.first_token.kind == decision::FirstToken::Kind::No ? "No"
                                                                                : "Other";
    bool correct = false;
    if (it.first_token.kind != decision::FirstToken::Kind::Other) {
        const Verdict spoken = it.first_token.kind == decision::FirstToken::Kind::Yes ? Verdict::Yes : Verdict::No;
        correct = spoken == *it.label;
    }
    return token + "/" + (correct ? "correct" : "incorrect");
}

void histogram(std::span<const decision::ScoredItem> items, std::size_t bins, std::optional<std::uint32_t> layer,
               std::vector<DistributionRow> & out) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto & it : items) {
        if (!it.meta_score) {
            throw ValidationError("item " + std::to_string(it.item_id) + " has no meta-cognition score");
        }
        if (!it.label) {
            throw ValidationError("item " + std::to_string(it.item_id) + " has no label");
        }
        lo = std::min(lo, *it.meta_score);
        hi = std::max(hi, *it.meta_score);
    }
    if (hi == lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double width = (hi - lo) / static_cast<double>(bins);

    static const char * kGroups[] = {"Yes/correct", "Yes/incorrect", "No/correct", "No/incorrect", "Other/incorrect"};
    std::map<std::string, std::vector<std::size_t>> counts;
    for (const auto & it : items) {
        auto & c = counts[group_name(it)];
        c.resize(bins, 0);
        auto b = static_cast<std::size_t>(std::floor((*it.meta_score - lo) / width));
        b = std::min(b, bins - 1);
        ++c[b];
    }
    for (const char * g : kGroups) {
        const auto it = counts.find(g);
        if (it == counts.end()) {
            continue;
        }
        for (std::size_t b = 0; b < bins; ++b) {
            out.push_back({layer, g, b, lo + width * static_cast<double>(b),
                           b + 1 == bins ? hi : lo + width * static_cast<double>(b + 1), it->second[b]});
        }
    }
}

} // namespace

DistributionReport score_distribution_report(std::span<const decision::ScoredItem> scored, std::size_t bins) {
    if (bins < 2) {
        throw ValidationError("distribution report needs at least 2 bins");
    }
    if (scored.empty()) {
        throw InsufficientDataError("distribution report needs at least one item");
    }
    DistributionReport r;
    histogram(scored, bins, std::nullopt, r.rows);
    return r;
}

DistributionReport score_distribution_report(std::span<const LayerScores> layers, std::size_t bins) {
    if (bins < 2) {
        throw ValidationError("distribution report needs at least 2 bins");
    }
    if (layers.empty()) {
        throw InsufficientDataError("distribution report needs at least one layer");
    }
    DistributionReport r;
    for (const auto & l : layers) {
        if (l.items.empty()) {
            throw InsufficientDataError("layer " + std::to_string(l.layer) + " has no items");
        }
        histogram(l.items, bins, l.layer, r.rows);
    }
    return r;
}

std::string distribution_to_csv(const DistributionReport & report) {
    std::string out = "layer,group,bin,lo,hi,count\n";
    for (const auto & r : report.rows) {
        out += (r.layer ? std::to_string(*r.layer) : std::string("*")) + "," + r.group + "," + std::to_string(r.bin) +
               "," + fmt_metric(r.lo) + "," + fmt_metric(r.hi) + "," + std::to_string(r.count) + "\n";
    }
    return out;
}

std::string distribution_to_json(const DistributionReport & report) {
    ordered_json rows = ordered_json::array();
    for (const auto & r : report.rows) {
        ordered_json row;
        row["layer"] = r.layer ? ordered_json(*r.layer) : ordered_json(nullptr);
        row["group"] = r.group;
        row["bin"] = r.bin;
        row["lo"] = r.lo;
        row["hi"] = r.hi;
        row["count"] = r.count;
        rows.push_back(std::move(row));
    }
    return ordered_json{{"rows", rows}}.dump(2) + "\n";
}

} // namespace meco::eval
