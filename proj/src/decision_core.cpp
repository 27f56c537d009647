#include "meco/decision_core.hpp"

#include "meco/error.hpp"
#include "meco/io_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <vector>

namespace meco::decision {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string lower_trimmed(const std::string & text) {
    std::size_t b = 0;
    std::size_t e = text.size();
    while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) {
        ++b;
    }
    while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) {
        --e;
    }
    std::string out = text.substr(b, e - b);
    for (char & c : out) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

Verdict resolve_token(const ScoredItem & item, TokenMode mode) {
    switch (item.first_token.kind) {
    case FirstToken::Kind::Yes:
        return Verdict::Yes;
    case FirstToken::Kind::No:
        return Verdict::No;
    case FirstToken::Kind::Other:
        break;
    }
    if (mode == TokenMode::Lenient) {
        return Verdict::Yes;
    }
    throw UnparseableResponseError("item " + std::to_string(item.item_id) + " has first token \"" +
                                   item.first_token.text + "\" (neither Yes nor No)");
}

const Verdict & require_label(const ScoredItem & item) {
    if (!item.label) {
        throw ValidationError("validation item " + std::to_string(item.item_id) + " has no label");
    }
    return *item.label;
}

struct Sweep {
    double threshold;
    std::size_t correct;
    std::size_t candidates;
};

// Exhaustive 1-D search over {-inf} + midpoints of distinct scores + {+inf}.
// For both sides an item's verdict is Yes while the threshold is below its
// score and No once the threshold passes it (Yes side: Yes iff s >= l; No
// side: No iff s <= l), so one sweep serves both.
Sweep search_threshold(std::vector<std::pair<double, Verdict>> items, bool yes_side, bool prefer_low) {
    std::sort(items.begin(), items.end(), [](const auto & a, const auto & b) { return a.first < b.first; });

    // At l = -inf every verdict is Yes.
    std::size_t correct = 0;
    for (const auto & [s, label] : items) {
        correct += label == Verdict::Yes;
    }
    Sweep best{-kInf, correct, 1};
    std::size_t i = 0;
    while (i < items.size()) {
        std::size_t j = i;
        std::size_t yes_here = 0;
        std::size_t no_here = 0;
        while (j < items.size() && items[j].first == items[i].first) {
            (items[j].second == Verdict::Yes ? yes_here : no_here) += 1;
            ++j;
        }
        // Threshold moves above this score group: its verdicts turn from Yes to No.
        correct = correct + no_here - yes_here;
        double l = kInf;
        if (j < items.size()) {
            const double a = items[i].first;
            const double b = items[j].first;
            l = a + (b - a) / 2.0;
            // adjacent doubles: the midpoint rounds onto an endpoint
            if (!(a < l && l < b)) {
                l = yes_side ? b : a;
            }
        }
        ++best.candidates;
        if (correct > best.correct || (!prefer_low && correct == best.correct)) {
            best.correct = correct;
            best.threshold = l;
        }
        i = j;
    }
    return best;
}

void fill_moments(FitMetadata & fit, const std::vector<double> & values) {
    if (values.empty()) {
        return;
    }
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) {
        ss += (v - mean) * (v - mean);
    }
    fit.score_mean = mean;
    fit.score_std = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

nlohmann::ordered_json threshold_json(double v) {
    if (std::isinf(v)) {
        return v < 0 ? "-inf" : "+inf";
    }
    return v;
}

double threshold_from_json(const nlohmann::json & j) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "-inf") {
            return -kInf;
        }
        if (s == "+inf" || s == "inf") {
            return kInf;
        }
        throw FormatError("bad threshold sentinel: " + s);
    }
    return j.get<double>();
}

} // namespace

std::string to_string(Verdict v) { return v == Verdict::Yes ? "Yes" : "No"; }

Verdict parse_verdict(const std::string & text) {
    const auto t = lower_trimmed(text);
    if (t == "yes") {
        return Verdict::Yes;
    }
    if (t == "no") {
        return Verdict::No;
    }
    throw ValidationError("expected \"Yes\" or \"No\", got \"" + text + "\"");
}

FirstToken FirstToken::parse(const std::string & text) {
    const auto t = lower_trimmed(text);
    if (t == "yes") {
        return {Kind::Yes, text};
    }
    if (t == "no") {
        return {Kind::No, text};
    }
    return {Kind::Other, text};
}

std::string DecisionPolicy::kind_name() const {
    return std::visit(
        [](const auto & k) -> std::string {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, NaivePolicy>) {
                return "Naive";
            } else if constexpr (std::is_same_v<K, PYesPolicy>) {
                return "PYes";
            } else {
                return "MeCo";
            }
        },
        kind);
}

double score_first_token(const probe::ProbeSet & probes, std::uint32_t layer_index,
                         const store::ActivationRecord & record) {
    if (layer_index >= probes.probes.size()) {
        throw ValidationError("scoring layer " + std::to_string(layer_index) + " out of range (L = " +
                              std::to_string(probes.probes.size()) + ")");
    }
    if (record.role != store::Role::InferenceFirstToken) {
        throw ValidationError("score_first_token needs an InferenceFirstToken record (query " +
                              std::to_string(record.query_id) + ")");
    }
    if (record.layer_index != layer_index) {
        throw ValidationError("record layer " + std::to_string(record.layer_index) + " does not match scoring layer " +
                              std::to_string(layer_index));
    }
    const auto & dir = probes.probes[layer_index].direction;
    if (record.vector.size() != dir.size()) {
        throw ShapeError("record dimension " + std::to_string(record.vector.size()) + " != probe dimension " +
                         std::to_string(dir.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < dir.size(); ++i) {
        s += dir[i] * static_cast<double>(record.vector[i]);
    }
    return s;
}

LayerWindow parse_layer_window(const std::string & text) {
    const auto colon = text.find(':', text.empty() ? 0 : 1);
    if (colon == std::string::npos) {
        throw ValidationError("layer window must look like FROM:TO, got \"" + text + "\"");
    }
    try {
        std::size_t used_a = 0;
        std::size_t used_b = 0;
        LayerWindow w{std::stoi(text.substr(0, colon), &used_a), std::stoi(text.substr(colon + 1), &used_b)};
        if (used_a != colon || used_b != text.size() - colon - 1) {
            throw ValidationError("");
        }
        return w;
    } catch (const std::exception &) {
        throw ValidationError("layer window must look like FROM:TO, got \"" + text + "\"");
    }
}

std::uint32_t select_layer(const probe::ProbeSet & probes, LayerWindow window) {
    const auto L = static_cast<std::uint32_t>(probes.probes.size());
    if (L == 0) {
        throw ValidationError("probe set is empty");
    }
    const auto from = store::resolve_layer(window.from, L);
    const auto to = store::resolve_layer(window.to, L);
    if (from > to) {
        throw ValidationError("layer window [" + std::to_string(window.from) + ", " + std::to_string(window.to) +
                              "] is empty");
    }
    std::uint32_t best = to;
    for (std::uint32_t l = to + 1; l-- > from;) {
        if (probes.probes[l].heldout_accuracy > probes.probes[best].heldout_accuracy) {
            best = l;
        }
    }
    return best;
}

Decision decide_naive(const ScoredItem & item, TokenMode mode) {
    Decision d;
    d.verdict = resolve_token(item, mode);
    d.flipped = false;
    d.token = item.first_token.kind;
    d.meta_score = item.meta_score;
    return d;
}

double yes_score(double p_yes, double p_no) {
    if (!(p_yes >= 0.0) || !(p_no >= 0.0)) {
        throw UndefinedScoreError("probabilities must be non-negative");
    }
    const double total = p_yes + p_no;
    if (total <= 0.0) {
        throw UndefinedScoreError("Yes-score undefined: P(Yes) + P(No) = 0");
    }
    return p_yes / total;
}

Decision decide_p_yes(const ScoredItem & item, double threshold) {
    Decision d;
    d.yes_score = yes_score(item.p_yes, item.p_no);
    d.verdict = *d.yes_score > threshold ? Verdict::Yes : Verdict::No;
    d.token = item.first_token.kind;
    d.meta_score = item.meta_score;
    if (item.first_token.kind != FirstToken::Kind::Other) {
        const Verdict spoken = item.first_token.kind == FirstToken::Kind::Yes ? Verdict::Yes : Verdict::No;
        d.flipped = d.verdict != spoken;
    }
    return d;
}

Decision decide_meco(const ScoredItem & item, const MeCoPolicy & policy, TokenMode mode) {
    const Verdict spoken = resolve_token(item, mode);
    if (!item.meta_score) {
        throw ValidationError("item " + std::to_string(item.item_id) + " has no meta-cognition score");
    }
    const double s = *item.meta_score;
    Decision d;
    d.token = item.first_token.kind;
    d.meta_score = s;
    // Each verbal answer is only compared against its own threshold.
    if (spoken == Verdict::Yes) {
        d.verdict = s >= policy.l_yes ? Verdict::Yes : Verdict::No;
    } else {
        d.verdict = s <= policy.l_no ? Verdict::No : Verdict::Yes;
    }
    d.flipped = d.verdict != spoken;
    return d;
}

Decision decide(const DecisionPolicy & policy, const ScoredItem & item, TokenMode mode) {
    return std::visit(
        [&](const auto & k) -> Decision {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, NaivePolicy>) {
                return decide_naive(item, mode);
            } else if constexpr (std::is_same_v<K, PYesPolicy>) {
                return decide_p_yes(item, k.threshold);
            } else {
                return decide_meco(item, k, mode);
            }
        },
        policy.kind);
}

DecisionPolicy fit_dual_thresholds(std::span<const ScoredItem> validation, std::uint32_t layer_index) {
    if (validation.empty()) {
        throw InsufficientDataError("validation set is empty");
    }
    std::vector<std::pair<double, Verdict>> yes_items;
    std::vector<std::pair<double, Verdict>> no_items;
    std::vector<double> scores;
    FitMetadata fit;
    for (const auto & item : validation) {
        if (item.first_token.kind == FirstToken::Kind::Other) {
            ++fit.excluded_other;
            continue;
        }
        const Verdict label = require_label(item);
        if (!item.meta_score) {
            throw ValidationError("validation item " + std::to_string(item.item_id) + " has no meta-cognition score");
        }
        (item.first_token.kind == FirstToken::Kind::Yes ? yes_items : no_items).emplace_back(*item.meta_score, label);
        scores.push_back(*item.meta_score);
    }
    if (yes_items.empty() && no_items.empty()) {
        throw InsufficientDataError("no validation item has a Yes/No first token");
    }

    std::size_t naive_correct = 0;
    for (const auto & [s, label] : yes_items) {
        naive_correct += label == Verdict::Yes;
    }
    for (const auto & [s, label] : no_items) {
        naive_correct += label == Verdict::No;
    }

    MeCoPolicy policy = MeCoPolicy::never_flip(layer_index);
    std::size_t fitted_correct = 0;
    std::size_t grid = 0;
    if (!yes_items.empty()) {
        const auto best = search_threshold(yes_items, /*yes_side=*/true, /*prefer_low=*/true);
        policy.l_yes = best.threshold;
        fitted_correct += best.correct;
        grid += best.candidates;
    }
    if (!no_items.empty()) {
        const auto best = search_threshold(no_items, /*yes_side=*/false, /*prefer_low=*/false);
        policy.l_no = best.threshold;
        fitted_correct += best.correct;
        grid += best.candidates;
    }

    const double n = static_cast<double>(yes_items.size() + no_items.size());
    fit.fitted_items = yes_items.size() + no_items.size();
    fit.grid_size = grid;
    fit.fitted_accuracy = static_cast<double>(fitted_correct) / n;
    fit.naive_accuracy = static_cast<double>(naive_correct) / n;
    fill_moments(fit, scores);
    return {policy, fit};
}

DecisionPolicy fit_p_yes_threshold(std::span<const ScoredItem> validation) {
    if (validation.empty()) {
        throw InsufficientDataError("validation set is empty");
    }
    std::vector<std::pair<double, Verdict>> items;
    items.reserve(validation.size());
    FitMetadata fit;
    std::size_t naive_correct = 0;
    std::size_t naive_n = 0;
    for (const auto & item : validation) {
        const Verdict label = require_label(item);
        items.emplace_back(yes_score(item.p_yes, item.p_no), label);
        if (item.first_token.kind != FirstToken::Kind::Other) {
            ++naive_n;
            naive_correct += (item.first_token.kind == FirstToken::Kind::Yes) == (label == Verdict::Yes);
        } else {
            ++fit.excluded_other;
        }
    }
    std::sort(items.begin(), items.end(), [](const auto & a, const auto & b) { return a.first < b.first; });

    std::vector<double> candidates = {0.0, 0.5, 1.0};
    for (std::size_t i = 0; i + 1 < items.size(); ++i) {
        if (items[i + 1].first > items[i].first) {
            candidates.push_back(items[i].first + (items[i + 1].first - items[i].first) / 2.0);
        }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    // suffix_yes[k] = # label Yes among items[k..]; prefix_no[k] = # label No among items[..k).
    const std::size_t n = items.size();
    std::vector<std::size_t> prefix_no(n + 1, 0);
    std::vector<std::size_t> suffix_yes(n + 1, 0);
    for (std::size_t k = 0; k < n; ++k) {
        prefix_no[k + 1] = prefix_no[k] + (items[k].second == Verdict::No);
    }
    for (std::size_t k = n; k-- > 0;) {
        suffix_yes[k] = suffix_yes[k + 1] + (items[k].second == Verdict::Yes);
    }

    double best_l = 0.5;
    std::size_t best_correct = 0;
    bool have = false;
    for (double l : candidates) {
        // First index with yes_score > l: those are predicted Yes.
        const auto split = static_cast<std::size_t>(
            std::upper_bound(items.begin(), items.end(), l, [](double v, const auto & it) { return v < it.first; }) -
            items.begin());
        const std::size_t correct = prefix_no[split] + suffix_yes[split];
        const bool closer = std::abs(l - 0.5) < std::abs(best_l - 0.5);
        if (!have || correct > best_correct || (correct == best_correct && closer)) {
            best_correct = correct;
            best_l = l;
            have = true;
        }
    }

    fit.fitted_items = n;
    fit.grid_size = candidates.size();
    fit.fitted_accuracy = static_cast<double>(best_correct) / static_cast<double>(n);
    fit.naive_accuracy = naive_n ? static_cast<double>(naive_correct) / static_cast<double>(naive_n) : 0.0;
    std::vector<double> ys;
    ys.reserve(n);
    for (const auto & it : items) {
        ys.push_back(it.first);
    }
    fill_moments(fit, ys);
    return {PYesPolicy{best_l}, fit};
}

std::string policy_to_json(const DecisionPolicy & policy) {
    nlohmann::ordered_json j;
    j["kind"] = policy.kind_name();
    if (const auto * m = std::get_if<MeCoPolicy>(&policy.kind)) {
        j["layer_index"] = m->layer_index;
        j["l_yes"] = threshold_json(m->l_yes);
        j["l_no"] = threshold_json(m->l_no);
    } else if (const auto * p = std::get_if<PYesPolicy>(&policy.kind)) {
        j["l"] = threshold_json(p->threshold);
    }
    const auto & f = policy.fit;
    nlohmann::ordered_json fit;
    fit["dataset_id"] = f.dataset_id;
    fit["grid_size"] = f.grid_size;
    fit["fitted_items"] = f.fitted_items;
    fit["excluded_other"] = f.excluded_other;
    fit["fitted_accuracy"] = f.fitted_accuracy;
    fit["naive_accuracy"] = f.naive_accuracy;
    fit["score_mean"] = f.score_mean;
    fit["score_std"] = f.score_std;
    j["fit"] = std::move(fit);
    return j.dump(2) + "\n";
}

DecisionPolicy policy_from_json(const std::string & text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception & e) {
        throw FormatError("policy is not valid JSON: " + std::string(e.what()));
    }
    DecisionPolicy policy;
    try {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "Naive") {
            policy.kind = NaivePolicy{};
        } else if (kind == "PYes") {
            policy.kind = PYesPolicy{threshold_from_json(j.at("l"))};
        } else if (kind == "MeCo") {
            policy.kind = MeCoPolicy{j.at("layer_index").get<std::uint32_t>(), threshold_from_json(j.at("l_yes")),
                                     threshold_from_json(j.at("l_no"))};
        } else {
            throw FormatError("unknown policy kind: " + kind);
        }
        if (j.contains("fit")) {
            const auto & f = j.at("fit");
            policy.fit.dataset_id = f.value("dataset_id", std::string());
            policy.fit.grid_size = f.value("grid_size", std::size_t{0});
            policy.fit.fitted_items = f.value("fitted_items", std::size_t{0});
            policy.fit.excluded_other = f.value("excluded_other", std::size_t{0});
            policy.fit.fitted_accuracy = f.value("fitted_accuracy", 0.0);
            policy.fit.naive_accuracy = f.value("naive_accuracy", 0.0);
            policy.fit.score_mean = f.value("score_mean", 0.0);
            policy.fit.score_std = f.value("score_std", 0.0);
        }
    } catch (const nlohmann::json::exception & e) {
        throw FormatError("policy missing or mistyped field: " + std::string(e.what()));
    }
    return policy;
}

} // namespace meco::decision
