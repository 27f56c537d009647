#pragma once

#include "meco/activation_store.hpp"
#include "meco/probe_lab.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>

namespace meco::decision {

enum class Verdict { No, Yes };

std::string to_string(Verdict v);
Verdict parse_verdict(const std::string & text);

struct FirstToken {
    enum class Kind { Yes, No, Other };
    Kind kind = Kind::Other;
    std::string text; // raw surface form

    static FirstToken yes() { return {Kind::Yes, "Yes"}; }
    static FirstToken no() { return {Kind::No, "No"}; }
    static FirstToken other(std::string t) { return {Kind::Other, std::move(t)}; }

    // "Yes"/" yes"/"YES" -> Yes, likewise No; anything else is Other.
    static FirstToken parse(const std::string & text);
};

struct ScoredItem {
    std::uint64_t item_id = 0;
    FirstToken first_token;
    std::optional<double> meta_score;
    double p_yes = 0.0;
    double p_no = 0.0;
    std::optional<Verdict> label;
};

enum class TokenMode { Strict, Lenient };

struct NaivePolicy {};

struct PYesPolicy {
    double threshold = 0.5;
};

struct MeCoPolicy {
    std::uint32_t layer_index = 0;
    double l_yes = -std::numeric_limits<double>::infinity();
    double l_no = std::numeric_limits<double>::infinity();

    static MeCoPolicy never_flip(std::uint32_t layer) { return {layer}; }
};

struct FitMetadata {
    std::string dataset_id;
    std::size_t grid_size = 0;      // candidate thresholds examined
    std::size_t fitted_items = 0;   // items with a Yes/No first token and a label
    std::size_t excluded_other = 0; // items skipped for an Other first token
    double fitted_accuracy = 0.0;
    double naive_accuracy = 0.0;
    double score_mean = 0.0; // statistic the thresholds act on, over fitted items
    double score_std = 0.0;
};

struct DecisionPolicy {
    std::variant<NaivePolicy, PYesPolicy, MeCoPolicy> kind;
    FitMetadata fit;

    std::string kind_name() const;
};

struct Decision {
    Verdict verdict = Verdict::No;
    bool flipped = false;
    FirstToken::Kind token = FirstToken::Kind::Other;
    std::optional<double> meta_score;
    std::optional<double> yes_score;
};

double score_first_token(const probe::ProbeSet & probes, std::uint32_t layer_index,
                         const store::ActivationRecord & record);

struct LayerWindow {
    int from = -5;
    int to = -2;
};

LayerWindow parse_layer_window(const std::string & text); // "-5:-2"

// Highest held-out accuracy inside the window; ties go to the larger index.
std::uint32_t select_layer(const probe::ProbeSet & probes, LayerWindow window = {});

Decision decide_naive(const ScoredItem & item, TokenMode mode = TokenMode::Strict);

double yes_score(double p_yes, double p_no);

// Yes iff yes_score > threshold.
Decision decide_p_yes(const ScoredItem & item, double threshold);

// Yes token kept iff meta_score >= l_yes; No token kept iff meta_score <= l_no.
Decision decide_meco(const ScoredItem & item, const MeCoPolicy & policy, TokenMode mode = TokenMode::Strict);

Decision decide(const DecisionPolicy & policy, const ScoredItem & item, TokenMode mode = TokenMode::Strict);

DecisionPolicy fit_dual_thresholds(std::span<const ScoredItem> validation, std::uint32_t layer_index);

DecisionPolicy fit_p_yes_threshold(std::span<const ScoredItem> validation);

std::string policy_to_json(const DecisionPolicy & policy);
DecisionPolicy policy_from_json(const std::string & text);

} // namespace meco::decision
