#include "meco/synth_oracle.hpp"

#include "meco/error.hpp"
#include "meco/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace meco::synth {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// P(X <= x) for X ~ N(mean, sd)
double normal_cdf(double x, const Population & p) {
    if (std::isinf(x)) {
        return x < 0 ? 0.0 : 1.0;
    }
    return 0.5 * std::erfc(-(x - p.mean) / (p.stddev * std::sqrt(2.0)));
}

std::vector<double> random_unit(std::uint32_t dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> u(dim);
    double n = 0.0;
    do {
        n = 0.0;
        for (double & x : u) {
            x = rng.normal();
            n += x * x;
        }
    } while (n == 0.0);
    n = std::sqrt(n);
    for (double & x : u) {
        x /= n;
    }
    return u;
}

void check_class(const TokenClass & c, const char * name) {
    if (!(c.correct_weight > 0.0 && c.correct_weight < 1.0)) {
        throw ValidationError(std::string(name) + " correct_weight must lie in (0, 1)");
    }
    if (!(c.correct.stddev > 0.0) || !(c.incorrect.stddev > 0.0)) {
        throw ValidationError(std::string(name) + " population stddevs must be positive");
    }
}

struct GridBest {
    double threshold;
    double accuracy;
};

GridBest best_threshold(const TokenClass & cls, bool yes_side, std::size_t points) {
    const double lo = std::min(cls.correct.mean - 10.0 * cls.correct.stddev, cls.incorrect.mean - 10.0 * cls.incorrect.stddev);
    const double hi = std::max(cls.correct.mean + 10.0 * cls.correct.stddev, cls.incorrect.mean + 10.0 * cls.incorrect.stddev);
    // Sentinels first so that ties keep the never-flip rule.
    GridBest best{yes_side ? -kInf : kInf, class_accuracy(cls, yes_side, yes_side ? -kInf : kInf)};
    const double other = class_accuracy(cls, yes_side, yes_side ? kInf : -kInf);
    if (other > best.accuracy) {
        best = {yes_side ? kInf : -kInf, other};
    }
    for (std::size_t i = 0; i < points; ++i) {
        const double l = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
        const double a = class_accuracy(cls, yes_side, l);
        if (a > best.accuracy) {
            best = {l, a};
        }
    }
    return best;
}

} // namespace

void validate(const PlantedSpec & spec) {
    if (spec.dim == 0) {
        throw ValidationError("planted spec: d must be positive");
    }
    if (spec.layer_count == 0) {
        throw ValidationError("planted spec: layer count must be positive");
    }
    if (!(spec.signal > 0.0)) {
        throw ValidationError("planted spec: signal must be > 0");
    }
    if (!(spec.noise >= 0.0)) {
        throw ValidationError("planted spec: noise must be >= 0");
    }
    if (spec.truncations_per_query == 0) {
        throw ValidationError("planted spec: truncations_per_query must be positive");
    }
    for (double s : spec.noise_per_layer) {
        if (!(s >= 0.0)) {
            throw ValidationError("planted spec: per-layer noise must be >= 0");
        }
    }
    if (!spec.noise_per_layer.empty() && spec.noise_per_layer.size() != spec.layer_count) {
        throw ValidationError("planted spec: noise_per_layer needs one entry per layer");
    }
    for (auto l : spec.layers) {
        if (l >= spec.layer_count) {
            throw ValidationError("planted spec: layer " + std::to_string(l) + " >= L");
        }
    }
    if (!spec.direction.empty()) {
        if (spec.direction.size() != spec.dim) {
            throw ValidationError("planted spec: direction has wrong dimension");
        }
        double n = 0.0;
        for (double x : spec.direction) {
            n += x * x;
        }
        if (std::abs(std::sqrt(n) - 1.0) > 1e-9) {
            throw ValidationError("planted spec: direction must be unit norm");
        }
    }
}

PlantedData generate_planted(const PlantedSpec & spec) {
    validate(spec);
    PlantedData out;
    out.header = {"synthetic-planted", "meta-cognition", spec.dim, spec.layer_count, 0};
    out.direction = spec.direction.empty() ? planted_direction(spec.dim, spec.seed) : spec.direction;

    std::vector<std::uint32_t> layers = spec.layers;
    if (layers.empty()) {
        for (std::uint32_t l = 0; l < spec.layer_count; ++l) {
            layers.push_back(l);
        }
    }
    const double half = spec.signal / 2.0;
    out.records.reserve(layers.size() * spec.n_pairs * 2);
    std::vector<double> base(spec.dim);
    for (auto layer : layers) {
        const double noise = spec.noise_per_layer.empty() ? spec.noise : spec.noise_per_layer[layer];
        Rng rng(derive_seed(spec.seed, layer));
        for (std::size_t i = 0; i < spec.n_pairs; ++i) {
            for (double & b : base) {
                b = rng.normal();
            }
            store::ActivationRecord plus;
            plus.query_id = i / spec.truncations_per_query;
            plus.truncation_index = static_cast<std::uint32_t>(i % spec.truncations_per_query + 1);
            plus.layer_index = layer;
            plus.variant = store::Variant::Experimental;
            plus.role = store::Role::TrainContrastive;
            plus.vector.resize(spec.dim);
            store::ActivationRecord minus = plus;
            minus.variant = store::Variant::Reference;
            for (std::uint32_t c = 0; c < spec.dim; ++c) {
                plus.vector[c] = static_cast<float>(base[c] + half * out.direction[c] + noise * rng.normal());
            }
            for (std::uint32_t c = 0; c < spec.dim; ++c) {
                minus.vector[c] = static_cast<float>(base[c] - half * out.direction[c] + noise * rng.normal());
            }
            out.records.push_back(std::move(plus));
            out.records.push_back(std::move(minus));
        }
    }
    out.header.count = out.records.size();
    return out;
}

std::vector<double> planted_direction(std::uint32_t dim, std::uint64_t seed) {
    return random_unit(dim, derive_seed(seed, 0xD1EC));
}

void validate(const MixtureSpec & spec) {
    if (!(spec.yes_fraction > 0.0 && spec.yes_fraction < 1.0)) {
        throw ValidationError("mixture spec: yes_fraction must lie in (0, 1)");
    }
    check_class(spec.yes, "Yes-token");
    check_class(spec.no, "No-token");
}

double class_accuracy(const TokenClass & cls, bool yes_side, double threshold) {
    const double w = cls.correct_weight;
    if (yes_side) {
        // correct Yes kept when s >= l; incorrect Yes flipped when s < l
        return w * (1.0 - normal_cdf(threshold, cls.correct)) + (1.0 - w) * normal_cdf(threshold, cls.incorrect);
    }
    // correct No kept when s <= l; incorrect No flipped when s > l
    return w * normal_cdf(threshold, cls.correct) + (1.0 - w) * (1.0 - normal_cdf(threshold, cls.incorrect));
}

double expected_accuracy(const MixtureSpec & spec, double l_yes, double l_no) {
    return spec.yes_fraction * class_accuracy(spec.yes, true, l_yes) +
           (1.0 - spec.yes_fraction) * class_accuracy(spec.no, false, l_no);
}

BayesTruth bayes_thresholds(const MixtureSpec & spec, std::size_t grid_points) {
    validate(spec);
    const auto y = best_threshold(spec.yes, true, grid_points);
    const auto n = best_threshold(spec.no, false, grid_points);
    BayesTruth t;
    t.l_yes = y.threshold;
    t.l_no = n.threshold;
    t.accuracy_yes = y.accuracy;
    t.accuracy_no = n.accuracy;
    t.accuracy = spec.yes_fraction * y.accuracy + (1.0 - spec.yes_fraction) * n.accuracy;
    return t;
}

MixtureData generate_mixture(const MixtureSpec & spec) {
    validate(spec);
    MixtureData out;
    out.bayes = bayes_thresholds(spec);
    out.items.reserve(spec.n_items);
    Rng rng(spec.seed);
    for (std::size_t i = 0; i < spec.n_items; ++i) {
        decision::ScoredItem it;
        it.item_id = spec.first_item_id + i;
        const bool yes_token = rng.uniform() < spec.yes_fraction;
        const TokenClass & cls = yes_token ? spec.yes : spec.no;
        const bool correct = rng.uniform() < cls.correct_weight;
        const Population & pop = correct ? cls.correct : cls.incorrect;
        it.meta_score = rng.normal(pop.mean, pop.stddev);
        it.first_token = yes_token ? decision::FirstToken::yes() : decision::FirstToken::no();
        it.label = (yes_token == correct) ? decision::Verdict::Yes : decision::Verdict::No;
        // Yes-score agrees with the spoken token: (0.5, 1] for Yes, [0, 0.5) for No.
        const double u = rng.uniform();
        const double ys = yes_token ? 1.0 - 0.5 * u : 0.5 * u;
        constexpr double kMass = 0.9;
        it.p_yes = kMass * ys;
        it.p_no = kMass * (1.0 - ys);
        out.items.push_back(std::move(it));
    }
    return out;
}

std::vector<eval::BenchmarkItem> benchmark_for(std::span<const decision::ScoredItem> items, eval::Suite suite,
                                               eval::ContextMode mode) {
    std::vector<eval::BenchmarkItem> out;
    out.reserve(items.size());
    for (const auto & it : items) {
        if (!it.label) {
            throw ValidationError("benchmark_for needs labelled items");
        }
        eval::BenchmarkItem b;
        b.item_id = it.item_id;
        b.suite = suite;
        b.task = suite == eval::Suite::MeCaTool ? 1 : suite == eval::Suite::MeCaRAG ? eval::kRagTask : eval::kNoTask;
        b.category = *it.label == decision::Verdict::Yes ? eval::Category::Positive : eval::Category::Negative;
        b.context_mode = mode;
        b.turns.push_back({eval::Speaker::User, "synthetic query " + std::to_string(it.item_id)});
        b.label = *it.label;
        out.push_back(std::move(b));
    }
    return out;
}

std::vector<store::ActivationRecord> inference_records(std::span<const decision::ScoredItem> items,
                                                       std::span<const double> direction, std::uint32_t layer_count,
                                                       double noise, std::uint64_t seed) {
    const std::size_t d = direction.size();
    std::vector<store::ActivationRecord> out;
    out.reserve(items.size() * layer_count);
    Rng rng(seed);
    std::vector<double> e(d);
    for (const auto & it : items) {
        if (!it.meta_score) {
            throw ValidationError("inference_records needs items with meta scores");
        }
        for (std::uint32_t layer = 0; layer < layer_count; ++layer) {
            double along = 0.0;
            for (std::size_t c = 0; c < d; ++c) {
                e[c] = noise * rng.normal();
                along += e[c] * direction[c];
            }
            store::ActivationRecord r;
            r.query_id = it.item_id;
            r.truncation_index = 1;
            r.layer_index = layer;
            r.variant = store::Variant::Experimental;
            r.role = store::Role::InferenceFirstToken;
            r.first_token_text = it.first_token.text;
            r.vector.resize(d);
            for (std::size_t c = 0; c < d; ++c) {
                r.vector[c] = static_cast<float>(*it.meta_score * direction[c] + e[c] - along * direction[c]);
            }
            out.push_back(std::move(r));
        }
    }
    return out;
}

} // namespace meco::synth
