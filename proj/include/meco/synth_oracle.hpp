#pragma once

#include "meco/activation_store.hpp"
#include "meco/decision_core.hpp"
#include "meco/eval_harness.hpp"

#include <cstdint>
#include <vector>

namespace meco::synth {

struct PlantedSpec {
    std::uint32_t dim = 16;
    std::size_t n_pairs = 64;
    std::vector<double> direction; // unit norm; empty -> drawn from the seed
    double signal = 1.0;
    double noise = 0.1;
    std::uint64_t seed = 0;
    std::uint32_t layer_count = 1;
    std::vector<std::uint32_t> layers; // empty -> all layers
    std::vector<double> noise_per_layer; // optional override of `noise`, indexed by layer
    std::uint32_t truncations_per_query = 4;
};

void validate(const PlantedSpec & spec);

struct PlantedData {
    store::ContainerHeader header;
    std::vector<store::ActivationRecord> records;
    std::vector<double> direction;
};

// plus_i = b_i + (s/2) u + e+,  minus_i = b_i - (s/2) u + e-,  b_i ~ N(0, I), e~ N(0, noise^2 I).
// Pair i maps to query_id = i / truncations_per_query, k = i % truncations_per_query + 1.
PlantedData generate_planted(const PlantedSpec & spec);

// The direction generate_planted draws when the spec leaves it empty.
std::vector<double> planted_direction(std::uint32_t dim, std::uint64_t seed);

struct Population {
    double mean = 0.0;
    double stddev = 1.0;
};

struct TokenClass {
    double correct_weight = 0.7; // share of this token's items whose verbal answer is right
    Population correct;
    Population incorrect;
};

struct MixtureSpec {
    std::size_t n_items = 2000;
    double yes_fraction = 0.5; // share of items whose first token is Yes
    TokenClass yes{0.7, {1.0, 0.5}, {-0.5, 0.5}};
    TokenClass no{0.6, {-1.0, 0.5}, {0.5, 0.5}};
    std::uint64_t seed = 0;
    std::uint64_t first_item_id = 0;
};

void validate(const MixtureSpec & spec);

// Best threshold rule on the generating densities, found on a fine grid.
struct BayesTruth {
    double l_yes = 0.0;
    double l_no = 0.0;
    double accuracy_yes = 0.0; // within Yes-token items
    double accuracy_no = 0.0;
    double accuracy = 0.0;
};

struct MixtureData {
    std::vector<decision::ScoredItem> items;
    BayesTruth bayes;
};

MixtureData generate_mixture(const MixtureSpec & spec);

BayesTruth bayes_thresholds(const MixtureSpec & spec, std::size_t grid_points = 200001);

// Population accuracy of a dual-threshold rule under the generating densities.
double expected_accuracy(const MixtureSpec & spec, double l_yes, double l_no);

// Population accuracy within one token class (Yes side: keep iff s >= l; No side: keep iff s <= l).
double class_accuracy(const TokenClass & cls, bool yes_side, double threshold);

// MeCaTool task-1 benchmark rows matching the generated items (Positive for label Yes).
std::vector<eval::BenchmarkItem> benchmark_for(std::span<const decision::ScoredItem> items, eval::Suite suite,
                                               eval::ContextMode mode = eval::ContextMode::WithoutContext);

// InferenceFirstToken records whose projection onto `direction` equals the
// item's meta_score plus orthogonal noise of scale `noise`, for every layer.
std::vector<store::ActivationRecord> inference_records(std::span<const decision::ScoredItem> items,
                                                       std::span<const double> direction, std::uint32_t layer_count,
                                                       double noise, std::uint64_t seed);

} // namespace meco::synth
