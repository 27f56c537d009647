#pragma once

#include "meco/activation_store.hpp"
#include "meco/kernels.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace meco::probe {

// Row i holds (-1)^i (plus_i - minus_i) for the i-th supplied pair.
struct DifferenceMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    kernels::RowMajor view() const { return {data, rows, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

DifferenceMatrix build_difference_matrix(std::span<const store::ContrastivePair> pairs);

struct Probe {
    std::uint32_t layer_index = 0;
    std::vector<double> direction; // unit norm
    std::vector<double> center;    // mean of the signed difference rows
    double heldout_accuracy = 0.0;
    double eigenvalue = 0.0;
    std::size_t train_pairs = 0;
    std::size_t heldout_pairs = 0;
    std::size_t orphans = 0;
};

struct FitOptions {
    double tolerance = 1e-10;
    int max_iterations = 10000;
    // Dimensions up to this size use a dense Jacobi eigendecomposition
    // instead of power iteration.
    std::size_t dense_max_dim = 64;
};

// First principal component of the mean-centered rows, oriented so that the
// mean of <direction, plus - minus> over the rows is non-negative.
Probe fit_probe(const DifferenceMatrix & matrix, std::uint32_t layer_index, const FitOptions & options = {});

// Fraction of pairs with <direction, plus> > <direction, minus>; ties are misses.
double classify_pair_accuracy(const Probe & probe, std::span<const store::ContrastivePair> heldout);

struct ProbeSet {
    std::string concept_name;
    std::string model_id;
    std::uint32_t dim = 0;
    std::uint32_t layer_count = 0;
    std::uint64_t seed = 0;
    double split_fraction = 0.8;
    std::size_t pair_count = 0;
    std::vector<Probe> probes; // indexed by layer

    const Probe & at_layer(std::uint32_t layer) const;
};

inline constexpr std::size_t kMinTrainPairs = 4;

// Splits each layer's pairs with a stream derived from (seed, layer), fits on
// the train part and scores the held-out part. Layers are fitted in parallel.
ProbeSet fit_probe_set(const store::ContainerHeader & header, std::span<const store::ActivationRecord> records,
                       double split_fraction, std::uint64_t seed, const FitOptions & options = {});

// Writes `manifest` (JSON) and a sibling "<stem>.bin" holding float32-LE
// directions for layers 0..L-1 followed by the centers in the same order.
void save_probe_set(const ProbeSet & set, const std::filesystem::path & manifest);
ProbeSet load_probe_set(const std::filesystem::path & manifest);

std::filesystem::path blob_path_for(const std::filesystem::path & manifest);

} // namespace meco::probe
