#include "meco/probe_lab.hpp"

#include "meco/error.hpp"
#include "meco/io_util.hpp"
#include "meco/rng.hpp"
#include "meco/symmetric_eigen.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>

namespace meco::probe {

namespace {

constexpr int kProbeSetVersion = 1;

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double dot(std::span<const double> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * static_cast<double>(b[i]);
    }
    return s;
}

void normalize(std::vector<double> & v) {
    const double n = std::sqrt(dot(v, v));
    for (double & x : v) {
        x /= n;
    }
}

std::vector<double> top_component(const DifferenceMatrix & m, std::span<const double> mean, std::uint32_t layer,
                                  const FitOptions & options, double & eigenvalue) {
    const std::size_t d = m.cols;
    if (d <= options.dense_max_dim) {
        const auto cov = kernels::omp::covariance(m.view(), mean);
        auto pairs = linalg::jacobi_eigen(cov, d);
        eigenvalue = pairs.front().value;
        return std::move(pairs.front().vector);
    }

    // Start from the centered row of largest norm: never orthogonal to the top
    // component unless that row is itself zero.
    std::size_t best = 0;
    double best_norm = -1.0;
    for (std::size_t r = 0; r < m.rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double x = m.data[r * d + c] - mean[c];
            s += x * x;
        }
        if (s > best_norm) {
            best_norm = s;
            best = r;
        }
    }
    std::vector<double> start(d);
    for (std::size_t c = 0; c < d; ++c) {
        start[c] = m.data[best * d + c] - mean[c];
    }
    auto result = linalg::power_iteration(
        [&](std::span<const double> x, std::span<double> y) { kernels::omp::covariance_apply(m.view(), mean, x, y); },
        std::move(start), options.tolerance, options.max_iterations);
    if (!result.converged) {
        throw NumericalError("power iteration did not converge for layer " + std::to_string(layer),
                             result.iterations, result.last_delta);
    }
    eigenvalue = result.value;
    return std::move(result.vector);
}

} // namespace

DifferenceMatrix build_difference_matrix(std::span<const store::ContrastivePair> pairs) {
    if (pairs.size() < 2) {
        throw InsufficientDataError("difference matrix needs at least 2 pairs, got " + std::to_string(pairs.size()));
    }
    DifferenceMatrix m;
    m.rows = pairs.size();
    m.cols = pairs.front().plus.size();
    if (m.cols == 0) {
        throw ShapeError("pairs have zero dimension");
    }
    m.data.resize(m.rows * m.cols);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto & p = pairs[i];
        if (p.plus.size() != m.cols || p.minus.size() != m.cols) {
            throw ShapeError("pair " + std::to_string(i) + " has dimension " + std::to_string(p.plus.size()) + "/" +
                             std::to_string(p.minus.size()) + ", expected " + std::to_string(m.cols));
        }
        const double sign = (i % 2 == 0) ? 1.0 : -1.0;
        for (std::size_t c = 0; c < m.cols; ++c) {
            m.data[i * m.cols + c] = sign * (static_cast<double>(p.plus[c]) - static_cast<double>(p.minus[c]));
        }
    }
    return m;
}

Probe fit_probe(const DifferenceMatrix & matrix, std::uint32_t layer_index, const FitOptions & options) {
    if (matrix.rows < 2 || matrix.cols < 1) {
        throw InsufficientDataError("fit_probe needs at least 2 rows and 1 column");
    }
    Probe probe;
    probe.layer_index = layer_index;
    probe.center = kernels::omp::column_mean(matrix.view());

    double raw_sq = 0.0;
    double centered_sq = 0.0;
    for (std::size_t r = 0; r < matrix.rows; ++r) {
        for (std::size_t c = 0; c < matrix.cols; ++c) {
            const double x = matrix.data[r * matrix.cols + c];
            raw_sq += x * x;
            centered_sq += (x - probe.center[c]) * (x - probe.center[c]);
        }
    }
    if (centered_sq <= 1e-24 * raw_sq || centered_sq == 0.0) {
        throw DegenerateDataError("all difference rows are equal after centering (layer " +
                                  std::to_string(layer_index) + ")");
    }

    probe.direction = top_component(matrix, probe.center, layer_index, options, probe.eigenvalue);
    normalize(probe.direction);

    // Orient: mean over rows of <direction, plus - minus> = mean of (-1)^i <direction, row_i>.
    double oriented = 0.0;
    for (std::size_t r = 0; r < matrix.rows; ++r) {
        const double s = dot(probe.direction, matrix.row(r));
        oriented += (r % 2 == 0) ? s : -s;
    }
    if (oriented < 0.0) {
        for (double & x : probe.direction) {
            x = -x;
        }
    }
    probe.train_pairs = matrix.rows;
    return probe;
}

double classify_pair_accuracy(const Probe & probe, std::span<const store::ContrastivePair> heldout) {
    if (heldout.empty()) {
        throw InsufficientDataError("held-out pair set is empty");
    }
    std::size_t correct = 0;
    for (const auto & p : heldout) {
        if (p.plus.size() != probe.direction.size() || p.minus.size() != probe.direction.size()) {
            throw ShapeError("held-out pair dimension does not match probe");
        }
        if (dot(probe.direction, p.plus) > dot(probe.direction, p.minus)) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(heldout.size());
}

const Probe & ProbeSet::at_layer(std::uint32_t layer) const {
    if (layer >= probes.size()) {
        throw ValidationError("no probe for layer " + std::to_string(layer) + " (L = " + std::to_string(probes.size()) +
                              ")");
    }
    return probes[layer];
}

ProbeSet fit_probe_set(const store::ContainerHeader & header, std::span<const store::ActivationRecord> records,
                       double split_fraction, std::uint64_t seed, const FitOptions & options) {
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
        throw ValidationError("split_fraction must lie in (0, 1)");
    }
    ProbeSet set;
    set.concept_name = header.concept_name;
    set.model_id = header.model_id;
    set.dim = header.dim;
    set.layer_count = header.layer_count;
    set.seed = seed;
    set.split_fraction = split_fraction;
    set.probes.resize(header.layer_count);

    const auto L = static_cast<std::int64_t>(header.layer_count);
    std::vector<std::exception_ptr> failures(header.layer_count);
    std::vector<std::size_t> pair_counts(header.layer_count, 0);

#pragma omp parallel for schedule(dynamic, 1)
    for (std::int64_t li = 0; li < L; ++li) {
        const auto layer = static_cast<std::uint32_t>(li);
        try {
            auto pairing = store::pair_contrastive(records, layer);
            auto & pairs = pairing.pairs;
            const std::size_t n = pairs.size();
            pair_counts[layer] = n;

            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), std::size_t{0});
            Rng rng(derive_seed(seed, layer));
            for (std::size_t i = n; i > 1; --i) {
                std::swap(order[i - 1], order[rng.below(i)]);
            }
            std::size_t train_n = static_cast<std::size_t>(std::floor(split_fraction * static_cast<double>(n)));
            train_n = std::min(train_n, n > 0 ? n - 1 : 0);
            if (train_n < kMinTrainPairs) {
                throw InsufficientDataError("layer " + std::to_string(layer) + " has " + std::to_string(train_n) +
                                            " train pairs (" + std::to_string(n) + " total), need at least " +
                                            std::to_string(kMinTrainPairs));
            }
            std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_n));
            std::sort(train_idx.begin(), train_idx.end());
            std::vector<store::ContrastivePair> train;
            std::vector<store::ContrastivePair> heldout;
            train.reserve(train_n);
            heldout.reserve(n - train_n);
            for (std::size_t i : train_idx) {
                train.push_back(pairs[i]);
            }
            for (std::size_t k = train_n; k < n; ++k) {
                heldout.push_back(pairs[order[k]]);
            }

            Probe probe = fit_probe(build_difference_matrix(train), layer, options);
            probe.heldout_accuracy = classify_pair_accuracy(probe, heldout);
            probe.heldout_pairs = heldout.size();
            probe.orphans = pairing.orphans.size();
            set.probes[layer] = std::move(probe);
        } catch (...) {
            failures[layer] = std::current_exception();
        }
    }
    for (const auto & f : failures) {
        if (f) {
            std::rethrow_exception(f);
        }
    }
    set.pair_count = std::accumulate(pair_counts.begin(), pair_counts.end(), std::size_t{0});
    return set;
}

std::filesystem::path blob_path_for(const std::filesystem::path & manifest) {
    auto blob = manifest;
    blob.replace_extension(".bin");
    return blob;
}

void save_probe_set(const ProbeSet & set, const std::filesystem::path & manifest) {
    using ordered_json = nlohmann::ordered_json;
    const auto blob = blob_path_for(manifest);
    ordered_json j;
    j["format"] = "meco-probeset";
    j["version"] = kProbeSetVersion;
    j["concept"] = set.concept_name;
    j["model_id"] = set.model_id;
    j["d"] = set.dim;
    j["L"] = set.layer_count;
    j["seed"] = set.seed;
    j["split_fraction"] = set.split_fraction;
    j["pair_count"] = set.pair_count;
    j["blob"] = blob.filename().string();
    j["blob_layout"] = "f32le directions[L][d] then centers[L][d]";
    ordered_json layers = ordered_json::array();
    for (const auto & p : set.probes) {
        ordered_json row;
        row["layer_index"] = p.layer_index;
        row["heldout_accuracy"] = p.heldout_accuracy;
        row["eigenvalue"] = p.eigenvalue;
        row["train_pairs"] = p.train_pairs;
        row["heldout_pairs"] = p.heldout_pairs;
        row["orphans"] = p.orphans;
        layers.push_back(std::move(row));
    }
    j["layers"] = std::move(layers);

    io::write_atomic(blob, [&](std::ostream & os) {
        for (const auto & p : set.probes) {
            for (double x : p.direction) {
                io::put_f32(os, static_cast<float>(x));
            }
        }
        for (const auto & p : set.probes) {
            for (double x : p.center) {
                io::put_f32(os, static_cast<float>(x));
            }
        }
    });
    io::write_text_atomic(manifest, j.dump(2) + "\n");
}

ProbeSet load_probe_set(const std::filesystem::path & manifest) {
    using json = nlohmann::json;
    json j;
    try {
        j = json::parse(io::read_text(manifest));
    } catch (const json::exception & e) {
        throw FormatError("probe manifest is not valid JSON: " + std::string(e.what()));
    }
    ProbeSet set;
    std::filesystem::path blob;
    try {
        if (j.at("format").get<std::string>() != "meco-probeset" || j.at("version").get<int>() != kProbeSetVersion) {
            throw FormatError("unsupported probe manifest format/version");
        }
        set.concept_name = j.at("concept").get<std::string>();
        set.model_id = j.at("model_id").get<std::string>();
        set.dim = j.at("d").get<std::uint32_t>();
        set.layer_count = j.at("L").get<std::uint32_t>();
        set.seed = j.at("seed").get<std::uint64_t>();
        set.split_fraction = j.at("split_fraction").get<double>();
        set.pair_count = j.at("pair_count").get<std::size_t>();
        blob = manifest.parent_path() / j.at("blob").get<std::string>();
        const auto & layers = j.at("layers");
        if (layers.size() != set.layer_count) {
            throw FormatError("probe manifest lists " + std::to_string(layers.size()) + " layers, L = " +
                              std::to_string(set.layer_count));
        }
        set.probes.resize(set.layer_count);
        for (std::size_t i = 0; i < layers.size(); ++i) {
            auto & p = set.probes[i];
            p.layer_index = layers[i].at("layer_index").get<std::uint32_t>();
            if (p.layer_index != i) {
                throw FormatError("probe manifest layers out of order or with gaps at position " + std::to_string(i));
            }
            p.heldout_accuracy = layers[i].at("heldout_accuracy").get<double>();
            p.eigenvalue = layers[i].at("eigenvalue").get<double>();
            p.train_pairs = layers[i].at("train_pairs").get<std::size_t>();
            p.heldout_pairs = layers[i].at("heldout_pairs").get<std::size_t>();
            p.orphans = layers[i].at("orphans").get<std::size_t>();
        }
    } catch (const json::exception & e) {
        throw FormatError("probe manifest missing or mistyped field: " + std::string(e.what()));
    }

    const std::string bytes = io::read_text(blob);
    const std::size_t per = std::size_t{set.dim} * set.layer_count;
    if (bytes.size() != 2 * per * 4) {
        throw CorruptionError("probe blob has " + std::to_string(bytes.size()) + " bytes, expected " +
                                  std::to_string(2 * per * 4),
                              std::min<std::uint64_t>(bytes.size(), 2 * per * 4));
    }
    const auto * base = reinterpret_cast<const unsigned char *>(bytes.data());
    for (std::size_t l = 0; l < set.layer_count; ++l) {
        auto & p = set.probes[l];
        p.direction.resize(set.dim);
        p.center.resize(set.dim);
        for (std::size_t c = 0; c < set.dim; ++c) {
            p.direction[c] = io::load_f32(base + 4 * (l * set.dim + c));
            p.center[c] = io::load_f32(base + 4 * (per + l * set.dim + c));
        }
        normalize(p.direction);
    }
    return set;
}

} // namespace meco::probe
