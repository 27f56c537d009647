// One PASS/FAIL line per acceptance criterion; exit status 1 if any fail.

#include "meco/activation_store.hpp"
#include "meco/decision_core.hpp"
#include "meco/error.hpp"
#include "meco/eval_harness.hpp"
#include "meco/io_util.hpp"
#include "meco/probe_lab.hpp"
#include "meco/rng.hpp"
#include "meco/synth_oracle.hpp"
#include "support.hpp"

#include <fmt/core.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>

using namespace meco;
using meco::testing::dense_oracle;
using meco::testing::dot;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

int g_failures = 0;

void criterion(const std::string & name, double budget_s, const std::function<Outcome()> & body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o{false, ""};
    try {
        o = body();
    } catch (const std::exception & e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool pass = o.pass;
    std::string detail = o.detail;
    if (budget_s > 0) {
        detail += fmt::format("; {:.2f} s (budget {:.0f} s)", secs, budget_s);
        if (secs >= budget_s) {
            pass = false;
        }
    }
    g_failures += !pass;
    fmt::print("{} {}: {}\n", pass ? "PASS" : "FAIL", name, detail);
    std::fflush(stdout);
}

// ---------------------------------------------------------------- PCA oracle

Outcome pca_oracle() {
    Rng rng(20240601);
    double worst = 1.0;
    for (int t = 0; t < 200; ++t) {
        const std::size_t d = 1 + rng.below(8);
        const std::size_t n = 2 + rng.below(31);
        const double signal = t % 4 == 0 ? 0.0 : 0.5 + 3.0 * rng.uniform();
        const auto pairs = meco::testing::random_pairs(rng, n, d, signal);
        const auto probe = probe::fit_probe(probe::build_difference_matrix(pairs), 0);
        const auto oracle = dense_oracle(pairs);
        worst = std::min(worst, std::abs(dot(probe.direction, oracle.direction)));
    }
    return {worst >= 1.0 - 1e-9, fmt::format("200 cases d<=8 n<=32, min |<v, v_oracle>| = 1 - {:.3g}", 1.0 - worst)};
}

// ---------------------------------------------------------- planted recovery

struct Recovery {
    double cosine;
    double heldout;
    double oracle_agreement;
};

Recovery recover(double noise, std::uint64_t seed) {
    synth::PlantedSpec spec;
    spec.dim = 128;
    spec.n_pairs = 512;
    spec.signal = 1.0;
    spec.noise = noise;
    spec.seed = seed;
    const auto data = synth::generate_planted(spec);
    const auto set = probe::fit_probe_set(data.header, data.records, 0.8, seed + 1);
    const auto & p = set.at_layer(0);

    // same seed through the dense reference: power iteration vs full eigendecomposition
    const auto pairs = store::pair_contrastive(data.records, 0).pairs;
    const auto full = probe::fit_probe(probe::build_difference_matrix(pairs), 0);
    const auto oracle = dense_oracle(pairs);
    return {dot(p.direction, data.direction), p.heldout_accuracy, std::abs(dot(full.direction, oracle.direction))};
}

Outcome planted_recovery() {
    double cos_min = 1.0, acc_min = 1.0, agree_min = 1.0;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto r = recover(0.1, seed);
        cos_min = std::min(cos_min, r.cosine);
        acc_min = std::min(acc_min, r.heldout);
        agree_min = std::min(agree_min, r.oracle_agreement);
    }
    const auto exact = recover(0.0, 4);
    const bool ok = cos_min >= 0.95 && acc_min >= 0.99 && std::abs(exact.cosine - 1.0) <= 1e-9 &&
                    std::abs(exact.heldout - 1.0) <= 1e-9 && agree_min >= 1.0 - 1e-9 &&
                    exact.oracle_agreement >= 1.0 - 1e-9;
    return {ok, fmt::format("d=128 n=512 s=1 sigma=0.1 (3 seeds): min cos {:.6f}, min held-out acc {:.4f}; "
                            "sigma=0: cos 1 - {:.2g}, acc {:.6f}; dense-oracle agreement 1 - {:.2g}",
                            cos_min, acc_min, 1.0 - exact.cosine, exact.heldout,
                            1.0 - std::min(agree_min, exact.oracle_agreement))};
}

// ------------------------------------------------------ threshold optimality

synth::MixtureSpec random_mixture(Rng & rng, std::uint64_t seed) {
    synth::MixtureSpec s;
    s.n_items = 2000;
    s.seed = seed;
    s.yes_fraction = 0.3 + 0.4 * rng.uniform();
    auto cls = [&](double sign) {
        synth::TokenClass c;
        c.correct_weight = 0.5 + 0.4 * rng.uniform();
        c.correct = {sign * (0.2 + 1.3 * rng.uniform()), 0.3 + 0.7 * rng.uniform()};
        c.incorrect = {sign * (0.5 - 1.5 * rng.uniform()), 0.3 + 0.7 * rng.uniform()};
        return c;
    };
    s.yes = cls(1.0);
    s.no = cls(-1.0);
    return s;
}

std::size_t correct_count(const decision::MeCoPolicy & p, const std::vector<decision::ScoredItem> & items) {
    std::size_t c = 0;
    for (const auto & it : items) {
        c += decision::decide_meco(it, p).verdict == *it.label;
    }
    return c;
}

Outcome threshold_optimality() {
    Rng rng(777);
    double worst_pop_gap = 0.0;
    double worst_sample_gap = 0.0;
    double worst_bayes_sample_gap = 0.0; // the true Bayes rule scored on the same finite samples
    for (int t = 0; t < 50; ++t) {
        const auto spec = random_mixture(rng, 1000 + t);
        const auto data = synth::generate_mixture(spec);
        const auto fitted = decision::fit_dual_thresholds(data.items, 0);
        const auto & m = std::get<decision::MeCoPolicy>(fitted.kind);
        const double pop = synth::expected_accuracy(spec, m.l_yes, m.l_no);
        worst_pop_gap = std::max(worst_pop_gap, data.bayes.accuracy - pop);
        worst_sample_gap = std::max(worst_sample_gap, std::abs(fitted.fit.fitted_accuracy - data.bayes.accuracy));
        const double bayes_in_sample =
            static_cast<double>(correct_count({0, data.bayes.l_yes, data.bayes.l_no}, data.items)) / data.items.size();
        worst_bayes_sample_gap = std::max(worst_bayes_sample_gap, std::abs(bayes_in_sample - data.bayes.accuracy));
    }

    // brute force: 100 x 100 threshold pairs spanning the observed scores
    bool grid_ok = true;
    std::size_t grid_pairs = 0;
    for (int t = 0; t < 5; ++t) {
        const auto spec = random_mixture(rng, 5000 + t);
        const auto data = synth::generate_mixture(spec);
        const auto fitted = decision::fit_dual_thresholds(data.items, 0);
        const auto fitted_correct = correct_count(std::get<decision::MeCoPolicy>(fitted.kind), data.items);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto & it : data.items) {
            lo = std::min(lo, *it.meta_score);
            hi = std::max(hi, *it.meta_score);
        }
        std::size_t best = 0;
        for (int i = 0; i < 100; ++i) {
            const double ly = lo - 0.01 + (hi - lo + 0.02) * i / 99.0;
            for (int j = 0; j < 100; ++j) {
                const double ln = lo - 0.01 + (hi - lo + 0.02) * j / 99.0;
                best = std::max(best, correct_count({0, ly, ln}, data.items));
                ++grid_pairs;
            }
        }
        grid_ok = grid_ok && fitted_correct >= best &&
                  static_cast<double>(fitted_correct) / data.items.size() == fitted.fit.fitted_accuracy;
    }
    // Pass/fail compares like with like: the fitted rule's accuracy under the
    // generating densities against the Bayes accuracy under the same densities.
    const bool ok = worst_pop_gap <= 0.02 && grid_ok;
    return {ok, fmt::format("50 specs n=2000: max Bayes - population acc of fitted thresholds {:.2f} pp (bound 2 pp); "
                            "in-sample, for reference: max |fitted - Bayes| {:.2f} pp, max |Bayes rule - Bayes| "
                            "{:.2f} pp; brute-force grid ({} pairs on 5 specs) never beats fit: {}",
                            100 * worst_pop_gap, 100 * worst_sample_gap, 100 * worst_bayes_sample_gap, grid_pairs,
                            grid_ok ? "yes" : "no")};
}

// ----------------------------------------------------------------- dominance

std::vector<decision::ScoredItem> random_dataset(Rng & rng, int t) {
    const std::size_t n = 1 + rng.below(400);
    std::vector<decision::ScoredItem> items(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto & it = items[i];
        it.item_id = i;
        const auto tok = rng.below(10);
        it.first_token = tok < 5 ? decision::FirstToken::yes()
                         : tok < 9 ? decision::FirstToken::no()
                                   : decision::FirstToken::other("Well");
        // some datasets are all ties, some are pure noise, some carry signal
        if (t % 5 == 0) {
            it.meta_score = static_cast<double>(rng.below(3));
        } else {
            it.meta_score = rng.normal();
        }
        const double bias = t % 3 == 0 ? 0.0 : 0.8 * std::tanh(*it.meta_score);
        it.label = rng.uniform() < 0.5 + 0.5 * bias ? decision::Verdict::Yes : decision::Verdict::No;
        const double ys = rng.uniform();
        it.p_yes = 0.9 * ys;
        it.p_no = 0.9 * (1 - ys);
    }
    return items;
}

Outcome dominance() {
    Rng rng(31337);
    int violations = 0;
    std::size_t sentinel_mismatch = 0;
    std::size_t decisions = 0;
    for (int t = 0; t < 100; ++t) {
        const auto items = random_dataset(rng, t);
        bool any_token = false;
        for (const auto & it : items) {
            any_token = any_token || it.first_token.kind != decision::FirstToken::Kind::Other;
        }
        if (any_token) {
            const auto fitted = decision::fit_dual_thresholds(items, 0);
            const auto & m = std::get<decision::MeCoPolicy>(fitted.kind);
            std::size_t fit_ok = 0, naive_ok = 0;
            for (const auto & it : items) {
                if (it.first_token.kind == decision::FirstToken::Kind::Other) {
                    continue;
                }
                fit_ok += decision::decide_meco(it, m).verdict == *it.label;
                naive_ok += decision::decide_naive(it).verdict == *it.label;
            }
            violations += fit_ok < naive_ok;
        }
        const auto sentinel = decision::MeCoPolicy::never_flip(0);
        for (const auto & it : items) {
            const auto a = decision::decide_meco(it, sentinel, decision::TokenMode::Lenient);
            const auto b = decision::decide_naive(it, decision::TokenMode::Lenient);
            sentinel_mismatch += a.verdict != b.verdict || a.flipped != b.flipped;
            ++decisions;
        }
    }
    return {violations == 0 && sentinel_mismatch == 0,
            fmt::format("100 datasets: {} with fitted MeCo below Naive on its training set; "
                        "sentinel vs Naive mismatches {} / {} decisions",
                        violations, sentinel_mismatch, decisions)};
}

// ------------------------------------------------------------ metrics oracle

Outcome metrics_oracle() {
    Rng rng(4242);
    int mismatches = 0;
    for (int t = 0; t < 1000; ++t) {
        const std::size_t n = 1 + rng.below(60);
        std::vector<eval::Outcome> outs(n);
        std::size_t a = 0, b = 0, c = 0, d = 0, u = 0;
        for (auto & o : outs) {
            o.label = rng.below(2) ? decision::Verdict::Yes : decision::Verdict::No;
            const auto r = rng.below(7);
            if (r == 0) {
                ++u;
                continue;
            }
            o.predicted = r % 2 ? decision::Verdict::Yes : decision::Verdict::No;
            const bool py = *o.predicted == decision::Verdict::Yes;
            const bool ly = o.label == decision::Verdict::Yes;
            (py ? (ly ? a : b) : (ly ? d : c)) += 1;
        }
        const double acc = static_cast<double>(a + c) / static_cast<double>(n);
        const double prec = a + b ? static_cast<double>(a) / static_cast<double>(a + b) : 0.0;
        const double rec = a + d ? static_cast<double>(a) / static_cast<double>(a + d) : 0.0;
        const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
        const auto m = eval::compute_metrics(outs);
        mismatches += !(m.tp == a && m.fp == b && m.tn == c && m.fn == d && m.unparsed == u && m.support == n &&
                        m.accuracy == acc && m.precision == prec && m.recall == rec && m.f1 == f1);
    }

    // The table row shows acc 0.51, precision 0.51, recall 1.0, F1 0.67.
    const double f1_literal = 2 * 0.51 * 1.0 / (0.51 + 1.0);
    const auto row = eval::metrics_from_counts(507, 493, 0, 0, 0, 0);
    const bool row_ok = io::format_fixed(row.accuracy, 2) == "0.51" && io::format_fixed(row.precision, 2) == "0.51" &&
                        io::format_fixed(row.recall, 1) == "1.0" && io::format_fixed(row.f1, 2) == "0.67";
    const bool literal_close = std::abs(f1_literal - 0.675) < 1e-3;
    return {mismatches == 0 && row_ok && literal_close,
            fmt::format("1000 random sets, {} mismatches vs counting oracle; F1(P=0.51, R=1) = {:.6f} ~ 0.675; "
                        "table row 0.51/0.51/1.0/0.67 reproduced from counts tp=507 fp=493 (P=0.507, F1={:.4f}); "
                        "note exact P=0.51 formats as {} at 2 decimals",
                        mismatches, f1_literal, row.f1, io::format_fixed(f1_literal, 2))};
}

// ---------------------------------------------------------------- round trip

Outcome format_round_trip() {
    constexpr std::uint32_t kDim = 16;
    constexpr std::uint32_t kLayers = 32;
    Rng rng(99);
    std::vector<store::ActivationRecord> recs(100000);
    for (std::size_t i = 0; i < recs.size(); ++i) {
        auto & r = recs[i];
        r.query_id = rng.next();
        r.truncation_index = 1 + static_cast<std::uint32_t>(rng.below(200));
        r.layer_index = static_cast<std::uint32_t>(rng.below(kLayers));
        r.variant = rng.below(2) ? store::Variant::Experimental : store::Variant::Reference;
        if (i % 10 == 0) {
            r.role = store::Role::InferenceFirstToken;
            r.first_token_text = i % 20 ? " Yes" : "No";
        }
        r.vector.resize(kDim);
        for (auto & x : r.vector) {
            std::uint32_t bits = 0;
            do {
                bits = static_cast<std::uint32_t>(rng.next());
            } while (((bits >> 23) & 0xFF) == 0xFF); // skip NaN/inf patterns
            std::memcpy(&x, &bits, 4);
        }
    }
    meco::testing::TempDir tmp;
    const auto path = tmp / "big.mact";
    store::write_records({"acceptance", "meta-cognition", kDim, kLayers, 0}, recs, path);
    const auto back = store::read_records(path);
    bool exact = back.records.size() == recs.size() && back.header.count == recs.size();
    for (std::size_t i = 0; exact && i < recs.size(); ++i) {
        const auto & a = recs[i];
        const auto & b = back.records[i];
        exact = a.query_id == b.query_id && a.truncation_index == b.truncation_index &&
                a.layer_index == b.layer_index && a.variant == b.variant && a.role == b.role &&
                a.first_token_text == b.first_token_text &&
                std::memcmp(a.vector.data(), b.vector.data(), 4 * kDim) == 0;
    }

    // corruption: truncations and a bad variant byte must name the record's start offset
    std::ifstream in(path, std::ios::binary);
    const std::string bytes((std::istreambuf_iterator<char>(in)), {});
    store::ContainerHeader h{"acceptance", "meta-cognition", kDim, kLayers, recs.size()};
    std::vector<std::uint64_t> starts{store::header_bytes(h)};
    for (const auto & r : recs) {
        starts.push_back(starts.back() + store::record_bytes(r));
    }
    int located = 0, attempts = 0;
    auto expect_at = [&](const std::string & data, std::uint64_t offset) {
        ++attempts;
        std::istringstream is(data);
        try {
            store::read_records(is);
        } catch (const CorruptionError & e) {
            located += e.offset() == offset;
        }
    };
    for (int k = 0; k < 20; ++k) {
        const std::size_t rec = rng.below(recs.size());
        const std::uint64_t cut = starts[rec] + 1 + rng.below(store::record_bytes(recs[rec]) - 1);
        expect_at(bytes.substr(0, cut), starts[rec]);
    }
    {
        std::string bad = bytes;
        const std::size_t rec = 54321;
        bad[starts[rec] + 16] = 5;
        expect_at(bad, starts[rec]);
    }
    expect_at(bytes + "junk", bytes.size());
    bool magic_rejected = false;
    {
        std::string bad = bytes;
        bad[0] = 'X';
        std::istringstream is(bad);
        try {
            store::read_records(is);
        } catch (const FormatError &) {
            magic_rejected = true;
        }
    }
    const bool ok = exact && located == attempts && magic_rejected;
    return {ok, fmt::format("100000 records ({} bytes) value-exact: {}; corrupted files located {}/{}; bad magic rejected: {}",
                            bytes.size(), exact ? "yes" : "no", located, attempts, magic_rejected ? "yes" : "no")};
}

} // namespace

int main() {
    criterion("PCA oracle equivalence", 5, pca_oracle);
    criterion("Planted-direction recovery", 10, planted_recovery);
    criterion("Threshold-fitting optimality", 30, threshold_optimality);
    criterion("Dominance invariant", 0, dominance);
    criterion("Metrics oracle", 0, metrics_oracle);
    criterion("Format round-trip", 0, format_round_trip);
    criterion("Not desk-reproducible (stated)", 0, [] {
        return Outcome{true, "headline model numbers (e.g. LM3-8B w/o ctx Naive 58.3 -> MeCo 74.0) need the model "
                             "weights, the Metatool/MeCa data and GPU inference; this suite substitutes the oracle and "
                             "property checks above and links no extractor code"};
    });
    return g_failures == 0 ? 0 : 1;
}
