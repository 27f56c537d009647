#include "cli_commands.hpp"

#include "meco/activation_store.hpp"
#include "meco/decision_core.hpp"
#include "meco/error.hpp"
#include "meco/eval_harness.hpp"
#include "meco/io_util.hpp"
#include "meco/probe_lab.hpp"
#include "meco/synth_oracle.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <optional>
#include <ostream>
#include <unordered_map>

namespace meco::cli {

namespace fs = std::filesystem;

namespace {

struct RunConfig {
    std::string input;
    std::string output;
    std::optional<std::uint64_t> seed;
    double split_fraction = 0.8;
    std::string layer_window = "-5:-2";
    std::optional<int> layer;
    std::vector<std::string> policies;
    std::string policy_kind = "meco";
    bool strict_tokens = true;
    std::string format = "csv";
    std::string probes;
    std::string activations;
    std::string benchmark;
    std::string dataset_id;
    std::string transfer_from;
    std::string group_by = "suite,task,context";
    std::size_t bins = 20;
    bool all_layers = false;

    // synth
    std::string kind = "planted";
    std::uint32_t dim = 32;
    std::size_t pairs = 256;
    std::uint32_t layers = 8;
    double signal = 1.0;
    double noise = 0.1;
    std::size_t items = 2000;
    std::string suite = "Metatool";
    std::string inference_output;
    std::optional<std::uint64_t> direction_seed; // planted run whose direction the activations follow
    double inference_noise = 0.05;
};

decision::TokenMode token_mode(const RunConfig & c) {
    return c.strict_tokens ? decision::TokenMode::Strict : decision::TokenMode::Lenient;
}

void require_seed(const RunConfig & c, const char * cmd) {
    if (!c.seed) {
        throw CLI::RequiredError(std::string("--seed (mandatory for ") + cmd + ")");
    }
}

void require_output_dir(const std::string & output) {
    const fs::path p(output);
    const fs::path dir = p.has_parent_path() ? p.parent_path() : fs::path(".");
    if (!fs::is_directory(dir)) {
        throw IoError("output directory does not exist: " + dir.string());
    }
}

eval::Suite parse_suite_name(const std::string & s) {
    if (s == "Metatool") return eval::Suite::Metatool;
    if (s == "MeCaTool") return eval::Suite::MeCaTool;
    if (s == "MeCaRAG") return eval::Suite::MeCaRAG;
    throw ValidationError("unknown suite \"" + s + "\"");
}

std::string sibling(const std::string & output, const std::string & suffix) {
    fs::path p(output);
    p.replace_extension(suffix);
    return p.string();
}

// Fills labels from the benchmark when one is given.
void attach_labels(std::vector<decision::ScoredItem> & items, const std::string & benchmark_path) {
    if (benchmark_path.empty()) {
        return;
    }
    const auto bench = eval::load_benchmark(benchmark_path);
    std::unordered_map<std::uint64_t, decision::Verdict> labels;
    for (const auto & b : bench) {
        labels[b.item_id] = b.label;
    }
    for (auto & it : items) {
        const auto f = labels.find(it.item_id);
        if (f == labels.end()) {
            throw ValidationError("scored item " + std::to_string(it.item_id) + " has no benchmark entry");
        }
        it.label = f->second;
    }
}

// Computes meta-scores at `layer` from InferenceFirstToken records when probes
// and activations are supplied; otherwise the items must already carry scores.
void attach_meta_scores(std::vector<decision::ScoredItem> & items, const probe::ProbeSet * probes,
                        const std::string & activations, std::uint32_t layer) {
    if (!probes || activations.empty()) {
        return;
    }
    const auto container = store::read_records(fs::path(activations));
    std::unordered_map<std::uint64_t, const store::ActivationRecord *> by_query;
    for (const auto & r : container.records) {
        if (r.role == store::Role::InferenceFirstToken && r.layer_index == layer) {
            if (!by_query.emplace(r.query_id, &r).second) {
                throw AmbiguityError("two first-token records for item " + std::to_string(r.query_id) + " at layer " +
                                     std::to_string(layer));
            }
        }
    }
    for (auto & it : items) {
        const auto f = by_query.find(it.item_id);
        if (f == by_query.end()) {
            throw ValidationError("no first-token activation for item " + std::to_string(it.item_id) + " at layer " +
                                  std::to_string(layer));
        }
        it.meta_score = decision::score_first_token(*probes, layer, *f->second);
    }
}

std::optional<probe::ProbeSet> maybe_probes(const RunConfig & c) {
    if (c.probes.empty()) {
        return std::nullopt;
    }
    return probe::load_probe_set(c.probes);
}

decision::DecisionPolicy load_policy_arg(const std::string & arg) {
    if (arg == "naive" || arg == "Naive") {
        return {decision::NaivePolicy{}, {}};
    }
    return decision::policy_from_json(io::read_text(arg));
}

std::string accuracy_table_csv(const probe::ProbeSet & set) {
    std::string out = "layer,layer_from_end,heldout_accuracy,train_pairs,heldout_pairs,orphans\n";
    for (const auto & p : set.probes) {
        out += std::to_string(p.layer_index) + "," + std::to_string(store::to_negative_layer(p.layer_index, set.layer_count)) +
               "," + io::format_fixed(p.heldout_accuracy, 6) + "," + std::to_string(p.train_pairs) + "," +
               std::to_string(p.heldout_pairs) + "," + std::to_string(p.orphans) + "\n";
    }
    return out;
}

int cmd_synth(const RunConfig & c, std::ostream & out) {
    require_seed(c, "synth");
    require_output_dir(c.output);
    if (c.kind == "planted") {
        synth::PlantedSpec spec;
        spec.dim = c.dim;
        spec.n_pairs = c.pairs;
        spec.layer_count = c.layers;
        spec.signal = c.signal;
        spec.noise = c.noise;
        spec.seed = *c.seed;
        const auto data = synth::generate_planted(spec);
        const auto n = store::write_records(data.header, data.records, fs::path(c.output));
        out << "wrote " << n << " records (d=" << spec.dim << ", L=" << spec.layer_count << ") to " << c.output << "\n";
        return kExitOk;
    }
    if (c.kind == "mixture") {
        synth::MixtureSpec spec;
        spec.n_items = c.items;
        spec.seed = *c.seed;
        auto data = synth::generate_mixture(spec);
        const auto bench = synth::benchmark_for(data.items, parse_suite_name(c.suite));

        nlohmann::ordered_json truth;
        truth["l_yes"] = io::format_double(data.bayes.l_yes);
        truth["l_no"] = io::format_double(data.bayes.l_no);
        truth["bayes_accuracy"] = data.bayes.accuracy;
        truth["bayes_accuracy_yes"] = data.bayes.accuracy_yes;
        truth["bayes_accuracy_no"] = data.bayes.accuracy_no;

        std::string inference_path;
        std::vector<store::ActivationRecord> inference;
        if (!c.inference_output.empty()) {
            // Activations whose projection on the planted direction reproduces each
            // item's score; the scored items are then written without scores.
            const auto dir = synth::planted_direction(c.dim, c.direction_seed.value_or(*c.seed));
            inference = synth::inference_records(data.items, dir, c.layers, c.inference_noise, *c.seed + 1);
            for (auto & it : data.items) {
                it.meta_score.reset();
            }
        }
        const std::string items_path = sibling(c.output, ".items.jsonl");
        const std::string bench_path = sibling(c.output, ".bench.jsonl");
        const std::string truth_path = sibling(c.output, ".truth.json");
        io::write_text_atomic(items_path, eval::scored_items_to_jsonl(data.items));
        io::write_text_atomic(bench_path, eval::benchmark_to_jsonl(bench));
        io::write_text_atomic(truth_path, truth.dump(2) + "\n");
        if (!inference.empty()) {
            store::write_records({"synthetic-planted", "meta-cognition", c.dim, c.layers, 0}, inference,
                                 fs::path(c.inference_output));
        }
        out << "wrote " << data.items.size() << " items to " << items_path << ", " << bench_path << ", " << truth_path
            << "\n";
        out << "bayes accuracy " << io::format_fixed(data.bayes.accuracy, 4) << "\n";
        return kExitOk;
    }
    throw CLI::ValidationError("--kind", "must be planted or mixture");
}

int cmd_train_probe(const RunConfig & c, std::ostream & out) {
    require_seed(c, "train-probe");
    require_output_dir(c.output);
    const auto container = store::read_records(fs::path(c.input));
    const auto set = probe::fit_probe_set(container.header, container.records, c.split_fraction, *c.seed);
    const auto table = accuracy_table_csv(set);
    // Outputs are committed only after every layer fitted.
    probe::save_probe_set(set, c.output);
    io::write_text_atomic(sibling(c.output, ".accuracy.csv"), table);
    out << table;
    return kExitOk;
}

int cmd_probe_report(const RunConfig & c, std::ostream & out) {
    const auto set = probe::load_probe_set(c.input);
    const auto layer = decision::select_layer(set, decision::parse_layer_window(c.layer_window));
    std::string text;
    if (c.format == "json") {
        nlohmann::ordered_json j;
        j["concept"] = set.concept_name;
        j["model_id"] = set.model_id;
        j["selected_layer"] = layer;
        j["layer_window"] = c.layer_window;
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (const auto & p : set.probes) {
            rows.push_back({{"layer", p.layer_index},
                            {"layer_from_end", store::to_negative_layer(p.layer_index, set.layer_count)},
                            {"heldout_accuracy", p.heldout_accuracy}});
        }
        j["layers"] = std::move(rows);
        text = j.dump(2) + "\n";
    } else {
        text = accuracy_table_csv(set);
    }
    if (!c.output.empty()) {
        require_output_dir(c.output);
        io::write_text_atomic(c.output, text);
    }
    out << text;
    out << "selected layer " << layer << " (" << store::to_negative_layer(layer, set.layer_count) << ") in window "
        << c.layer_window << "\n";
    return kExitOk;
}

int cmd_fit_policy(const RunConfig & c, std::ostream & out) {
    require_seed(c, "fit-policy");
    require_output_dir(c.output);
    auto items = eval::load_scored_items(c.input);
    attach_labels(items, c.benchmark);
    const auto probes = maybe_probes(c);

    decision::DecisionPolicy policy;
    if (c.policy_kind == "meco") {
        std::uint32_t layer = 0;
        if (c.layer) {
            layer = probes ? store::resolve_layer(*c.layer, probes->layer_count) : static_cast<std::uint32_t>(*c.layer);
        } else if (probes) {
            layer = decision::select_layer(*probes, decision::parse_layer_window(c.layer_window));
        } else {
            throw CLI::RequiredError("--probes or --layer (needed to record the scoring layer)");
        }
        attach_meta_scores(items, probes ? &*probes : nullptr, c.activations, layer);
        policy = decision::fit_dual_thresholds(items, layer);
    } else if (c.policy_kind == "pyes") {
        policy = decision::fit_p_yes_threshold(items);
    } else {
        throw CLI::ValidationError("--policy", "must be meco or pyes");
    }
    policy.fit.dataset_id = c.dataset_id.empty() ? fs::path(c.input).filename().string() : c.dataset_id;
    io::write_text_atomic(c.output, decision::policy_to_json(policy));
    out << policy.kind_name() << " fitted on " << policy.fit.fitted_items << " items ("
        << policy.fit.excluded_other << " excluded)\n";
    out << "naive accuracy  " << io::format_fixed(policy.fit.naive_accuracy, 4) << "\n";
    out << "fitted accuracy " << io::format_fixed(policy.fit.fitted_accuracy, 4) << "\n";
    return kExitOk;
}

int cmd_decide(const RunConfig & c, std::ostream & out) {
    if (c.policies.size() != 1) {
        throw CLI::ValidationError("--policy", "decide takes exactly one policy");
    }
    require_output_dir(c.output);
    const auto policy = load_policy_arg(c.policies.front());
    auto items = eval::load_scored_items(c.input);
    const auto probes = maybe_probes(c);
    if (const auto * m = std::get_if<decision::MeCoPolicy>(&policy.kind)) {
        attach_meta_scores(items, probes ? &*probes : nullptr, c.activations, m->layer_index);
    }
    std::string text;
    std::size_t flips = 0;
    for (const auto & it : items) {
        const auto d = decision::decide(policy, it, token_mode(c));
        flips += d.flipped;
        nlohmann::ordered_json j;
        j["item_id"] = it.item_id;
        j["policy"] = policy.kind_name();
        j["verdict"] = decision::to_string(d.verdict);
        j["flipped"] = d.flipped;
        j["first_token"] = it.first_token.text;
        j["meta_score"] = d.meta_score ? nlohmann::ordered_json(*d.meta_score) : nlohmann::ordered_json(nullptr);
        j["yes_score"] = d.yes_score ? nlohmann::ordered_json(*d.yes_score) : nlohmann::ordered_json(nullptr);
        text += j.dump() + "\n";
    }
    io::write_text_atomic(c.output, text);
    out << "decided " << items.size() << " items, " << flips << " flipped\n";
    return kExitOk;
}

eval::GroupBy parse_group_by(const std::string & s) {
    eval::GroupBy g{false, false, false};
    if (s == "none" || s.empty()) {
        return g;
    }
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto end = s.find(',', start);
        const auto tok = s.substr(start, end == std::string::npos ? std::string::npos : end - start);
        if (tok == "suite") g.suite = true;
        else if (tok == "task") g.task = true;
        else if (tok == "context") g.context = true;
        else throw CLI::ValidationError("--group-by", "unknown key \"" + tok + "\"");
        if (end == std::string::npos) break;
        start = end + 1;
    }
    return g;
}

int cmd_evaluate(const RunConfig & c, std::ostream & out, std::ostream & err) {
    require_output_dir(c.output);
    const auto grouping = parse_group_by(c.group_by);
    const auto bench = eval::load_benchmark(c.benchmark);
    // subsets are legitimate, so count mismatches only warn
    if (const auto off = eval::check_official_counts(bench); !off.empty()) {
        err << "warning: benchmark differs from the official counts in " << off.size() << " place(s), first: "
            << off.front() << "\n";
    }
    auto items = eval::load_scored_items(c.input);
    const auto probes = maybe_probes(c);

    std::vector<eval::NamedPolicy> policies;
    if (c.transfer_from.empty()) {
        policies.push_back({"Naive", {decision::NaivePolicy{}, {}}});
    }
    for (const auto & p : c.policies) {
        auto policy = load_policy_arg(p);
        if (std::holds_alternative<decision::NaivePolicy>(policy.kind) && c.transfer_from.empty()) {
            continue;
        }
        policies.push_back({policy.kind_name(), std::move(policy)});
    }
    for (const auto & p : policies) {
        if (const auto * m = std::get_if<decision::MeCoPolicy>(&p.policy.kind)) {
            attach_meta_scores(items, probes ? &*probes : nullptr, c.activations, m->layer_index);
        }
    }

    eval::EvalReport report;
    if (!c.transfer_from.empty()) {
        if (policies.size() != 1) {
            throw CLI::ValidationError("--transfer-from", "transfer evaluation takes exactly one --policy");
        }
        report = eval::transfer_eval(policies.front(), c.transfer_from, items, bench, grouping, token_mode(c));
    } else {
        report = eval::run_policy(policies, items, bench, grouping, token_mode(c));
    }
    const std::string text = c.format == "json" ? eval::report_to_json(report) : eval::report_to_csv(report);
    io::write_text_atomic(c.output, text);
    out << text;
    if (report.transfer && report.transfer->shift_flagged) {
        out << "warning: score distribution shift (mean delta " << io::format_fixed(report.transfer->mean_delta, 4)
            << ")\n";
    }
    return kExitOk;
}

int cmd_dist_report(const RunConfig & c, std::ostream & out) {
    require_output_dir(c.output);
    auto items = eval::load_scored_items(c.input);
    attach_labels(items, c.benchmark);
    const auto probes = maybe_probes(c);

    eval::DistributionReport report;
    if (c.all_layers) {
        if (!probes || c.activations.empty()) {
            throw CLI::RequiredError("--probes and --activations (needed for --all-layers)");
        }
        std::vector<eval::LayerScores> layers;
        for (std::uint32_t l = 0; l < probes->layer_count; ++l) {
            eval::LayerScores ls{l, items};
            attach_meta_scores(ls.items, &*probes, c.activations, l);
            layers.push_back(std::move(ls));
        }
        report = eval::score_distribution_report(layers, c.bins);
    } else {
        if (probes) {
            const auto layer = c.layer ? store::resolve_layer(*c.layer, probes->layer_count)
                                       : decision::select_layer(*probes, decision::parse_layer_window(c.layer_window));
            attach_meta_scores(items, &*probes, c.activations, layer);
        }
        report = eval::score_distribution_report(items, c.bins);
    }
    const std::string text = c.format == "json" ? eval::distribution_to_json(report) : eval::distribution_to_csv(report);
    io::write_text_atomic(c.output, text);
    out << "wrote " << report.rows.size() << " histogram rows to " << c.output << "\n";
    return kExitOk;
}

} // namespace

int run(const std::vector<std::string> & args, std::ostream & out, std::ostream & err) {
    CLI::App app{"meco: meta-cognition probes and adaptive tool-use decisions"};
    app.require_subcommand(1);
    RunConfig c;

    const auto add_io = [&](CLI::App * sub, bool input_required, bool output_required) {
        auto * in = sub->add_option("--input", c.input, "Input file")->check(CLI::ExistingFile);
        if (input_required) in->required();
        auto * o = sub->add_option("--output", c.output, "Output file");
        if (output_required) o->required();
    };
    const auto add_seed = [&](CLI::App * sub) { sub->add_option("--seed", c.seed, "RNG seed"); };
    const auto add_probe_inputs = [&](CLI::App * sub) {
        sub->add_option("--probes", c.probes, "Probe manifest (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--activations", c.activations, "MACT1 container of first-token activations")
            ->check(CLI::ExistingFile);
        sub->add_option("--layer-window", c.layer_window, "Layer window FROM:TO, negatives count from the end")
            ->capture_default_str();
        sub->add_option("--layer", c.layer, "Explicit scoring layer (overrides the window)");
    };
    const auto add_format = [&](CLI::App * sub) {
        sub->add_option("--format", c.format, "Report format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    };
    const auto add_tokens = [&](CLI::App * sub) {
        sub->add_flag("--strict-tokens,!--lenient-tokens", c.strict_tokens,
                      "Reject first tokens other than Yes/No (lenient mode reads them as Yes)");
    };

    auto * synth = app.add_subcommand("synth", "Generate synthetic activations or scored items");
    add_io(synth, false, true);
    add_seed(synth);
    synth->add_option("--kind", c.kind, "planted | mixture")->check(CLI::IsMember({"planted", "mixture"}))->capture_default_str();
    synth->add_option("--dim", c.dim, "Hidden dimension d")->capture_default_str();
    synth->add_option("--pairs", c.pairs, "Contrastive pairs per layer")->capture_default_str();
    synth->add_option("--layers", c.layers, "Layer count L")->capture_default_str();
    synth->add_option("--signal", c.signal, "Planted signal magnitude")->capture_default_str();
    synth->add_option("--noise", c.noise, "Isotropic noise scale")->capture_default_str();
    synth->add_option("--items", c.items, "Scored items (mixture)")->capture_default_str();
    synth->add_option("--suite", c.suite, "Benchmark suite label (mixture)")->capture_default_str();
    synth->add_option("--inference-output", c.inference_output,
                      "Also write first-token activations (mixture) and leave scores to be computed");
    synth->add_option("--direction-seed", c.direction_seed,
                      "Seed of the planted run whose probes should read these activations (default: --seed)");

    auto * train = app.add_subcommand("train-probe", "Fit one probe per layer from a MACT1 container");
    add_io(train, true, true);
    add_seed(train);
    train->add_option("--split", c.split_fraction, "Train fraction of pairs")->capture_default_str();

    auto * report = app.add_subcommand("probe-report", "Per-layer held-out accuracy and the selected layer");
    add_io(report, true, false);
    report->add_option("--layer-window", c.layer_window, "Layer window FROM:TO")->capture_default_str();
    add_format(report);

    auto * fit = app.add_subcommand("fit-policy", "Fit MeCo dual thresholds or the P_Yes threshold");
    add_io(fit, true, true);
    add_seed(fit);
    add_probe_inputs(fit);
    fit->add_option("--policy", c.policy_kind, "meco | pyes")->check(CLI::IsMember({"meco", "pyes"}))->capture_default_str();
    fit->add_option("--benchmark", c.benchmark, "Benchmark JSONL supplying labels")->check(CLI::ExistingFile);
    fit->add_option("--dataset-id", c.dataset_id, "Name recorded in the fit metadata");

    auto * decide = app.add_subcommand("decide", "Apply a policy to scored items");
    add_io(decide, true, true);
    add_probe_inputs(decide);
    add_tokens(decide);
    decide->add_option("--policy", c.policies, "Policy JSON file, or 'naive'")->required();

    auto * evaluate = app.add_subcommand("evaluate", "Compare Naive with fitted policies per task");
    add_io(evaluate, true, true);
    add_probe_inputs(evaluate);
    add_tokens(evaluate);
    add_format(evaluate);
    evaluate->add_option("--policy", c.policies, "Policy JSON file(s)");
    evaluate->add_option("--benchmark", c.benchmark, "Benchmark JSONL")->check(CLI::ExistingFile)->required();
    evaluate->add_option("--group-by", c.group_by, "Comma list of suite,task,context or 'none'")->capture_default_str();
    evaluate->add_option("--transfer-from", c.transfer_from, "Label of the suite the policy was fitted on");

    auto * dist = app.add_subcommand("dist-report", "Histogram of first-token meta-scores");
    add_io(dist, true, true);
    add_probe_inputs(dist);
    add_format(dist);
    dist->add_option("--benchmark", c.benchmark, "Benchmark JSONL supplying labels")->check(CLI::ExistingFile);
    dist->add_option("--bins", c.bins, "Histogram bins")->check(CLI::Range(2, 100000))->capture_default_str();
    dist->add_flag("--all-layers", c.all_layers, "One histogram per layer");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
        if (synth->parsed()) return cmd_synth(c, out);
        if (train->parsed()) return cmd_train_probe(c, out);
        if (report->parsed()) return cmd_probe_report(c, out);
        if (fit->parsed()) return cmd_fit_policy(c, out);
        if (decide->parsed()) return cmd_decide(c, out);
        if (evaluate->parsed()) return cmd_evaluate(c, out, err);
        if (dist->parsed()) return cmd_dist_report(c, out);
        return kExitUsage;
    } catch (const CLI::CallForHelp & e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp & e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError & e) {
        app.exit(e, out, err);
        return kExitUsage;
    } catch (const IoError & e) {
        err << "io error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error & e) {
        err << "error: " << e.what() << "\n";
        return kExitDomain;
    } catch (const std::exception & e) {
        err << "error: " << e.what() << "\n";
        return kExitDomain;
    }
}

} // namespace meco::cli
