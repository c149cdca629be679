#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <fmt/core.h>
#include <nlohmann/json.hpp>

#include "safer/safer.hpp"

namespace safer::cli {

namespace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// Verification failures are reported through this exception so every
// command shares the exit-code mapping in run().
struct VerificationFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Level { Error = 0, Warn = 1, Info = 2, Debug = 3 };

class Log {
public:
    Log(std::ostream& err, Level level) : err_(err), level_(level) {}

    void error(const std::string& msg) const { write(Level::Error, "error", msg); }
    void warn(const std::string& msg) const { write(Level::Warn, "warn", msg); }
    void info(const std::string& msg) const { write(Level::Info, "info", msg); }

private:
    void write(Level at, std::string_view tag, const std::string& msg) const {
        if (static_cast<int>(at) <= static_cast<int>(level_)) err_ << "[" << tag << "] " << msg << "\n";
    }

    std::ostream& err_;
    Level level_;
};

Level parse_level(const std::string& s) {
    if (s == "error") return Level::Error;
    if (s == "warn") return Level::Warn;
    if (s == "info") return Level::Info;
    if (s == "debug") return Level::Debug;
    throw ArgumentError(fmt::format("unknown log level '{}'", s));
}

struct Globals {
    std::uint64_t seed = 0;
    std::string log_level = "info";
    std::string output;
};

struct SynthArgs {
    int d = 64;
    int n = 128;
    double sigma_alpha = 1.0;
    double object_scale = 0.1;
    double noise_scale = 0.1;
    std::string label = "synthetic";
};

struct IdentifyArgs {
    std::string embeddings;
    int rank = 1;
    bool center = false;
    std::string label;
};

struct ProjectArgs {
    std::vector<std::string> bases;
    std::string mode = "remove";
    double lambda = 1.0;
    bool allow_negative = false;
    bool orthogonalize = false;
};

struct ExpandArgs {
    std::string anchor;
    std::vector<std::string> candidates;
    std::string features;
    double tau = 0.85;
    std::string anchor_policy = "first";
    int max_rank = 0;
    std::string log_path;
};

struct PatchArgs {
    std::string checkpoint;
    std::string projector;
    std::string selector{kCrossAttentionKV};
    std::string orientation = "auto";
    std::string report_path;
};

struct VerifyArgs {
    std::string original;
    std::string patched;
    std::string projector;
    std::string selector{kCrossAttentionKV};
    std::string orientation = "auto";
    int trials = 100;
};

struct InspectArgs {
    std::string path;
    int top = 10;
    bool center = false;
};

struct SimilarityArgs {
    std::string ref;
    std::string fake;
};

struct AccuracyArgs {
    std::string predictions;
    std::string target;
};

void require_output(const Globals& g) {
    if (g.output.empty()) throw ArgumentError("--output is required");
}

void echo_config(const Log& log, ordered_json config, const Globals& g) {
    config["seed"] = g.seed;
    config["log_level"] = g.log_level;
    config["output"] = g.output;
    log.info("config " + config.dump());
}

// Reports go to --output when given, stdout otherwise.
void emit(const std::string& text, const std::string& path, std::ostream& out) {
    if (path.empty()) {
        out << text;
        return;
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError(fmt::format("cannot open '{}' for writing", path));
    f << text;
}

bool same_file(const std::string& a, const std::string& b) {
    std::error_code ec;
    if (fs::exists(a, ec) && fs::exists(b, ec)) return fs::equivalent(a, b, ec);
    return fs::weakly_canonical(a, ec) == fs::weakly_canonical(b, ec);
}

std::string format_spectrum(const std::vector<SpectrumEntry>& spectrum, int top) {
    std::string text;
    const auto n = std::min<std::size_t>(spectrum.size(), static_cast<std::size_t>(std::max(top, 0)));
    for (std::size_t i = 0; i < n; ++i) {
        text += fmt::format("{}: {:.4f}  (sigma {:.6g})\n", spectrum[i].index, spectrum[i].explained_variance_ratio,
                            spectrum[i].singular_value);
    }
    return text;
}

std::string shape_text(const std::vector<std::int64_t>& shape) {
    return nlohmann::json(shape).dump();
}

int cmd_synth(const SynthArgs& a, const Globals& g, const Log& log) {
    require_output(g);
    echo_config(log,
                {{"command", "synth"}, {"d", a.d}, {"N", a.n}, {"sigma_alpha", a.sigma_alpha},
                 {"object_scale", a.object_scale}, {"noise_scale", a.noise_scale}, {"label", a.label}},
                g);
    SyntheticSpec spec;
    spec.d = a.d;
    spec.n = a.n;
    spec.sigma_alpha = a.sigma_alpha;
    spec.object_scale = a.object_scale;
    spec.noise_scale = a.noise_scale;
    spec.seed = g.seed;
    const auto sample = generate(spec);
    save_store(synthetic_to_store(spec, sample, a.label), g.output);
    log.info(fmt::format("wrote {}x{} embeddings to {}", a.n, a.d, g.output));
    return kOk;
}

int cmd_identify(const IdentifyArgs& a, const Globals& g, const Log& log) {
    require_output(g);
    const auto store = load_store(a.embeddings);
    const std::string label = a.label.empty() ? store.meta("safer.concept_label").value_or("") : a.label;
    echo_config(log,
                {{"command", "identify"}, {"embeddings", a.embeddings}, {"rank", a.rank}, {"center", a.center},
                 {"label", label}},
                g);
    const auto basis = identify_subspace(embeddings_from_store(store), a.rank, a.center, label);
    auto out_store = basis_to_store(basis);
    out_store.metadata()["safer.centered"] = a.center ? "true" : "false";
    save_store(out_store, g.output);
    log.info(fmt::format("rank-{} basis for '{}', ratio[0] = {:.6f}", a.rank, label, basis.explained_variance_ratio(0)));
    return kOk;
}

int cmd_project(const ProjectArgs& a, const Globals& g, const Log& log) {
    require_output(g);
    echo_config(log,
                {{"command", "project"}, {"bases", a.bases}, {"mode", a.mode}, {"lambda", a.lambda},
                 {"allow_negative", a.allow_negative}, {"orthogonalize", a.orthogonalize}},
                g);
    std::vector<ConceptBasis> bases;
    for (const auto& path : a.bases) bases.push_back(basis_from_store(load_store(path)));

    const auto mode = parse_mode(a.mode);
    Projector result;
    if (mode == ProjectorMode::Remove) {
        if (a.orthogonalize) {
            result = orthogonalized_removal(bases);
        } else {
            std::vector<Projector> parts;
            for (const auto& b : bases) parts.push_back(removal_projector(b));
            result = parts.size() == 1 ? parts.front() : compose(parts);
        }
    } else if (mode == ProjectorMode::Amplify) {
        if (a.orthogonalize) throw ArgumentError("--orthogonalize applies to remove mode only");
        if (a.lambda == 0.0) log.warn("lambda is 0: the projector is the identity");
        std::vector<Projector> parts;
        for (const auto& b : bases) parts.push_back(amplify_projector(b, a.lambda, a.allow_negative));
        result = parts.size() == 1 ? parts.front() : compose(parts);
    } else {
        throw ArgumentError("--mode must be remove or amplify");
    }
    save_store(projector_to_store(result), g.output);
    log.info(fmt::format("{} projector of dimension {} from {} basis file(s)", mode_name(result.mode), result.dim(),
                         bases.size()));
    return kOk;
}

int cmd_expand(const ExpandArgs& a, const Globals& g, const Log& log, bool tau_given, std::ostream& out) {
    require_output(g);
    if (!tau_given) log.warn(fmt::format("--tau not given; using default {}", a.tau));
    echo_config(log,
                {{"command", "expand"}, {"anchor", a.anchor}, {"candidates", a.candidates}, {"features", a.features},
                 {"tau", a.tau}, {"anchor_policy", a.anchor_policy}, {"max_rank", a.max_rank},
                 {"log", a.log_path}},
                g);
    ExpansionConfig cfg;
    cfg.tau = a.tau;
    cfg.anchor_policy = parse_anchor_policy(a.anchor_policy);
    if (a.max_rank > 0) cfg.max_rank = a.max_rank;

    const auto features = features_from_store(load_store(a.features));
    auto feature_for = [&](const std::string& label, const std::string& path) -> const FeatureVector& {
        auto it = std::find_if(features.begin(), features.end(), [&](const FeatureVector& f) { return f.label() == label; });
        if (it == features.end()) {
            throw DataError(fmt::format("no feature labelled '{}' (from {}) in {}", label, path, a.features));
        }
        return *it;
    };

    const auto anchor = basis_from_store(load_store(a.anchor));
    std::vector<Candidate> candidates;
    for (const auto& path : a.candidates) {
        auto basis = basis_from_store(load_store(path));
        const auto& feature = feature_for(basis.label, path);
        candidates.push_back({feature, std::move(basis)});
    }
    const auto result = expand(anchor, feature_for(anchor.label, a.anchor), candidates, cfg);
    save_store(projector_to_store(result.projector), g.output);
    log.info(fmt::format("anchor '{}'", result.anchor_label));
    emit(format_admission_log(result), a.log_path, out);
    return kOk;
}

int cmd_patch(const PatchArgs& a, const Globals& g, const Log& log, std::ostream& out) {
    require_output(g);
    if (same_file(a.checkpoint, g.output)) throw ArgumentError("refusing to overwrite the input checkpoint");
    const auto proj = projector_from_store(load_store(a.projector));
    LayerSelector sel{a.selector, proj.dim(), parse_orientation(a.orientation)};
    echo_config(log,
                {{"command", "patch"}, {"checkpoint", a.checkpoint}, {"projector", a.projector},
                 {"selector", a.selector}, {"orientation", a.orientation}, {"expected_dim", sel.expected_dim},
                 {"report", a.report_path}},
                g);
    const auto ckpt = load_store(a.checkpoint);
    const auto result = patch_checkpoint(ckpt, proj, sel);
    save_store(result.checkpoint, g.output, {.allow_nonfinite = true});
    log.info(fmt::format("patched {} tensor(s)", result.report.count()));
    emit(result.report.to_text(), a.report_path, out);
    return kOk;
}

int cmd_verify(const VerifyArgs& a, const Globals& g, const Log& log, std::ostream& out) {
    const auto proj = projector_from_store(load_store(a.projector));
    LayerSelector sel{a.selector, proj.dim(), parse_orientation(a.orientation)};
    echo_config(log,
                {{"command", "verify"}, {"original", a.original}, {"patched", a.patched}, {"projector", a.projector},
                 {"selector", a.selector}, {"orientation", a.orientation}, {"trials", a.trials}},
                g);
    const auto report = verify_patch(load_store(a.original), load_store(a.patched), proj, sel, a.trials, g.seed);
    std::string text = fmt::format("checked {} tensors, {} matched, worst relative error {:.3e}\n",
                                   report.checked_tensors, report.matched_tensors, report.worst_error);
    for (const auto& f : report.failures) text += fmt::format("FAIL {}: {}\n", f.name, f.reason);
    text += report.ok() ? "PASS\n" : "FAILED\n";
    emit(text, g.output, out);
    if (!report.ok()) {
        std::string names;
        for (const auto& f : report.failures) names += (names.empty() ? "" : ", ") + f.name;
        throw VerificationFailed("verification failed for: " + names);
    }
    return kOk;
}

int cmd_inspect(const InspectArgs& a, const Globals& g, const Log& log, std::ostream& out) {
    echo_config(log, {{"command", "inspect"}, {"path", a.path}, {"top", a.top}, {"center", a.center}}, g);
    const auto store = load_store(a.path);
    std::string text;
    if (store.contains("embeddings")) {
        const auto emb = embeddings_from_store(store);
        text += fmt::format("embeddings {}x{} label '{}'\nexplained variance ratio:\n", emb.rows(), emb.dim(),
                            store.meta("safer.concept_label").value_or(""));
        text += format_spectrum(embedding_spectrum(emb, a.center), a.top);
    } else if (store.contains("basis")) {
        const auto basis = basis_from_store(store);
        text += fmt::format("basis d={} k={} label '{}'\nexplained variance ratio:\n", basis.dim(), basis.rank(),
                            basis.label);
        text += format_spectrum(spectrum_report(basis), a.top);
    } else if (store.contains("projection")) {
        const auto proj = projector_from_store(store);
        text += fmt::format("projector mode={} d={} lambda={} factors={} sources={}\n", mode_name(proj.mode),
                            proj.dim(), proj.lambda, proj.factors.size(), nlohmann::json(proj.sources).dump());
        text += "invariants: ok\n";
    }
    text += fmt::format("{} tensor(s)\n", store.size());
    for (const auto& t : store.tensors()) {
        text += fmt::format("  {} {} {}\n", t.name, dtype_name(t.dtype), shape_text(t.shape));
    }
    for (const auto& [k, v] : store.metadata()) text += fmt::format("  meta {} = {}\n", k, v);
    emit(text, g.output, out);
    return kOk;
}

int cmd_similarity(const SimilarityArgs& a, const Globals& g, const Log& log, std::ostream& out) {
    echo_config(log, {{"command", "style-similarity"}, {"ref", a.ref}, {"fake", a.fake}}, g);
    const double s = style_similarity(feature_set_from_store(load_store(a.ref)),
                                      feature_set_from_store(load_store(a.fake)));
    emit(fmt::format("style_similarity {:.6f}\n", s), g.output, out);
    return kOk;
}

int cmd_accuracy(const AccuracyArgs& a, const Globals& g, const Log& log, std::ostream& out) {
    echo_config(log, {{"command", "accuracy"}, {"predictions", a.predictions}, {"target", a.target}}, g);
    std::ifstream in(a.predictions);
    if (!in) throw DataError(fmt::format("cannot open '{}'", a.predictions));
    const auto predictions = read_predictions(in);
    if (predictions.empty()) throw DataError(fmt::format("'{}' holds no predictions", a.predictions));
    const auto summary = accuracy_summary(predictions, a.target);
    std::string text = fmt::format("acc_c {:.6f} ({} of {})\n", summary.accuracy,
                                   summary.counts.contains(a.target) ? summary.counts.at(a.target) : 0, summary.total);
    for (const auto& [label, count] : summary.counts) text += fmt::format("  {} {}\n", label, count);
    emit(text, g.output, out);
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Concept subspace erasure toolkit for text-to-image checkpoints", "safer"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--seed", g.seed, "Seed for every random draw");
    app.add_option("--log-level", g.log_level, "error, warn, info or debug");
    app.add_option("--output", g.output, "Output file");

    SynthArgs synth_args;
    auto* synth = app.add_subcommand("synth", "Sample embeddings from the planted-direction model");
    synth->add_option("--d", synth_args.d, "Embedding dimension");
    synth->add_option("--N", synth_args.n, "Number of rows");
    synth->add_option("--sigma-alpha", synth_args.sigma_alpha, "Std-dev of the concept coefficient");
    synth->add_option("--object-scale", synth_args.object_scale, "Per-coordinate std-dev of the object component");
    synth->add_option("--noise-scale", synth_args.noise_scale, "Per-coordinate std-dev of the noise component");
    synth->add_option("--label", synth_args.label, "Concept label");

    IdentifyArgs identify_args;
    auto* identify = app.add_subcommand("identify", "Estimate a concept basis from an embedding dump");
    identify->add_option("--embeddings", identify_args.embeddings, "Embedding store")->required();
    identify->add_option("--rank", identify_args.rank, "Basis rank");
    identify->add_flag("--center", identify_args.center, "Subtract the row mean first");
    identify->add_option("--label", identify_args.label, "Override the concept label");

    ProjectArgs project_args;
    auto* project = app.add_subcommand("project", "Build a removal or amplification projector");
    project->add_option("--basis", project_args.bases, "Basis file(s), composed in order")->required();
    project->add_option("--mode", project_args.mode, "remove or amplify");
    project->add_option("--lambda", project_args.lambda, "Amplification strength");
    project->add_flag("--allow-negative", project_args.allow_negative, "Accept a negative lambda");
    project->add_flag("--orthogonalize", project_args.orthogonalize, "Joint symmetric projector over all bases");

    ExpandArgs expand_args;
    auto* expand_cmd = app.add_subcommand("expand", "Grow the erased subspace over gated reference concepts");
    expand_cmd->add_option("--anchor", expand_args.anchor, "Anchor basis file")->required();
    expand_cmd->add_option("--candidates", expand_args.candidates, "Candidate basis files in order");
    expand_cmd->add_option("--features", expand_args.features, "Feature store with safer.labels")->required();
    auto* tau_opt = expand_cmd->add_option("--tau", expand_args.tau, "Admission threshold");
    expand_cmd->add_option("--anchor-policy", expand_args.anchor_policy, "first or any-admitted");
    expand_cmd->add_option("--max-rank", expand_args.max_rank, "Cap on erased directions (0 = none)");
    expand_cmd->add_option("--log", expand_args.log_path, "Admission log file (stdout if absent)");

    PatchArgs patch_args;
    auto* patch = app.add_subcommand("patch", "Merge a projector into checkpoint weights");
    patch->add_option("--checkpoint", patch_args.checkpoint, "Input checkpoint")->required();
    patch->add_option("--projector", patch_args.projector, "Projector file")->required();
    patch->add_option("--selector", patch_args.selector, "Regex over tensor names");
    patch->add_option("--orientation", patch_args.orientation, "auto, input-rows or input-cols");
    patch->add_option("--report", patch_args.report_path, "Patch report file (stdout if absent)");

    VerifyArgs verify_args;
    auto* verify = app.add_subcommand("verify", "Check a patched checkpoint against its source");
    verify->add_option("--original", verify_args.original, "Unpatched checkpoint")->required();
    verify->add_option("--patched", verify_args.patched, "Patched checkpoint")->required();
    verify->add_option("--projector", verify_args.projector, "Projector file")->required();
    verify->add_option("--selector", verify_args.selector, "Regex over tensor names");
    verify->add_option("--orientation", verify_args.orientation, "auto, input-rows or input-cols");
    verify->add_option("--trials", verify_args.trials, "Random embeddings per tensor");

    InspectArgs inspect_args;
    auto* inspect = app.add_subcommand("inspect", "Print the spectrum or contents of a store");
    inspect->add_option("file", inspect_args.path, "Store to inspect")->required();
    inspect->add_option("--top", inspect_args.top, "Number of spectrum entries");
    inspect->add_flag("--center", inspect_args.center, "Center embeddings before the spectrum");

    SimilarityArgs similarity_args;
    auto* similarity_cmd = app.add_subcommand("style-similarity", "Mean best-match cosine of fake against reference features");
    similarity_cmd->add_option("--ref", similarity_args.ref, "Reference feature store")->required();
    similarity_cmd->add_option("--fake", similarity_args.fake, "Generated feature store")->required();

    AccuracyArgs accuracy_args;
    auto* accuracy = app.add_subcommand("accuracy", "Fraction of predictions equal to a target label");
    accuracy->add_option("--predictions", accuracy_args.predictions, "JSON-lines predictions")->required();
    accuracy->add_option("--target", accuracy_args.target, "Target label")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "[error] " << e.what() << "\n";
        return kArgumentError;
    }

    Level level = Level::Info;
    try {
        level = parse_level(g.log_level);
    } catch (const ArgumentError& e) {
        err << "[error] " << e.what() << "\n";
        return kArgumentError;
    }
    const Log log(err, level);

    try {
        if (synth->parsed()) return cmd_synth(synth_args, g, log);
        if (identify->parsed()) return cmd_identify(identify_args, g, log);
        if (project->parsed()) return cmd_project(project_args, g, log);
        if (expand_cmd->parsed()) return cmd_expand(expand_args, g, log, tau_opt->count() > 0, out);
        if (patch->parsed()) return cmd_patch(patch_args, g, log, out);
        if (verify->parsed()) return cmd_verify(verify_args, g, log, out);
        if (inspect->parsed()) return cmd_inspect(inspect_args, g, log, out);
        if (similarity_cmd->parsed()) return cmd_similarity(similarity_args, g, log, out);
        if (accuracy->parsed()) return cmd_accuracy(accuracy_args, g, log, out);
    } catch (const VerificationFailed& e) {
        log.error(e.what());
        return kVerificationFailed;
    } catch (const ArgumentError& e) {
        log.error(e.what());
        return kArgumentError;
    } catch (const DataError& e) {
        log.error(e.what());
        return kDataError;
    }
    return kArgumentError;
}

}  // namespace safer::cli
