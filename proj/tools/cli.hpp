#pragma once

// sight command line: simulate, run, perm-test, bench, validate-geometry.
// Exit codes: 0 ok, 2 usage or config, 3 data contract, 4 internal invariant.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sight/sight.hpp"

namespace sight::cli {

namespace fs = std::filesystem;
using io::json;

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kInvariant = 4 };

inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config:
        case ErrorKind::Parameter: return kUsage;
        case ErrorKind::Invariant: return kInvariant;
        default: return kData;
    }
}

namespace detail {

struct Loaded {
    std::vector<StreamRecord> records;
    Matrix weights;
    ScoreKind kind = ScoreKind::Logits;
};

inline ScoreKind resolve_kind(const fs::path& stream, const std::string& declared) {
    if (declared == "logits") return ScoreKind::Logits;
    if (declared == "probs") return ScoreKind::Probs;
    if (!fs::exists(stream)) fail(ErrorKind::Format, "stream file not found: " + stream.string());
    return io::sniff_score_kind(stream).value_or(ScoreKind::Logits);
}

inline Loaded load(const fs::path& stream, const fs::path& weights, const std::string& kind) {
    Loaded l;
    l.kind = resolve_kind(stream, kind);
    l.records = io::read_stream_all(stream, l.kind);
    l.weights = io::read_classifier_weights(weights).weights;
    check_stream_against_weights(l.records, l.weights);
    return l;
}

inline json source_descriptor(const fs::path& stream, const Loaded& l) {
    return {{"path", stream.string()},
            {"sha256", io::sha256_file(stream)},
            {"steps", l.records.size()},
            {"num_classes", l.weights.rows()},
            {"feature_dim", l.weights.cols()},
            {"scores", to_string(l.kind)}};
}

inline void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Format, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline std::vector<int> labels_of(const std::vector<StreamRecord>& records) {
    std::vector<int> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(r.label.value_or(-1));
    return out;
}

inline bool all_labeled(const std::vector<StreamRecord>& records) {
    for (const auto& r : records) {
        if (!r.label) return false;
    }
    return !records.empty();
}

/// "sight+no_surprise+no_habit_prior" style method spec.
inline MethodConfig parse_method_spec(const std::string& spec, const MethodConfig& base) {
    MethodConfig m = base;
    std::stringstream ss(spec);
    std::string part;
    bool first = true;
    while (std::getline(ss, part, '+')) {
        if (first) {
            const auto parsed = parse_method(part);
            if (!parsed) fail(ErrorKind::Config, "unknown method '" + part + "'");
            m.method = *parsed;
            first = false;
            continue;
        }
        if (m.method != Method::Sight) fail(ErrorKind::Config, "ablations apply only to sight: '" + spec + "'");
        const auto a = parse_ablation(part);
        if (!a) fail(ErrorKind::Config, "unknown ablation '" + part + "'");
        m.sight.ablations.insert(*a);
    }
    if (first) fail(ErrorKind::Config, "empty method name");
    return m;
}

inline std::string fmt(double v, int digits = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string config;
    std::size_t length = 0;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool csv = false;
};

inline int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
    if (a.length == 0) {
        err << "error: --length must be at least 1\n";
        return kUsage;
    }
    if (!a.seed) {
        err << "error: simulate needs an explicit --seed\n";
        return kUsage;
    }
    if (!fs::exists(a.config)) {
        err << "error: config file not found: " << a.config << '\n';
        return kUsage;
    }
    const auto started = io::utc_timestamp();
    auto cfg = io::read_sim_config(a.config);
    cfg.seed = *a.seed;
    const auto sim = sim::simulate(cfg, a.length);

    const fs::path dir(a.out);
    fs::create_directories(dir);
    const fs::path stream_path = dir / (a.csv ? "stream.csv" : "stream.jsonl");
    const fs::path weights_path = dir / "weights.json";
    const fs::path centroids_path = dir / "centroids.json";
    const fs::path segments_path = dir / "segments.csv";
    if (a.csv) {
        io::write_stream_csv(stream_path, sim.records);
    } else {
        io::write_stream(stream_path, sim.records);
    }
    io::write_classifier_weights(weights_path, {sim.world.head.weights, sim.world.head.bias});
    io::write_classifier_weights(centroids_path, {sim.world.target_centroids, std::nullopt});

    const std::size_t k = cfg.num_classes;
    std::vector<std::size_t> counts(k, 0);
    std::size_t segments = 0;
    {
        std::ofstream seg(segments_path);
        if (!seg) fail(ErrorKind::Format, "cannot write " + segments_path.string());
        seg << "segment,class,start,length\n";
        std::size_t start = 0;
        for (std::size_t t = 0; t <= sim.records.size(); ++t) {
            if (t < sim.records.size()) ++counts[static_cast<std::size_t>(*sim.records[t].label)];
            if (t == sim.records.size() || (t > 0 && sim.records[t].label != sim.records[t - 1].label)) {
                seg << segments << ',' << *sim.records[start].label << ',' << start << ',' << (t - start) << '\n';
                ++segments;
                start = t;
            }
        }
    }
    MethodConfig source_only;
    source_only.method = Method::SourceOnly;
    const auto so = run_stream(sim.records, sim.world.head.weights, source_only);

    out << "simulated " << sim.records.size() << " steps, K=" << k << ", d=" << cfg.feature_dim
        << ", seed=" << cfg.seed << '\n';
    out << "class marginals:";
    for (std::size_t c = 0; c < k; ++c) {
        out << ' ' << detail::fmt(static_cast<double>(counts[c]) / static_cast<double>(sim.records.size()), 3);
    }
    out << '\n';
    out << "segments: " << segments << ", mean length "
        << detail::fmt(static_cast<double>(sim.records.size()) / static_cast<double>(segments), 2) << '\n';
    out << "source-only macro-F1: " << detail::fmt(*so.report.macro_f1) << '\n';

    io::RunManifest m;
    m.command = "simulate";
    m.config = io::to_json(cfg);
    m.config["length"] = a.length;
    m.source = {{"path", a.config}, {"sha256", io::sha256_file(a.config)}};
    m.started_utc = started;
    m.add_output("stream", stream_path);
    m.add_output("weights", weights_path);
    m.add_output("centroids", centroids_path);
    m.add_output("segments", segments_path);
    m.finished_utc = io::utc_timestamp();
    io::write_manifest(dir / "manifest.json", m);
    out << "wrote " << stream_path.string() << ", " << weights_path.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------

struct RunArgs {
    std::string stream;
    std::string weights;
    std::string kind = "auto";
    std::string method;
    std::string config;
    std::vector<std::string> ablations;
    std::string trace;
    std::string report;
    std::string manifest;
    std::string centroids;
    std::string plot_dir;
};

inline MethodConfig method_from_args(const std::string& config, const std::string& method,
                                     const std::vector<std::string>& ablations) {
    MethodConfig m = config.empty() ? MethodConfig{} : io::read_method_config(config);
    if (!method.empty()) m = detail::parse_method_spec(method, m);
    for (const auto& name : ablations) {
        const auto a = parse_ablation(name);
        if (!a) fail(ErrorKind::Config, "unknown ablation '" + name + "'");
        m.sight.ablations.insert(*a);
    }
    m.sight.validate();
    return m;
}

inline int cmd_run(const RunArgs& a, std::ostream& out, std::ostream& err) {
    const auto started = io::utc_timestamp();
    const MethodConfig mc = method_from_args(a.config, a.method, a.ablations);
    const auto data = detail::load(a.stream, a.weights, a.kind);
    if (!detail::all_labeled(data.records)) {
        err << "warning: stream has unlabeled steps; report carries diagnostics only\n";
    }
    const bool want_alignment = !a.centroids.empty();
    const auto res = run_stream(data.records, data.weights, mc, RunOptions{want_alignment});

    json report = io::to_json(res.report);
    report = {{"format_version", io::kFormatVersion},
              {"kind", "run_report"},
              {"method", mc.label()},
              {"config", io::to_json(mc)},
              {"report", report}};
    std::optional<metrics::AlignmentReport> alignment;
    if (want_alignment) {
        if (!detail::all_labeled(data.records)) fail(ErrorKind::InsufficientData, "alignment needs a labeled stream");
        const auto centroids = io::read_classifier_weights(a.centroids).weights;
        if (centroids.rows() != data.weights.rows() || centroids.cols() != data.weights.cols()) {
            fail(ErrorKind::StreamContract, "centroids must be K x d like the weights");
        }
        const auto labels = detail::labels_of(data.records);
        alignment = metrics::prototype_alignment(res.traces, labels, centroids);
        report["alignment"] = io::to_json(*alignment);
    }
    detail::write_json(a.report, report);

    io::RunManifest m;
    m.command = "run";
    m.config = io::to_json(mc);
    m.source = detail::source_descriptor(a.stream, data);
    m.source["weights"] = {{"path", a.weights}, {"sha256", io::sha256_file(a.weights)}};
    m.started_utc = started;
    m.add_output("report", a.report);
    if (!a.trace.empty()) {
        io::write_trace(a.trace, res.traces, {{"method", mc.label()}});
        m.add_output("trace", a.trace);
    }
    if (!a.plot_dir.empty()) {
        const fs::path dir(a.plot_dir);
        fs::create_directories(dir);
        plot::write_step_series(dir / "steps.csv", res.traces);
        plot::write_class_series(dir / "classes.csv", res.traces);
        m.add_output("plot", dir / "steps.csv");
        m.add_output("plot", dir / "classes.csv");
        if (alignment) {
            plot::write_alignment(dir / "alignment.csv", *alignment);
            m.add_output("plot", dir / "alignment.csv");
        }
    }
    m.finished_utc = io::utc_timestamp();
    io::write_manifest(a.manifest.empty() ? fs::path(a.report + ".manifest.json") : fs::path(a.manifest), m);

    out << mc.label() << ": " << res.report.n_steps << " steps";
    if (res.report.macro_f1) out << ", macro-F1 " << detail::fmt(*res.report.macro_f1);
    out << ", mean lambda " << detail::fmt(res.report.mean_lambda);
    if (res.report.lambda_at_boundaries && res.report.lambda_within_segments) {
        out << " (boundary " << detail::fmt(*res.report.lambda_at_boundaries) << ", within "
            << detail::fmt(*res.report.lambda_within_segments) << ')';
    }
    out << ", annihilations " << res.report.annihilation_count << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------

struct PermArgs {
    std::string stream;
    std::string weights;
    std::string kind = "auto";
    std::string config;
    std::vector<std::string> methods;
    std::vector<std::uint64_t> seeds;
    std::string out;
    std::string plot_dir;
};

inline int cmd_perm_test(const PermArgs& a, std::ostream& out, std::ostream& err) {
    if (a.seeds.empty()) {
        err << "error: perm-test needs an explicit --seeds list\n";
        return kUsage;
    }
    const MethodConfig base = a.config.empty() ? MethodConfig{} : io::read_method_config(a.config);
    std::vector<MethodConfig> methods;
    for (const auto& s : a.methods) methods.push_back(detail::parse_method_spec(s, base));
    if (methods.empty()) {
        err << "error: --methods is empty\n";
        return kUsage;
    }
    const auto data = detail::load(a.stream, a.weights, a.kind);
    const auto table = perm_test(data.records, data.weights, methods, a.seeds);
    if (!a.out.empty()) detail::write_json(a.out, io::to_json(table));
    if (!a.plot_dir.empty()) {
        fs::create_directories(a.plot_dir);
        plot::write_perm_table(fs::path(a.plot_dir) / "perm.csv", table);
    }
    out << io::format_perm_table(table);
    return kOk;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
    std::string stream;
    std::string weights;
    std::string kind = "auto";
    std::string config;
    std::size_t classes = 12;
    std::size_t dim = 128;
    std::size_t steps = 5000;
    std::optional<std::uint64_t> seed;
    bool skip_sweep = false;
    std::string out;
    std::string plot_dir;
};

inline int cmd_bench(const BenchArgs& a, std::ostream& out, std::ostream& err) {
    bench::LatencyReport lat;
    if (!a.stream.empty() || !a.weights.empty()) {
        if (a.stream.empty() || a.weights.empty()) {
            err << "error: --stream and --weights go together\n";
            return kUsage;
        }
        const MethodConfig mc = a.config.empty() ? MethodConfig{} : io::read_method_config(a.config);
        const auto data = detail::load(a.stream, a.weights, a.kind);
        lat = bench::measure_latency(data.records, data.weights, mc.sight, a.steps);
    } else {
        if (!a.seed) {
            err << "error: a synthetic bench needs an explicit --seed\n";
            return kUsage;
        }
        lat = bench::measure_latency(a.classes, a.dim, a.steps, *a.seed);
    }
    json report = {{"format_version", io::kFormatVersion}, {"kind", "bench"}, {"latency", io::to_json(lat)}};
    out << "adapter step K=" << lat.num_classes << " d=" << lat.feature_dim << ": p50 "
        << detail::fmt(lat.p50_ms * 1000.0, 2) << " us, p95 " << detail::fmt(lat.p95_ms * 1000.0, 2) << " us\n";
    const std::size_t bytes = bench::state_bytes(lat.num_classes, lat.feature_dim);
    report["state_bytes"] = bytes;
    out << "state bytes: " << bytes << '\n';

    std::optional<bench::StateSizeFit> fit;
    if (!a.skip_sweep) {
        fit = bench::state_size_sweep();
        report["state_size_fit"] = io::to_json(*fit);
        out << "state size fit: " << detail::fmt(fit->c_kd, 3) << "*K*d + " << detail::fmt(fit->c_k, 3) << "*K + "
            << detail::fmt(fit->c_0, 1) << ", max residual " << detail::fmt(100.0 * fit->max_relative_residual, 4)
            << "%\n";
    }
    if (!a.out.empty()) detail::write_json(a.out, report);
    if (!a.plot_dir.empty()) {
        const fs::path dir(a.plot_dir);
        fs::create_directories(dir);
        std::ofstream lc(dir / "latency.csv");
        lc << "sample,ms\n";
        for (std::size_t i = 0; i < lat.samples_ms.size(); ++i) lc << i << ',' << json(lat.samples_ms[i]).dump() << '\n';
        if (fit) {
            std::ofstream sc(dir / "state_size.csv");
            sc << "classes,dim,bytes,predicted\n";
            for (const auto& s : fit->samples) {
                sc << s.num_classes << ',' << s.feature_dim << ',' << s.bytes << ','
                   << json(fit->predict(s.num_classes, s.feature_dim)).dump() << '\n';
            }
        }
    }
    return kOk;
}

// ---------------------------------------------------------------------------

struct GeometryArgs {
    std::string stream;
    std::string weights;
    std::string kind = "auto";
    std::string out;
    std::string plot_dir;
};

inline int cmd_validate_geometry(const GeometryArgs& a, std::ostream& out, std::ostream&) {
    const auto data = detail::load(a.stream, a.weights, a.kind);
    const auto g = sim::validate_transition_geometry(data.records, data.weights);
    if (!a.out.empty()) detail::write_json(a.out, io::to_json(g));
    if (!a.plot_dir.empty()) {
        fs::create_directories(a.plot_dir);
        plot::write_geometry(fs::path(a.plot_dir) / "geometry.csv", g);
    }
    out << "within  cos " << detail::fmt(g.within_mean) << " +- " << detail::fmt(g.within_sd) << " (n="
        << g.within_similarities.size() << ")\n";
    out << "boundary cos " << detail::fmt(g.boundary_mean) << " +- " << detail::fmt(g.boundary_sd) << " (n="
        << g.boundary_similarities.size() << ")\n";
    out << "separability " << detail::fmt(g.separability, 2) << " pooled SD\n";
    out << "directional top-1 " << detail::fmt(g.directional_top1) << " vs random " << detail::fmt(g.random_baseline)
        << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------

inline int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Streaming prototype adaptation with transition surprise"};
    app.name("sight");
    app.require_subcommand(1);

    SimulateArgs sa;
    std::uint64_t sim_seed = 0;
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic stream and its planted head");
    simulate->add_option("config", sa.config, "Simulator config (JSON)")->required();
    simulate->add_option("--length,-n", sa.length, "Number of steps")->required();
    auto* sim_seed_opt = simulate->add_option("--seed", sim_seed, "Stream seed")->required();
    simulate->add_option("--out,-o", sa.out, "Output directory")->required();
    simulate->add_flag("--csv", sa.csv, "Write the stream as CSV instead of JSON-Lines");

    RunArgs ra;
    auto* run = app.add_subcommand("run", "Run one method over a stream");
    run->add_option("--stream", ra.stream)->required();
    run->add_option("--weights", ra.weights)->required();
    run->add_option("--kind", ra.kind, "logits, probs or auto")->check(CLI::IsMember({"auto", "logits", "probs"}));
    run->add_option("--method", ra.method, "sight | source-only | persistence | markov");
    run->add_option("--config", ra.config, "Method config (JSON)");
    run->add_option("--ablation", ra.ablations, "SIGHT ablation flag (repeatable)");
    run->add_option("--trace", ra.trace, "Write per-step trace (JSON-Lines)");
    run->add_option("--report", ra.report, "Report path (JSON)")->required();
    run->add_option("--manifest", ra.manifest, "Manifest path (default: <report>.manifest.json)");
    run->add_option("--centroids", ra.centroids, "Ground-truth class centroids for prototype alignment");
    run->add_option("--plot-dir", ra.plot_dir, "Directory for tidy CSV plot data");

    PermArgs pa;
    auto* perm = app.add_subcommand("perm-test", "Chronological / block32 / shuffle comparison");
    perm->add_option("--stream", pa.stream)->required();
    perm->add_option("--weights", pa.weights)->required();
    perm->add_option("--kind", pa.kind)->check(CLI::IsMember({"auto", "logits", "probs"}));
    perm->add_option("--config", pa.config, "Base method config (JSON)");
    perm->add_option("--methods", pa.methods, "Methods, e.g. sight,source-only,sight+no_surprise")
        ->delimiter(',')
        ->required();
    perm->add_option("--seeds", pa.seeds, "Permutation seeds")->delimiter(',')->required();
    perm->add_option("--out", pa.out, "Table path (JSON)");
    perm->add_option("--plot-dir", pa.plot_dir);

    BenchArgs ba;
    std::uint64_t bench_seed = 0;
    auto* benchc = app.add_subcommand("bench", "Adapter latency and state size");
    benchc->add_option("--stream", ba.stream);
    benchc->add_option("--weights", ba.weights);
    benchc->add_option("--kind", ba.kind)->check(CLI::IsMember({"auto", "logits", "probs"}));
    benchc->add_option("--config", ba.config, "Method config (JSON)");
    benchc->add_option("--classes,-K", ba.classes, "Synthetic K")->check(CLI::Range(2, 100000));
    benchc->add_option("--dim,-d", ba.dim, "Synthetic d")->check(CLI::Range(1, 1000000));
    benchc->add_option("--steps", ba.steps, "Timed steps")->check(CLI::Range(1, 100000000));
    auto* bench_seed_opt = benchc->add_option("--seed", bench_seed, "Seed of the synthetic stream");
    benchc->add_flag("--no-sweep", ba.skip_sweep, "Skip the state-size sweep");
    benchc->add_option("--out", ba.out, "Report path (JSON)");
    benchc->add_option("--plot-dir", ba.plot_dir);

    GeometryArgs ga;
    auto* geom = app.add_subcommand("validate-geometry", "Within vs boundary cosine geometry");
    geom->add_option("--stream", ga.stream)->required();
    geom->add_option("--weights", ga.weights)->required();
    geom->add_option("--kind", ga.kind)->check(CLI::IsMember({"auto", "logits", "probs"}));
    geom->add_option("--out", ga.out, "Report path (JSON)");
    geom->add_option("--plot-dir", ga.plot_dir);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*simulate) {
            if (*sim_seed_opt) sa.seed = sim_seed;
            return cmd_simulate(sa, out, err);
        }
        if (*run) return cmd_run(ra, out, err);
        if (*perm) return cmd_perm_test(pa, out, err);
        if (*benchc) {
            if (*bench_seed_opt) ba.seed = bench_seed;
            return cmd_bench(ba, out, err);
        }
        if (*geom) return cmd_validate_geometry(ga, out, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << '\n';
        return kInvariant;
    }
    return kUsage;
}

}  // namespace sight::cli
