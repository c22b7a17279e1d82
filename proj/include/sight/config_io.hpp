#pragma once

// JSON forms of SightConfig, MethodConfig and SimConfig. Readers are strict:
// unknown keys and wrongly typed values are config errors naming the field
// path. Missing keys keep their defaults.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sight/config.hpp"
#include "sight/error.hpp"
#include "sight/io.hpp"
#include "sight/matrix.hpp"
#include "sight/runner.hpp"
#include "sight/simulator.hpp"

namespace sight::io {

namespace detail {

class Fields {
public:
    Fields(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) fail(ErrorKind::Config, label() + "must be an object");
    }

    std::string at(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

    void allow_only(std::initializer_list<std::string_view> keys) const {
        for (auto it = obj_.begin(); it != obj_.end(); ++it) {
            bool known = false;
            for (auto k : keys) known = known || it.key() == k;
            if (!known) fail(ErrorKind::Config, at(it.key()) + ": unknown field");
        }
    }

    bool has(std::string_view key) const { return obj_.contains(std::string(key)) && !obj_[std::string(key)].is_null(); }
    const json& raw(std::string_view key) const { return obj_[std::string(key)]; }

    void number(std::string_view key, double& out) const {
        if (!has(key)) return;
        if (!raw(key).is_number()) fail(ErrorKind::Config, at(key) + ": expected a number");
        out = raw(key).get<double>();
    }
    template <typename U>
    void unsigned_int(std::string_view key, U& out) const {
        if (!has(key)) return;
        const auto& v = raw(key);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
            fail(ErrorKind::Config, at(key) + ": expected a non-negative integer");
        }
        out = static_cast<U>(v.get<std::uint64_t>());
    }
    void string(std::string_view key, std::string& out) const {
        if (!has(key)) return;
        if (!raw(key).is_string()) fail(ErrorKind::Config, at(key) + ": expected a string");
        out = raw(key).get<std::string>();
    }
    void vector(std::string_view key, std::vector<double>& out) const {
        if (!has(key)) return;
        try {
            out = number_array(raw(key), key, at(key));
        } catch (const Error& e) {
            fail(ErrorKind::Config, e.what());
        }
    }
    void matrix(std::string_view key, Matrix& out) const {
        if (!has(key)) return;
        try {
            out = number_matrix(raw(key), key, at(key));
        } catch (const Error& e) {
            fail(ErrorKind::Config, e.what());
        }
    }

private:
    std::string label() const { return path_.empty() ? "" : path_ + ": "; }

    const json& obj_;
    std::string path_;
};

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Config, "cannot open config file " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Parse, path.string() + ": " + e.what());
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline json to_json(const SightConfig& c) {
    json abl = json::array();
    for (Ablation a : c.ablations.to_vector()) abl.push_back(to_string(a));
    return {{"beta", c.beta},       {"tau", c.tau},         {"eta_mu", c.eta_mu},
            {"eta_h", c.eta_h},     {"omega_mu", c.omega_mu}, {"epsilon", c.epsilon},
            {"ablations", abl},     {"no_surprise_lambda", c.no_surprise_lambda}};
}

inline SightConfig sight_config_from_json(const json& j, const std::string& path = "") {
    detail::Fields f(j, path);
    f.allow_only({"beta", "tau", "eta_mu", "eta_h", "omega_mu", "epsilon", "ablations", "no_surprise_lambda"});
    SightConfig c;
    f.number("beta", c.beta);
    f.number("tau", c.tau);
    f.number("eta_mu", c.eta_mu);
    f.number("eta_h", c.eta_h);
    f.number("omega_mu", c.omega_mu);
    f.number("epsilon", c.epsilon);
    f.number("no_surprise_lambda", c.no_surprise_lambda);
    if (f.has("ablations")) {
        const auto& a = f.raw("ablations");
        if (!a.is_array()) fail(ErrorKind::Config, f.at("ablations") + ": expected an array of names");
        for (std::size_t i = 0; i < a.size(); ++i) {
            const std::string where = f.at("ablations") + "[" + std::to_string(i) + "]";
            if (!a[i].is_string()) fail(ErrorKind::Config, where + ": expected a string");
            const auto parsed = parse_ablation(a[i].get<std::string>());
            if (!parsed) fail(ErrorKind::Config, where + ": unknown ablation '" + a[i].get<std::string>() + "'");
            c.ablations.insert(*parsed);
        }
    }
    try {
        c.validate();
    } catch (const Error& e) {
        fail(ErrorKind::Config, (path.empty() ? std::string() : path + ": ") + e.what());
    }
    return c;
}

inline json to_json(const MethodConfig& m) {
    return {{"format_version", kFormatVersion},
            {"method", to_string(m.method)},
            {"sight", to_json(m.sight)},
            {"persistence_alpha", m.persistence_alpha},
            {"markov_smoothing", m.markov_smoothing}};
}

inline MethodConfig method_config_from_json(const json& j) {
    detail::Fields f(j, "");
    f.allow_only({"format_version", "kind", "method", "sight", "persistence_alpha", "markov_smoothing"});
    if (f.has("format_version")) check_version(j, "method config");
    MethodConfig m;
    if (f.has("method")) {
        std::string name;
        f.string("method", name);
        const auto parsed = parse_method(name);
        if (!parsed) fail(ErrorKind::Config, "method: unknown method '" + name + "'");
        m.method = *parsed;
    }
    if (f.has("sight")) m.sight = sight_config_from_json(f.raw("sight"), "sight");
    f.number("persistence_alpha", m.persistence_alpha);
    f.number("markov_smoothing", m.markov_smoothing);
    if (!(m.persistence_alpha >= 0.0 && m.persistence_alpha <= 1.0)) {
        fail(ErrorKind::Config, "persistence_alpha: must lie in [0, 1]");
    }
    if (!(m.markov_smoothing > 0.0)) fail(ErrorKind::Config, "markov_smoothing: must be positive");
    return m;
}

inline MethodConfig read_method_config(const std::filesystem::path& path) {
    return method_config_from_json(detail::read_json_file(path));
}

// ---------------------------------------------------------------------------

constexpr std::string_view to_string(sim::SegmentMode m) noexcept {
    return m == sim::SegmentMode::Fixed ? "fixed" : "geometric";
}

inline json to_json(const sim::SimConfig& c) {
    json shift = {{"class_offset_scale", c.shift.class_offset_scale},
                  {"head_rotation_scale", c.shift.head_rotation_scale},
                  {"head_bias_scale", c.shift.head_bias_scale}};
    if (!c.shift.feature_offset.empty()) shift["feature_offset"] = c.shift.feature_offset;
    if (!c.shift.class_offsets.empty()) shift["class_offsets"] = detail::matrix_json(c.shift.class_offsets);
    if (!c.shift.head_perturbation.empty()) shift["head_perturbation"] = detail::matrix_json(c.shift.head_perturbation);
    if (!c.shift.head_bias.empty()) shift["head_bias"] = c.shift.head_bias;
    json j = {{"format_version", kFormatVersion},
              {"kind", "sim_config"},
              {"num_classes", c.num_classes},
              {"feature_dim", c.feature_dim},
              {"mean_segment_length", c.mean_segment_length},
              {"segment_mode", to_string(c.segment_mode)},
              {"mean_norm", c.mean_norm},
              {"mean_overlap", c.mean_overlap},
              {"noise_sigma", c.noise_sigma},
              {"shift", shift},
              {"logit_scale", c.logit_scale},
              {"seed", c.seed}};
    if (!c.transition_matrix.empty()) j["transition_matrix"] = detail::matrix_json(c.transition_matrix);
    if (!c.class_means.empty()) j["class_means"] = detail::matrix_json(c.class_means);
    if (!c.class_prior_skew.empty()) j["class_prior_skew"] = c.class_prior_skew;
    if (c.structure_seed) j["structure_seed"] = *c.structure_seed;
    return j;
}

/// Parses and validates a simulator config. A "benchmark" block (stream
/// length and seed list) may sit alongside and is ignored here.
inline sim::SimConfig sim_config_from_json(const json& j) {
    detail::Fields f(j, "");
    f.allow_only({"format_version", "kind", "benchmark", "num_classes", "feature_dim", "mean_segment_length",
                  "segment_mode", "transition_matrix", "class_means", "mean_norm", "mean_overlap", "noise_sigma",
                  "shift", "logit_scale", "class_prior_skew", "seed", "structure_seed"});
    if (f.has("format_version")) {
        try {
            check_version(j, "sim config");
        } catch (const Error& e) {
            fail(ErrorKind::Config, e.what());
        }
    }
    sim::SimConfig c;
    f.unsigned_int("num_classes", c.num_classes);
    f.unsigned_int("feature_dim", c.feature_dim);
    f.number("mean_segment_length", c.mean_segment_length);
    if (f.has("segment_mode")) {
        std::string mode;
        f.string("segment_mode", mode);
        if (mode == "geometric") c.segment_mode = sim::SegmentMode::Geometric;
        else if (mode == "fixed") c.segment_mode = sim::SegmentMode::Fixed;
        else fail(ErrorKind::Config, "segment_mode: expected 'geometric' or 'fixed'");
    }
    f.matrix("transition_matrix", c.transition_matrix);
    f.matrix("class_means", c.class_means);
    f.number("mean_norm", c.mean_norm);
    f.number("mean_overlap", c.mean_overlap);
    f.number("noise_sigma", c.noise_sigma);
    f.number("logit_scale", c.logit_scale);
    f.vector("class_prior_skew", c.class_prior_skew);
    f.unsigned_int("seed", c.seed);
    if (f.has("structure_seed")) {
        std::uint64_t s = 0;
        f.unsigned_int("structure_seed", s);
        c.structure_seed = s;
    }
    if (f.has("shift")) {
        detail::Fields s(f.raw("shift"), "shift");
        s.allow_only({"feature_offset", "class_offsets", "class_offset_scale", "head_perturbation",
                      "head_rotation_scale", "head_bias", "head_bias_scale"});
        s.vector("feature_offset", c.shift.feature_offset);
        s.matrix("class_offsets", c.shift.class_offsets);
        s.number("class_offset_scale", c.shift.class_offset_scale);
        s.matrix("head_perturbation", c.shift.head_perturbation);
        s.number("head_rotation_scale", c.shift.head_rotation_scale);
        s.vector("head_bias", c.shift.head_bias);
        s.number("head_bias_scale", c.shift.head_bias_scale);
    }
    c.validate();
    return c;
}

inline sim::SimConfig read_sim_config(const std::filesystem::path& path) {
    return sim_config_from_json(detail::read_json_file(path));
}

/// Stream length and seeds of a benchmark file's "benchmark" block.
struct BenchmarkPlan {
    sim::SimConfig config;
    std::size_t length = sim::kDefaultBenchmarkLength;
    std::vector<std::uint64_t> seeds;
};

inline BenchmarkPlan benchmark_plan_from_json(const json& j) {
    BenchmarkPlan plan;
    plan.config = sim_config_from_json(j);
    if (!j.contains("benchmark")) fail(ErrorKind::Config, "benchmark: missing block");
    detail::Fields b(j["benchmark"], "benchmark");
    b.allow_only({"length", "seeds"});
    b.unsigned_int("length", plan.length);
    if (!b.has("seeds") || !b.raw("seeds").is_array()) fail(ErrorKind::Config, "benchmark.seeds: expected an array");
    for (const auto& s : b.raw("seeds")) {
        if (!s.is_number_unsigned()) fail(ErrorKind::Config, "benchmark.seeds: expected non-negative integers");
        plan.seeds.push_back(s.get<std::uint64_t>());
    }
    return plan;
}

inline BenchmarkPlan read_benchmark_plan(const std::filesystem::path& path) {
    return benchmark_plan_from_json(detail::read_json_file(path));
}

}  // namespace sight::io
