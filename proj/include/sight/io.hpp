#pragma once

// File formats: JSON-Lines streams (CSV import), classifier weights, and
// golden traces. Every JSON file starts with, or is, an object carrying
// "format_version"; readers reject a different major version.
//
// Stream line:  {"t": 0, "feature": [...], "logits": [...], "label": 2, "meta": {...}}
// Stream CSV:   t,label,f0..f{d-1},l0..l{K-1}   (p0.. for probabilities)
// Weights JSON: {"format_version": "1.0.0", "weights": [[...]], "bias": [...]}
// Weights CSV:  one row per class; an optional header whose last column is
//               "bias" marks a trailing bias column.
// Trace:        header line {"format_version", "kind": "trace", "steps", ...}
//               followed by one StepTrace object per line.
//
// Doubles are written in shortest round-trip form, so reading back yields
// bit-identical values.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "sight/adapter.hpp"
#include "sight/error.hpp"
#include "sight/geometry.hpp"
#include "sight/matrix.hpp"
#include "sight/record.hpp"

namespace sight::io {

using nlohmann::json;

inline constexpr std::string_view kFormatVersion = "1.0.0";
inline constexpr int kFormatMajor = 1;

/// Probability rows may miss the simplex by this much before they are rejected.
inline constexpr double kProbsTolerance = 1e-4;

struct Version {
    int major = 0;
    int minor = 0;
    int patch = 0;
};

inline Version parse_version(std::string_view s) {
    Version v;
    int* parts[3] = {&v.major, &v.minor, &v.patch};
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
        const auto end = i < 2 ? s.find('.', pos) : s.size();
        if (end == std::string_view::npos) fail(ErrorKind::Version, "malformed format_version '" + std::string(s) + "'");
        const auto piece = s.substr(pos, end - pos);
        auto [ptr, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), *parts[i]);
        if (ec != std::errc() || ptr != piece.data() + piece.size() || piece.empty()) {
            fail(ErrorKind::Version, "malformed format_version '" + std::string(s) + "'");
        }
        pos = end + 1;
    }
    return v;
}

/// Throws unless `obj["format_version"]` exists and shares our major version.
inline void check_version(const json& obj, std::string_view what) {
    if (!obj.is_object() || !obj.contains("format_version") || !obj["format_version"].is_string()) {
        fail(ErrorKind::Version, std::string(what) + ": missing format_version");
    }
    const auto found = obj["format_version"].get<std::string>();
    if (parse_version(found).major != kFormatMajor) {
        fail(ErrorKind::Version, std::string(what) + ": format_version " + found +
                                     " is incompatible with " + std::string(kFormatVersion));
    }
}

namespace detail {

inline std::string where(const std::filesystem::path& path, std::size_t line) {
    return path.string() + ":" + std::to_string(line);
}

inline json parse_line(const std::string& text, const std::filesystem::path& path, std::size_t line) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Parse, where(path, line) + ": " + e.what());
    }
}

inline std::vector<double> number_array(const json& j, std::string_view field, const std::string& ctx) {
    if (!j.is_array()) fail(ErrorKind::Format, ctx + ": '" + std::string(field) + "' must be an array of numbers");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& x : j) {
        if (!x.is_number()) fail(ErrorKind::Format, ctx + ": '" + std::string(field) + "' must contain only numbers");
        const double v = x.get<double>();
        if (!std::isfinite(v)) fail(ErrorKind::Format, ctx + ": '" + std::string(field) + "' has a non-finite value");
        out.push_back(v);
    }
    return out;
}

inline Matrix number_matrix(const json& j, std::string_view field, const std::string& ctx) {
    if (!j.is_array()) fail(ErrorKind::Format, ctx + ": '" + std::string(field) + "' must be an array of rows");
    std::vector<std::vector<double>> rows;
    rows.reserve(j.size());
    for (std::size_t r = 0; r < j.size(); ++r) {
        rows.push_back(number_array(j[r], std::string(field) + "[" + std::to_string(r) + "]", ctx));
    }
    try {
        return Matrix::from_rows(rows);
    } catch (const Error& e) {
        fail(ErrorKind::Format, ctx + ": '" + std::string(field) + "': " + e.what());
    }
}

inline json matrix_json(const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
    return rows;
}

inline void validate_probs(std::span<const double> p, const std::string& ctx) {
    double sum = 0.0;
    for (double x : p) {
        if (x < -kProbsTolerance) fail(ErrorKind::Validation, ctx + ": negative probability " + std::to_string(x));
        sum += x;
    }
    if (std::abs(sum - 1.0) > kProbsTolerance) {
        fail(ErrorKind::Validation, ctx + ": probabilities sum to " + std::to_string(sum));
    }
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto comma = line.find(',', pos);
        auto cell = line.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
        while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
        while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
        out.push_back(cell);
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

inline std::optional<double> parse_double(std::string_view s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

inline bool is_blank(std::string_view s) {
    return s.find_first_not_of(" \t\r") == std::string_view::npos;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Streams

inline json record_to_json(const StreamRecord& r) {
    json j;
    j["t"] = r.index;
    j["feature"] = r.feature;
    j[r.kind == ScoreKind::Logits ? "logits" : "probs"] = r.scores;
    if (r.label) j["label"] = *r.label;
    if (!r.meta.is_null() && !(r.meta.is_object() && r.meta.empty())) j["meta"] = r.meta;
    return j;
}

inline StreamRecord record_from_json(const json& j, ScoreKind declared, const std::string& ctx) {
    if (!j.is_object()) fail(ErrorKind::Format, ctx + ": record must be a JSON object");
    StreamRecord r;
    r.kind = declared;
    if (!j.contains("t") || !j["t"].is_number_integer() || j["t"].get<std::int64_t>() < 0) {
        fail(ErrorKind::Format, ctx + ": 't' must be a non-negative integer");
    }
    r.index = j["t"].get<std::uint64_t>();
    if (!j.contains("feature")) fail(ErrorKind::Format, ctx + ": missing 'feature'");
    r.feature = detail::number_array(j["feature"], "feature", ctx);
    const bool has_logits = j.contains("logits");
    const bool has_probs = j.contains("probs");
    if (has_logits && has_probs) fail(ErrorKind::Format, ctx + ": record has both 'logits' and 'probs'");
    if (!has_logits && !has_probs) fail(ErrorKind::Format, ctx + ": record has neither 'logits' nor 'probs'");
    const ScoreKind found = has_logits ? ScoreKind::Logits : ScoreKind::Probs;
    if (found != declared) {
        fail(ErrorKind::StreamContract, ctx + ": record carries " + std::string(to_string(found)) +
                                            " but the stream is declared as " + std::string(to_string(declared)));
    }
    r.scores = detail::number_array(has_logits ? j["logits"] : j["probs"], to_string(found), ctx);
    if (j.contains("label") && !j["label"].is_null()) {
        if (!j["label"].is_number_integer()) fail(ErrorKind::Format, ctx + ": 'label' must be an integer");
        r.label = j["label"].get<int>();
    }
    if (j.contains("meta")) {
        if (!j["meta"].is_object()) fail(ErrorKind::Format, ctx + ": 'meta' must be an object");
        r.meta = j["meta"];
    }
    return r;
}

enum class StreamFormat { JsonLines, Csv };

inline StreamFormat detect_stream_format(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return ext == ".csv" ? StreamFormat::Csv : StreamFormat::JsonLines;
}

/// Single-pass reader. Holds one line and one record at a time; dimensions are
/// fixed by the first record and every later record must match them.
class StreamReader {
public:
    StreamReader(const std::filesystem::path& path, ScoreKind declared)
        : StreamReader(path, declared, detect_stream_format(path)) {}

    StreamReader(const std::filesystem::path& path, ScoreKind declared, StreamFormat format)
        : path_(path), in_(path), declared_(declared), format_(format) {
        if (!in_) fail(ErrorKind::Format, "cannot open stream file " + path.string());
    }

    ScoreKind kind() const noexcept { return declared_; }
    std::size_t line() const noexcept { return line_; }
    std::optional<std::size_t> feature_dim() const noexcept { return d_; }
    std::optional<std::size_t> num_classes() const noexcept { return k_; }

    /// Next record, or nullopt at end of file.
    std::optional<StreamRecord> next() {
        StreamRecord r;
        if (!next(r)) return std::nullopt;
        return r;
    }

    bool next(StreamRecord& out) {
        while (std::getline(in_, buf_)) {
            ++line_;
            detail::strip_cr(buf_);
            if (detail::is_blank(buf_)) continue;
            const std::string ctx = detail::where(path_, line_);
            if (format_ == StreamFormat::Csv) {
                if (!csv_header_seen_) {
                    parse_csv_header(ctx);
                    continue;
                }
                out = parse_csv_row(ctx);
            } else {
                json j = detail::parse_line(buf_, path_, line_);
                if (!header_checked_) {
                    header_checked_ = true;
                    if (j.is_object() && j.contains("format_version")) {
                        check_version(j, ctx);
                        if (j.contains("scores") && j["scores"].is_string()) {
                            const auto s = j["scores"].get<std::string>();
                            if (s != to_string(declared_)) {
                                fail(ErrorKind::StreamContract, ctx + ": stream header declares " + s +
                                                                    " but " + std::string(to_string(declared_)) +
                                                                    " was requested");
                            }
                        }
                        continue;
                    }
                }
                out = record_from_json(j, declared_, ctx);
            }
            check_shape(out, ctx);
            return true;
        }
        if (in_.bad()) fail(ErrorKind::Parse, detail::where(path_, line_ + 1) + ": read failure");
        return false;
    }

private:
    void check_shape(const StreamRecord& r, const std::string& ctx) {
        if (!d_) {
            if (r.feature.empty()) fail(ErrorKind::StreamContract, ctx + ": empty feature vector");
            if (r.scores.size() < 2) fail(ErrorKind::StreamContract, ctx + ": need at least 2 class scores");
            d_ = r.feature.size();
            k_ = r.scores.size();
        }
        if (r.feature.size() != *d_) {
            fail(ErrorKind::StreamContract, ctx + ": feature has " + std::to_string(r.feature.size()) +
                                                " entries, stream has d=" + std::to_string(*d_));
        }
        if (r.scores.size() != *k_) {
            fail(ErrorKind::StreamContract, ctx + ": " + std::string(to_string(r.kind)) + " has " +
                                                std::to_string(r.scores.size()) + " entries, stream has K=" +
                                                std::to_string(*k_));
        }
        if (r.kind == ScoreKind::Probs) detail::validate_probs(r.scores, ctx);
    }

    void parse_csv_header(const std::string& ctx) {
        csv_header_seen_ = true;
        const auto cells = detail::split_csv(buf_);
        if (cells.size() < 4 || cells[0] != "t" || cells[1] != "label") {
            fail(ErrorKind::Format, ctx + ": CSV header must start with t,label");
        }
        const char score_prefix = declared_ == ScoreKind::Logits ? 'l' : 'p';
        std::size_t i = 2;
        for (; i < cells.size() && !cells[i].empty() && cells[i][0] == 'f'; ++i) {
            if (cells[i] != "f" + std::to_string(csv_d_)) fail(ErrorKind::Format, ctx + ": unexpected column " + std::string(cells[i]));
            ++csv_d_;
        }
        for (; i < cells.size(); ++i) {
            if (cells[i] != std::string(1, score_prefix) + std::to_string(csv_k_)) {
                fail(ErrorKind::Format, ctx + ": unexpected column '" + std::string(cells[i]) + "' for a " +
                                            std::string(to_string(declared_)) + " stream");
            }
            ++csv_k_;
        }
        if (csv_d_ == 0 || csv_k_ == 0) fail(ErrorKind::Format, ctx + ": CSV header needs f* and score columns");
    }

    StreamRecord parse_csv_row(const std::string& ctx) {
        const auto cells = detail::split_csv(buf_);
        if (cells.size() != 2 + csv_d_ + csv_k_) {
            fail(ErrorKind::StreamContract, ctx + ": row has " + std::to_string(cells.size()) + " cells, header has " +
                                                std::to_string(2 + csv_d_ + csv_k_));
        }
        StreamRecord r;
        r.kind = declared_;
        std::uint64_t t = 0;
        auto [ptr, ec] = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), t);
        if (ec != std::errc() || ptr != cells[0].data() + cells[0].size()) {
            fail(ErrorKind::Parse, ctx + ": bad t value '" + std::string(cells[0]) + "'");
        }
        r.index = t;
        if (!cells[1].empty()) {
            int label = 0;
            auto [p2, ec2] = std::from_chars(cells[1].data(), cells[1].data() + cells[1].size(), label);
            if (ec2 != std::errc() || p2 != cells[1].data() + cells[1].size()) {
                fail(ErrorKind::Parse, ctx + ": bad label '" + std::string(cells[1]) + "'");
            }
            r.label = label;
        }
        auto number = [&](std::size_t i) {
            const auto v = detail::parse_double(cells[i]);
            if (!v || !std::isfinite(*v)) fail(ErrorKind::Parse, ctx + ": bad number '" + std::string(cells[i]) + "'");
            return *v;
        };
        r.feature.resize(csv_d_);
        for (std::size_t i = 0; i < csv_d_; ++i) r.feature[i] = number(2 + i);
        r.scores.resize(csv_k_);
        for (std::size_t i = 0; i < csv_k_; ++i) r.scores[i] = number(2 + csv_d_ + i);
        return r;
    }

    std::filesystem::path path_;
    std::ifstream in_;
    ScoreKind declared_;
    StreamFormat format_;
    std::string buf_;
    std::size_t line_ = 0;
    bool header_checked_ = false;
    bool csv_header_seen_ = false;
    std::size_t csv_d_ = 0;
    std::size_t csv_k_ = 0;
    std::optional<std::size_t> d_;
    std::optional<std::size_t> k_;
};

inline StreamReader read_stream(const std::filesystem::path& path, ScoreKind declared) {
    return StreamReader(path, declared);
}

inline std::vector<StreamRecord> read_stream_all(const std::filesystem::path& path, ScoreKind declared) {
    StreamReader reader(path, declared);
    std::vector<StreamRecord> out;
    StreamRecord r;
    while (reader.next(r)) out.push_back(std::move(r));
    return out;
}

/// Peeks at a JSON-Lines header (or first record) to learn the score kind.
inline std::optional<ScoreKind> sniff_score_kind(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Format, "cannot open stream file " + path.string());
    std::string line;
    std::size_t n = 0;
    const bool csv = detect_stream_format(path) == StreamFormat::Csv;
    while (std::getline(in, line)) {
        ++n;
        detail::strip_cr(line);
        if (detail::is_blank(line)) continue;
        if (csv) {
            const auto cells = detail::split_csv(line);
            for (const auto& c : cells) {
                if (c == "l0") return ScoreKind::Logits;
                if (c == "p0") return ScoreKind::Probs;
            }
            return std::nullopt;
        }
        const json j = detail::parse_line(line, path, n);
        if (j.contains("scores") && j["scores"].is_string()) {
            return j["scores"] == "probs" ? ScoreKind::Probs : ScoreKind::Logits;
        }
        if (j.contains("logits")) return ScoreKind::Logits;
        if (j.contains("probs")) return ScoreKind::Probs;
        return std::nullopt;
    }
    return std::nullopt;
}

class StreamWriter {
public:
    StreamWriter(const std::filesystem::path& path, ScoreKind kind) : out_(path), kind_(kind) {
        if (!out_) fail(ErrorKind::Format, "cannot write " + path.string());
        json header = {{"format_version", kFormatVersion}, {"kind", "stream"}, {"scores", to_string(kind)}};
        out_ << header.dump() << '\n';
    }

    void write(const StreamRecord& r) {
        if (r.kind != kind_) fail(ErrorKind::StreamContract, "record kind differs from the stream's");
        out_ << record_to_json(r).dump() << '\n';
    }

private:
    std::ofstream out_;
    ScoreKind kind_;
};

inline void write_stream(const std::filesystem::path& path, std::span<const StreamRecord> records,
                         ScoreKind kind = ScoreKind::Logits) {
    StreamWriter w(path, kind);
    for (const auto& r : records) w.write(r);
}

inline void write_stream_csv(const std::filesystem::path& path, std::span<const StreamRecord> records) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Format, "cannot write " + path.string());
    if (records.empty()) return;
    const auto& first = records.front();
    const char prefix = first.kind == ScoreKind::Logits ? 'l' : 'p';
    out << "t,label";
    for (std::size_t i = 0; i < first.feature.size(); ++i) out << ",f" << i;
    for (std::size_t i = 0; i < first.scores.size(); ++i) out << ',' << prefix << i;
    out << '\n';
    for (const auto& r : records) {
        out << r.index << ',';
        if (r.label) out << *r.label;
        for (double v : r.feature) out << ',' << json(v).dump();
        for (double v : r.scores) out << ',' << json(v).dump();
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Classifier weights

/// Linear head W (K x d). The bias is kept for round-tripping; prototype
/// initialization uses only W.
struct ClassifierWeights {
    Matrix weights;
    std::optional<std::vector<double>> bias;

    friend bool operator==(const ClassifierWeights&, const ClassifierWeights&) = default;
};

inline ClassifierWeights weights_from_json(const json& j, const std::string& ctx) {
    if (!j.is_object()) fail(ErrorKind::Format, ctx + ": weights file must be a JSON object");
    check_version(j, ctx);
    if (!j.contains("weights")) fail(ErrorKind::Format, ctx + ": missing \"weights\"");
    ClassifierWeights w;
    w.weights = detail::number_matrix(j["weights"], "weights", ctx);
    if (w.weights.rows() < 2 || w.weights.cols() < 1) {
        fail(ErrorKind::Format, ctx + ": weights must have at least 2 rows and 1 column");
    }
    if (j.contains("bias") && !j["bias"].is_null()) {
        w.bias = detail::number_array(j["bias"], "bias", ctx);
        if (w.bias->size() != w.weights.rows()) {
            fail(ErrorKind::Format, ctx + ": bias has " + std::to_string(w.bias->size()) + " entries for K=" +
                                        std::to_string(w.weights.rows()));
        }
    }
    return w;
}

inline json weights_to_json(const ClassifierWeights& w) {
    json j = {{"format_version", kFormatVersion}, {"weights", detail::matrix_json(w.weights)}};
    if (w.bias) j["bias"] = *w.bias;
    return j;
}

inline ClassifierWeights read_weights_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Format, "cannot open weights file " + path.string());
    std::string line;
    std::size_t n = 0;
    bool bias_column = false;
    bool first = true;
    std::vector<std::vector<double>> rows;
    std::vector<double> bias;
    while (std::getline(in, line)) {
        ++n;
        detail::strip_cr(line);
        if (detail::is_blank(line)) continue;
        const auto cells = detail::split_csv(line);
        const std::string ctx = detail::where(path, n);
        if (first) {
            first = false;
            if (!detail::parse_double(cells[0])) {
                bias_column = cells.back() == "bias";
                continue;
            }
        }
        std::vector<double> row;
        for (const auto& c : cells) {
            const auto v = detail::parse_double(c);
            if (!v || !std::isfinite(*v)) fail(ErrorKind::Parse, ctx + ": bad number '" + std::string(c) + "'");
            row.push_back(*v);
        }
        if (bias_column) {
            if (row.size() < 2) fail(ErrorKind::Format, ctx + ": row too short for a bias column");
            bias.push_back(row.back());
            row.pop_back();
        }
        rows.push_back(std::move(row));
    }
    ClassifierWeights w;
    w.weights = Matrix::from_rows(rows);
    if (w.weights.rows() < 2) fail(ErrorKind::Format, path.string() + ": weights need at least 2 rows");
    if (bias_column) w.bias = std::move(bias);
    return w;
}

inline ClassifierWeights read_classifier_weights(const std::filesystem::path& path) {
    if (detect_stream_format(path) == StreamFormat::Csv) return read_weights_csv(path);
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Format, "cannot open weights file " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Parse, path.string() + ": " + e.what());
    }
    return weights_from_json(j, path.string());
}

inline void write_classifier_weights(const std::filesystem::path& path, const ClassifierWeights& w) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Format, "cannot write " + path.string());
    out << weights_to_json(w).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Traces

inline json trace_to_json(const StepTrace& t) {
    json j;
    j["step"] = t.step;
    j["label"] = t.label ? json(*t.label) : json(nullptr);
    j["raw"] = t.raw;
    j["expected_state"] = t.expected_state;
    j["discrepancy"] = t.discrepancy;
    j["surprise"] = t.surprise;
    j["routing"] = t.routing;
    j["calibrated_prior"] = t.calibrated_prior;
    j["temporal_prior"] = t.temporal_prior;
    j["refined"] = t.refined;
    j["predicted"] = t.refined.empty() ? json(nullptr) : json(t.predicted());
    j["annihilated"] = t.annihilated;
    j["degenerate_expectation"] = t.degenerate_expectation;
    if (t.prototypes) j["prototypes"] = detail::matrix_json(*t.prototypes);
    return j;
}

inline StepTrace trace_from_json(const json& j, const std::string& ctx) {
    if (!j.is_object()) fail(ErrorKind::Format, ctx + ": trace line must be an object");
    auto need = [&](const char* key) -> const json& {
        if (!j.contains(key)) fail(ErrorKind::Format, ctx + ": missing '" + std::string(key) + "'");
        return j[key];
    };
    auto number = [&](const char* key) {
        const auto& v = need(key);
        if (!v.is_number()) fail(ErrorKind::Format, ctx + ": '" + std::string(key) + "' must be a number");
        return v.get<double>();
    };
    auto boolean = [&](const char* key) {
        const auto& v = need(key);
        if (!v.is_boolean()) fail(ErrorKind::Format, ctx + ": '" + std::string(key) + "' must be a boolean");
        return v.get<bool>();
    };
    StepTrace t;
    const auto& step = need("step");
    if (!step.is_number_unsigned() && !(step.is_number_integer() && step.get<std::int64_t>() >= 0)) {
        fail(ErrorKind::Format, ctx + ": 'step' must be a non-negative integer");
    }
    t.step = step.get<std::uint64_t>();
    if (const auto& l = need("label"); !l.is_null()) {
        if (!l.is_number_integer()) fail(ErrorKind::Format, ctx + ": 'label' must be an integer or null");
        t.label = l.get<int>();
    }
    t.raw = detail::number_array(need("raw"), "raw", ctx);
    t.expected_state = detail::number_array(need("expected_state"), "expected_state", ctx);
    t.discrepancy = number("discrepancy");
    t.surprise = number("surprise");
    t.routing = detail::number_array(need("routing"), "routing", ctx);
    t.calibrated_prior = detail::number_array(need("calibrated_prior"), "calibrated_prior", ctx);
    t.temporal_prior = detail::number_array(need("temporal_prior"), "temporal_prior", ctx);
    t.refined = detail::number_array(need("refined"), "refined", ctx);
    t.annihilated = boolean("annihilated");
    t.degenerate_expectation = boolean("degenerate_expectation");
    if (j.contains("prototypes")) t.prototypes = detail::number_matrix(j["prototypes"], "prototypes", ctx);
    return t;
}

/// Trace file header: version plus free-form provenance (method, config, ...).
inline json trace_header(std::size_t steps, json info = json::object()) {
    json h = {{"format_version", kFormatVersion}, {"kind", "trace"}, {"steps", steps}};
    for (auto it = info.begin(); it != info.end(); ++it) h[it.key()] = it.value();
    return h;
}

inline void write_trace(const std::filesystem::path& path, std::span<const StepTrace> traces,
                        const json& info = json::object()) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Format, "cannot write " + path.string());
    out << trace_header(traces.size(), info).dump() << '\n';
    for (const auto& t : traces) out << trace_to_json(t).dump() << '\n';
}

struct TraceFile {
    json header;
    std::vector<StepTrace> traces;
};

inline TraceFile read_trace_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Format, "cannot open trace file " + path.string());
    TraceFile tf;
    std::string line;
    std::size_t n = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++n;
        detail::strip_cr(line);
        if (detail::is_blank(line)) continue;
        json j = detail::parse_line(line, path, n);
        const std::string ctx = detail::where(path, n);
        if (!header) {
            check_version(j, ctx);
            if (!j.contains("kind") || j["kind"] != "trace") fail(ErrorKind::Format, ctx + ": not a trace file");
            tf.header = std::move(j);
            header = true;
            continue;
        }
        tf.traces.push_back(trace_from_json(j, ctx));
    }
    if (!header) fail(ErrorKind::Format, path.string() + ": missing trace header line");
    if (tf.header.contains("steps") && tf.header["steps"].is_number_unsigned() &&
        tf.header["steps"].get<std::size_t>() != tf.traces.size()) {
        fail(ErrorKind::Parse, detail::where(path, n + 1) + ": trace truncated after " +
                                   std::to_string(tf.traces.size()) + " of " +
                                   std::to_string(tf.header["steps"].get<std::size_t>()) + " steps");
    }
    return tf;
}

inline std::vector<StepTrace> read_trace(const std::filesystem::path& path) {
    return read_trace_file(path).traces;
}

}  // namespace sight::io
