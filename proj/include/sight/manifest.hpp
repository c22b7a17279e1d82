#pragma once

// Run manifests: what was run, on which inputs, and SHA-256 digests of every
// output so a later reader can confirm the files are unchanged.

#include <array>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "sight/error.hpp"
#include "sight/io.hpp"

namespace sight::io {

namespace detail {

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1) {
            fail(ErrorKind::Invariant, "SHA-256 initialisation failed");
        }
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, std::size_t n) {
        if (EVP_DigestUpdate(ctx_, data, n) != 1) fail(ErrorKind::Invariant, "SHA-256 update failed");
    }

    std::string hex() {
        std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_, md.data(), &len) != 1) fail(ErrorKind::Invariant, "SHA-256 final failed");
        static constexpr char digits[] = "0123456789abcdef";
        std::string out;
        out.reserve(2 * len);
        for (unsigned i = 0; i < len; ++i) {
            out.push_back(digits[md[i] >> 4]);
            out.push_back(digits[md[i] & 0xF]);
        }
        return out;
    }

private:
    EVP_MD_CTX* ctx_;
};

}  // namespace detail

inline std::string sha256_hex(std::string_view bytes) {
    detail::Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

inline std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Format, "cannot open " + path.string() + " for hashing");
    detail::Sha256 h;
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    return h.hex();
}

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct FileDigest {
    std::string role;  // "trace", "report", "stream", ...
    std::string path;
    std::string sha256;

    friend bool operator==(const FileDigest&, const FileDigest&) = default;
};

struct RunManifest {
    std::string format_version{kFormatVersion};
    std::string command;
    json config = json::object();  // method config, seeds, ablations
    json source = json::object();  // stream descriptor: path, digest, shape
    std::string started_utc;
    std::string finished_utc;
    std::vector<FileDigest> outputs;

    /// Records a written file with its current digest.
    void add_output(std::string role, const std::filesystem::path& path) {
        outputs.push_back({std::move(role), path.string(), sha256_file(path)});
    }

    friend bool operator==(const RunManifest&, const RunManifest&) = default;
};

inline json to_json(const RunManifest& m) {
    json outs = json::array();
    for (const auto& o : m.outputs) outs.push_back({{"role", o.role}, {"path", o.path}, {"sha256", o.sha256}});
    return {{"format_version", m.format_version}, {"kind", "run_manifest"}, {"command", m.command},
            {"config", m.config},                 {"source", m.source},     {"started_utc", m.started_utc},
            {"finished_utc", m.finished_utc},     {"outputs", outs}};
}

inline RunManifest manifest_from_json(const json& j) {
    check_version(j, "run manifest");
    auto str = [&](const char* key) {
        if (!j.contains(key) || !j[key].is_string()) fail(ErrorKind::Format, std::string("run manifest: missing '") + key + "'");
        return j[key].get<std::string>();
    };
    RunManifest m;
    m.format_version = str("format_version");
    m.command = str("command");
    m.started_utc = str("started_utc");
    m.finished_utc = str("finished_utc");
    m.config = j.value("config", json::object());
    m.source = j.value("source", json::object());
    if (!j.contains("outputs") || !j["outputs"].is_array()) fail(ErrorKind::Format, "run manifest: missing 'outputs'");
    for (const auto& o : j["outputs"]) {
        if (!o.is_object() || !o.contains("path") || !o.contains("sha256")) {
            fail(ErrorKind::Format, "run manifest: malformed output entry");
        }
        m.outputs.push_back({o.value("role", ""), o["path"].get<std::string>(), o["sha256"].get<std::string>()});
    }
    return m;
}

inline void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Format, "cannot write " + path.string());
    out << to_json(m).dump(2) << '\n';
}

inline RunManifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Format, "cannot open " + path.string());
    try {
        return manifest_from_json(json::parse(in));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Parse, path.string() + ": " + e.what());
    }
}

/// Paths of outputs whose current digest differs from the recorded one
/// (missing files count as mismatches). Relative paths resolve against `base`.
inline std::vector<std::string> verify_manifest(const RunManifest& m, const std::filesystem::path& base = {}) {
    std::vector<std::string> bad;
    for (const auto& o : m.outputs) {
        std::filesystem::path p(o.path);
        if (p.is_relative() && !base.empty()) p = base / p;
        if (!std::filesystem::exists(p) || sha256_file(p) != o.sha256) bad.push_back(o.path);
    }
    return bad;
}

}  // namespace sight::io
