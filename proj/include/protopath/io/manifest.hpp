#pragma once

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "protopath/core/error.hpp"
#include "protopath/io/csv.hpp"

namespace protopath::io {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr const char* kDigestAlgorithm = "sha256";
inline constexpr const char* kManifestName = "manifest.json";

/// An upstream artifact changed since its manifest was written.
class DigestError : public InputError {
public:
    using InputError::InputError;
    const char* kind() const noexcept override { return "digest_mismatch"; }
};

/// A command was run before the command whose outputs it needs.
class DependencyError : public InputError {
public:
    using InputError::InputError;
    const char* kind() const noexcept override { return "dependency_error"; }
};

inline std::string sha256_hex(std::string_view bytes) {
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 || EVP_DigestFinal_ex(ctx.get(), md, &len) != 1)
        throw Error("SHA-256 computation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

inline std::string sha256_file(const fs::path& path) { return sha256_hex(read_file(path)); }

inline std::string utc_timestamp() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct FileDigest {
    std::string path; // outputs: relative to the manifest directory
    std::string sha256;
};

/// Provenance record written next to every command's outputs.
struct RunManifest {
    std::string command;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    std::vector<FileDigest> inputs;
    std::map<std::string, std::uint64_t> seeds;
    std::map<std::string, std::string> module_versions;
    std::vector<FileDigest> outputs;
    std::string started_at;
    std::string finished_at;
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["command"] = command;
        j["tool_version"] = kToolVersion;
        j["digest_algorithm"] = kDigestAlgorithm;
        j["config"] = config;
        auto files = [](const std::vector<FileDigest>& v) {
            auto a = nlohmann::ordered_json::array();
            for (const auto& f : v) a.push_back({{"path", f.path}, {"sha256", f.sha256}});
            return a;
        };
        j["inputs"] = files(inputs);
        j["seeds"] = seeds;
        j["module_versions"] = module_versions;
        j["outputs"] = files(outputs);
        j["started_at"] = started_at;
        j["finished_at"] = finished_at;
        for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
        return j;
    }

    static RunManifest from_json(const nlohmann::ordered_json& j) {
        RunManifest m;
        if (j.value("digest_algorithm", "") != kDigestAlgorithm)
            throw InputError("manifest uses unsupported digest algorithm '" + j.value("digest_algorithm", "") + "'");
        m.command = j.at("command").get<std::string>();
        m.config = j.at("config");
        auto files = [](const nlohmann::ordered_json& a) {
            std::vector<FileDigest> v;
            for (const auto& f : a) v.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>()});
            return v;
        };
        m.inputs = files(j.at("inputs"));
        m.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
        m.module_versions = j.at("module_versions").get<std::map<std::string, std::string>>();
        m.outputs = files(j.at("outputs"));
        m.started_at = j.at("started_at").get<std::string>();
        m.finished_at = j.at("finished_at").get<std::string>();
        static const std::set<std::string> known = {"command", "tool_version", "digest_algorithm", "config", "inputs",
                                                    "seeds", "module_versions", "outputs", "started_at", "finished_at"};
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!known.count(it.key())) m.extra[it.key()] = it.value();
        return m;
    }

    void add_input(const fs::path& path) { inputs.push_back({fs::absolute(path).lexically_normal().string(), sha256_file(path)}); }

    /// Records a file under `dir`; the path is stored relative to it.
    void add_output(const fs::path& dir, const fs::path& file) {
        outputs.push_back({fs::relative(file, dir).generic_string(), sha256_file(file)});
    }

    const FileDigest* find_output(const std::string& rel) const {
        for (const auto& f : outputs)
            if (f.path == rel) return &f;
        return nullptr;
    }
};

inline const std::map<std::string, std::string>& module_versions() {
    static const std::map<std::string, std::string> v = {
        {"autodiff_core", kToolVersion}, {"pathway_curation", kToolVersion}, {"prototype_encoder", kToolVersion},
        {"pathway_encoder", kToolVersion}, {"fusion", kToolVersion}, {"survival", kToolVersion},
        {"training_harness", kToolVersion}, {"interpretability", kToolVersion}, {"statistics", kToolVersion},
        {"cli_io", kToolVersion}};
    return v;
}

/// Writes manifest.json into `dir`, listing every regular file below it.
inline RunManifest finalize_manifest(RunManifest m, const fs::path& dir) {
    m.module_versions = module_versions();
    m.finished_at = utc_timestamp();
    m.outputs.clear();
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() != kManifestName) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) m.add_output(dir, f);
    write_file(dir / kManifestName, m.to_json().dump(2) + "\n");
    return m;
}

inline RunManifest read_manifest(const fs::path& dir) {
    const fs::path p = dir / kManifestName;
    if (!fs::exists(p)) throw DependencyError("no " + std::string(kManifestName) + " in " + dir.string());
    try {
        return RunManifest::from_json(nlohmann::ordered_json::parse(read_file(p)));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(p.string() + ": malformed manifest (" + e.what() + ")");
    }
}

/// Recomputes every output digest of the manifest in `dir` and refuses to
/// continue if any file is missing or changed.
inline RunManifest verify_manifest(const fs::path& dir, const std::string& expected_command = "") {
    RunManifest m = read_manifest(dir);
    if (!expected_command.empty() && m.command != expected_command)
        throw DependencyError(dir.string() + " holds '" + m.command + "' outputs, expected '" + expected_command + "'");
    for (const auto& f : m.outputs) {
        const fs::path p = dir / f.path;
        if (!fs::exists(p)) throw DigestError(p.string() + " is listed in the manifest but missing");
        if (sha256_file(p) != f.sha256) throw DigestError(p.string() + " does not match its manifest digest");
    }
    return m;
}

} // namespace protopath::io
