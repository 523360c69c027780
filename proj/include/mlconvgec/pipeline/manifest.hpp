#pragma once

#include <openssl/evp.h>

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "mlconvgec/common/error.hpp"
#include "mlconvgec/common/text.hpp"

namespace mlconvgec {

inline std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        fail(ErrorCategory::io, "SHA-256 computation failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

inline std::string sha256_file(const std::filesystem::path& p) { return sha256_hex(read_file(p)); }

/// Record of one stage run: hashes of what it read and wrote, plus counts.
/// Output paths are relative to the work directory.
struct Manifest {
    std::string stage;
    std::string config_sha256;
    std::map<std::string, std::string> inputs;   // path -> sha256
    std::map<std::string, std::string> outputs;  // relative path -> sha256
    std::map<std::string, std::string> info;     // counts and settings

    std::string to_json() const {
        nlohmann::ordered_json j;
        j["stage"] = stage;
        j["config_sha256"] = config_sha256;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        j["info"] = info;
        return j.dump(2) + "\n";
    }

    static Manifest from_json(const std::string& text, const std::string& file) {
        try {
            const auto j = nlohmann::json::parse(text);
            Manifest m;
            m.stage = j.at("stage").get<std::string>();
            m.config_sha256 = j.at("config_sha256").get<std::string>();
            m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
            m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
            m.info = j.at("info").get<std::map<std::string, std::string>>();
            return m;
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCategory::parse, file + ": malformed manifest: " + e.what());
        }
    }
};

inline std::filesystem::path manifest_path(const std::filesystem::path& work, const std::string& stage) {
    return work / (stage + ".manifest.json");
}

inline std::filesystem::path partial_marker(const std::filesystem::path& work, const std::string& stage) {
    return work / (stage + ".partial");
}

/// Loads a finished stage's manifest and checks that its inputs and outputs
/// still hash to the recorded values.
inline Manifest require_stage(const std::filesystem::path& work, const std::string& stage) {
    namespace fs = std::filesystem;
    if (fs::exists(partial_marker(work, stage))) {
        fail(ErrorCategory::dependency, "stage '" + stage + "' did not finish (" + partial_marker(work, stage).string() +
                                            " present); rerun it");
    }
    const auto mp = manifest_path(work, stage);
    if (!fs::exists(mp)) {
        fail(ErrorCategory::dependency, "missing artifacts of stage '" + stage + "' (" + mp.string() + "); run it first");
    }
    auto m = Manifest::from_json(read_file(mp), mp.string());
    for (const auto& [rel, hash] : m.outputs) {
        const auto p = work / rel;
        if (!fs::exists(p)) fail(ErrorCategory::dependency, "artifact " + p.string() + " of stage '" + stage + "' is missing; rerun it");
        if (sha256_file(p) != hash) {
            fail(ErrorCategory::dependency, "artifact " + p.string() + " changed since stage '" + stage + "' wrote it; rerun it");
        }
    }
    for (const auto& [path, hash] : m.inputs) {
        if (!fs::exists(path) || sha256_file(path) != hash) {
            fail(ErrorCategory::dependency, "input " + path + " changed since stage '" + stage + "' ran; rerun it");
        }
    }
    return m;
}

/// Marks a stage as running until finish() writes its manifest. A stage
/// that throws leaves "<stage>.partial" behind and no manifest.
class StageRun {
  public:
    StageRun(std::filesystem::path work, std::string stage, std::string config_sha)
        : work_(std::move(work)) {
        m_.stage = std::move(stage);
        m_.config_sha256 = std::move(config_sha);
        std::filesystem::create_directories(work_);
        std::filesystem::remove(manifest_path(work_, m_.stage));
        write_file_atomic(partial_marker(work_, m_.stage), "");
    }

    void input(const std::filesystem::path& p) { m_.inputs[p.string()] = sha256_file(p); }

    /// Writes an artifact (through its own .partial file) and records it.
    std::filesystem::path output(const std::string& rel, std::string_view content) {
        const auto p = work_ / rel;
        write_file_atomic(p, content);
        m_.outputs[rel] = sha256_hex(content);
        return p;
    }

    void info(const std::string& k, const std::string& v) { m_.info[k] = v; }

    const Manifest& manifest() const noexcept { return m_; }

    void finish() {
        write_file_atomic(manifest_path(work_, m_.stage), m_.to_json());
        std::filesystem::remove(partial_marker(work_, m_.stage));
    }

  private:
    std::filesystem::path work_;
    Manifest m_;
};

}  // namespace mlconvgec
