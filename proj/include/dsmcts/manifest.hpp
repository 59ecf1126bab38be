#pragma once

#include <chrono>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsmcts/util.hpp"

namespace dsmcts {

struct FileStamp {
    std::string path;
    std::string digest;  // fnv1a64 of the file bytes, hex
};

/**
 * Provenance record written next to every artifact a pipeline stage
 * produces. A stage's input stamps must match the producing stage's
 * output stamps, which chains the whole pipeline together.
 */
struct RunManifest {
    std::string command;
    std::string config_text;
    uint64_t seed = 0;
    unsigned workers = 1;
    std::vector<FileStamp> inputs;
    std::vector<FileStamp> outputs;
    double wall_clock_sec = 0.0;
};

inline FileStamp stamp_file(const std::string& path) { return {path, hex64(file_digest(path))}; }

inline std::string manifest_path(const std::string& artifact) {
    return artifact + ".manifest.json";
}

inline void write_manifest(const RunManifest& m, const std::string& path) {
    nlohmann::json j;
    j["command"] = m.command;
    j["config"] = m.config_text;
    j["seed"] = m.seed;
    j["workers"] = m.workers;
    j["wall_clock_sec"] = m.wall_clock_sec;
    j["inputs"] = nlohmann::json::array();
    for (const auto& f : m.inputs) j["inputs"].push_back({{"path", f.path}, {"digest", f.digest}});
    j["outputs"] = nlohmann::json::array();
    for (const auto& f : m.outputs)
        j["outputs"].push_back({{"path", f.path}, {"digest", f.digest}});
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("manifest write failed: " + path);
}

inline RunManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read manifest: " + path);
    nlohmann::json j;
    in >> j;
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config_text = j.at("config").get<std::string>();
    m.seed = j.at("seed").get<uint64_t>();
    m.workers = j.at("workers").get<unsigned>();
    m.wall_clock_sec = j.at("wall_clock_sec").get<double>();
    for (const auto& f : j.at("inputs"))
        m.inputs.push_back({f.at("path").get<std::string>(), f.at("digest").get<std::string>()});
    for (const auto& f : j.at("outputs"))
        m.outputs.push_back({f.at("path").get<std::string>(), f.at("digest").get<std::string>()});
    return m;
}

/** Wall-clock scope timer for manifest stamps. */
class StageTimer {
public:
    StageTimer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace dsmcts
