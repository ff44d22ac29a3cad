#pragma once

#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmnet/errors.hpp"

namespace gmnet {

// Provenance record written alongside every command's outputs: the command,
// its effective configuration, seed, inputs/outputs, wall clock and the
// source revision. Reruns with identical manifests (wall clock aside)
// reproduce identical primary outputs.
struct RunManifest {
    std::string command;
    nlohmann::json config;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string started_at;
    double wall_seconds = 0.0;
    std::string git_describe;
};

inline std::string current_git_describe() {
    std::array<char, 128> buf{};
    std::string out;
    FILE* pipe = ::popen("git describe --always --dirty 2>/dev/null", "r");
    if (!pipe) return "unknown";
    while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
    ::pclose(pipe);
    while (!out.empty() && (out.back() == '\n' || out.back() == '\r')) out.pop_back();
    return out.empty() ? "unknown" : out;
}

inline std::string iso8601_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

class ManifestTimer {
public:
    ManifestTimer() : start_(std::chrono::steady_clock::now()), started_at_(iso8601_now()) {}

    const std::string& started_at() const { return started_at_; }
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
    std::string started_at_;
};

inline void write_manifest(const std::string& path, const RunManifest& m) {
    nlohmann::json j{{"command", m.command},
                     {"config", m.config},
                     {"seed", m.seed},
                     {"inputs", m.inputs},
                     {"outputs", m.outputs},
                     {"started_at", m.started_at},
                     {"wall_seconds", m.wall_seconds},
                     {"git_describe", m.git_describe}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw IoError("manifest write failed: " + path);
}

} // namespace gmnet
