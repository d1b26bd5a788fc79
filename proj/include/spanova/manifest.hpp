#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace spanova {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file_hex(const std::string& path);

std::string utc_timestamp_now();

// provenance sidecar written next to every command's outputs
struct RunManifest {
    std::string command;
    std::string version;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string startedAt;
    std::string finishedAt;
    std::vector<std::pair<std::string, std::string>> inputs;  // path, content hash
    std::vector<std::string> outputs;
    std::string configJson;  // embedded settings snapshot
};

std::string manifest_to_json(const RunManifest& m);
void write_manifest(const std::string& path, const RunManifest& m);

}  // namespace spanova
