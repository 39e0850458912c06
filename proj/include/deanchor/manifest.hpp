#pragma once

// Provenance record written next to every CLI output.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deanchor/json_io.hpp"

namespace deanchor {

inline constexpr const char* kToolVersion = "0.1.0";

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

struct FileDigest {
    std::filesystem::path path;
    std::string sha256;
};

struct RunManifest {
    std::string subcommand;
    Json config;
    std::uint64_t seed = 0;
    std::vector<FileDigest> inputs;
    std::vector<FileDigest> outputs;
    double wall_seconds = 0.0;

    void add_input(const std::filesystem::path& p);
    void add_output(const std::filesystem::path& p);
    Json to_json() const;
};

// Paths whose current digest differs from the recorded one.
std::vector<std::string> verify_manifest(const Json& manifest);

}  // namespace deanchor
