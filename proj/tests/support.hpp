#pragma once

#include <filesystem>
#include <string>

#include "deanchor/sim_harness.hpp"

namespace testing_support {

inline std::filesystem::path source_dir() { return DEANCHOR_SOURCE_DIR; }

inline deanchor::sim::DataConfig surrogate_data() {
    deanchor::sim::DataConfig d;
    d.dir = source_dir() / "data" / "surrogate";
    return d;
}

inline deanchor::sim::AgentConfig shipped_agent() {
    deanchor::sim::AgentConfig a;
    a.temperature = 0.5;
    return a;
}

// Built once per test binary.
inline const deanchor::sim::World& world() {
    static const auto w = deanchor::sim::build_world(surrogate_data(), shipped_agent());
    return w;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("deanchor_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testing_support
