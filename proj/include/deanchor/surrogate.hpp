#pragma once

// Deterministic stand-in for the UCI Student Performance files, used when
// the real distribution is not available locally. Same schema, same row
// counts (395 math, 649 Portuguese); the pass/fail signal is concentrated
// in the ten attributes of reference_top10().

#include <cstdint>
#include <filesystem>
#include <vector>

#include "deanchor/student_data.hpp"

namespace deanchor::data {

inline constexpr std::size_t kMathRows = 395;
inline constexpr std::size_t kPortugueseRows = 649;

std::vector<RawStudentRecord> generate_surrogate(Subject subject, std::uint64_t seed);

// Writes student-mat.csv and student-por.csv into the directory.
void write_surrogate_files(const std::filesystem::path& directory, std::uint64_t seed);

}  // namespace deanchor::data
