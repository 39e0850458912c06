#pragma once

// UCI Student Performance records: ingest from the semicolon-delimited
// distribution format, encode, split, and standardize.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "deanchor/error.hpp"

namespace deanchor::data {

enum class Subject { Math, Portuguese };

const char* to_string(Subject s) noexcept;

enum class AttributeKind {
    Binary,   // two categories, encoded 0/1 in declaration order
    Nominal,  // more than two categories, one-hot encoded
    Numeric,  // integer-valued
};

struct AttributeSpec {
    std::string_view name;
    AttributeKind kind;
    std::vector<std::string_view> categories;  // Binary / Nominal
    int min = 0;                               // Numeric
    int max = 0;                               // Numeric
    std::string_view label;                    // human-readable description
};

inline constexpr std::size_t kAttributeCount = 33;

// Column order of the UCI files.
const std::array<AttributeSpec, kAttributeCount>& schema();

std::optional<std::size_t> attribute_index(std::string_view name);

// Numeric attributes hold their value; categorical ones the category index.
struct RawStudentRecord {
    Subject subject = Subject::Math;
    std::array<int, kAttributeCount> codes{};

    int at(std::string_view attribute) const;
    int final_grade() const { return codes[kAttributeCount - 1]; }
};

enum class DataErrorCode { EmptyInput, UnknownColumn, MissingColumn, Unparsable, MissingFile };

class DataError : public Error {
public:
    DataError(DataErrorCode code, const std::string& what, std::size_t row = 0, std::string column = {})
        : Error(ErrorKind::Data, what), code_(code), row_(row), column_(std::move(column)) {}

    DataErrorCode code() const noexcept { return code_; }
    std::size_t row() const noexcept { return row_; }  // 1-based data row, 0 if n/a
    const std::string& column() const noexcept { return column_; }

private:
    DataErrorCode code_;
    std::size_t row_;
    std::string column_;
};

std::vector<RawStudentRecord> ingest(const std::filesystem::path& path, Subject subject);

// Reads student-mat.csv and student-por.csv from a directory and pools them.
std::vector<RawStudentRecord> ingest_pooled(const std::filesystem::path& directory);

// Writes records in the UCI format (header, quoted categoricals).
void write_uci_csv(const std::filesystem::path& path, const std::vector<RawStudentRecord>& records);

struct PrepareOptions {
    int pass_threshold = 10;
    std::uint64_t split_seed = 0;
    double train_fraction = 0.7;
    // Period grades are excluded by default; they nearly determine G3.
    std::vector<std::string> excluded = {"G1", "G2", "G3"};
};

enum class Split : std::uint8_t { Train, Test };

struct EncodedColumn {
    std::string name;       // e.g. "failures" or "Mjob=teacher"
    std::string attribute;  // originating attribute
};

struct PreparedDataset {
    std::vector<EncodedColumn> columns;
    std::vector<double> means;      // train-split statistics, per column
    std::vector<double> stddevs;
    std::vector<std::vector<double>> x;  // standardized rows
    std::vector<int> y;
    std::vector<Split> split;
    std::vector<std::size_t> source_row;  // index into the ingested records
    std::uint64_t split_seed = 0;
    int pass_threshold = 10;
    std::vector<std::string> warnings;    // excluded degenerate columns etc.

    std::vector<std::string> attributes() const;  // retained, in column order
    std::size_t count(Split s) const;

    // Restricts to columns originating from the given attributes.
    PreparedDataset select(const std::vector<std::string>& attributes) const;
};

int pass_label(int g3, int pass_threshold) noexcept;

PreparedDataset prepare(const std::vector<RawStudentRecord>& records, const PrepareOptions& options = {});

// Encodes one record with the dataset's columns and train statistics.
std::vector<double> encode_standardized(const RawStudentRecord& record, const std::vector<EncodedColumn>& columns,
                                        const std::vector<double>& means, const std::vector<double>& stddevs);

// Display string of an attribute value, e.g. "teacher" or "3".
std::string display_value(const RawStudentRecord& record, std::string_view attribute);

}  // namespace deanchor::data
