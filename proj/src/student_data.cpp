#include "deanchor/student_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "deanchor/rng.hpp"

namespace deanchor::data {

namespace {

using K = AttributeKind;

const std::vector<std::string_view> kYesNo = {"no", "yes"};
const std::vector<std::string_view> kJobs = {"teacher", "health", "services", "at_home", "other"};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::string_view unquote(std::string_view s) {
    s = trim(s);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == ';') {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

}  // namespace

const char* to_string(Subject s) noexcept { return s == Subject::Math ? "math" : "portuguese"; }

const std::array<AttributeSpec, kAttributeCount>& schema() {
    static const std::array<AttributeSpec, kAttributeCount> kSchema = {{
        {"school", K::Binary, {"GP", "MS"}, 0, 0, "school"},
        {"sex", K::Binary, {"F", "M"}, 0, 0, "sex"},
        {"age", K::Numeric, {}, 15, 22, "age"},
        {"address", K::Binary, {"U", "R"}, 0, 0, "home address type"},
        {"famsize", K::Binary, {"LE3", "GT3"}, 0, 0, "family size"},
        {"Pstatus", K::Binary, {"T", "A"}, 0, 0, "parents' cohabitation status"},
        {"Medu", K::Numeric, {}, 0, 4, "mother's education"},
        {"Fedu", K::Numeric, {}, 0, 4, "father's education"},
        {"Mjob", K::Nominal, kJobs, 0, 0, "mother's job"},
        {"Fjob", K::Nominal, kJobs, 0, 0, "father's job"},
        {"reason", K::Nominal, {"home", "reputation", "course", "other"}, 0, 0, "reason to choose this school"},
        {"guardian", K::Nominal, {"mother", "father", "other"}, 0, 0, "guardian"},
        {"traveltime", K::Numeric, {}, 1, 4, "home to school travel time"},
        {"studytime", K::Numeric, {}, 1, 4, "weekly study time"},
        {"failures", K::Numeric, {}, 0, 4, "number of past class failures"},
        {"schoolsup", K::Binary, kYesNo, 0, 0, "extra educational support"},
        {"famsup", K::Binary, kYesNo, 0, 0, "family educational support"},
        {"paid", K::Binary, kYesNo, 0, 0, "extra paid classes"},
        {"activities", K::Binary, kYesNo, 0, 0, "extra-curricular activities"},
        {"nursery", K::Binary, kYesNo, 0, 0, "attended nursery school"},
        {"higher", K::Binary, kYesNo, 0, 0, "wants to take higher education"},
        {"internet", K::Binary, kYesNo, 0, 0, "internet access at home"},
        {"romantic", K::Binary, kYesNo, 0, 0, "in a romantic relationship"},
        {"famrel", K::Numeric, {}, 1, 5, "quality of family relationships"},
        {"freetime", K::Numeric, {}, 1, 5, "free time after school"},
        {"goout", K::Numeric, {}, 1, 5, "going out with friends"},
        {"Dalc", K::Numeric, {}, 1, 5, "workday alcohol consumption"},
        {"Walc", K::Numeric, {}, 1, 5, "weekend alcohol consumption"},
        {"health", K::Numeric, {}, 1, 5, "current health status"},
        {"absences", K::Numeric, {}, 0, 93, "number of school absences"},
        {"G1", K::Numeric, {}, 0, 20, "first period grade"},
        {"G2", K::Numeric, {}, 0, 20, "second period grade"},
        {"G3", K::Numeric, {}, 0, 20, "final grade"},
    }};
    return kSchema;
}

std::optional<std::size_t> attribute_index(std::string_view name) {
    const auto& s = schema();
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i].name == name) return i;
    }
    return std::nullopt;
}

int RawStudentRecord::at(std::string_view attribute) const {
    auto idx = attribute_index(attribute);
    if (!idx) fail(ErrorKind::Parameter, "unknown attribute '" + std::string(attribute) + "'");
    return codes[*idx];
}

std::vector<RawStudentRecord> ingest(const std::filesystem::path& path, Subject subject) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(DataErrorCode::MissingFile, "cannot open dataset file " + path.string());

    std::string line;
    // Skip a UTF-8 byte order mark and blank leading lines.
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (!trim(line).empty()) {
            have_header = true;
            break;
        }
    }
    if (!have_header) throw DataError(DataErrorCode::EmptyInput, path.string() + ": empty input");

    const auto& s = schema();
    const auto header = split_fields(line);
    std::array<int, kAttributeCount> column_of{};
    column_of.fill(-1);
    for (std::size_t c = 0; c < header.size(); ++c) {
        const auto name = unquote(header[c]);
        auto idx = attribute_index(name);
        if (!idx) {
            throw DataError(DataErrorCode::UnknownColumn,
                            path.string() + ": unknown column '" + std::string(name) + "'", 0, std::string(name));
        }
        column_of[*idx] = static_cast<int>(c);
    }
    for (std::size_t a = 0; a < kAttributeCount; ++a) {
        if (column_of[a] < 0) {
            throw DataError(DataErrorCode::MissingColumn,
                            path.string() + ": missing column '" + std::string(s[a].name) + "'", 0,
                            std::string(s[a].name));
        }
    }

    std::vector<RawStudentRecord> records;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        const auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw DataError(DataErrorCode::Unparsable,
                            path.string() + ": row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                                " fields, expected " + std::to_string(header.size()),
                            row);
        }
        RawStudentRecord rec;
        rec.subject = subject;
        for (std::size_t a = 0; a < kAttributeCount; ++a) {
            const auto& spec = s[a];
            const auto raw = unquote(fields[static_cast<std::size_t>(column_of[a])]);
            auto bad = [&] {
                return DataError(DataErrorCode::Unparsable,
                                 path.string() + ": row " + std::to_string(row) + ", column '" +
                                     std::string(spec.name) + "': cannot parse '" + std::string(raw) + "'",
                                 row, std::string(spec.name));
            };
            if (spec.kind == K::Numeric) {
                int v = 0;
                auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
                if (ec != std::errc{} || p != raw.data() + raw.size() || v < spec.min || v > spec.max) throw bad();
                rec.codes[a] = v;
            } else {
                auto it = std::find(spec.categories.begin(), spec.categories.end(), raw);
                if (it == spec.categories.end()) throw bad();
                rec.codes[a] = static_cast<int>(it - spec.categories.begin());
            }
        }
        records.push_back(rec);
    }
    return records;
}

std::vector<RawStudentRecord> ingest_pooled(const std::filesystem::path& directory) {
    auto records = ingest(directory / "student-mat.csv", Subject::Math);
    auto por = ingest(directory / "student-por.csv", Subject::Portuguese);
    records.insert(records.end(), por.begin(), por.end());
    return records;
}

void write_uci_csv(const std::filesystem::path& path, const std::vector<RawStudentRecord>& records) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Data, "cannot write " + path.string());
    const auto& s = schema();
    for (std::size_t a = 0; a < kAttributeCount; ++a) out << (a ? ";" : "") << s[a].name;
    out << '\n';
    for (const auto& rec : records) {
        for (std::size_t a = 0; a < kAttributeCount; ++a) {
            if (a) out << ';';
            if (s[a].kind == K::Numeric) {
                out << rec.codes[a];
            } else {
                out << '"' << s[a].categories[static_cast<std::size_t>(rec.codes[a])] << '"';
            }
        }
        out << '\n';
    }
}

int pass_label(int g3, int pass_threshold) noexcept { return g3 >= pass_threshold ? 1 : 0; }

namespace {

std::vector<EncodedColumn> all_columns(const std::vector<std::string>& excluded) {
    std::vector<EncodedColumn> cols;
    for (const auto& spec : schema()) {
        const std::string name(spec.name);
        if (std::find(excluded.begin(), excluded.end(), name) != excluded.end()) continue;
        if (spec.kind == K::Nominal) {
            for (const auto& c : spec.categories) cols.push_back({name + "=" + std::string(c), name});
        } else {
            cols.push_back({name, name});
        }
    }
    return cols;
}

double raw_value(const RawStudentRecord& rec, const EncodedColumn& col) {
    const auto a = *attribute_index(col.attribute);
    const auto& spec = schema()[a];
    if (spec.kind == K::Nominal) {
        const auto category = std::string_view(col.name).substr(col.attribute.size() + 1);
        return spec.categories[static_cast<std::size_t>(rec.codes[a])] == category ? 1.0 : 0.0;
    }
    return static_cast<double>(rec.codes[a]);
}

}  // namespace

std::vector<double> encode_standardized(const RawStudentRecord& record, const std::vector<EncodedColumn>& columns,
                                        const std::vector<double>& means, const std::vector<double>& stddevs) {
    std::vector<double> row(columns.size());
    for (std::size_t c = 0; c < columns.size(); ++c) row[c] = (raw_value(record, columns[c]) - means[c]) / stddevs[c];
    return row;
}

std::string display_value(const RawStudentRecord& record, std::string_view attribute) {
    const auto a = attribute_index(attribute);
    if (!a) fail(ErrorKind::Parameter, "unknown attribute '" + std::string(attribute) + "'");
    const auto& spec = schema()[*a];
    if (spec.kind == K::Numeric) return std::to_string(record.codes[*a]);
    return std::string(spec.categories[static_cast<std::size_t>(record.codes[*a])]);
}

PreparedDataset prepare(const std::vector<RawStudentRecord>& records, const PrepareOptions& options) {
    if (records.empty()) fail(ErrorKind::Data, "cannot prepare an empty record collection");
    if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0)) {
        fail(ErrorKind::Parameter, "train fraction must lie in (0, 1)");
    }
    for (const auto& name : options.excluded) {
        if (!attribute_index(name)) fail(ErrorKind::Parameter, "cannot exclude unknown attribute '" + name + "'");
    }

    PreparedDataset ds;
    ds.split_seed = options.split_seed;
    ds.pass_threshold = options.pass_threshold;

    const std::size_t n = records.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(options.split_seed);
    rng.shuffle(std::span<std::size_t>(order));
    const auto n_train = static_cast<std::size_t>(std::llround(options.train_fraction * static_cast<double>(n)));

    auto columns = all_columns(options.excluded);
    std::vector<std::vector<double>> raw(n, std::vector<double>(columns.size()));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < columns.size(); ++c) raw[i][c] = raw_value(records[order[i]], columns[c]);
    }

    std::vector<double> means(columns.size(), 0.0), sds(columns.size(), 0.0);
    for (std::size_t c = 0; c < columns.size(); ++c) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n_train; ++i) sum += raw[i][c];
        const double mean = sum / static_cast<double>(n_train);
        double ss = 0.0;
        for (std::size_t i = 0; i < n_train; ++i) ss += (raw[i][c] - mean) * (raw[i][c] - mean);
        means[c] = mean;
        sds[c] = std::sqrt(ss / static_cast<double>(n_train));
    }

    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (sds[c] > 1e-12) {
            keep.push_back(c);
        } else {
            ds.warnings.push_back("column '" + columns[c].name + "' has zero variance on the training split; excluded");
        }
    }
    for (auto c : keep) {
        ds.columns.push_back(columns[c]);
        ds.means.push_back(means[c]);
        ds.stddevs.push_back(sds[c]);
    }

    ds.x.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row;
        row.reserve(keep.size());
        for (std::size_t k = 0; k < keep.size(); ++k) row.push_back((raw[i][keep[k]] - ds.means[k]) / ds.stddevs[k]);
        ds.x.push_back(std::move(row));
        ds.y.push_back(pass_label(records[order[i]].final_grade(), options.pass_threshold));
        ds.split.push_back(i < n_train ? Split::Train : Split::Test);
        ds.source_row.push_back(order[i]);
    }
    return ds;
}

std::vector<std::string> PreparedDataset::attributes() const {
    std::vector<std::string> out;
    for (const auto& col : columns) {
        if (out.empty() || out.back() != col.attribute) out.push_back(col.attribute);
    }
    return out;
}

std::size_t PreparedDataset::count(Split s) const {
    return static_cast<std::size_t>(std::count(split.begin(), split.end(), s));
}

PreparedDataset PreparedDataset::select(const std::vector<std::string>& wanted) const {
    for (const auto& a : wanted) {
        bool found = std::any_of(columns.begin(), columns.end(), [&](const auto& c) { return c.attribute == a; });
        if (!found) fail(ErrorKind::Parameter, "attribute '" + a + "' is not present in the prepared dataset");
    }
    PreparedDataset out;
    out.split_seed = split_seed;
    out.pass_threshold = pass_threshold;
    out.warnings = warnings;
    out.y = y;
    out.split = split;
    out.source_row = source_row;
    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < columns.size(); ++c) {
        if (std::find(wanted.begin(), wanted.end(), columns[c].attribute) != wanted.end()) {
            keep.push_back(c);
            out.columns.push_back(columns[c]);
            out.means.push_back(means[c]);
            out.stddevs.push_back(stddevs[c]);
        }
    }
    out.x.reserve(x.size());
    for (const auto& row : x) {
        std::vector<double> r;
        r.reserve(keep.size());
        for (auto c : keep) r.push_back(row[c]);
        out.x.push_back(std::move(r));
    }
    return out;
}

}  // namespace deanchor::data
