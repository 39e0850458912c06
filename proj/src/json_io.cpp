#include "deanchor/json_io.hpp"

#include <fstream>
#include <sstream>

#include "deanchor/error.hpp"

namespace deanchor {

Json make_document(std::string_view kind) {
    Json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["kind"] = std::string(kind);
    return doc;
}

void check_document(const Json& doc, std::string_view kind) {
    if (!doc.is_object()) fail(ErrorKind::Config, "expected a JSON object for '" + std::string(kind) + "'");
    auto version = doc.find("schema_version");
    if (version == doc.end() || !version->is_number_integer()) {
        fail(ErrorKind::Config, "document '" + std::string(kind) + "' lacks an integer schema_version");
    }
    if (version->get<int>() != kSchemaVersion) {
        fail(ErrorKind::Config, "unsupported schema_version " + std::to_string(version->get<int>()) +
                                    " (expected " + std::to_string(kSchemaVersion) + ")");
    }
    auto k = doc.find("kind");
    if (k == doc.end() || !k->is_string() || k->get<std::string>() != kind) {
        fail(ErrorKind::Config, "expected document kind '" + std::string(kind) + "'");
    }
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Config, "cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        fail(ErrorKind::Config, path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const Json& doc) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Config, "cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

const Json& require(const Json& obj, std::string_view key) {
    if (!obj.is_object()) fail(ErrorKind::Config, "expected an object containing '" + std::string(key) + "'");
    auto it = obj.find(std::string(key));
    if (it == obj.end()) fail(ErrorKind::Config, "missing required field '" + std::string(key) + "'");
    return *it;
}

}  // namespace deanchor
