#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace deanchor {

using Json = nlohmann::ordered_json;

// Every persisted document carries these two fields.
inline constexpr int kSchemaVersion = 1;

Json make_document(std::string_view kind);

// Throws Config if the version or kind does not match.
void check_document(const Json& doc, std::string_view kind);

Json read_json_file(const std::filesystem::path& path);

// Writes with two-space indentation and a trailing newline.
void write_json_file(const std::filesystem::path& path, const Json& doc);

// Required-field accessors that raise Config errors naming the field.
const Json& require(const Json& obj, std::string_view key);

template <typename T>
T require_as(const Json& obj, std::string_view key) {
    return require(obj, key).template get<T>();
}

template <typename T>
T value_or(const Json& obj, std::string_view key, T fallback) {
    auto it = obj.find(std::string(key));
    if (it == obj.end() || it->is_null()) return fallback;
    return it->template get<T>();
}

}  // namespace deanchor
