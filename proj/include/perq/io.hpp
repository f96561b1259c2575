#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace perq {

using json = nlohmann::json;

std::string read_file(const std::filesystem::path& path);

/// Writes through a sibling temp file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Parses every nonblank line; errors name the file and line number.
std::vector<json> read_jsonl(const std::filesystem::path& path);

/// One compact object per line, keys in insertion order of the caller.
std::string to_jsonl(const std::vector<json>& rows);

json read_json(const std::filesystem::path& path);

/// Two-space indented, trailing newline.
std::string pretty(const json& value);

/// Field accessors that raise ParseError naming the field.
const json& require_field(const json& obj, const std::string& field, std::string_view context);
std::string require_string(const json& obj, const std::string& field, std::string_view context);
long long require_int(const json& obj, const std::string& field, std::string_view context);

}  // namespace perq
