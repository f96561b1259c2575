#include "perq/io.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include "perq/error.hpp"

namespace perq {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view contents) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into " + path.string());
  }
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<json> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (!rows.back().is_object()) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected a JSON object");
    }
  }
  return rows;
}

std::string to_jsonl(const std::vector<json>& rows) {
  std::string out;
  for (const auto& row : rows) {
    out += row.dump();
    out += '\n';
  }
  return out;
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string pretty(const json& value) { return value.dump(2) + "\n"; }

const json& require_field(const json& obj, const std::string& field, std::string_view context) {
  if (!obj.is_object() || !obj.contains(field)) {
    throw ParseError(std::string(context) + ": missing field '" + field + "'");
  }
  return obj.at(field);
}

std::string require_string(const json& obj, const std::string& field, std::string_view context) {
  const auto& v = require_field(obj, field, context);
  if (!v.is_string()) throw ParseError(std::string(context) + ": field '" + field + "' must be a string");
  return v.get<std::string>();
}

long long require_int(const json& obj, const std::string& field, std::string_view context) {
  const auto& v = require_field(obj, field, context);
  if (!v.is_number_integer()) {
    throw ParseError(std::string(context) + ": field '" + field + "' must be an integer");
  }
  return v.get<long long>();
}

}  // namespace perq
