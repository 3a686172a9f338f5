#include "procqa/json_util.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "procqa/error.hpp"

namespace procqa {

namespace {

std::string escape_pointer_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

}  // namespace

bool JsonCursor::has(const std::string& key) const {
  return node_->is_object() && node_->contains(key) && !(*node_)[key].is_null();
}

JsonCursor JsonCursor::at(const std::string& key) const {
  const auto& obj = object();
  auto it = obj.find(key);
  const std::string child = path_ + "/" + escape_pointer_token(key);
  if (it == obj.end() || it->is_null()) {
    Error err(Errc::SchemaError, child + ": missing required field '" + key + "'");
    err.json_path = child;
    throw err;
  }
  return JsonCursor(*it, child);
}

JsonCursor JsonCursor::at(std::size_t index) const {
  const auto& arr = array();
  if (index >= arr.size()) schema_fail("index " + std::to_string(index) + " out of range");
  return JsonCursor(arr[index], path_ + "/" + std::to_string(index));
}

std::optional<JsonCursor> JsonCursor::maybe(const std::string& key) const {
  if (!has(key)) return std::nullopt;
  return at(key);
}

const nlohmann::json& JsonCursor::object() const {
  if (!node_->is_object()) schema_fail("expected an object");
  return *node_;
}

const nlohmann::json& JsonCursor::array() const {
  if (!node_->is_array()) schema_fail("expected an array");
  return *node_;
}

std::string JsonCursor::str() const {
  if (!node_->is_string()) schema_fail("expected a string");
  return node_->get<std::string>();
}

std::int64_t JsonCursor::integer() const {
  if (!node_->is_number_integer()) schema_fail("expected an integer");
  return node_->get<std::int64_t>();
}

double JsonCursor::number() const {
  if (!node_->is_number()) schema_fail("expected a number");
  return node_->get<double>();
}

bool JsonCursor::boolean() const {
  if (!node_->is_boolean()) schema_fail("expected a boolean");
  return node_->get<bool>();
}

void JsonCursor::schema_fail(const std::string& message) const {
  Error err(Errc::SchemaError, display_path() + ": " + message);
  err.json_path = display_path();
  throw err;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    Error err(Errc::SchemaError, path.string() + ": invalid JSON: " + e.what());
    err.json_path = "/";
    throw err;
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(Errc::IoError, "read failed for " + path.string());
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::IoError, "cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) fail(Errc::IoError, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) fail(Errc::IoError, "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string digest_text(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace procqa
