#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

namespace procqa {

// Typed access into a JSON document that reports failures as
// Error(SchemaError) carrying the JSON pointer of the offending node.
class JsonCursor {
 public:
  JsonCursor(const nlohmann::json& node, std::string path = "")
      : node_(&node), path_(std::move(path)) {}

  const nlohmann::json& node() const { return *node_; }
  const std::string& path() const { return path_; }
  std::string display_path() const { return path_.empty() ? "/" : path_; }

  bool has(const std::string& key) const;
  JsonCursor at(const std::string& key) const;
  JsonCursor at(std::size_t index) const;
  std::optional<JsonCursor> maybe(const std::string& key) const;

  const nlohmann::json& object() const;
  const nlohmann::json& array() const;
  std::string str() const;
  std::int64_t integer() const;
  double number() const;
  bool boolean() const;

  [[noreturn]] void schema_fail(const std::string& message) const;

 private:
  const nlohmann::json* node_;
  std::string path_;
};

nlohmann::json read_json_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

// temp file + rename, so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

// Stable 64-bit FNV-1a digest of a string, rendered "fnv1a64:<hex>".
std::string digest_text(const std::string& text);

}  // namespace procqa
